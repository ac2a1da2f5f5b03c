#pragma once

#include <optional>
#include <vector>

#include "srpn/box.hpp"

namespace srpn {

// Dense anchor grid specification. For scale s and ratio r (height/width),
// anchors have height s*sqrt(r) and width s/sqrt(r), so area stays ~s^2.
struct AnchorSpec {
  std::vector<double> scales;  // side lengths in input-image pixels
  std::vector<double> ratios;  // height/width aspect ratios
  double stride = 8.0;         // input pixels per feature-map cell

  int anchors_per_location() const {
    return static_cast<int>(scales.size() * ratios.size());
  }
};

enum class AnchorLabel { kPositive, kNegative, kIgnore };

struct LabeledAnchor {
  BBox anchor;
  AnchorLabel label = AnchorLabel::kNegative;
  std::optional<int> matched_gt;           // present iff positive
  std::optional<OffsetTuple> target_offsets;  // present iff positive
};

// One anchor per (location, scale, ratio), centered on the cell center in
// input coordinates. Order is location row-major with the (scale, ratio)
// index innermost: index = (row*feature_w + col)*A + k, k = si*|ratios|+ri.
// Anchors crossing image borders are kept; clipping happens at decode and
// evaluation time.
std::vector<BBox> generate(const AnchorSpec& spec, int feature_h,
                           int feature_w);

// IoU-threshold labeling. An anchor is positive when its best IoU over the
// ground truth exceeds pos_thresh, negative when below neg_thresh, ignore
// otherwise (strict inequalities on both sides). With best_anchor_fallback,
// the highest-IoU anchor of each ground-truth box (ties broken by lowest
// anchor index, skipped when the best IoU is 0) is forced positive so every
// reachable object trains the localization term. Positives carry
// encode(matched_gt, anchor).
std::vector<LabeledAnchor> label_anchors(const std::vector<BBox>& anchors,
                                         const std::vector<BBox>& gt,
                                         double pos_thresh = 0.7,
                                         double neg_thresh = 0.3,
                                         bool best_anchor_fallback = true);

}  // namespace srpn
