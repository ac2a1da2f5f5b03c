#include "srpn/anchors.hpp"

#include <cmath>
#include <stdexcept>

namespace srpn {

std::vector<BBox> generate(const AnchorSpec& spec, int feature_h,
                           int feature_w) {
  if (spec.scales.empty() || spec.ratios.empty())
    throw std::invalid_argument("generate: scales and ratios must be non-empty");
  if (feature_h < 1 || feature_w < 1)
    throw std::invalid_argument("generate: feature dims must be >= 1");
  for (double s : spec.scales)
    if (s <= 0.0) throw std::invalid_argument("generate: scales must be > 0");
  for (double r : spec.ratios)
    if (r <= 0.0) throw std::invalid_argument("generate: ratios must be > 0");

  std::vector<BBox> anchors;
  anchors.reserve(static_cast<std::size_t>(feature_h) * feature_w *
                  spec.anchors_per_location());
  for (int row = 0; row < feature_h; ++row) {
    const double cy = (row + 0.5) * spec.stride;
    for (int col = 0; col < feature_w; ++col) {
      const double cx = (col + 0.5) * spec.stride;
      for (double s : spec.scales) {
        for (double r : spec.ratios) {
          const double h = s * std::sqrt(r);
          const double w = s / std::sqrt(r);
          anchors.push_back(BBox{cx - 0.5 * w, cy - 0.5 * h, h, w});
        }
      }
    }
  }
  return anchors;
}

std::vector<LabeledAnchor> label_anchors(const std::vector<BBox>& anchors,
                                         const std::vector<BBox>& gt,
                                         double pos_thresh, double neg_thresh,
                                         bool best_anchor_fallback) {
  if (!(0.0 <= neg_thresh && neg_thresh < pos_thresh && pos_thresh <= 1.0))
    throw std::invalid_argument(
        "label_anchors: thresholds must satisfy 0 <= neg < pos <= 1");

  const std::size_t n = anchors.size();
  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best_iou(gt.size(), 0.0);
  std::vector<int> gt_best_anchor(gt.size(), -1);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double v = iou(anchors[i], gt[j]);
      if (v > best_iou[i]) {
        best_iou[i] = v;
        best_gt[i] = static_cast<int>(j);
      }
      if (v > gt_best_iou[j]) {
        gt_best_iou[j] = v;
        gt_best_anchor[j] = static_cast<int>(i);
      }
    }
  }

  std::vector<char> forced(n, 0);
  if (best_anchor_fallback) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt_best_anchor[j] >= 0 && gt_best_iou[j] > 0.0) {
        const int i = gt_best_anchor[j];
        forced[i] = 1;
        // a forced anchor still matches its own best ground truth
        if (best_gt[i] < 0) best_gt[i] = static_cast<int>(j);
      }
    }
  }

  std::vector<LabeledAnchor> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledAnchor& la = out[i];
    la.anchor = anchors[i];
    if (forced[i] || best_iou[i] > pos_thresh) {
      la.label = AnchorLabel::kPositive;
      la.matched_gt = best_gt[i];
      la.target_offsets = encode(gt[static_cast<std::size_t>(best_gt[i])], anchors[i]);
    } else if (best_iou[i] < neg_thresh) {
      la.label = AnchorLabel::kNegative;
    } else {
      la.label = AnchorLabel::kIgnore;
    }
  }
  return out;
}

}  // namespace srpn
