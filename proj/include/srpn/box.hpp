#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace srpn {

// Axis-aligned box: top-left corner plus height and width, in pixels.
// Coordinates are continuous; area is h*w.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double h = 0.0;
  double w = 0.0;

  double area() const { return h * w; }
  bool valid() const { return h > 0.0 && w > 0.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// The dimensionless offset 4-tuple between a box and its anchor;
// t_h and t_w are log-ratios.
struct OffsetTuple {
  double tx = 0.0;
  double ty = 0.0;
  double th = 0.0;
  double tw = 0.0;

  friend bool operator==(const OffsetTuple&, const OffsetTuple&) = default;
};

struct ScoredBox {
  BBox box;
  double score = 0.0;
};

// Intersection over union; 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

// Offsets of box relative to anchor: tx=(x-xa)/wa, ty=(y-ya)/ha,
// th=log(h/ha), tw=log(w/wa). Throws on non-positive box or anchor dims.
OffsetTuple encode(const BBox& box, const BBox& anchor);

// Inverse of encode. Log-ratios beyond +/-20 are clamped and counted
// (an untrained network can emit arbitrarily large offsets).
BBox decode(const OffsetTuple& t, const BBox& anchor);

// Number of decode() calls that hit the log-ratio clamp since process start
// (or the last reset). Diagnostic only.
std::uint64_t decode_clamp_count();
void reset_decode_clamp_count();

// Greedy non-maximum suppression: repeatedly keep the highest-score
// remaining detection and discard remaining detections with IoU strictly
// above the threshold against it. Equal scores are ordered by (x,y,h,w)
// lexicographically. Output is sorted by descending score.
std::vector<ScoredBox> nms(std::vector<ScoredBox> detections,
                           double iou_threshold);

// Intersection of the box with [0,w]x[0,h]; empty if it falls outside.
std::optional<BBox> clip_to_image(const BBox& box, double image_h,
                                  double image_w);

// Deterministic ordering used for score ties: descending score, then
// lexicographic (x,y,h,w).
bool scored_box_before(const ScoredBox& a, const ScoredBox& b);

}  // namespace srpn
