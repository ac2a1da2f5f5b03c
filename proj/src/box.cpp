#include "srpn/box.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace srpn {

namespace {
std::atomic<std::uint64_t> g_decode_clamps{0};
constexpr double kLogRatioLimit = 20.0;
}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  // areas via the same corner differences as the intersection, so that
  // iou(a, a) is exactly 1 despite rounding in x + w
  const double area_a = ((a.x + a.w) - a.x) * ((a.y + a.h) - a.y);
  const double area_b = ((b.x + b.w) - b.x) * ((b.y + b.h) - b.y);
  return inter / (area_a + area_b - inter);
}

OffsetTuple encode(const BBox& box, const BBox& anchor) {
  if (!anchor.valid())
    throw std::invalid_argument("encode: anchor must have positive h and w");
  if (!box.valid())
    throw std::invalid_argument("encode: box must have positive h and w");
  return OffsetTuple{(box.x - anchor.x) / anchor.w, (box.y - anchor.y) / anchor.h,
                     std::log(box.h / anchor.h), std::log(box.w / anchor.w)};
}

BBox decode(const OffsetTuple& t, const BBox& anchor) {
  double th = t.th;
  double tw = t.tw;
  bool clamped = false;
  if (std::abs(th) > kLogRatioLimit) {
    th = std::clamp(th, -kLogRatioLimit, kLogRatioLimit);
    clamped = true;
  }
  if (std::abs(tw) > kLogRatioLimit) {
    tw = std::clamp(tw, -kLogRatioLimit, kLogRatioLimit);
    clamped = true;
  }
  if (clamped) g_decode_clamps.fetch_add(1, std::memory_order_relaxed);
  return BBox{t.tx * anchor.w + anchor.x, t.ty * anchor.h + anchor.y,
              anchor.h * std::exp(th), anchor.w * std::exp(tw)};
}

std::uint64_t decode_clamp_count() {
  return g_decode_clamps.load(std::memory_order_relaxed);
}

void reset_decode_clamp_count() {
  g_decode_clamps.store(0, std::memory_order_relaxed);
}

bool scored_box_before(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.box.x, a.box.y, a.box.h, a.box.w) <
         std::tie(b.box.x, b.box.y, b.box.h, b.box.w);
}

std::vector<ScoredBox> nms(std::vector<ScoredBox> detections,
                           double iou_threshold) {
  std::sort(detections.begin(), detections.end(), scored_box_before);
  std::vector<ScoredBox> kept;
  std::vector<char> suppressed(detections.size(), 0);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(detections[i]);
    for (std::size_t j = i + 1; j < detections.size(); ++j) {
      if (!suppressed[j] &&
          iou(detections[i].box, detections[j].box) > iou_threshold)
        suppressed[j] = 1;
    }
  }
  return kept;
}

std::optional<BBox> clip_to_image(const BBox& box, double image_h,
                                  double image_w) {
  const double x0 = std::max(0.0, box.x);
  const double y0 = std::max(0.0, box.y);
  const double x1 = std::min(image_w, box.x + box.w);
  const double y1 = std::min(image_h, box.y + box.h);
  if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) return std::nullopt;
  return BBox{x0, y0, y1 - y0, x1 - x0};
}

}  // namespace srpn
