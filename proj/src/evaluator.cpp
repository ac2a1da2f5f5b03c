#include "srpn/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace srpn {

std::vector<Detection> detect(const Model& model, const Tensor& image,
                              const AnchorSpec& anchor_spec,
                              double score_threshold, double nms_iou) {
  Tape tape;  // forward only; the reverse pass is never run
  HeadOutput out = forward(tape, model, image);
  const int a = model.config.num_anchor;
  const int fh = out.feature_h, fw = out.feature_w;
  const double img_h = image.shape()[1], img_w = image.shape()[2];

  const std::vector<BBox> anchors = generate(anchor_spec, fh, fw);
  std::vector<ScoredBox> candidates;
  for (int row = 0; row < fh; ++row) {
    for (int col = 0; col < fw; ++col) {
      for (int k = 0; k < a; ++k) {
        const double score = out.scores.at(k, row, col);
        if (score < score_threshold) continue;
        const std::size_t idx =
            (static_cast<std::size_t>(row) * fw + col) * a + k;
        const OffsetTuple t{out.offsets.at(4 * k + 0, row, col),
                            out.offsets.at(4 * k + 1, row, col),
                            out.offsets.at(4 * k + 2, row, col),
                            out.offsets.at(4 * k + 3, row, col)};
        const BBox raw = decode(t, anchors[idx]);
        if (const auto clipped = clip_to_image(raw, img_h, img_w))
          candidates.push_back({*clipped, score});
      }
    }
  }
  std::vector<Detection> detections;
  for (const ScoredBox& sb : nms(std::move(candidates), nms_iou))
    detections.push_back({sb.box, sb.score});
  return detections;
}

namespace {

std::vector<int> score_order(const std::vector<Detection>& detections) {
  std::vector<int> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const Detection& a = detections[static_cast<std::size_t>(i)];
    const Detection& b = detections[static_cast<std::size_t>(j)];
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.box.x, a.box.y, a.box.h, a.box.w) <
           std::tie(b.box.x, b.box.y, b.box.h, b.box.w);
  });
  return order;
}

// Highest-IoU unmatched ground truth with IoU >= thresh; -1 if none.
int claim_gt(const BBox& det, const std::vector<BBox>& gt,
             const std::vector<char>& taken, double iou_thresh) {
  int best = -1;
  double best_iou = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (taken[j]) continue;
    const double v = iou(det, gt[j]);
    if (v >= iou_thresh && v > best_iou) {
      best_iou = v;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<BBox>& gt, double iou_thresh) {
  MatchResult result;
  std::vector<char> taken(gt.size(), 0);
  for (int i : score_order(detections)) {
    const int j = claim_gt(detections[static_cast<std::size_t>(i)].box, gt,
                           taken, iou_thresh);
    if (j >= 0) {
      taken[static_cast<std::size_t>(j)] = 1;
      result.matches.emplace_back(i, j);
      ++result.tp;
    } else {
      ++result.fp;
    }
  }
  result.fn = static_cast<int>(gt.size()) - result.tp;
  return result;
}

MetricsReport f1_report(long long tp, long long fp, long long fn) {
  if (tp < 0 || fp < 0 || fn < 0)
    throw std::invalid_argument("f1_report: counts must be non-negative");
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = 2 * tp + fp + fn > 0
             ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
             : 0.0;
  return r;
}

double average_precision(
    const std::vector<std::vector<Detection>>& detections_per_image,
    const std::vector<std::vector<BBox>>& gt_per_image, double iou_thresh) {
  if (detections_per_image.size() != gt_per_image.size())
    throw std::invalid_argument(
        "average_precision: per-image lists must be aligned");

  long long total_gt = 0;
  for (const auto& g : gt_per_image) total_gt += static_cast<long long>(g.size());
  if (total_gt == 0) return 0.0;

  struct Entry {
    double score;
    int image;
    int det;
  };
  std::vector<Entry> pool;
  for (std::size_t i = 0; i < detections_per_image.size(); ++i)
    for (std::size_t d = 0; d < detections_per_image[i].size(); ++d)
      pool.push_back({detections_per_image[i][d].score, static_cast<int>(i),
                      static_cast<int>(d)});
  std::sort(pool.begin(), pool.end(), [&](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    const BBox& ba = detections_per_image[static_cast<std::size_t>(a.image)]
                         [static_cast<std::size_t>(a.det)].box;
    const BBox& bb = detections_per_image[static_cast<std::size_t>(b.image)]
                         [static_cast<std::size_t>(b.det)].box;
    return std::tie(ba.x, ba.y, ba.h, ba.w) < std::tie(bb.x, bb.y, bb.h, bb.w);
  });

  std::vector<std::vector<char>> taken(gt_per_image.size());
  for (std::size_t i = 0; i < gt_per_image.size(); ++i)
    taken[i].assign(gt_per_image[i].size(), 0);

  std::vector<double> precision, recall;
  long long tp = 0, fp = 0;
  for (const Entry& e : pool) {
    const auto& gts = gt_per_image[static_cast<std::size_t>(e.image)];
    auto& tk = taken[static_cast<std::size_t>(e.image)];
    const int j = claim_gt(
        detections_per_image[static_cast<std::size_t>(e.image)][static_cast<std::size_t>(e.det)].box,
        gts, tk, iou_thresh);
    if (j >= 0) {
      tk[static_cast<std::size_t>(j)] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  // precision envelope from the right, then sum over recall steps
  double ap = 0.0;
  double env = 0.0;
  for (std::size_t i = precision.size(); i-- > 0;) {
    env = std::max(env, precision[i]);
    const double prev_recall = i == 0 ? 0.0 : recall[i - 1];
    if (recall[i] > prev_recall) ap += (recall[i] - prev_recall) * env;
  }
  return ap;
}

double s_nr(const std::vector<int>& fp_counts_per_negative_image) {
  if (fp_counts_per_negative_image.empty())
    throw std::invalid_argument("s_nr: need at least one negative image");
  double mean = 0.0;
  for (int c : fp_counts_per_negative_image) {
    if (c < 0) throw std::invalid_argument("s_nr: counts must be non-negative");
    mean += static_cast<double>(c);
  }
  mean /= static_cast<double>(fp_counts_per_negative_image.size());
  return std::max(100.0 - mean, 0.0) / 100.0;
}

MetricsReport evaluate_f1ap(const Model& model,
                            const std::vector<AnnotatedImage>& dataset,
                            const AnchorSpec& anchor_spec,
                            const EvalOptions& opts) {
  long long tp = 0, fp = 0, fn = 0;
  std::vector<std::vector<Detection>> dets_per_image;
  std::vector<std::vector<BBox>> gt_per_image;
  std::vector<MetricsReport::PerImage> per_image;
  for (const auto& img : dataset) {
    auto dets = detect(model, img.image, anchor_spec, opts.score_threshold,
                       opts.nms_iou);
    const MatchResult m = match_detections(dets, img.boxes, opts.match_iou);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    per_image.push_back({img.id, m.tp, m.fp, m.fn});
    dets_per_image.push_back(std::move(dets));
    gt_per_image.push_back(img.boxes);
  }
  MetricsReport report = f1_report(tp, fp, fn);
  report.ap = average_precision(dets_per_image, gt_per_image, opts.match_iou);
  report.per_image = std::move(per_image);
  return report;
}

RingcellReport evaluate_ringcell(const Model& model,
                                 const std::vector<AnnotatedImage>& dataset,
                                 const AnchorSpec& anchor_spec,
                                 const EvalOptions& opts) {
  RingcellReport report;
  long long tp = 0, fn = 0;
  for (const auto& img : dataset) {
    const auto dets = detect(model, img.image, anchor_spec,
                             opts.score_threshold, opts.nms_iou);
    if (img.boxes.empty()) {
      report.fp_per_negative_image.push_back(static_cast<int>(dets.size()));
      ++report.n_negative_images;
    } else {
      const MatchResult m = match_detections(dets, img.boxes, opts.match_iou);
      tp += m.tp;
      fn += m.fn;
      ++report.n_positive_images;
    }
  }
  report.tp = tp;
  report.fn = fn;
  report.recall =
      tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (!report.fp_per_negative_image.empty()) {
    double mean = 0.0;
    for (int c : report.fp_per_negative_image) mean += c;
    report.mean_fp_nr = mean / static_cast<double>(report.fp_per_negative_image.size());
    report.s_nr = s_nr(report.fp_per_negative_image);
  }
  return report;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
}  // namespace

std::string metrics_to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "image,tp,fp,fn\n";
  for (const auto& pi : r.per_image)
    os << pi.id << "," << pi.tp << "," << pi.fp << "," << pi.fn << "\n";
  os << "TOTAL," << r.tp << "," << r.fp << "," << r.fn << "\n";
  os << "metric,value\n";
  os << "precision," << fmt(r.precision) << "\n";
  os << "recall," << fmt(r.recall) << "\n";
  os << "f1," << fmt(r.f1) << "\n";
  os << "ap," << fmt(r.ap) << "\n";
  return os.str();
}

std::string metrics_summary(const MetricsReport& r) {
  std::ostringstream os;
  os << "images: " << r.per_image.size() << "\n"
     << "TP " << r.tp << "  FP " << r.fp << "  FN " << r.fn << "\n"
     << "precision " << fmt(r.precision) << "  recall " << fmt(r.recall)
     << "  F1 " << fmt(r.f1) << "  AP " << fmt(r.ap) << "\n";
  return os.str();
}

std::string ringcell_to_csv(const RingcellReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "recall," << fmt(r.recall) << "\n";
  os << "s_nr," << fmt(r.s_nr) << "\n";
  os << "mean_fp_nr," << fmt(r.mean_fp_nr) << "\n";
  os << "tp," << r.tp << "\n";
  os << "fn," << r.fn << "\n";
  os << "positive_images," << r.n_positive_images << "\n";
  os << "negative_images," << r.n_negative_images << "\n";
  return os.str();
}

std::string ringcell_summary(const RingcellReport& r) {
  std::ostringstream os;
  os << "positive images: " << r.n_positive_images
     << "  negative images: " << r.n_negative_images << "\n"
     << "recall " << fmt(r.recall) << "  S_nr " << fmt(r.s_nr)
     << "  mean FP/negative image " << fmt(r.mean_fp_nr) << "\n";
  return os.str();
}

}  // namespace srpn
