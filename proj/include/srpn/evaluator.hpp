#pragma once

#include <string>
#include <vector>

#include "srpn/anchors.hpp"
#include "srpn/box.hpp"
#include "srpn/dataset.hpp"
#include "srpn/head.hpp"

namespace srpn {

struct Detection {
  BBox box;
  double score = 0.0;
};

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  // (detection index, ground-truth index) for every matched pair
  std::vector<std::pair<int, int>> matches;
};

struct MetricsReport {
  long long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double ap = 0.0;
  struct PerImage {
    std::string id;
    int tp = 0, fp = 0, fn = 0;
  };
  std::vector<PerImage> per_image;
};

struct EvalOptions {
  double score_threshold = 0.5;
  double nms_iou = 0.3;
  double match_iou = 0.3;
};

// Inference: forward, decode every anchor, clip to the image, drop scores
// below the threshold, then NMS.
std::vector<Detection> detect(const Model& model, const Tensor& image,
                              const AnchorSpec& anchor_spec,
                              double score_threshold, double nms_iou = 0.3);

// Greedy one-to-one matching: detections in descending score order (ties by
// box, lexicographically) each claim the highest-IoU unmatched ground truth
// with IoU >= iou_thresh.
MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<BBox>& gt,
                             double iou_thresh = 0.3);

// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2tp/(2tp+fp+fn);
// zero denominators give 0.
MetricsReport f1_report(long long tp, long long fp, long long fn);

// All-points interpolated area under the precision-recall curve over the
// pooled detections of a dataset. No ground truth anywhere gives 0.
double average_precision(
    const std::vector<std::vector<Detection>>& detections_per_image,
    const std::vector<std::vector<BBox>>& gt_per_image, double iou_thresh);

// max(100 - mean false positives per negative image, 0) / 100.
double s_nr(const std::vector<int>& fp_counts_per_negative_image);

// F1/AP protocol over an annotated dataset.
MetricsReport evaluate_f1ap(const Model& model,
                            const std::vector<AnnotatedImage>& dataset,
                            const AnchorSpec& anchor_spec,
                            const EvalOptions& opts);

// Recall + S_nr protocol: recall over images with ground truth, S_nr over
// images without (their detections are all normal-region false positives).
struct RingcellReport {
  double recall = 0.0;
  double s_nr = 0.0;
  long long tp = 0, fn = 0;
  double mean_fp_nr = 0.0;
  int n_positive_images = 0;
  int n_negative_images = 0;
  std::vector<int> fp_per_negative_image;
};

RingcellReport evaluate_ringcell(const Model& model,
                                 const std::vector<AnnotatedImage>& dataset,
                                 const AnchorSpec& anchor_spec,
                                 const EvalOptions& opts);

std::string metrics_to_csv(const MetricsReport& report);
std::string metrics_summary(const MetricsReport& report);
std::string ringcell_to_csv(const RingcellReport& report);
std::string ringcell_summary(const RingcellReport& report);

}  // namespace srpn
