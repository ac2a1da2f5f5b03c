#pragma once

#include <cstdint>
#include <vector>

#include "srpn/box.hpp"
#include "srpn/sampling.hpp"
#include "srpn/tensor.hpp"

namespace srpn {

// Margin for the embedding losses, in squared-distance units (the losses
// operate on squared Euclidean distances as written).
struct Margin {
  double m = 1.0;
};

struct LossWeights {
  double embed = 1.0;
  double loc = 1.0;
  double cls = 1.0;
};

enum class EmbedMode { kNone, kPair, kTriplet };
enum class ClsLossKind { kCrossEntropy, kFocal };

// Probabilities are clamped into [kProbClamp, 1-kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-12;

// Contrastive pair loss: 1/2*s*D + 1/2*(1-s)*max(m - D, 0) with D the
// squared Euclidean distance.
Tensor pair_loss(Tape& tape, const Tensor& e1, const Tensor& e2, int similar,
                 Margin margin);

// Triplet loss: max(D(a,p) - D(a,n) + m, 0) on squared distances.
Tensor triplet_loss(Tape& tape, const Tensor& anchor, const Tensor& positive,
                    const Tensor& negative, Margin margin);

// Smooth-L1 over the componentwise difference: sum_j f(t_j - t*_j) with
// f(x) = 0.5x^2 for |x| < 1 and |x| - 0.5 otherwise.
Tensor smooth_l1(Tape& tape, const Tensor& t, const Tensor& t_star);

// Binary cross-entropy on a predicted probability.
Tensor cross_entropy(Tape& tape, const Tensor& p, int p_star);

// Focal loss -alpha_t*(1-p_t)^gamma*log(p_t); reduces to alpha-weighted
// cross-entropy at gamma = 0.
Tensor focal_loss(Tape& tape, const Tensor& p, int p_star, double alpha = 0.25,
                  double gamma = 2.0);

// Scalar versions used for hard-example ranking (no tape involved).
double cross_entropy_value(double p, int p_star);
double focal_loss_value(double p, int p_star, double alpha = 0.25,
                        double gamma = 2.0);

struct AnchorPrediction {
  Tensor offsets;  // [4]
  Tensor score;    // [1], probability in (0,1)
};

struct AnchorTarget {
  OffsetTuple offsets;  // meaningful only for label 1
  int label = 0;        // p* in {0,1}
};

struct TotalLossOptions {
  EmbedMode mode = EmbedMode::kNone;
  Margin margin{1.0};
  LossWeights weights;
  ClsLossKind cls_kind = ClsLossKind::kCrossEntropy;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  // Per-term averaging over each term's contributing count; false gives the
  // raw sums of the composite objective as typeset.
  bool normalize = true;
  // Pairs/triplets to draw; <= 0 uses 4 x (positive count), capped at 256.
  int embed_samples = -1;
  std::uint64_t rng_seed = 0;
};

struct LossBreakdown {
  Tensor total;
  double embed = 0.0;
  double loc = 0.0;
  double cls = 0.0;
  int n_pairs = 0;
  int n_triplets = 0;
  int n_positive = 0;
  int n_selected = 0;
};

// The composite objective: weighted sum of the embedding term (pairs or
// triplets generated from `embeds`), the localization term gated to
// positive anchors, and the classification term. All three arrays must be
// aligned by anchor index, with ignore-labeled anchors already excluded.
// mode = kNone zeroes the embedding term; an embedding term whose
// pair/triplet preconditions cannot be met (e.g. no positives) contributes
// zero rather than failing the step.
LossBreakdown total_loss(Tape& tape, const EmbeddingSet& embeds,
                         const std::vector<AnchorPrediction>& preds,
                         const std::vector<AnchorTarget>& targets,
                         const TotalLossOptions& opts);

}  // namespace srpn
