#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srpn/anchors.hpp"
#include "srpn/dataset.hpp"
#include "srpn/evaluator.hpp"
#include "srpn/head.hpp"
#include "srpn/losses.hpp"

namespace srpn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 2;
  int iterations = 500;
  EmbedMode embed_mode = EmbedMode::kTriplet;
  double margin = 2.0;
  LossWeights loss_weights;
  AnchorSpec anchor_spec{{10.0, 14.0, 20.0}, {0.5, 1.0, 2.0}, 8.0};
  double pos_thresh = 0.7;
  double neg_thresh = 0.3;
  bool best_anchor_fallback = true;
  bool ohem = true;
  double neg_pos_ratio = 3.0;
  int ohem_max_total = 64;
  ClsLossKind cls_loss = ClsLossKind::kCrossEntropy;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  bool augment = true;
  bool normalize_losses = true;
  int embed_samples = -1;  // <= 0: 4 x positives, capped at 256
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainLogRow {
  int iteration = 0;
  double loss_total = 0.0;
  double loss_embed = 0.0;
  double loss_loc = 0.0;
  double loss_cls = 0.0;
  int positives = 0;
  int negatives_sampled = 0;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRow> log;
};

// One SGD-with-momentum update: v <- mu*v + g; p <- p - lr*v.
void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              std::vector<double>& velocity, double learning_rate,
              double momentum);

// Full training loop: per iteration, augment a batch, run the head, label
// anchors, mine hard examples, draw pairs/triplets, minimize the composite
// loss and apply SGD. Deterministic in (configs, seed, dataset). Throws
// with the iteration index if the loss turns non-finite.
TrainResult train(const HeadConfig& head_config, const TrainConfig& config,
                  const std::vector<AnnotatedImage>& dataset);

std::string train_log_to_csv(const std::vector<TrainLogRow>& log);

struct MarginSweepRow {
  double margin = 0.0;
  double f1 = 0.0;
  double ap = 0.0;
};

// Trains one model per margin from the shared seed and evaluates each.
std::vector<MarginSweepRow> sweep_margins(
    const HeadConfig& head_config, const TrainConfig& base,
    const std::vector<double>& margins,
    const std::vector<AnnotatedImage>& dataset,
    const std::vector<AnnotatedImage>& eval_set, const EvalOptions& eval_opts);

std::string margin_sweep_to_csv(const std::vector<MarginSweepRow>& rows);

}  // namespace srpn
