#include "srpn/trainer.hpp"

#include "srpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "srpn/ops.hpp"
#include "srpn/rng.hpp"
#include "srpn/sampling.hpp"

namespace srpn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0))
    throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
  if (iterations < 1)
    throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  if (batch_size < 1)
    throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (margin < 0.0)
    throw std::invalid_argument("TrainConfig: margin must be >= 0");
  if (!(0.0 <= neg_thresh && neg_thresh < pos_thresh && pos_thresh <= 1.0))
    throw std::invalid_argument(
        "TrainConfig: thresholds must satisfy 0 <= neg < pos <= 1");
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              std::vector<double>& velocity, double learning_rate,
              double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument(
        "sgd_step: params/grads/velocity sizes differ (" +
        std::to_string(params.size()) + "/" + std::to_string(grads.size()) +
        "/" + std::to_string(velocity.size()) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= learning_rate * velocity[i];
  }
}

namespace {

// Deterministic epoch-shuffled batch order.
class BatchSampler {
 public:
  BatchSampler(int n, std::uint64_t seed) : n_(n), rng_(seed) { reshuffle(); }

  int next() {
    if (cursor_ == n_) reshuffle();
    return order_[static_cast<std::size_t>(cursor_++)];
  }

 private:
  void reshuffle() {
    order_.resize(static_cast<std::size_t>(n_));
    std::iota(order_.begin(), order_.end(), 0);
    for (int i = n_ - 1; i > 0; --i)
      std::swap(order_[static_cast<std::size_t>(i)],
                order_[static_cast<std::size_t>(rng_.uniform_int(i + 1))]);
    cursor_ = 0;
  }

  int n_;
  Rng rng_;
  std::vector<int> order_;
  int cursor_ = 0;
};

}  // namespace

TrainResult train(const HeadConfig& head_config, const TrainConfig& config,
                  const std::vector<AnnotatedImage>& dataset) {
  config.validate();
  if (dataset.empty())
    throw std::invalid_argument("train: dataset must be non-empty");
  if (config.anchor_spec.stride != head_config.stride())
    throw std::invalid_argument(
        "train: anchor stride " + std::to_string(config.anchor_spec.stride) +
        " does not match the model stride " +
        std::to_string(head_config.stride()));

  TrainResult result;
  result.model = build_model(head_config, config.seed);
  Model& model = result.model;

  std::vector<std::vector<double>> velocity;
  for (const auto& p : model.params)
    velocity.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);

  BatchSampler sampler(static_cast<int>(dataset.size()),
                       mix_seed(config.seed, 0x5a3d));

  // anchors depend only on the feature-map size; cache the common case
  std::vector<BBox> cached_anchors;
  int cached_h = -1, cached_w = -1;

  for (int iter = 1; iter <= config.iterations; ++iter) {
    Tape tape;
    std::vector<Tensor> image_losses;
    TrainLogRow row;
    row.iteration = iter;

    for (int b = 0; b < config.batch_size; ++b) {
      const std::uint64_t step_id =
          static_cast<std::uint64_t>(iter - 1) * config.batch_size + b;
      const AnnotatedImage& base =
          dataset[static_cast<std::size_t>(sampler.next())];
      const AnnotatedImage img =
          config.augment
              ? augment(base, mix_seed(config.seed ^ 0xau, step_id))
              : base;

      HeadOutput out = forward(tape, model, img.image);
      if (out.feature_h != cached_h || out.feature_w != cached_w) {
        AnchorSpec spec = config.anchor_spec;
        spec.stride = head_config.stride();
        cached_anchors = generate(spec, out.feature_h, out.feature_w);
        cached_h = out.feature_h;
        cached_w = out.feature_w;
      }

      std::vector<LabeledAnchor> labels =
          label_anchors(cached_anchors, img.boxes, config.pos_thresh,
                        config.neg_thresh, config.best_anchor_fallback);

      // hard-example selection on raw map values, before any tape views
      const int num_anchor = head_config.num_anchor;
      std::vector<LabeledAnchor> kept;
      std::vector<int> kept_anchor_idx;
      std::vector<double> cls_losses;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].label == AnchorLabel::kIgnore) continue;
        const int k = static_cast<int>(i) % num_anchor;
        const int cell = static_cast<int>(i) / num_anchor;
        const double p = out.scores.at(k, cell / out.feature_w,
                                       cell % out.feature_w);
        const int p_star = labels[i].label == AnchorLabel::kPositive ? 1 : 0;
        kept.push_back(labels[i]);
        kept_anchor_idx.push_back(static_cast<int>(i));
        cls_losses.push_back(
            config.cls_loss == ClsLossKind::kCrossEntropy
                ? cross_entropy_value(p, p_star)
                : focal_loss_value(p, p_star, config.focal_alpha,
                                   config.focal_gamma));
      }
      std::vector<int> selected(kept.size());
      std::iota(selected.begin(), selected.end(), 0);
      if (config.ohem)
        selected = ohem_select(kept, cls_losses, config.neg_pos_ratio,
                               config.ohem_max_total);

      // tape views only for the anchors that enter the loss
      const int d = head_config.dim_embedding;
      EmbeddingSet embeds;
      std::vector<AnchorPrediction> preds;
      std::vector<AnchorTarget> targets;
      for (int s : selected) {
        const int ai = kept_anchor_idx[static_cast<std::size_t>(s)];
        const int k = ai % num_anchor;
        const int row = (ai / num_anchor) / out.feature_w;
        const int col = (ai / num_anchor) % out.feature_w;
        const LabeledAnchor& la = kept[static_cast<std::size_t>(s)];

        AnchorPrediction pred;
        pred.offsets =
            channel_slice_at(tape, out.offsets, 4 * k, 4 * k + 4, row, col);
        pred.score = channel_slice_at(tape, out.scores, k, k + 1, row, col);
        AnchorTarget target;
        target.label = la.label == AnchorLabel::kPositive ? 1 : 0;
        if (la.target_offsets) target.offsets = *la.target_offsets;

        embeds.push_back({channel_slice_at(tape, out.embeddings, k * d,
                                           (k + 1) * d, row, col),
                          target.label});
        preds.push_back(std::move(pred));
        targets.push_back(target);
      }

      TotalLossOptions opts;
      opts.mode = config.embed_mode;
      opts.margin = Margin{config.margin};
      opts.weights = config.loss_weights;
      opts.cls_kind = config.cls_loss;
      opts.focal_alpha = config.focal_alpha;
      opts.focal_gamma = config.focal_gamma;
      opts.normalize = config.normalize_losses;
      opts.embed_samples = config.embed_samples;
      opts.rng_seed = mix_seed(config.seed ^ 0xe5u, step_id);

      LossBreakdown breakdown = total_loss(tape, embeds, preds, targets, opts);
      image_losses.push_back(breakdown.total);

      row.loss_embed += breakdown.embed / config.batch_size;
      row.loss_loc += breakdown.loc / config.batch_size;
      row.loss_cls += breakdown.cls / config.batch_size;
      row.positives += breakdown.n_positive;
      row.negatives_sampled += breakdown.n_selected - breakdown.n_positive;
    }

    Tensor batch_loss = image_losses[0];
    for (std::size_t i = 1; i < image_losses.size(); ++i)
      batch_loss = add(tape, batch_loss, image_losses[i]);
    batch_loss =
        mul_scalar(tape, batch_loss, 1.0 / static_cast<double>(config.batch_size));
    row.loss_total = batch_loss.value();

    if (!std::isfinite(row.loss_total))
      throw DivergenceError("train: loss diverged (non-finite) at iteration " +
                            std::to_string(iter));

    tape.backward(batch_loss);
    for (std::size_t p = 0; p < model.params.size(); ++p) {
      Tensor& t = model.params[p].tensor;
      sgd_step(t.node()->data, t.grad_ref(), velocity[p],
               config.learning_rate, config.momentum);
    }
    model.zero_grads();
    result.log.push_back(row);
  }
  return result;
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os << "iteration,loss_total,loss_embed,loss_loc,loss_cls,positives,"
        "negatives_sampled\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%d,%d\n",
                  r.iteration, r.loss_total, r.loss_embed, r.loss_loc,
                  r.loss_cls, r.positives, r.negatives_sampled);
    os << buf;
  }
  return os.str();
}

std::vector<MarginSweepRow> sweep_margins(
    const HeadConfig& head_config, const TrainConfig& base,
    const std::vector<double>& margins,
    const std::vector<AnnotatedImage>& dataset,
    const std::vector<AnnotatedImage>& eval_set,
    const EvalOptions& eval_opts) {
  if (margins.empty())
    throw std::invalid_argument("sweep_margins: need at least one margin");
  std::vector<MarginSweepRow> rows;
  for (double m : margins) {
    TrainConfig config = base;
    config.margin = m;
    TrainResult r = train(head_config, config, dataset);
    AnchorSpec spec = config.anchor_spec;
    spec.stride = head_config.stride();
    const MetricsReport report =
        evaluate_f1ap(r.model, eval_set, spec, eval_opts);
    rows.push_back({m, report.f1, report.ap});
  }
  return rows;
}

std::string margin_sweep_to_csv(const std::vector<MarginSweepRow>& rows) {
  std::ostringstream os;
  os << "margin,f1,ap\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", r.margin, r.f1, r.ap);
    os << buf;
  }
  return os.str();
}

}  // namespace srpn
