#include "srpn/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "srpn/ops.hpp"

namespace srpn {

namespace {

void check_margin(Margin margin, const char* op) {
  if (!(margin.m >= 0.0) || !std::isfinite(margin.m))
    throw std::invalid_argument(std::string(op) +
                                ": margin must be finite and >= 0");
}

Tensor one_minus(Tape& tape, const Tensor& x) {
  return add_scalar(tape, mul_scalar(tape, x, -1.0), 1.0);
}

Tensor clamped_prob(Tape& tape, const Tensor& p, int p_star) {
  Tensor pc = clamp(tape, p, kProbClamp, 1.0 - kProbClamp);
  return p_star == 1 ? pc : one_minus(tape, pc);
}

void check_label(int p_star, const char* op) {
  if (p_star != 0 && p_star != 1)
    throw std::invalid_argument(std::string(op) + ": p* must be 0 or 1");
}

}  // namespace

Tensor pair_loss(Tape& tape, const Tensor& e1, const Tensor& e2, int similar,
                 Margin margin) {
  check_margin(margin, "pair_loss");
  if (similar != 0 && similar != 1)
    throw std::invalid_argument("pair_loss: s must be 0 or 1");
  Tensor d = squared_l2(tape, e1, e2);
  if (similar == 1) return mul_scalar(tape, d, 0.5);
  // 1/2 * max(m - D, 0)
  return mul_scalar(
      tape, relu(tape, add_scalar(tape, mul_scalar(tape, d, -1.0), margin.m)),
      0.5);
}

Tensor triplet_loss(Tape& tape, const Tensor& anchor, const Tensor& positive,
                    const Tensor& negative, Margin margin) {
  check_margin(margin, "triplet_loss");
  Tensor d_ap = squared_l2(tape, anchor, positive);
  Tensor d_an = squared_l2(tape, anchor, negative);
  return relu(tape, add_scalar(tape, sub(tape, d_ap, d_an), margin.m));
}

Tensor smooth_l1(Tape& tape, const Tensor& t, const Tensor& t_star) {
  if (t.shape() != t_star.shape())
    throw std::invalid_argument("smooth_l1: shape mismatch " +
                                shape_str(t.shape()) + " vs " +
                                shape_str(t_star.shape()));
  const bool ng = t.needs_grad() || t_star.needs_grad();
  Tensor out = Tensor::zeros({1});
  out.node()->needs_grad = ng;
  const double* a = t.data();
  const double* b = t_star.data();
  const int n = t.numel();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = a[i] - b[i];
    const double ax = std::abs(x);
    acc += ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  }
  out.data()[0] = acc;
  if (ng) {
    tape.record([t, t_star, out]() {
      const double g = out.node()->grad_ref()[0];
      const double* a = t.data();
      const double* b = t_star.data();
      const int n = t.numel();
      for (int i = 0; i < n; ++i) {
        const double x = a[i] - b[i];
        const double dx = std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
        if (t.needs_grad()) t.node()->grad_ref()[i] += g * dx;
        if (t_star.needs_grad()) t_star.node()->grad_ref()[i] -= g * dx;
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& p, int p_star) {
  check_label(p_star, "cross_entropy");
  if (p.numel() != 1)
    throw std::invalid_argument("cross_entropy: p must be scalar");
  return mul_scalar(tape, log(tape, clamped_prob(tape, p, p_star)), -1.0);
}

Tensor focal_loss(Tape& tape, const Tensor& p, int p_star, double alpha,
                  double gamma) {
  check_label(p_star, "focal_loss");
  if (p.numel() != 1)
    throw std::invalid_argument("focal_loss: p must be scalar");
  if (alpha < 0.0 || alpha > 1.0 || gamma < 0.0)
    throw std::invalid_argument("focal_loss: need 0 <= alpha <= 1, gamma >= 0");
  const double alpha_t = p_star == 1 ? alpha : 1.0 - alpha;
  Tensor p_t = clamped_prob(tape, p, p_star);
  Tensor weight = pow_const(tape, one_minus(tape, p_t), gamma);
  return mul_scalar(tape, mul(tape, weight, log(tape, p_t)), -alpha_t);
}

double cross_entropy_value(double p, int p_star) {
  const double pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
  return -std::log(p_star == 1 ? pc : 1.0 - pc);
}

double focal_loss_value(double p, int p_star, double alpha, double gamma) {
  const double pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
  const double p_t = p_star == 1 ? pc : 1.0 - pc;
  const double alpha_t = p_star == 1 ? alpha : 1.0 - alpha;
  return -alpha_t * std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

namespace {

// Mean of already-recorded scalar terms; empty input gives a plain zero.
Tensor combine_terms(Tape& tape, const std::vector<Tensor>& terms,
                     bool normalize) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i)
    acc = add(tape, acc, terms[i]);
  if (normalize && terms.size() > 1)
    acc = mul_scalar(tape, acc, 1.0 / static_cast<double>(terms.size()));
  return acc;
}

}  // namespace

LossBreakdown total_loss(Tape& tape, const EmbeddingSet& embeds,
                         const std::vector<AnchorPrediction>& preds,
                         const std::vector<AnchorTarget>& targets,
                         const TotalLossOptions& opts) {
  const std::size_t n = targets.size();
  if (preds.size() != n || (!embeds.empty() && embeds.size() != n))
    throw std::invalid_argument(
        "total_loss: embeds/preds/targets must be aligned by anchor index");
  for (std::size_t i = 0; i < embeds.size(); ++i)
    if (embeds[i].label != targets[i].label)
      throw std::invalid_argument(
          "total_loss: embedding labels disagree with targets at index " +
          std::to_string(i));

  LossBreakdown out;
  out.n_selected = static_cast<int>(n);
  for (const auto& t : targets)
    if (t.label == 1) ++out.n_positive;

  // embedding term
  std::vector<Tensor> embed_terms;
  if (opts.mode != EmbedMode::kNone && !embeds.empty()) {
    int n_samples = opts.embed_samples;
    if (n_samples <= 0) n_samples = std::min(256, 4 * out.n_positive);
    int n_fg = 0, n_bg = 0;
    for (const auto& e : embeds) (e.label == 1 ? n_fg : n_bg)++;
    if (opts.mode == EmbedMode::kPair && n_samples >= 1 &&
        embeds.size() >= 2) {
      PairSet ps = make_pairs(embeds, n_samples, opts.rng_seed);
      for (const auto& pr : ps.pairs)
        embed_terms.push_back(
            pair_loss(tape, pr.first, pr.second, pr.similar, opts.margin));
      out.n_pairs = static_cast<int>(ps.pairs.size());
    } else if (opts.mode == EmbedMode::kTriplet && n_samples >= 1 &&
               ((n_fg >= 2 && n_bg >= 1) || (n_bg >= 2 && n_fg >= 1))) {
      TripletSet ts = make_triplets(embeds, n_samples, opts.rng_seed);
      for (const auto& tr : ts)
        embed_terms.push_back(triplet_loss(tape, tr.anchor, tr.positive,
                                           tr.negative, opts.margin));
      out.n_triplets = static_cast<int>(ts.size());
    }
  }
  Tensor embed_term = combine_terms(tape, embed_terms, opts.normalize);

  // localization term, active only where p* = 1
  std::vector<Tensor> loc_terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i].label != 1) continue;
    const OffsetTuple& t = targets[i].offsets;
    Tensor target =
        Tensor::from_data({4}, {t.tx, t.ty, t.th, t.tw});
    loc_terms.push_back(smooth_l1(tape, preds[i].offsets, target));
  }
  Tensor loc_term = combine_terms(tape, loc_terms, opts.normalize);

  // classification term
  std::vector<Tensor> cls_terms;
  for (std::size_t i = 0; i < n; ++i) {
    cls_terms.push_back(
        opts.cls_kind == ClsLossKind::kCrossEntropy
            ? cross_entropy(tape, preds[i].score, targets[i].label)
            : focal_loss(tape, preds[i].score, targets[i].label,
                         opts.focal_alpha, opts.focal_gamma));
  }
  Tensor cls_term = combine_terms(tape, cls_terms, opts.normalize);

  out.embed = embed_term.value();
  out.loc = loc_term.value();
  out.cls = cls_term.value();
  out.total = add(
      tape,
      add(tape, mul_scalar(tape, embed_term, opts.weights.embed),
          mul_scalar(tape, loc_term, opts.weights.loc)),
      mul_scalar(tape, cls_term, opts.weights.cls));
  return out;
}

}  // namespace srpn
