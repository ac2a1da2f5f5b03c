#include "srpn/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "srpn/anchors.hpp"
#include "srpn/head.hpp"
#include "srpn/losses.hpp"
#include "srpn/ops.hpp"
#include "srpn/rng.hpp"

namespace srpn {

double gradcheck_rel_err(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(
    const std::string& name,
    const std::function<Tensor(Tape&)>& forward_scalar,
    const std::vector<Tensor>& inputs, double tolerance, double step) {
  GradCheckResult result;
  result.name = name;
  result.tolerance = tolerance;

  for (const Tensor& input : inputs) {
    input.node()->grad.clear();
  }
  {
    Tape tape;
    Tensor loss = forward_scalar(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const Tensor& input : inputs) {
    Tensor t = input;  // non-const handle onto the same node
    analytic.push_back(t.grad_ref());
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor input = inputs[i];
    double* data = input.data();
    for (int j = 0; j < input.numel(); ++j) {
      const double orig = data[j];
      data[j] = orig + step;
      double f_plus;
      {
        Tape tape;
        f_plus = forward_scalar(tape).value();
      }
      data[j] = orig - step;
      double f_minus;
      {
        Tape tape;
        f_minus = forward_scalar(tape).value();
      }
      data[j] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double rel = gradcheck_rel_err(analytic[i][static_cast<std::size_t>(j)], numeric);
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.points_checked;
    }
  }
  result.pass = result.max_rel_err < tolerance;
  return result;
}

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// One battery entry: redraws inputs `points` times and keeps the worst
// relative error.
GradCheckResult repeat_check(
    const std::string& name, int points, std::uint64_t seed, double tolerance,
    const std::function<void(Rng&, std::vector<Tensor>*,
                             std::function<Tensor(Tape&)>*)>& make_case,
    double step = 1e-5) {
  GradCheckResult result;
  result.name = name;
  result.tolerance = tolerance;
  for (int p = 0; p < points; ++p) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(p)));
    std::vector<Tensor> inputs;
    std::function<Tensor(Tape&)> fn;
    make_case(rng, &inputs, &fn);
    const GradCheckResult one =
        check_gradients(name, fn, inputs, tolerance, step);
    result.max_rel_err = std::max(result.max_rel_err, one.max_rel_err);
    result.points_checked += one.points_checked;
  }
  result.pass = result.max_rel_err < tolerance;
  return result;
}

std::vector<GradCheckResult> ops_battery(std::uint64_t seed, int points) {
  std::vector<GradCheckResult> out;

  out.push_back(repeat_check(
      "conv2d", points, mix_seed(seed, 1), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {2, 5, 5}, -1.0, 1.0);
        Tensor w = random_tensor(rng, {3, 2, 3, 3}, -0.8, 0.8);
        Tensor b = random_tensor(rng, {3}, -0.5, 0.5);
        *inputs = {x, w, b};
        *fn = [x, w, b](Tape& tape) {
          return sum(tape, conv2d(tape, x, w, b, 1));
        };
      }));

  out.push_back(repeat_check(
      "relu", points, mix_seed(seed, 2), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = Tensor::zeros({12}, true);
        for (int i = 0; i < x.numel(); ++i) {
          double v = 0.0;
          while (std::abs(v) <= 1e-3) v = rng.uniform(-2.0, 2.0);
          x.data()[i] = v;
        }
        // weights keep the reduction non-trivial
        Tensor w = random_tensor(rng, {12}, 0.2, 1.5);
        *inputs = {x};
        *fn = [x, w](Tape& tape) {
          return sum(tape, mul(tape, relu(tape, x), w));
        };
      }));

  out.push_back(repeat_check(
      "logistic", points, mix_seed(seed, 3), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {10}, -4.0, 4.0);
        *inputs = {x};
        *fn = [x](Tape& tape) { return sum(tape, logistic(tape, x)); };
      }));

  out.push_back(repeat_check(
      "squared_l2", points, mix_seed(seed, 4), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor a = random_tensor(rng, {8}, -2.0, 2.0);
        Tensor b = random_tensor(rng, {8}, -2.0, 2.0);
        *inputs = {a, b};
        *fn = [a, b](Tape& tape) { return squared_l2(tape, a, b); };
      }));

  out.push_back(repeat_check(
      "avg_pool2", points, mix_seed(seed, 5), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {2, 4, 6}, -1.5, 1.5);
        Tensor w = random_tensor(rng, {2, 2, 3}, 0.1, 1.0);
        *inputs = {x};
        *fn = [x, w](Tape& tape) {
          return sum(tape, mul(tape, avg_pool2(tape, x), w));
        };
      }));

  out.push_back(repeat_check(
      "add_sub_mul", points, mix_seed(seed, 6), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor a = random_tensor(rng, {6}, -2.0, 2.0);
        Tensor b = random_tensor(rng, {6}, -2.0, 2.0);
        Tensor c = random_tensor(rng, {6}, -2.0, 2.0);
        *inputs = {a, b, c};
        *fn = [a, b, c](Tape& tape) {
          return sum(tape, mul(tape, add(tape, a, b), sub(tape, a, c)));
        };
      }));

  out.push_back(repeat_check(
      "scalar_ops", points, mix_seed(seed, 7), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {7}, -2.0, 2.0);
        *inputs = {x};
        *fn = [x](Tape& tape) {
          return sum(tape, add_scalar(tape, mul_scalar(tape, x, 1.7), -0.3));
        };
      }));

  out.push_back(repeat_check(
      "log", points, mix_seed(seed, 8), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {9}, 0.1, 3.0);
        *inputs = {x};
        *fn = [x](Tape& tape) { return sum(tape, log(tape, x)); };
      }));

  out.push_back(repeat_check(
      "clamp", points, mix_seed(seed, 9), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = Tensor::zeros({10}, true);
        for (int i = 0; i < x.numel(); ++i) {
          double v = rng.uniform(-2.0, 2.0);
          // keep away from the clamp edges at +/-1
          while (std::abs(std::abs(v) - 1.0) <= 1e-2) v = rng.uniform(-2.0, 2.0);
          x.data()[i] = v;
        }
        *inputs = {x};
        *fn = [x](Tape& tape) {
          return sum(tape, clamp(tape, x, -1.0, 1.0));
        };
      }));

  out.push_back(repeat_check(
      "pow_const", points, mix_seed(seed, 10), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {6}, 0.2, 2.0);
        *inputs = {x};
        *fn = [x](Tape& tape) { return sum(tape, pow_const(tape, x, 2.5)); };
      }));

  out.push_back(repeat_check(
      "channel_slice_at", points, mix_seed(seed, 11), 1e-6,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor x = random_tensor(rng, {6, 3, 3}, -1.0, 1.0);
        const int c0 = rng.uniform_int(4);
        const int y = rng.uniform_int(3);
        const int xx = rng.uniform_int(3);
        *inputs = {x};
        *fn = [x, c0, y, xx](Tape& tape) {
          return squared_l2(
              tape, channel_slice_at(tape, x, c0, c0 + 2, y, xx),
              Tensor::from_data({2}, {0.3, -0.2}));
        };
      }));

  return out;
}

std::vector<GradCheckResult> losses_battery(std::uint64_t seed, int points) {
  std::vector<GradCheckResult> out;

  out.push_back(repeat_check(
      "pair_loss", points, mix_seed(seed, 21), 1e-5,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        const double m = 1.0;
        const int s = rng.bernoulli(0.5) ? 1 : 0;
        Tensor a, b;
        double d = 0.0;
        do {  // stay away from the dissimilar-branch hinge at D = m
          a = random_tensor(rng, {5}, -1.0, 1.0);
          b = random_tensor(rng, {5}, -1.0, 1.0);
          d = 0.0;
          for (int i = 0; i < 5; ++i) {
            const double diff = a.at(i) - b.at(i);
            d += diff * diff;
          }
        } while (s == 0 && std::abs(d - m) <= 1e-2);
        *inputs = {a, b};
        *fn = [a, b, s, m](Tape& tape) {
          return pair_loss(tape, a, b, s, Margin{m});
        };
      }));

  out.push_back(repeat_check(
      "triplet_loss", points, mix_seed(seed, 22), 1e-5,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        const double m = 2.0;
        Tensor a, p, n;
        double hinge = 0.0;
        do {
          a = random_tensor(rng, {5}, -1.5, 1.5);
          p = random_tensor(rng, {5}, -1.5, 1.5);
          n = random_tensor(rng, {5}, -1.5, 1.5);
          double dap = 0.0, dan = 0.0;
          for (int i = 0; i < 5; ++i) {
            dap += (a.at(i) - p.at(i)) * (a.at(i) - p.at(i));
            dan += (a.at(i) - n.at(i)) * (a.at(i) - n.at(i));
          }
          hinge = dap - dan + m;
        } while (std::abs(hinge) <= 1e-2);
        *inputs = {a, p, n};
        *fn = [a, p, n, m](Tape& tape) {
          return triplet_loss(tape, a, p, n, Margin{m});
        };
      }));

  out.push_back(repeat_check(
      "smooth_l1", points, mix_seed(seed, 23), 1e-5,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor t = Tensor::zeros({4}, true);
        Tensor ts = Tensor::zeros({4});
        for (int i = 0; i < 4; ++i) {
          double d = rng.uniform(-2.5, 2.5);
          while (std::abs(std::abs(d) - 1.0) <= 1e-2) d = rng.uniform(-2.5, 2.5);
          ts.data()[i] = rng.uniform(-1.0, 1.0);
          t.data()[i] = ts.at(i) + d;
        }
        *inputs = {t};
        *fn = [t, ts](Tape& tape) { return smooth_l1(tape, t, ts); };
      }));

  out.push_back(repeat_check(
      "cross_entropy", points, mix_seed(seed, 24), 1e-5,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor p = Tensor::from_data({1}, {rng.uniform(0.05, 0.95)}, true);
        const int p_star = rng.bernoulli(0.5) ? 1 : 0;
        *inputs = {p};
        *fn = [p, p_star](Tape& tape) {
          return cross_entropy(tape, p, p_star);
        };
      }));

  out.push_back(repeat_check(
      "focal_loss", points, mix_seed(seed, 25), 1e-5,
      [](Rng& rng, std::vector<Tensor>* inputs,
         std::function<Tensor(Tape&)>* fn) {
        Tensor p = Tensor::from_data({1}, {rng.uniform(0.05, 0.95)}, true);
        const int p_star = rng.bernoulli(0.5) ? 1 : 0;
        *inputs = {p};
        *fn = [p, p_star](Tape& tape) {
          return focal_loss(tape, p, p_star, 0.25, 2.0);
        };
      }));

  return out;
}

std::vector<GradCheckResult> model_battery(std::uint64_t seed, int points) {
  // End-to-end: total loss of a miniature head on one image; every model
  // parameter is finite-difference checked. Tolerance is looser than the
  // per-op checks because errors compound with depth.
  const int runs = std::max(1, points / 10);
  GradCheckResult result;
  result.name = "head_total_loss";
  result.tolerance = 1e-3;

  for (int run = 0; run < runs; ++run) {
    Rng rng(mix_seed(seed, 31 + static_cast<std::uint64_t>(run)));

    HeadConfig cfg;
    cfg.backbone_channels = {4};
    cfg.c1 = 6;
    cfg.c2 = 6;
    cfg.num_anchor = 2;
    cfg.dim_embedding = 3;
    Model model = build_model(cfg, mix_seed(seed, 100 + static_cast<std::uint64_t>(run)));
    // larger weights than the training init keep relu preactivations away
    // from their hinges, where finite differences are meaningless
    for (auto& p : model.params)
      for (int i = 0; i < p.tensor.numel(); ++i)
        p.tensor.data()[i] = rng.normal(0.0, 0.35);

    Tensor image = random_tensor(rng, {3, 16, 16}, 0.0, 1.0);
    image.node()->requires_grad = false;
    image.node()->needs_grad = false;

    AnchorSpec spec{{6.0, 10.0}, {1.0}, static_cast<double>(cfg.stride())};
    const std::vector<BBox> gt = {BBox{2.0, 3.0, 7.0, 6.0},
                                  BBox{9.0, 9.0, 5.0, 6.0}};

    auto forward_loss = [&, image](Tape& tape) {
      HeadOutput out = forward(tape, model, image);
      std::vector<BBox> anchors = generate(spec, out.feature_h, out.feature_w);
      std::vector<LabeledAnchor> labels = label_anchors(anchors, gt, 0.5, 0.2);
      AnchorViews views = extract_anchor_views(tape, out, labels);
      TotalLossOptions opts;
      opts.mode = EmbedMode::kTriplet;
      opts.margin = Margin{2.0};
      opts.embed_samples = 6;
      opts.rng_seed = 77;
      return total_loss(tape, views.embeds, views.preds, views.targets, opts)
          .total;
    };

    std::vector<Tensor> inputs;
    for (auto& p : model.params) inputs.push_back(p.tensor);
    const GradCheckResult one = check_gradients(
        "head_total_loss", forward_loss, inputs, result.tolerance, 1e-4);
    result.max_rel_err = std::max(result.max_rel_err, one.max_rel_err);
    result.points_checked += one.points_checked;
  }
  result.pass = result.max_rel_err < result.tolerance;
  return {result};
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const std::string& scope,
                                           std::uint64_t seed, int points) {
  if (scope == "ops") return ops_battery(seed, points);
  if (scope == "losses") return losses_battery(seed, points);
  if (scope == "model") return model_battery(seed, points);
  throw std::invalid_argument("run_gradcheck: scope must be ops|losses|model");
}

std::string gradcheck_table(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %12s %10s %8s  %s\n", "op",
                "max_rel_err", "tolerance", "points", "status");
  os << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-18s %12.3e %10.1e %8d  %s\n",
                  r.name.c_str(), r.max_rel_err, r.tolerance, r.points_checked,
                  r.pass ? "pass" : "FAIL");
    os << buf;
  }
  return os.str();
}

}  // namespace srpn
