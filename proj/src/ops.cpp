#include "srpn/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace srpn {

using detail::NodePtr;

namespace {

Tensor make_output(std::vector<int> shape, bool needs_grad) {
  Tensor out = Tensor::zeros(std::move(shape));
  out.node()->needs_grad = needs_grad;
  return out;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weights,
              const Tensor& bias, int padding) {
  const auto& is = input.shape();
  const auto& ws = weights.shape();
  if (is.size() != 3)
    throw std::invalid_argument("conv2d: input must be [C,H,W], got " +
                                shape_str(is));
  if (ws.size() != 4 || ws[2] != ws[3])
    throw std::invalid_argument("conv2d: weights must be [C_out,C_in,k,k], got " +
                                shape_str(ws));
  const int c_in = is[0], h = is[1], w = is[2];
  const int c_out = ws[0], k = ws[2];
  if (k != 1 && k != 3)
    throw std::invalid_argument("conv2d: kernel size must be 1 or 3, got " +
                                std::to_string(k));
  if (ws[1] != c_in)
    throw std::invalid_argument(
        "conv2d: input channels " + std::to_string(c_in) +
        " do not match weight channels " + std::to_string(ws[1]) +
        " (input " + shape_str(is) + ", weights " + shape_str(ws) + ")");
  if (bias.shape() != std::vector<int>{c_out})
    throw std::invalid_argument("conv2d: bias must be [" +
                                std::to_string(c_out) + "], got " +
                                shape_str(bias.shape()));
  if (padding < 0)
    throw std::invalid_argument("conv2d: padding must be non-negative");
  const int oh = h + 2 * padding - k + 1;
  const int ow = w + 2 * padding - k + 1;
  if (oh <= 0 || ow <= 0)
    throw std::invalid_argument("conv2d: empty output for input " +
                                shape_str(is) + " with k=" + std::to_string(k) +
                                " padding=" + std::to_string(padding));

  const bool ng =
      input.needs_grad() || weights.needs_grad() || bias.needs_grad();
  Tensor out = make_output({c_out, oh, ow}, ng);

  const double* in = input.data();
  const double* wt = weights.data();
  const double* bs = bias.data();
  double* o = out.data();

  for (int co = 0; co < c_out; ++co) {
    double* oc = o + static_cast<std::size_t>(co) * oh * ow;
    const double b = bs[co];
    for (int i = 0; i < oh * ow; ++i) oc[i] = b;
    for (int ci = 0; ci < c_in; ++ci) {
      const double* ic = in + static_cast<std::size_t>(ci) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = wt[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx];
          if (wv == 0.0) continue;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy + ky - padding;
            if (iy < 0 || iy >= h) continue;
            const int x0 = std::max(0, padding - kx);
            const int x1 = std::min(ow, w + padding - kx);
            const double* irow = ic + static_cast<std::size_t>(iy) * w + (x0 + kx - padding);
            double* orow = oc + static_cast<std::size_t>(oy) * ow + x0;
            for (int ox = x0; ox < x1; ++ox) *orow++ += wv * *irow++;
          }
        }
      }
    }
  }

  if (ng) {
    tape.record([input, weights, bias, out, padding]() {
      const auto& is = input.shape();
      const auto& ws = weights.shape();
      const int c_in = is[0], h = is[1], w = is[2];
      const int c_out = ws[0], k = ws[2];
      const int oh = out.shape()[1], ow = out.shape()[2];
      const std::vector<double>& go = out.node()->grad_ref();

      if (bias.needs_grad()) {
        auto& gb = bias.node()->grad_ref();
        for (int co = 0; co < c_out; ++co) {
          double acc = 0.0;
          const double* g = go.data() + static_cast<std::size_t>(co) * oh * ow;
          for (int i = 0; i < oh * ow; ++i) acc += g[i];
          gb[co] += acc;
        }
      }
      if (weights.needs_grad()) {
        auto& gw = weights.node()->grad_ref();
        const double* in = input.data();
        for (int co = 0; co < c_out; ++co) {
          const double* g = go.data() + static_cast<std::size_t>(co) * oh * ow;
          for (int ci = 0; ci < c_in; ++ci) {
            const double* ic = in + static_cast<std::size_t>(ci) * h * w;
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                double acc = 0.0;
                for (int oy = 0; oy < oh; ++oy) {
                  const int iy = oy + ky - padding;
                  if (iy < 0 || iy >= h) continue;
                  const int x0 = std::max(0, padding - kx);
                  const int x1 = std::min(ow, w + padding - kx);
                  const double* irow =
                      ic + static_cast<std::size_t>(iy) * w + (x0 + kx - padding);
                  const double* grow = g + static_cast<std::size_t>(oy) * ow + x0;
                  for (int ox = x0; ox < x1; ++ox) acc += *grow++ * *irow++;
                }
                gw[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx] += acc;
              }
            }
          }
        }
      }
      if (input.needs_grad()) {
        auto& gi = input.node()->grad_ref();
        const double* wt = weights.data();
        for (int co = 0; co < c_out; ++co) {
          const double* g = go.data() + static_cast<std::size_t>(co) * oh * ow;
          for (int ci = 0; ci < c_in; ++ci) {
            double* gic = gi.data() + static_cast<std::size_t>(ci) * h * w;
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const double wv =
                    wt[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx];
                if (wv == 0.0) continue;
                for (int oy = 0; oy < oh; ++oy) {
                  const int iy = oy + ky - padding;
                  if (iy < 0 || iy >= h) continue;
                  const int x0 = std::max(0, padding - kx);
                  const int x1 = std::min(ow, w + padding - kx);
                  double* girow =
                      gic + static_cast<std::size_t>(iy) * w + (x0 + kx - padding);
                  const double* grow = g + static_cast<std::size_t>(oy) * ow + x0;
                  for (int ox = x0; ox < x1; ++ox) *girow++ += wv * *grow++;
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  if (x.needs_grad()) {
    tape.record([x, out]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      const double* in = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (in[i] > 0.0) gx[i] += go[i];
    });
  }
  return out;
}

Tensor logistic(Tape& tape, const Tensor& x) {
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  // saturated outputs are nudged to the nearest representable value inside
  // (0,1) so downstream logs and the (0,1) contract stay valid
  const double hi = std::nextafter(1.0, 0.0);
  const double lo = std::numeric_limits<double>::min();
  for (int i = 0; i < n; ++i) {
    const double v = in[i];
    double s;
    if (v >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      s = e / (1.0 + e);
    }
    o[i] = std::min(hi, std::max(lo, s));
  }
  if (x.needs_grad()) {
    tape.record([x, out]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      const double* s = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += go[i] * s[i] * (1.0 - s[i]);
    });
  }
  return out;
}

Tensor squared_l2(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("squared_l2", a, b);
  const bool ng = a.needs_grad() || b.needs_grad();
  Tensor out = make_output({1}, ng);
  const double* pa = a.data();
  const double* pb = b.data();
  double acc = 0.0;
  const int n = a.numel();
  for (int i = 0; i < n; ++i) {
    const double d = pa[i] - pb[i];
    acc += d * d;
  }
  out.data()[0] = acc;
  if (ng) {
    tape.record([a, b, out]() {
      const double g = out.node()->grad_ref()[0];
      const double* pa = a.data();
      const double* pb = b.data();
      const int n = a.numel();
      if (a.needs_grad()) {
        auto& ga = a.node()->grad_ref();
        for (int i = 0; i < n; ++i) ga[i] += g * 2.0 * (pa[i] - pb[i]);
      }
      if (b.needs_grad()) {
        auto& gb = b.node()->grad_ref();
        for (int i = 0; i < n; ++i) gb[i] -= g * 2.0 * (pa[i] - pb[i]);
      }
    });
  }
  return out;
}

Tensor avg_pool2(Tape& tape, const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0)
    throw std::invalid_argument(
        "avg_pool2: input must be [C,H,W] with even H and W, got " +
        shape_str(s));
  const int c = s[0], h = s[1], w = s[2];
  const int oh = h / 2, ow = w / 2;
  Tensor out = make_output({c, oh, ow}, x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  for (int ci = 0; ci < c; ++ci) {
    const double* ic = in + static_cast<std::size_t>(ci) * h * w;
    double* oc = o + static_cast<std::size_t>(ci) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const double* r0 = ic + static_cast<std::size_t>(2 * oy) * w;
      const double* r1 = r0 + w;
      for (int ox = 0; ox < ow; ++ox)
        oc[static_cast<std::size_t>(oy) * ow + ox] =
            0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
    }
  }
  if (x.needs_grad()) {
    tape.record([x, out]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      const auto& s = x.shape();
      const int c = s[0], h = s[1], w = s[2];
      const int oh = h / 2, ow = w / 2;
      for (int ci = 0; ci < c; ++ci) {
        const double* gc = go.data() + static_cast<std::size_t>(ci) * oh * ow;
        double* gic = gx.data() + static_cast<std::size_t>(ci) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const double g = 0.25 * gc[static_cast<std::size_t>(oy) * ow + ox];
            gic[static_cast<std::size_t>(2 * oy) * w + 2 * ox] += g;
            gic[static_cast<std::size_t>(2 * oy) * w + 2 * ox + 1] += g;
            gic[static_cast<std::size_t>(2 * oy + 1) * w + 2 * ox] += g;
            gic[static_cast<std::size_t>(2 * oy + 1) * w + 2 * ox + 1] += g;
          }
        }
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  const bool ng = a.needs_grad() || b.needs_grad();
  Tensor out = make_output(a.shape(), ng);
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  const int n = a.numel();
  for (int i = 0; i < n; ++i) o[i] = pa[i] + pb[i];
  if (ng) {
    tape.record([a, b, out]() {
      const auto& go = out.node()->grad_ref();
      if (a.needs_grad()) {
        auto& ga = a.node()->grad_ref();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.node()->grad_ref();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  const bool ng = a.needs_grad() || b.needs_grad();
  Tensor out = make_output(a.shape(), ng);
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  const int n = a.numel();
  for (int i = 0; i < n; ++i) o[i] = pa[i] - pb[i];
  if (ng) {
    tape.record([a, b, out]() {
      const auto& go = out.node()->grad_ref();
      if (a.needs_grad()) {
        auto& ga = a.node()->grad_ref();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.node()->grad_ref();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  const bool ng = a.needs_grad() || b.needs_grad();
  Tensor out = make_output(a.shape(), ng);
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  const int n = a.numel();
  for (int i = 0; i < n; ++i) o[i] = pa[i] * pb[i];
  if (ng) {
    tape.record([a, b, out]() {
      const auto& go = out.node()->grad_ref();
      const double* pa = a.data();
      const double* pb = b.data();
      if (a.needs_grad()) {
        auto& ga = a.node()->grad_ref();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * pb[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.node()->grad_ref();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * pa[i];
      }
    });
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& x, double c) {
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) o[i] = in[i] + c;
  if (x.needs_grad()) {
    tape.record([x, out]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor mul_scalar(Tape& tape, const Tensor& x, double c) {
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) o[i] = in[i] * c;
  if (x.needs_grad()) {
    tape.record([x, out, c]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * c;
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out = make_output({1}, x.needs_grad());
  const double* in = x.data();
  double acc = 0.0;
  const int n = x.numel();
  for (int i = 0; i < n; ++i) acc += in[i];
  out.data()[0] = acc;
  if (x.needs_grad()) {
    tape.record([x, out]() {
      const double g = out.node()->grad_ref()[0];
      auto& gx = x.node()->grad_ref();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor log(Tape& tape, const Tensor& x) {
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) o[i] = std::log(in[i]);
  if (x.needs_grad()) {
    tape.record([x, out]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      const double* in = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] / in[i];
    });
  }
  return out;
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) o[i] = in[i] < lo ? lo : (in[i] > hi ? hi : in[i]);
  if (x.needs_grad()) {
    tape.record([x, out, lo, hi]() {
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      const double* in = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (in[i] > lo && in[i] < hi) gx[i] += go[i];
    });
  }
  return out;
}

Tensor pow_const(Tape& tape, const Tensor& x, double p) {
  Tensor out = make_output(x.shape(), x.needs_grad());
  const double* in = x.data();
  double* o = out.data();
  const int n = x.numel();
  for (int i = 0; i < n; ++i) o[i] = p == 0.0 ? 1.0 : std::pow(in[i], p);
  if (x.needs_grad()) {
    tape.record([x, out, p]() {
      if (p == 0.0) return;
      const auto& go = out.node()->grad_ref();
      auto& gx = x.node()->grad_ref();
      const double* in = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += go[i] * p * std::pow(in[i], p - 1.0);
    });
  }
  return out;
}

Tensor channel_slice_at(Tape& tape, const Tensor& map, int c0, int c1, int y,
                        int x) {
  const auto& s = map.shape();
  if (s.size() != 3)
    throw std::invalid_argument("channel_slice_at: map must be [C,H,W], got " +
                                shape_str(s));
  if (c0 < 0 || c1 > s[0] || c0 >= c1 || y < 0 || y >= s[1] || x < 0 ||
      x >= s[2])
    throw std::invalid_argument(
        "channel_slice_at: slice [" + std::to_string(c0) + "," +
        std::to_string(c1) + ") at (" + std::to_string(y) + "," +
        std::to_string(x) + ") out of bounds for map " + shape_str(s));
  const int h = s[1], w = s[2];
  Tensor out = make_output({c1 - c0}, map.needs_grad());
  const double* in = map.data();
  double* o = out.data();
  for (int c = c0; c < c1; ++c)
    o[c - c0] = in[(static_cast<std::size_t>(c) * h + y) * w + x];
  if (map.needs_grad()) {
    tape.record([map, out, c0, c1, y, x]() {
      const auto& go = out.node()->grad_ref();
      auto& gm = map.node()->grad_ref();
      const int h = map.shape()[1], w = map.shape()[2];
      for (int c = c0; c < c1; ++c)
        gm[(static_cast<std::size_t>(c) * h + y) * w + x] += go[c - c0];
    });
  }
  return out;
}

}  // namespace srpn
