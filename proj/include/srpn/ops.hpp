#pragma once

#include "srpn/tensor.hpp"

namespace srpn {

// Differentiable operations over tensors. Every op allocates a fresh output,
// records its reverse step on the tape when a gradient has to flow, and
// leaves its inputs untouched.

// Cross-correlation of input [C_in,H,W] with weights [C_out,C_in,k,k] and
// bias [C_out]; k must be 1 or 3. Output spatial size is H+2*padding-k+1.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weights,
              const Tensor& bias, int padding);

// Elementwise max(x, 0); the subgradient at exactly 0 is 0.
Tensor relu(Tape& tape, const Tensor& x);

// Elementwise 1/(1+exp(-x)), numerically stable; output strictly in (0,1).
Tensor logistic(Tape& tape, const Tensor& x);

// Sum of squared differences of two equal-shape tensors, as a scalar.
Tensor squared_l2(Tape& tape, const Tensor& a, const Tensor& b);

// 2x2 average pooling with stride 2 on [C,H,W]; H and W must be even.
Tensor avg_pool2(Tape& tape, const Tensor& x);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add_scalar(Tape& tape, const Tensor& x, double c);
Tensor mul_scalar(Tape& tape, const Tensor& x, double c);

// Sum of all elements, as a scalar tensor.
Tensor sum(Tape& tape, const Tensor& x);

// Elementwise natural log; caller keeps the domain positive (see clamp).
Tensor log(Tape& tape, const Tensor& x);

// Elementwise clamp into [lo, hi]; zero subgradient outside the open
// interval, matching the relu hinge convention.
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);

// Elementwise x^p for non-negative x and constant exponent p.
Tensor pow_const(Tape& tape, const Tensor& x, double p);

// Channels [c0, c1) of a [C,H,W] map at spatial location (y, x), as a
// vector of length c1-c0. Gradients scatter back into the map.
Tensor channel_slice_at(Tape& tape, const Tensor& map, int c0, int c1, int y,
                        int x);

}  // namespace srpn
