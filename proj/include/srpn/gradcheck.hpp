#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srpn/tensor.hpp"

namespace srpn {

// Finite-difference verification of the reverse pass. The numeric side uses
// only forward evaluations (central differences), so it is independent of
// the backward code it checks.

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  int points_checked = 0;
  bool pass = false;
};

// relative error |a - n| / max(|a|, |n|, floor); the floor absorbs
// finite-difference noise when the true gradient is ~0.
double gradcheck_rel_err(double analytic, double numeric,
                         double floor = 1e-6);

// Checks d(scalar f(inputs))/d(inputs) for every element of every input
// marked requires_grad. `f` must rebuild the graph on the given tape from
// the same input tensors each call. Central differences with step h.
GradCheckResult check_gradients(
    const std::string& name,
    const std::function<Tensor(Tape&)>& forward_scalar,
    const std::vector<Tensor>& inputs, double tolerance, double step = 1e-5);

// The standard battery over ops, losses and the assembled head, seeded and
// evaluated away from hinge points. scope: "ops", "losses" or "model".
std::vector<GradCheckResult> run_gradcheck(const std::string& scope,
                                           std::uint64_t seed = 20240901,
                                           int points = 20);

std::string gradcheck_table(const std::vector<GradCheckResult>& results);

}  // namespace srpn
