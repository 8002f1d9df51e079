#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stlm/rng.hpp"
#include "stlm/tensor.hpp"

namespace stlm {

struct GradCheckOptions {
  double rel_tol = 1e-4;
  double fd_step = 1e-5;
  double abs_floor = 1e-7;  // |analytic - fd| below this always passes
  int max_coords = 0;       // 0 = perturb every coordinate
  std::optional<OpKind> inject_fault;  // mutation hook for checker self-tests
};

struct CheckResult {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
  std::vector<std::pair<std::string, double>> per_input;
};

struct InputSpec {
  std::string name;
  Shape shape;
  std::function<std::vector<double>(Rng&)> make;  // base-point values
};

using ScalarBuilder =
    std::function<Tensor<double>(Graph<double>&, const std::vector<Tensor<double>>&)>;

// Central finite differences against reverse-mode gradients in 64-bit mode.
CheckResult grad_check(const std::string& name, const std::vector<InputSpec>& inputs,
                       const ScalarBuilder& builder, uint64_t seed,
                       const GradCheckOptions& opt = {});

// One aggregated result per primitive kind, each over `iters` random
// shape/seed combinations.
std::vector<CheckResult> primitive_gradcheck_suite(int iters, uint64_t seed,
                                                   const GradCheckOptions& opt = {});

// Distillation, focal, L1, totals and the logit variant.
std::vector<CheckResult> loss_gradcheck_suite(int iters, uint64_t seed,
                                              const GradCheckOptions& opt = {});

// End-to-end objective on a miniature model, checked at 1e-3 through a
// sampled subset of parameter coordinates in every component.
CheckResult model_gradcheck(int iters, uint64_t seed);

}  // namespace stlm
