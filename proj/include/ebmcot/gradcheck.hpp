#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ebmcot/paramset.hpp"
#include "ebmcot/tensor.hpp"

namespace ebmcot {

// Central-difference gradient of a scalar function, the oracle every
// analytic gradient in this project is checked against. Step size is
// per-entry: h * (1 + |x_i|).
Tensor fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
               double h = 1e-4);

// Central-difference gradient over every entry of a ParamSet. `f` is called
// with a perturbed copy of the parameters.
GradMap fd_grad_params(const std::function<double(const ParamSet&)>& f,
                       const ParamSet& params, double h = 1e-4);

// Hessian-vector product via central differences of an analytic gradient:
// (grad(x + h v) - grad(x - h v)) / (2 h), h = 1e-4 * (1 + max|x|). The
// function being differentiated must be twice differentiable at x.
Tensor hvp(const std::function<Tensor(const Tensor&)>& grad_fn, const Tensor& at,
           const Tensor& v);

// L2 relative error with a floor on the denominator
double rel_error(const Tensor& a, const Tensor& b);
double rel_error(const GradMap& a, const GradMap& b);

// --- three-way agreement suite --------------------------------------------
// Random small energy models are driven through the full noisy update chain;
// the closed-form parameter gradient, the whole-chain tape gradient, and
// central finite differences over the parameters must agree pairwise.

struct GradCheckCase {
  int latent_dim = 4;
  int n_thoughts = 2;
  int context_dim = 3;
  int position_dim = 2;
  std::vector<int> hidden = {6, 4};
  int steps = 2;
  double eta = 0.1;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  GradCheckCase config;
  double rel_closed_vs_tape = 0.0;
  double rel_closed_vs_fd = 0.0;
  double rel_tape_vs_fd = 0.0;
  // same comparisons for the gradient in the initial latent block
  double rel_initial_closed_vs_tape = 0.0;
  double rel_initial_tape_vs_fd = 0.0;
  bool pass = false;
};

struct GradCheckSummary {
  std::vector<GradCheckResult> results;
  double max_closed_vs_tape = 0.0;
  double max_closed_vs_fd = 0.0;
  double max_tape_vs_fd = 0.0;
  bool all_pass = false;
};

// n_configs randomized cases derived from `seed`; tolerances: closed form vs
// either route <= tol_closed, tape vs finite differences <= tol_tape_fd
GradCheckSummary run_three_way_suite(int n_configs, std::uint64_t seed,
                                     double tol_closed = 1e-3,
                                     double tol_tape_fd = 1e-4);

std::string format_suite_summary(const GradCheckSummary& s);

}  // namespace ebmcot
