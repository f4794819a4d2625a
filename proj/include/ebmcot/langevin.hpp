#pragma once

#include <functional>
#include <vector>

#include "ebmcot/energy.hpp"
#include "ebmcot/rng.hpp"
#include "ebmcot/tensor.hpp"

namespace ebmcot {

struct LangevinConfig {
  double eta = 0.1;
  int steps = 3;
  bool noise_enabled = true;  // off for inference-time calibration
};

// One recorded refinement run. states has steps+1 entries (states[0] is the
// input block), noises has one standard-normal draw per step. With noise
// disabled the noises are stored as zeros so a replay is the same code path.
struct LangevinTrajectory {
  double eta = 0.0;
  std::vector<Tensor> states;
  std::vector<Tensor> noises;

  int steps() const { return static_cast<int>(noises.size()); }
  const Tensor& initial() const { return states.front(); }
  const Tensor& final() const { return states.back(); }
};

// l' = l - eta * grad + sqrt(2 eta) * noise, with noise a standard-normal
// tensor of l's shape
Tensor langevin_step(const Tensor& latents, const Tensor& grad, double eta,
                     const Tensor& noise);

LangevinTrajectory calibrate(const EnergyFunction& e, const Context& ctx,
                             const ThoughtBlock& init, const LangevinConfig& cfg,
                             RngStream& rng);

// replay variant: the caller supplies the standard-normal draws, one per step
LangevinTrajectory calibrate_with_noises(const EnergyFunction& e, const Context& ctx,
                                         const ThoughtBlock& init, double eta,
                                         const std::vector<Tensor>& noises);

// Reverse sweep through a recorded trajectory. Treating the noises as
// constants, the loss gradient in the energy parameters is
//
//   -eta * sum_k  u_k . d(grad_latent)/d(params) at states[k]
//
// where u_k is the upstream row vector transported from the final state
// back to state k by repeated  u <- u - eta * H(states[j]) u  (H symmetric).
// u_initial is the fully transported vector, i.e. d(loss)/d(states[0]).
struct UnrolledGrad {
  GradMap phi;
  Tensor u_initial;
};

UnrolledGrad unrolled_param_grad(const EnergyFunction& e, const Context& ctx,
                                 const LangevinTrajectory& traj, const Tensor& upstream);

// Reference route: rebuild the whole chain on one tape (the analytic latent
// gradient is itself made of primitives, so reverse mode goes through every
// step) and differentiate whatever scalar the caller builds from the final
// state. Costs a full graph per call; training uses it only for audits.
struct AutodiffUnrolled {
  double loss = 0.0;
  GradMap phi;
  Tensor initial_grad;
};

using LossBuilder = std::function<Value(Tape&, Value final_latents)>;

AutodiffUnrolled autodiff_unrolled_grad(const EnergyModel& e, const Context& ctx,
                                        const LangevinTrajectory& traj,
                                        const LossBuilder& make_loss);

}  // namespace ebmcot
