#include "ebmcot/langevin.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ebmcot/gradcheck.hpp"

namespace ebmcot {

namespace {

void check_divergence(const Tensor& l, int step) {
  if (l.max_abs() > 1e6 || !l.all_finite())
    throw std::runtime_error("langevin chain diverged at step " + std::to_string(step) +
                             " (max |entry| = " + std::to_string(l.max_abs()) + ")");
}

}  // namespace

Tensor langevin_step(const Tensor& latents, const Tensor& grad, double eta,
                     const Tensor& noise) {
  if (!latents.same_shape(grad) || !latents.same_shape(noise))
    throw std::invalid_argument("langevin_step: latents " + latents.shape_str() + ", grad " +
                                grad.shape_str() + ", noise " + noise.shape_str() +
                                " must share a shape");
  Tensor out = latents;
  axpy(out, -eta, grad);
  axpy(out, std::sqrt(2.0 * eta), noise);
  return out;
}

LangevinTrajectory calibrate_with_noises(const EnergyFunction& e, const Context& ctx,
                                         const ThoughtBlock& init, double eta,
                                         const std::vector<Tensor>& noises) {
  if (eta <= 0.0) throw std::invalid_argument("calibrate: eta must be positive");
  LangevinTrajectory traj;
  traj.eta = eta;
  traj.states.reserve(noises.size() + 1);
  traj.states.push_back(init.latents);
  traj.noises = noises;
  for (std::size_t s = 0; s < noises.size(); ++s) {
    const Tensor& cur = traj.states.back();
    const Tensor g = e.grad_latent(ctx, ThoughtBlock(cur));
    Tensor next = langevin_step(cur, g, eta, noises[s]);
    check_divergence(next, static_cast<int>(s) + 1);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

LangevinTrajectory calibrate(const EnergyFunction& e, const Context& ctx,
                             const ThoughtBlock& init, const LangevinConfig& cfg,
                             RngStream& rng) {
  if (cfg.steps < 0) throw std::invalid_argument("calibrate: steps must be >= 0");
  std::vector<Tensor> noises;
  noises.reserve(cfg.steps);
  for (int s = 0; s < cfg.steps; ++s)
    noises.push_back(cfg.noise_enabled ? rng.gaussian_tensor(init.latents.shape())
                                       : Tensor::zeros_like(init.latents));
  return calibrate_with_noises(e, ctx, init, cfg.eta, noises);
}

UnrolledGrad unrolled_param_grad(const EnergyFunction& e, const Context& ctx,
                                 const LangevinTrajectory& traj, const Tensor& upstream) {
  if (!upstream.same_shape(traj.final()))
    throw std::invalid_argument("unrolled_param_grad: upstream " + upstream.shape_str() +
                                " does not match the final state " +
                                traj.final().shape_str());
  UnrolledGrad out;
  out.u_initial = upstream;
  for (int j = traj.steps() - 1; j >= 0; --j) {
    const ThoughtBlock at(traj.states[j]);
    grad_accumulate(out.phi, e.vjp_params(ctx, at, out.u_initial), -traj.eta);
    axpy(out.u_initial, -traj.eta, hvp_latent(e, ctx, at, out.u_initial));
  }
  return out;
}

AutodiffUnrolled autodiff_unrolled_grad(const EnergyModel& e, const Context& ctx,
                                        const LangevinTrajectory& traj,
                                        const LossBuilder& make_loss) {
  Tape tape;
  auto phi = e.insert_params(tape, false);
  Value l = tape.leaf(traj.initial());
  const Value l0 = l;
  const double noise_scale = std::sqrt(2.0 * traj.eta);
  for (int s = 0; s < traj.steps(); ++s) {
    Value g = e.grad_latent_node(tape, phi, ctx, l);
    l = add(sub(l, scale(g, traj.eta)), scale(tape.constant(traj.noises[s]), noise_scale));
  }
  Value loss = make_loss(tape, l);
  tape.backward(loss);
  AutodiffUnrolled out;
  out.loss = tape.value(loss).item();
  out.phi = collect_grads(tape, phi);
  out.initial_grad = tape.grad(l0);
  return out;
}

}  // namespace ebmcot
