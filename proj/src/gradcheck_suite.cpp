#include <algorithm>
#include <sstream>

#include "ebmcot/gradcheck.hpp"
#include "ebmcot/langevin.hpp"

namespace ebmcot {

namespace {

GradCheckCase draw_case(std::uint64_t suite_seed, int index) {
  RngStream rng(suite_seed, "gradcheck/case", {static_cast<std::uint64_t>(index)});
  GradCheckCase c;
  c.latent_dim = rng.uniform_int(2, 6);
  c.n_thoughts = rng.uniform_int(1, 3);
  c.context_dim = rng.uniform_int(2, 5);
  c.position_dim = rng.uniform_int(1, 3);
  c.hidden.assign(rng.uniform_int(1, 2), 0);
  for (int& h : c.hidden) h = rng.uniform_int(3, 8);
  c.steps = rng.uniform_int(1, 3);
  c.eta = 0.05 + 0.15 * rng.uniform();
  c.seed = rng.next_u64();
  return c;
}

GradCheckResult run_case(const GradCheckCase& c, double tol_closed, double tol_tape_fd) {
  EnergyConfig ecfg;
  ecfg.context_dim = c.context_dim;
  ecfg.latent_dim = c.latent_dim;
  ecfg.position_dim = c.position_dim;
  ecfg.max_thoughts = c.n_thoughts;
  ecfg.hidden = c.hidden;

  RngStream init_rng(c.seed, "gradcheck/init");
  EnergyModel model(ecfg, init_rng);

  RngStream data_rng(c.seed, "gradcheck/data");
  const Context ctx{data_rng.gaussian_tensor({c.context_dim})};
  const ThoughtBlock l0(data_rng.gaussian_tensor({c.n_thoughts, c.latent_dim}));
  const Tensor upstream = data_rng.gaussian_tensor({c.n_thoughts, c.latent_dim});

  LangevinConfig lcfg;
  lcfg.eta = c.eta;
  lcfg.steps = c.steps;
  lcfg.noise_enabled = true;
  RngStream noise_rng(c.seed, "gradcheck/noise");
  const LangevinTrajectory traj = calibrate(model, ctx, l0, lcfg, noise_rng);

  // route 1: closed-form reverse sweep
  const UnrolledGrad closed = unrolled_param_grad(model, ctx, traj, upstream);

  // route 2: the whole chain on one tape, loss = <upstream, final state>
  const Tensor u_const = upstream;
  const AutodiffUnrolled taped = autodiff_unrolled_grad(
      model, ctx, traj,
      [&](Tape& t, Value final_latents) { return dot(t.constant(u_const), final_latents); });

  // route 3: finite differences over every parameter entry, replaying the
  // recorded noises so all routes differentiate the same function
  const GradMap fd = fd_grad_params(
      [&](const ParamSet& p) {
        EnergyModel probe(ecfg, p);
        const LangevinTrajectory t =
            calibrate_with_noises(probe, ctx, l0, c.eta, traj.noises);
        double s = 0.0;
        for (std::size_t i = 0; i < upstream.numel(); ++i) s += upstream[i] * t.final()[i];
        return s;
      },
      model.params(), 1e-4);
  const Tensor fd_initial = fd_grad(
      [&](const Tensor& start) {
        const LangevinTrajectory t =
            calibrate_with_noises(model, ctx, ThoughtBlock(start), c.eta, traj.noises);
        double s = 0.0;
        for (std::size_t i = 0; i < upstream.numel(); ++i) s += upstream[i] * t.final()[i];
        return s;
      },
      l0.latents, 1e-4);

  GradCheckResult r;
  r.config = c;
  r.rel_closed_vs_tape = rel_error(closed.phi, taped.phi);
  r.rel_closed_vs_fd = rel_error(closed.phi, fd);
  r.rel_tape_vs_fd = rel_error(taped.phi, fd);
  r.rel_initial_closed_vs_tape = rel_error(closed.u_initial, taped.initial_grad);
  r.rel_initial_tape_vs_fd = rel_error(taped.initial_grad, fd_initial);
  r.pass = r.rel_closed_vs_tape <= tol_closed && r.rel_closed_vs_fd <= tol_closed &&
           r.rel_tape_vs_fd <= tol_tape_fd && r.rel_initial_closed_vs_tape <= tol_closed &&
           r.rel_initial_tape_vs_fd <= tol_tape_fd;
  return r;
}

}  // namespace

GradCheckSummary run_three_way_suite(int n_configs, std::uint64_t seed, double tol_closed,
                                     double tol_tape_fd) {
  GradCheckSummary s;
  s.all_pass = true;
  for (int i = 0; i < n_configs; ++i) {
    GradCheckResult r = run_case(draw_case(seed, i), tol_closed, tol_tape_fd);
    s.max_closed_vs_tape = std::max(s.max_closed_vs_tape, r.rel_closed_vs_tape);
    s.max_closed_vs_fd = std::max(s.max_closed_vs_fd, r.rel_closed_vs_fd);
    s.max_tape_vs_fd = std::max(s.max_tape_vs_fd, r.rel_tape_vs_fd);
    s.all_pass = s.all_pass && r.pass;
    s.results.push_back(std::move(r));
  }
  return s;
}

std::string format_suite_summary(const GradCheckSummary& s) {
  int n_fail = 0;
  for (const auto& r : s.results)
    if (!r.pass) ++n_fail;
  std::ostringstream out;
  out << "gradient agreement over " << s.results.size() << " configs: "
      << (s.all_pass ? "all pass" : std::to_string(n_fail) + " FAILED") << "\n"
      << "  max rel error, closed form vs tape:  " << s.max_closed_vs_tape << "\n"
      << "  max rel error, closed form vs fd:    " << s.max_closed_vs_fd << "\n"
      << "  max rel error, tape vs fd:           " << s.max_tape_vs_fd << "\n";
  for (const auto& r : s.results) {
    if (r.pass) continue;
    out << "  FAIL seed=" << r.config.seed << " steps=" << r.config.steps
        << " latent=" << r.config.latent_dim << " thoughts=" << r.config.n_thoughts
        << " closed/tape=" << r.rel_closed_vs_tape << " closed/fd=" << r.rel_closed_vs_fd
        << " tape/fd=" << r.rel_tape_vs_fd << "\n";
  }
  return out.str();
}

}  // namespace ebmcot
