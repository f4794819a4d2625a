#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "ebmcot/energy.hpp"
#include "ebmcot/evalreport.hpp"
#include "ebmcot/langevin.hpp"
#include "ebmcot/losses.hpp"
#include "ebmcot/tensor.hpp"

namespace py = pybind11;
using namespace ebmcot;

namespace {

Tensor vec_tensor(const std::vector<double>& v) {
  return Tensor({static_cast<int>(v.size())}, v);
}

Tensor mat_tensor(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("matrix must have at least one row");
  const int c = static_cast<int>(rows.front().size());
  std::vector<double> flat;
  flat.reserve(rows.size() * rows.front().size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != c)
      throw std::invalid_argument("matrix rows must have equal length");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({static_cast<int>(rows.size()), c}, flat);
}

std::vector<std::vector<double>> mat_list(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (int r = 0; r < t.rows(); ++r) {
    out[r].resize(t.cols());
    for (int c = 0; c < t.cols(); ++c) out[r][c] = t.at(r, c);
  }
  return out;
}

HingeOrientation parse_orientation(const std::string& name) {
  if (name == "paper") return HingeOrientation::paper;
  if (name == "swapped") return HingeOrientation::swapped;
  throw std::invalid_argument("orientation must be 'paper' or 'swapped'");
}

}  // namespace

PYBIND11_MODULE(_ebmcot, m) {
  m.doc() = "energy-calibrated latent reasoning core";

  m.def(
      "residual_reweight",
      [](const std::vector<double>& base, const std::vector<double>& energies,
         double temperature) {
        return residual_reweight(vec_tensor(base), vec_tensor(energies), temperature).data();
      },
      py::arg("base_probs"), py::arg("energies"), py::arg("temperature") = 1.0);

  m.def(
      "logits_to_energies",
      [](const std::vector<double>& logits) {
        return logits_to_energies(vec_tensor(logits)).data();
      },
      py::arg("logits"));

  m.def("hinge_loss",
        [](double e_raw, double e_cal, double margin, const std::string& orientation) {
          return hinge_loss(e_raw, e_cal, margin, parse_orientation(orientation));
        },
        py::arg("e_raw"), py::arg("e_cal"), py::arg("margin") = 1.0,
        py::arg("orientation") = "paper");

  m.def("hinge_active",
        [](double e_raw, double e_cal, double margin, const std::string& orientation) {
          return hinge_active(e_raw, e_cal, margin, parse_orientation(orientation));
        },
        py::arg("e_raw"), py::arg("e_cal"), py::arg("margin") = 1.0,
        py::arg("orientation") = "paper");

  m.def(
      "consistency_loss",
      [](const std::vector<std::vector<double>>& l_cal,
         const std::vector<std::vector<double>>& l_raw, double lam) {
        return consistency_loss(ThoughtBlock{mat_tensor(l_cal)}, ThoughtBlock{mat_tensor(l_raw)},
                                lam);
      },
      py::arg("l_cal"), py::arg("l_raw"), py::arg("lam") = 0.1);

  m.def("total_loss", &total_loss, py::arg("l_lm"), py::arg("l_ebm"), py::arg("alpha") = 0.1);

  m.def(
      "langevin_step",
      [](const std::vector<std::vector<double>>& latents,
         const std::vector<std::vector<double>>& grad, double eta,
         const std::vector<std::vector<double>>& noise) {
        return mat_list(langevin_step(mat_tensor(latents), mat_tensor(grad), eta,
                                      mat_tensor(noise)));
      },
      py::arg("latents"), py::arg("grad"), py::arg("eta"), py::arg("noise"));

  m.def("majority_vote", &majority_vote, py::arg("answers"));
  m.def("pass_at_n", &pass_at_n, py::arg("chains_per_question"), py::arg("gold"), py::arg("n"));
  m.def("consistency_rate", &consistency_rate, py::arg("acc1"), py::arg("accN"));

  py::class_<EnergyModel>(m, "EnergyModel")
      .def(py::init([](int context_dim, int latent_dim, int position_dim, int max_thoughts,
                       const std::vector<int>& hidden, double temperature, std::uint64_t seed) {
             EnergyConfig cfg;
             cfg.context_dim = context_dim;
             cfg.latent_dim = latent_dim;
             cfg.position_dim = position_dim;
             cfg.max_thoughts = max_thoughts;
             cfg.hidden = hidden;
             cfg.temperature = temperature;
             RngStream rng(seed, "python/energy-init");
             return EnergyModel(cfg, rng);
           }),
           py::arg("context_dim") = 32, py::arg("latent_dim") = 32, py::arg("position_dim") = 8,
           py::arg("max_thoughts") = 4, py::arg("hidden") = std::vector<int>{64, 32},
           py::arg("temperature") = 1.0, py::arg("seed") = 0)
      .def("energy",
           [](const EnergyModel& e, const std::vector<double>& ctx,
              const std::vector<std::vector<double>>& latents) {
             return e.energy(Context{vec_tensor(ctx)}, ThoughtBlock{mat_tensor(latents)});
           },
           py::arg("pooled_question"), py::arg("latents"))
      .def("grad_latent",
           [](const EnergyModel& e, const std::vector<double>& ctx,
              const std::vector<std::vector<double>>& latents) {
             return mat_list(
                 e.grad_latent(Context{vec_tensor(ctx)}, ThoughtBlock{mat_tensor(latents)}));
           },
           py::arg("pooled_question"), py::arg("latents"))
      .def(
          "calibrate",
          [](const EnergyModel& e, const std::vector<double>& ctx,
             const std::vector<std::vector<double>>& init, double eta, int steps,
             bool noise_enabled, std::uint64_t seed) {
            LangevinConfig lc;
            lc.eta = eta;
            lc.steps = steps;
            lc.noise_enabled = noise_enabled;
            RngStream rng(seed, "python/calibrate");
            const Context c{vec_tensor(ctx)};
            const LangevinTrajectory traj =
                calibrate(e, c, ThoughtBlock{mat_tensor(init)}, lc, rng);
            std::vector<double> energies;
            energies.reserve(traj.states.size());
            for (const Tensor& s : traj.states) energies.push_back(e.energy(c, ThoughtBlock{s}));
            return py::make_tuple(mat_list(traj.final()), energies);
          },
          py::arg("pooled_question"), py::arg("init"), py::arg("eta") = 0.1, py::arg("steps") = 3,
          py::arg("noise_enabled") = false, py::arg("seed") = 0,
          "run the refinement chain; returns (final_latents, energy per visited state)");
}
