#pragma once

#include <string>
#include <vector>

#include "ebmcot/langevin.hpp"
#include "ebmcot/losses.hpp"
#include "ebmcot/task.hpp"

namespace ebmcot {

// How the language loss reaches the energy parameters: through the update
// chain in closed form, through the chain by taping every step, or not at
// all. The projection always receives its gradient through the initial
// latents regardless of mode.
enum class BackpropMode { unroll_closed_form, unroll_autodiff, detached };

struct ModelConfig {
  int d_base = 32;
  int d_asst = 16;
  int n_thoughts = 4;
  std::vector<int> energy_hidden = {64, 32};
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 4;
  double learning_rate = 0.05;
  BackpropMode backprop_mode = BackpropMode::unroll_closed_form;
};

struct EvalConfig {
  int n_chains = 10;
  double decode_temperature = 0.7;
};

struct Config {
  TaskConfig task;
  ModelConfig model;
  LangevinConfig langevin;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

std::string to_string(BackpropMode m);
BackpropMode backprop_mode_from_string(const std::string& s);
std::string to_string(HingeOrientation o);
HingeOrientation hinge_orientation_from_string(const std::string& s);

// Serialization is strict both ways: every setting is emitted, and parsing
// rejects keys it does not know (a typo'd setting must fail the run, not
// silently fall back to a default). Missing keys do take their defaults;
// the typo'd spelling itself is what gets caught.
std::string config_to_json(const Config& cfg);
Config config_from_json(const std::string& text);

void save_config(const Config& cfg, const std::string& path);
Config load_config(const std::string& path);

}  // namespace ebmcot
