#include "ebmcot/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ebmcot {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) {
  throw std::invalid_argument("config: " + what);
}

// pulls out `key` if present, tracking it as consumed so leftovers can be
// reported as unknown
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) bad("section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      bad("key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void read_enum(const char* key, std::string& out) { read<std::string>(key, out); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) bad("unknown key '" + name_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

void Config::validate() const {
  task.validate();
  loss.validate();
  if (model.d_base < 1 || model.d_asst < 1) bad("model dims must be >= 1");
  if (model.n_thoughts < 1) bad("n_thoughts must be >= 1");
  for (int h : model.energy_hidden)
    if (h < 1) bad("energy_hidden widths must be >= 1");
  if (langevin.eta <= 0.0) bad("langevin.eta must be > 0");
  if (langevin.steps < 0) bad("langevin.steps must be >= 0");
  if (train.epochs < 1 || train.batch_size < 1) bad("train.epochs and batch_size must be >= 1");
  if (train.learning_rate <= 0.0) bad("train.learning_rate must be > 0");
  if (eval.n_chains < 1) bad("eval.n_chains must be >= 1");
  if (eval.decode_temperature < 0.0) bad("eval.decode_temperature must be >= 0");
}

std::string to_string(BackpropMode m) {
  switch (m) {
    case BackpropMode::unroll_closed_form: return "unroll_closed_form";
    case BackpropMode::unroll_autodiff: return "unroll_autodiff";
    case BackpropMode::detached: return "detached";
  }
  bad("unrepresentable backprop mode");
}

BackpropMode backprop_mode_from_string(const std::string& s) {
  if (s == "unroll_closed_form") return BackpropMode::unroll_closed_form;
  if (s == "unroll_autodiff") return BackpropMode::unroll_autodiff;
  if (s == "detached") return BackpropMode::detached;
  bad("backprop_mode '" + s +
      "' is not one of unroll_closed_form, unroll_autodiff, detached");
}

std::string to_string(HingeOrientation o) {
  return o == HingeOrientation::paper ? "paper" : "swapped";
}

HingeOrientation hinge_orientation_from_string(const std::string& s) {
  if (s == "paper") return HingeOrientation::paper;
  if (s == "swapped") return HingeOrientation::swapped;
  bad("hinge_orientation '" + s + "' is not one of paper, swapped");
}

std::string config_to_json(const Config& cfg) {
  json j{
      {"task",
       {{"seed", cfg.task.seed},
        {"count", cfg.task.count},
        {"k_range", {cfg.task.k_lo, cfg.task.k_hi}},
        {"modulus", cfg.task.modulus}}},
      {"model",
       {{"d_base", cfg.model.d_base},
        {"d_asst", cfg.model.d_asst},
        {"n_thoughts", cfg.model.n_thoughts},
        {"energy_hidden", cfg.model.energy_hidden}}},
      {"langevin",
       {{"eta", cfg.langevin.eta},
        {"steps", cfg.langevin.steps},
        {"noise_enabled", cfg.langevin.noise_enabled}}},
      {"loss",
       {{"margin", cfg.loss.margin},
        {"lambda", cfg.loss.lambda},
        {"alpha", cfg.loss.alpha},
        {"hinge_orientation", to_string(cfg.loss.hinge_orientation)}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"learning_rate", cfg.train.learning_rate},
        {"backprop_mode", to_string(cfg.train.backprop_mode)}}},
      {"eval",
       {{"n_chains", cfg.eval.n_chains},
        {"decode_temperature", cfg.eval.decode_temperature}}},
  };
  return j.dump(2) + "\n";
}

Config config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("not valid json: ") + e.what());
  }
  if (!j.is_object()) bad("top level must be an object");

  Config cfg;
  const std::set<std::string> sections = {"task", "model", "langevin",
                                          "loss",  "train", "eval"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!sections.count(it.key())) bad("unknown section '" + it.key() + "'");

  if (j.contains("task")) {
    Section s(j["task"], "task");
    s.read("seed", cfg.task.seed);
    s.read("count", cfg.task.count);
    std::vector<int> k_range = {cfg.task.k_lo, cfg.task.k_hi};
    s.read("k_range", k_range);
    if (k_range.size() != 2) bad("task.k_range must be a [lo, hi] pair");
    cfg.task.k_lo = k_range[0];
    cfg.task.k_hi = k_range[1];
    s.read("modulus", cfg.task.modulus);
    s.finish();
  }
  if (j.contains("model")) {
    Section s(j["model"], "model");
    s.read("d_base", cfg.model.d_base);
    s.read("d_asst", cfg.model.d_asst);
    s.read("n_thoughts", cfg.model.n_thoughts);
    s.read("energy_hidden", cfg.model.energy_hidden);
    s.finish();
  }
  if (j.contains("langevin")) {
    Section s(j["langevin"], "langevin");
    s.read("eta", cfg.langevin.eta);
    s.read("steps", cfg.langevin.steps);
    s.read("noise_enabled", cfg.langevin.noise_enabled);
    s.finish();
  }
  if (j.contains("loss")) {
    Section s(j["loss"], "loss");
    s.read("margin", cfg.loss.margin);
    s.read("lambda", cfg.loss.lambda);
    s.read("alpha", cfg.loss.alpha);
    std::string orientation = to_string(cfg.loss.hinge_orientation);
    s.read_enum("hinge_orientation", orientation);
    cfg.loss.hinge_orientation = hinge_orientation_from_string(orientation);
    s.finish();
  }
  if (j.contains("train")) {
    Section s(j["train"], "train");
    s.read("epochs", cfg.train.epochs);
    s.read("batch_size", cfg.train.batch_size);
    s.read("learning_rate", cfg.train.learning_rate);
    std::string mode = to_string(cfg.train.backprop_mode);
    s.read_enum("backprop_mode", mode);
    cfg.train.backprop_mode = backprop_mode_from_string(mode);
    s.finish();
  }
  if (j.contains("eval")) {
    Section s(j["eval"], "eval");
    s.read("n_chains", cfg.eval.n_chains);
    s.read("decode_temperature", cfg.eval.decode_temperature);
    s.finish();
  }
  cfg.validate();
  return cfg;
}

void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config to " + path);
  out << config_to_json(cfg);
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config from " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

}  // namespace ebmcot
