#include "ebmcot/paramset.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ebmcot {

void ParamSet::insert(const std::string& name, Tensor value, bool frozen) {
  if (name.empty()) throw std::invalid_argument("param name must be non-empty");
  if (entries_.count(name)) throw std::invalid_argument("duplicate param name: " + name);
  entries_.emplace(name, ParamEntry{std::move(value), frozen});
}

ParamEntry& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no such param: " + name);
  return it->second;
}

const ParamEntry& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no such param: " + name);
  return it->second;
}

std::size_t ParamSet::total_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

void ParamSet::freeze_all() {
  for (auto& [name, e] : entries_) e.frozen = true;
}

bool ParamSet::all_frozen() const {
  for (const auto& [name, e] : entries_)
    if (!e.frozen) return false;
  return true;
}

std::string ParamSet::to_json_string() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, e] : entries_) {
    nlohmann::json j;
    j["name"] = name;
    j["shape"] = e.value.shape();
    j["frozen"] = e.frozen;
    j["data"] = e.value.data();
    entries.push_back(std::move(j));
  }
  nlohmann::json doc;
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

ParamSet ParamSet::from_json_string(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  ParamSet p;
  for (const auto& j : doc.at("entries")) {
    Tensor t(j.at("shape").get<std::vector<int>>(), j.at("data").get<std::vector<double>>());
    p.insert(j.at("name").get<std::string>(), std::move(t), j.at("frozen").get<bool>());
  }
  return p;
}

void ParamSet::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << to_json_string();
  if (!f) throw std::runtime_error("write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

ParamSet ParamSet::with_prefix(const std::string& prefix) const {
  ParamSet out;
  for (const auto& [name, e] : entries_) out.insert(prefix + "." + name, e.value, e.frozen);
  return out;
}

ParamSet ParamSet::strip_prefix(const std::string& prefix) const {
  const std::string full = prefix + ".";
  ParamSet out;
  for (const auto& [name, e] : entries_)
    if (name.rfind(full, 0) == 0) out.insert(name.substr(full.size()), e.value, e.frozen);
  return out;
}

void ParamSet::merge(const ParamSet& other) {
  for (const auto& [name, e] : other.entries_) insert(name, e.value, e.frozen);
}

std::uint64_t content_hash(const ParamSet& p) {
  const std::string s = p.to_json_string();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

void sgd_step(ParamSet& params, const GradMap& grads, double lr) {
  for (const auto& [name, g] : grads) {
    ParamEntry& e = params.at(name);
    if (e.frozen) continue;
    if (!e.value.same_shape(g))
      throw std::invalid_argument("sgd_step shape mismatch for " + name + ": " +
                                  e.value.shape_str() + " vs " + g.shape_str());
    if (!g.all_finite()) throw std::runtime_error("sgd_step: non-finite gradient for " + name);
    axpy(e.value, -lr, g);
  }
}

void grad_accumulate(GradMap& acc, const GradMap& g, double s) {
  for (const auto& [name, t] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      Tensor scaled = t;
      for (std::size_t i = 0; i < scaled.numel(); ++i) scaled[i] *= s;
      acc.emplace(name, std::move(scaled));
    } else {
      axpy(it->second, s, t);
    }
  }
}

void grad_scale(GradMap& g, double s) {
  for (auto& [name, t] : g)
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] *= s;
}

std::map<std::string, Value> insert_params(Tape& tape, const ParamSet& params,
                                           bool as_constants) {
  std::map<std::string, Value> out;
  for (const auto& [name, e] : params)
    out.emplace(name, as_constants ? tape.constant(e.value) : tape.leaf(e.value));
  return out;
}

GradMap collect_grads(const Tape& tape, const std::map<std::string, Value>& leaves) {
  GradMap out;
  for (const auto& [name, v] : leaves) out.emplace(name, tape.grad(v));
  return out;
}

}  // namespace ebmcot
