#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ebmcot/tape.hpp"
#include "ebmcot/tensor.hpp"

namespace ebmcot {

using GradMap = std::map<std::string, Tensor>;

struct ParamEntry {
  Tensor value;
  bool frozen = false;
};

// Named parameter collection. Entries iterate in lexicographic name order
// (std::map), which fixes the flattening order used by serialization and by
// gradient comparisons.
class ParamSet {
 public:
  void insert(const std::string& name, Tensor value, bool frozen = false);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_scalars() const;

  void freeze_all();
  bool all_frozen() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // checkpoint io: one JSON document, entries lexicographic, doubles emitted
  // with shortest round-trip decimals so load(save(p)) is bit-stable
  std::string to_json_string() const;
  static ParamSet from_json_string(const std::string& text);
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

  // copy of all entries with `prefix.` prepended to every name
  ParamSet with_prefix(const std::string& prefix) const;
  // subset whose names start with `prefix.`, prefix stripped
  ParamSet strip_prefix(const std::string& prefix) const;
  void merge(const ParamSet& other);  // duplicate names rejected

 private:
  std::map<std::string, ParamEntry> entries_;
};

// content hash of the serialized form; used for frozen-weights audits
std::uint64_t content_hash(const ParamSet& p);

// gradient step on non-frozen entries only; unknown names and shape
// mismatches are rejected, frozen entries are left bit-identical
void sgd_step(ParamSet& params, const GradMap& grads, double lr);

// grad map algebra used when accumulating per-item contributions
void grad_accumulate(GradMap& acc, const GradMap& g, double s);
void grad_scale(GradMap& g, double s);

// register every entry on a tape; as_constants selects constant() vs leaf()
std::map<std::string, Value> insert_params(Tape& tape, const ParamSet& params,
                                           bool as_constants);
// read back gradients for all names in `leaves` after tape.backward()
GradMap collect_grads(const Tape& tape, const std::map<std::string, Value>& leaves);

}  // namespace ebmcot
