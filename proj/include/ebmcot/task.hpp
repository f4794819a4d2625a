#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebmcot/rng.hpp"

namespace ebmcot {

// Modular-arithmetic chain task: start from a value in [0, M) and apply k
// add/multiply-by-constant operations mod M. The intermediate residues are
// the reasoning trace; the last residue is the answer.
struct Operation {
  enum class Kind { add, mul };
  Kind kind = Kind::add;
  int operand = 0;  // in [0, M) for add, [1, M) for mul
};

struct TaskConfig {
  std::uint64_t seed = 0;
  int count = 600;
  int k_lo = 2;
  int k_hi = 6;
  int modulus = 10;

  void validate() const;
};

struct TaskInstance {
  int start = 0;
  std::vector<Operation> ops;
  std::vector<int> reasoning_residues;  // one per operation
  int answer = 0;                       // == reasoning_residues.back()
};

// Token ids over a vocabulary laid out as: digits [0, M), add-constant ops
// [M, 2M), mul-constant ops [2M, 3M), then the specials below.
struct Vocab {
  int modulus = 10;

  int digit(int v) const { return v; }
  int add_op(int c) const { return modulus + c; }
  int mul_op(int c) const { return 2 * modulus + c; }
  int bos() const { return 3 * modulus; }
  int think() const { return 3 * modulus + 1; }
  int ans() const { return 3 * modulus + 2; }
  int eos() const { return 3 * modulus + 3; }
  int pad() const { return 3 * modulus + 4; }
  int size() const { return 3 * modulus + 5; }

  int op_token(const Operation& op) const;
  bool is_digit(int id) const { return id >= 0 && id < modulus; }
  std::string describe(int id) const;  // human-readable token name
};

// the intermediate residues of applying `ops` to `start`, mod `modulus`
std::vector<int> eval_chain(int start, const std::vector<Operation>& ops, int modulus);

// one instance per (seed, index), independent of every other index
TaskInstance make_instance(std::uint64_t seed, int index, const TaskConfig& cfg);
std::vector<TaskInstance> gen_dataset(const TaskConfig& cfg);

// question encoding [BOS, start, op_1 .. op_k, PAD ...] padded to the fixed
// width 2 + k_hi so every question has the same length
std::vector<int> question_tokens(const TaskInstance& inst, const TaskConfig& cfg);
int question_width(const TaskConfig& cfg);

// full teacher-forcing sequence: question, n_thoughts thought-slot tokens,
// the reasoning residues, ANS, the answer digit, EOS
std::vector<int> full_sequence(const TaskInstance& inst, const TaskConfig& cfg,
                               int n_thoughts);
int thought_start(const TaskConfig& cfg);  // index of the first thought slot

// "3 +4 x2" -> start 3, add 4, mul 2 ('*' is accepted for 'x')
TaskInstance parse_question(const std::string& text, const TaskConfig& cfg);

// dataset cache: one json record per line; load re-derives the residues and
// rejects records that disagree with their own operation list
void save_dataset(const std::vector<TaskInstance>& data, const TaskConfig& cfg,
                  const std::string& path);
std::vector<TaskInstance> load_dataset(const std::string& path, const TaskConfig& cfg);

}  // namespace ebmcot
