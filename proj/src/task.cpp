#include "ebmcot/task.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ebmcot {

void TaskConfig::validate() const {
  if (count < 1) throw std::invalid_argument("task config: count must be >= 1");
  if (modulus < 2) throw std::invalid_argument("task config: modulus must be >= 2");
  if (k_lo < 1 || k_hi < k_lo)
    throw std::invalid_argument("task config: need 1 <= k_lo <= k_hi");
}

int Vocab::op_token(const Operation& op) const {
  return op.kind == Operation::Kind::add ? add_op(op.operand) : mul_op(op.operand);
}

std::string Vocab::describe(int id) const {
  if (is_digit(id)) return std::to_string(id);
  if (id < 2 * modulus) return "+" + std::to_string(id - modulus);
  if (id < 3 * modulus) return "x" + std::to_string(id - 2 * modulus);
  switch (id - 3 * modulus) {
    case 0: return "<bos>";
    case 1: return "<think>";
    case 2: return "<ans>";
    case 3: return "<eos>";
    case 4: return "<pad>";
    default: return "<invalid:" + std::to_string(id) + ">";
  }
}

std::vector<int> eval_chain(int start, const std::vector<Operation>& ops, int modulus) {
  std::vector<int> residues;
  residues.reserve(ops.size());
  long long v = start % modulus;
  for (const Operation& op : ops) {
    v = op.kind == Operation::Kind::add ? v + op.operand : v * op.operand;
    v %= modulus;
    residues.push_back(static_cast<int>(v));
  }
  return residues;
}

TaskInstance make_instance(std::uint64_t seed, int index, const TaskConfig& cfg) {
  RngStream rng(seed, "data", {static_cast<std::uint64_t>(index)});
  TaskInstance inst;
  inst.start = rng.uniform_int(0, cfg.modulus - 1);
  const int k = rng.uniform_int(cfg.k_lo, cfg.k_hi);
  inst.ops.reserve(k);
  for (int i = 0; i < k; ++i) {
    Operation op;
    op.kind = rng.uniform_int(0, 1) == 0 ? Operation::Kind::add : Operation::Kind::mul;
    // multiplication by 0 would collapse the chain, so its operand skips 0
    op.operand = op.kind == Operation::Kind::add ? rng.uniform_int(0, cfg.modulus - 1)
                                                 : rng.uniform_int(1, cfg.modulus - 1);
    inst.ops.push_back(op);
  }
  inst.reasoning_residues = eval_chain(inst.start, inst.ops, cfg.modulus);
  inst.answer = inst.reasoning_residues.back();
  return inst;
}

std::vector<TaskInstance> gen_dataset(const TaskConfig& cfg) {
  cfg.validate();
  std::vector<TaskInstance> data;
  data.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) data.push_back(make_instance(cfg.seed, i, cfg));
  return data;
}

int question_width(const TaskConfig& cfg) { return 2 + cfg.k_hi; }

std::vector<int> question_tokens(const TaskInstance& inst, const TaskConfig& cfg) {
  Vocab v{cfg.modulus};
  std::vector<int> ids;
  ids.reserve(question_width(cfg));
  ids.push_back(v.bos());
  ids.push_back(v.digit(inst.start));
  for (const Operation& op : inst.ops) ids.push_back(v.op_token(op));
  while (static_cast<int>(ids.size()) < question_width(cfg)) ids.push_back(v.pad());
  if (static_cast<int>(ids.size()) != question_width(cfg))
    throw std::invalid_argument("question has more operations than the configured k range");
  return ids;
}

int thought_start(const TaskConfig& cfg) { return question_width(cfg); }

std::vector<int> full_sequence(const TaskInstance& inst, const TaskConfig& cfg,
                               int n_thoughts) {
  Vocab v{cfg.modulus};
  std::vector<int> ids = question_tokens(inst, cfg);
  for (int i = 0; i < n_thoughts; ++i) ids.push_back(v.think());
  for (int r : inst.reasoning_residues) ids.push_back(v.digit(r));
  ids.push_back(v.ans());
  ids.push_back(v.digit(inst.answer));
  ids.push_back(v.eos());
  return ids;
}

TaskInstance parse_question(const std::string& text, const TaskConfig& cfg) {
  std::istringstream in(text);
  TaskInstance inst;
  std::string tok;
  if (!(in >> tok)) throw std::invalid_argument("question: empty");
  try {
    inst.start = std::stoi(tok);
  } catch (const std::exception&) {
    throw std::invalid_argument("question: start value '" + tok + "' is not a number");
  }
  if (inst.start < 0 || inst.start >= cfg.modulus)
    throw std::invalid_argument("question: start value out of [0, modulus)");
  while (in >> tok) {
    if (tok.size() < 2 || (tok[0] != '+' && tok[0] != 'x' && tok[0] != '*'))
      throw std::invalid_argument("question: operation '" + tok +
                                  "' must look like +3 or x2");
    Operation op;
    op.kind = tok[0] == '+' ? Operation::Kind::add : Operation::Kind::mul;
    try {
      op.operand = std::stoi(tok.substr(1));
    } catch (const std::exception&) {
      throw std::invalid_argument("question: operand in '" + tok + "' is not a number");
    }
    const int lo = op.kind == Operation::Kind::mul ? 1 : 0;
    if (op.operand < lo || op.operand >= cfg.modulus)
      throw std::invalid_argument("question: operand in '" + tok + "' out of range");
    inst.ops.push_back(op);
  }
  if (static_cast<int>(inst.ops.size()) < 1 ||
      static_cast<int>(inst.ops.size()) > cfg.k_hi)
    throw std::invalid_argument("question: need between 1 and " + std::to_string(cfg.k_hi) +
                                " operations");
  inst.reasoning_residues = eval_chain(inst.start, inst.ops, cfg.modulus);
  inst.answer = inst.reasoning_residues.back();
  return inst;
}

void save_dataset(const std::vector<TaskInstance>& data, const TaskConfig& cfg,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset to " + path);
  for (const TaskInstance& inst : data) {
    nlohmann::json ops = nlohmann::json::array();
    for (const Operation& op : inst.ops)
      ops.push_back({{"kind", op.kind == Operation::Kind::add ? "add" : "mul"},
                     {"operand", op.operand}});
    nlohmann::json rec{{"start", inst.start},
                       {"ops", std::move(ops)},
                       {"reasoning", inst.reasoning_residues},
                       {"answer", inst.answer},
                       {"modulus", cfg.modulus}};
    out << rec.dump() << "\n";
  }
}

std::vector<TaskInstance> load_dataset(const std::string& path, const TaskConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset from " + path);
  std::vector<TaskInstance> data;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const nlohmann::json rec = nlohmann::json::parse(line);
    if (rec.at("modulus").get<int>() != cfg.modulus)
      throw std::runtime_error("dataset line " + std::to_string(lineno) +
                               ": modulus does not match the configuration");
    TaskInstance inst;
    inst.start = rec.at("start").get<int>();
    for (const nlohmann::json& jop : rec.at("ops")) {
      Operation op;
      const std::string kind = jop.at("kind").get<std::string>();
      if (kind == "add") op.kind = Operation::Kind::add;
      else if (kind == "mul") op.kind = Operation::Kind::mul;
      else throw std::runtime_error("dataset line " + std::to_string(lineno) +
                                    ": unknown operation kind '" + kind + "'");
      op.operand = jop.at("operand").get<int>();
      inst.ops.push_back(op);
    }
    inst.reasoning_residues = eval_chain(inst.start, inst.ops, cfg.modulus);
    inst.answer = inst.reasoning_residues.back();
    if (inst.reasoning_residues != rec.at("reasoning").get<std::vector<int>>() ||
        inst.answer != rec.at("answer").get<int>())
      throw std::runtime_error("dataset line " + std::to_string(lineno) +
                               ": stored trace disagrees with its operation list");
    data.push_back(std::move(inst));
  }
  return data;
}

}  // namespace ebmcot
