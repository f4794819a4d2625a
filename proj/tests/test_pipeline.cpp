#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "ebmcot/config.hpp"
#include "ebmcot/pipeline.hpp"
#include "ebmcot/task.hpp"

using namespace ebmcot;

namespace {

// small-but-complete configuration so pipeline tests stay fast
Config tiny_config() {
  Config cfg;
  cfg.task.count = 24;
  cfg.task.seed = 7;
  cfg.model.d_base = 16;
  cfg.model.d_asst = 8;
  cfg.model.n_thoughts = 2;
  cfg.model.energy_hidden = {8};
  cfg.train.epochs = 1;
  cfg.train.batch_size = 4;
  return cfg;
}

ToyBaseModel tiny_base(const Config& cfg) {
  BaseConfig bc;
  bc.vocab = Vocab{cfg.task.modulus}.size();
  bc.d_model = cfg.model.d_base;
  bc.d_ff = 2 * cfg.model.d_base;
  RngStream rng(cfg.task.seed, "init/base");
  return ToyBaseModel(bc, rng);
}

ToyAssistantModel tiny_assistant(const Config& cfg) {
  AssistantConfig ac;
  ac.vocab = Vocab{cfg.task.modulus}.size();
  ac.d = cfg.model.d_asst;
  RngStream rng(cfg.task.seed, "init/assistant");
  return ToyAssistantModel(ac, rng);
}

}  // namespace

TEST_CASE("chain evaluation matches hand-worked residues") {
  // 3, +4 -> 7, x2 -> 14 mod 10 -> 4
  const TaskConfig tc;
  TaskInstance inst = parse_question("3 +4 x2", tc);
  CHECK(inst.start == 3);
  REQUIRE(inst.reasoning_residues.size() == 2);
  CHECK(inst.reasoning_residues[0] == 7);
  CHECK(inst.reasoning_residues[1] == 4);
  CHECK(inst.answer == 4);

  // 1, +1 -> 2 (k below k_lo is still parseable as a question)
  TaskInstance two = parse_question("1 +1", tc);
  CHECK(two.answer == 2);

  // '*' is an alias for 'x'
  TaskInstance star = parse_question("3 *4", tc);
  CHECK(star.ops[0].kind == Operation::Kind::mul);
  CHECK(star.answer == 2);
}

TEST_CASE("parse_question rejects malformed text") {
  const TaskConfig tc;
  CHECK_THROWS_AS(parse_question("", tc), std::invalid_argument);
  CHECK_THROWS_AS(parse_question("12 +3", tc), std::invalid_argument);   // start not a digit
  CHECK_THROWS_AS(parse_question("3", tc), std::invalid_argument);       // no operations
  CHECK_THROWS_AS(parse_question("3 %4", tc), std::invalid_argument);    // unknown op
  CHECK_THROWS_AS(parse_question("3 +10", tc), std::invalid_argument);   // operand >= M
  CHECK_THROWS_AS(parse_question("3 x0", tc), std::invalid_argument);    // mul by 0
  CHECK_THROWS_AS(parse_question("3 +1 +1 +1 +1 +1 +1 +1", tc),
                  std::invalid_argument);  // more ops than fit the question width
}

TEST_CASE("generated instances agree with re-evaluating their own chain") {
  TaskConfig tc;
  tc.count = 64;
  tc.seed = 11;
  const auto data = gen_dataset(tc);
  REQUIRE(static_cast<int>(data.size()) == tc.count);
  for (const auto& inst : data) {
    CHECK(inst.start >= 0);
    CHECK(inst.start < tc.modulus);
    CHECK(static_cast<int>(inst.ops.size()) >= tc.k_lo);
    CHECK(static_cast<int>(inst.ops.size()) <= tc.k_hi);
    CHECK(inst.reasoning_residues == eval_chain(inst.start, inst.ops, tc.modulus));
    CHECK(inst.answer == inst.reasoning_residues.back());
  }
  // instances are a function of (seed, index) alone, not of count
  TaskConfig shorter = tc;
  shorter.count = 8;
  const auto prefix = gen_dataset(shorter);
  for (int i = 0; i < shorter.count; ++i) {
    CHECK(prefix[i].start == data[i].start);
    CHECK(prefix[i].answer == data[i].answer);
  }
}

TEST_CASE("dataset cache round-trips and rejects tampered records") {
  TaskConfig tc;
  tc.count = 12;
  tc.seed = 3;
  const auto data = gen_dataset(tc);
  const std::string path = "test_dataset_cache.jsonl";
  save_dataset(data, tc, path);
  const auto loaded = load_dataset(path, tc);
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].start == data[i].start);
    CHECK(loaded[i].answer == data[i].answer);
    CHECK(loaded[i].reasoning_residues == data[i].reasoning_residues);
  }

  // corrupt one stored answer; load must notice the record is inconsistent
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  in.close();
  std::string text = buf.str();
  const auto at = text.find("\"answer\":");
  REQUIRE(at != std::string::npos);
  text[at + 9] = text[at + 9] == '9' ? '8' : '9';  // first digit of the answer
  {
    std::ofstream out(path);
    out << text;
  }
  CHECK_THROWS_AS(load_dataset(path, tc), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("token layout places questions, thought slots, and targets where expected") {
  const TaskConfig tc;  // defaults: k_hi 6, M 10
  CHECK(question_width(tc) == 8);
  CHECK(thought_start(tc) == 8);

  const Vocab v{tc.modulus};
  CHECK(v.size() == 35);
  CHECK(v.bos() == 30);
  CHECK(v.think() == 31);
  CHECK(v.ans() == 32);
  CHECK(v.eos() == 33);
  CHECK(v.pad() == 34);

  const TaskInstance inst = parse_question("3 +4 x2", tc);
  const auto q = question_tokens(inst, tc);
  REQUIRE(static_cast<int>(q.size()) == 8);
  CHECK(q[0] == v.bos());
  CHECK(q[1] == 3);
  CHECK(q[2] == v.add_op(4));
  CHECK(q[3] == v.mul_op(2));
  CHECK(q[4] == v.pad());
  CHECK(q[7] == v.pad());

  const auto seq = full_sequence(inst, tc, 4);
  // question(8) thoughts(4) residues(2) ANS answer EOS
  REQUIRE(static_cast<int>(seq.size()) == 8 + 4 + 2 + 3);
  CHECK(seq[8] == v.think());
  CHECK(seq[11] == v.think());
  CHECK(seq[12] == 7);
  CHECK(seq[13] == 4);
  CHECK(seq[14] == v.ans());
  CHECK(seq[15] == 4);
  CHECK(seq[16] == v.eos());

  Config cfg;
  const PipelineLayout lay = layout_for(cfg);
  CHECK(lay.question_width == 8);
  CHECK(lay.thought_start == 8);
  CHECK(lay.first_target == 12);
  CHECK(lay.vocab.size() == 35);
}

TEST_CASE("split holds out the trailing sixth of the dataset") {
  TaskConfig tc;
  tc.count = 600;
  tc.seed = 0;
  const auto data = gen_dataset(tc);
  const DatasetSplit split = split_dataset(data);
  CHECK(split.train.size() == 500);
  CHECK(split.held_out.size() == 100);
  CHECK(split.held_out.front().start == data[500].start);
  CHECK(split.held_out.back().answer == data.back().answer);

  // tiny datasets still hold out at least one question
  const std::vector<TaskInstance> three(data.begin(), data.begin() + 3);
  const DatasetSplit s3 = split_dataset(three);
  CHECK(s3.train.size() == 2);
  CHECK(s3.held_out.size() == 1);
}

TEST_CASE("splicing latents changes only rows the splice can reach") {
  const Config cfg = tiny_config();
  const ToyBaseModel base = tiny_base(cfg);
  const PipelineLayout lay = layout_for(cfg);
  const TaskInstance inst = parse_question("3 +4 x2", cfg.task);
  const auto seq = full_sequence(inst, cfg.task, cfg.model.n_thoughts);

  RngStream rng(5, "test/splice");
  Tensor lat({cfg.model.n_thoughts, cfg.model.d_base});
  for (auto& x : lat.data()) x = rng.gaussian();

  const Tensor plain = base.logits(seq);
  const Tensor spliced = base.logits(seq, lat, lay.thought_start);
  REQUIRE(plain.same_shape(spliced));

  // causal attention: positions before the splice cannot see it
  for (int r = 0; r < lay.thought_start; ++r)
    for (int c = 0; c < plain.cols(); ++c) CHECK(spliced.at(r, c) == plain.at(r, c));
  // positions at the splice definitely do
  double diff = 0.0;
  for (int c = 0; c < plain.cols(); ++c)
    diff = std::max(diff, std::abs(spliced.at(lay.thought_start, c) -
                                   plain.at(lay.thought_start, c)));
  CHECK(diff > 0.0);

  // splicing the rows the embedding already produced is a no-op, bit for bit
  std::vector<int> slots(seq.begin() + lay.thought_start,
                         seq.begin() + lay.thought_start + cfg.model.n_thoughts);
  const Tensor same = base.logits(seq, base.embed_tokens(slots), lay.thought_start);
  for (std::size_t i = 0; i < plain.numel(); ++i) CHECK(same[i] == plain[i]);
}

TEST_CASE("greedy sampling is argmax with ties toward the smaller id") {
  RngStream rng(1, "test/sample");
  Tensor row({4}, {0.5, 2.0, 2.0, -1.0});
  CHECK(sample_token(row, 0.0, rng) == 1);

  // positive temperature covers the whole support eventually
  Tensor flat({3}, {0.0, 0.0, 0.0});
  std::vector<int> seen(3, 0);
  for (int i = 0; i < 300; ++i) ++seen[sample_token(flat, 1.0, rng)];
  for (int k = 0; k < 3; ++k) CHECK(seen[k] > 0);

  CHECK_THROWS_AS(sample_token(row, -0.1, rng), std::invalid_argument);
}

TEST_CASE("assistant encoding is deterministic and shaped per thought slot") {
  const Config cfg = tiny_config();
  const ToyAssistantModel asst = tiny_assistant(cfg);
  const TaskInstance inst = parse_question("3 +4 x2", cfg.task);
  const auto q = question_tokens(inst, cfg.task);
  const Vocab v{cfg.task.modulus};

  const Tensor h1 = asst.encode(q, cfg.model.n_thoughts, v.think());
  const Tensor h2 = asst.encode(q, cfg.model.n_thoughts, v.think());
  REQUIRE(h1.rows() == cfg.model.n_thoughts);
  REQUIRE(h1.cols() == cfg.model.d_asst);
  for (std::size_t i = 0; i < h1.numel(); ++i) CHECK(h1[i] == h2[i]);

  // a different question produces different states
  const auto q2 = question_tokens(parse_question("5 +1 x3", cfg.task), cfg.task);
  const Tensor other = asst.encode(q2, cfg.model.n_thoughts, v.think());
  double diff = 0.0;
  for (std::size_t i = 0; i < h1.numel(); ++i) diff = std::max(diff, std::abs(h1[i] - other[i]));
  CHECK(diff > 0.0);
}

TEST_CASE("head checkpoint splits and rejoins losslessly") {
  const Config cfg = tiny_config();
  const ToyBaseModel base = tiny_base(cfg);
  const TrainableHead head = init_head(cfg, base);

  const ParamSet merged = head_to_params(head);
  CHECK(merged.contains("proj.w"));
  CHECK(merged.contains("proj.b"));
  const TrainableHead back = head_from_params(cfg, merged);
  CHECK(content_hash(head_to_params(back)) == content_hash(merged));

  // initialization is a pure function of the config seed, so two fresh heads
  // agree bit for bit
  const TrainableHead again = init_head(cfg, base);
  CHECK(content_hash(head_to_params(again)) == content_hash(merged));
}

TEST_CASE("train_step leaves frozen models bit-identical and moves the head") {
  Config cfg = tiny_config();
  const auto data = gen_dataset(cfg.task);
  ToyBaseModel base = tiny_base(cfg);
  ToyAssistantModel asst = tiny_assistant(cfg);
  base.params().freeze_all();
  asst.params().freeze_all();
  TrainableHead head = init_head(cfg, base);

  const auto base_hash = content_hash(base.params());
  const auto asst_hash = content_hash(asst.params());
  const auto head_before = content_hash(head_to_params(head));

  const StepRecord rec = train_step(cfg, data, {0, 1, 2, 3}, base, asst, head, 0, 0, false);
  CHECK_FALSE(rec.rejected);
  CHECK(rec.batch_size == 4);
  CHECK(std::isfinite(rec.l_total));
  CHECK(rec.grad_norm > 0.0);

  CHECK(content_hash(base.params()) == base_hash);
  CHECK(content_hash(asst.params()) == asst_hash);
  CHECK(content_hash(head_to_params(head)) != head_before);

  // refusing to run against unfrozen weights catches a miswired caller
  ToyBaseModel thawed = tiny_base(cfg);
  TrainableHead h2 = init_head(cfg, thawed);
  CHECK_THROWS_AS(train_step(cfg, data, {0}, thawed, asst, h2, 0, 0, false),
                  std::logic_error);
}

TEST_CASE("training losses decompose the way the records claim") {
  Config cfg = tiny_config();
  const auto data = gen_dataset(cfg.task);
  ToyBaseModel base = tiny_base(cfg);
  ToyAssistantModel asst = tiny_assistant(cfg);
  base.params().freeze_all();
  asst.params().freeze_all();

  SUBCASE("calibration off makes the total exactly the language loss") {
    cfg.loss.alpha = 0.0;
    cfg.train.backprop_mode = BackpropMode::detached;
    TrainableHead head = init_head(cfg, base);
    const StepRecord rec = train_step(cfg, data, {0, 1}, base, asst, head, 0, 0, false);
    CHECK(rec.l_total == rec.l_lm);
  }

  SUBCASE("zero steps pin the hinge at the margin and the proximity at zero") {
    cfg.langevin.steps = 0;
    TrainableHead head = init_head(cfg, base);
    const StepRecord rec = train_step(cfg, data, {0, 1, 2}, base, asst, head, 0, 0, false);
    CHECK(rec.mean_hinge == cfg.loss.margin);
    CHECK(rec.mean_consistency == 0.0);
    CHECK(rec.l_ebm == cfg.loss.margin);
    CHECK(rec.l_total == rec.l_lm + cfg.loss.alpha * rec.l_ebm);
  }

  SUBCASE("audited steps agree between the closed form and the taped chain") {
    TrainableHead head = init_head(cfg, base);
    const StepRecord rec = train_step(cfg, data, {0, 1, 2, 3}, base, asst, head, 0, 0, true);
    REQUIRE(rec.audit_rel_err.has_value());
    CHECK(*rec.audit_rel_err <= 1e-3);
  }
}

TEST_CASE("a short training run logs records and lowers the language loss") {
  Config cfg = tiny_config();
  cfg.task.count = 16;
  cfg.train.epochs = 3;
  const auto data = gen_dataset(cfg.task);
  ToyBaseModel base = tiny_base(cfg);
  ToyAssistantModel asst = tiny_assistant(cfg);
  base.params().freeze_all();
  asst.params().freeze_all();

  std::ostringstream log;
  TrainStats stats;
  const TrainableHead head = train(cfg, data, base, asst, &log, &stats);
  (void)head;
  CHECK(stats.steps == 3 * 4);  // 16 items / batch 4, three epochs
  CHECK(stats.rejected_steps == 0);
  CHECK(std::isfinite(stats.first_batch_lm));
  CHECK(std::isfinite(stats.first_epoch_running_lm));
  for (double e : stats.audit_errors) CHECK(e <= 1e-3);

  // one json object per step, each parseable by the record printer's reader
  int lines = 0;
  std::istringstream in(log.str());
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++lines;
  CHECK(lines == stats.steps);
}

TEST_CASE("repeated steps on one batch descend the language loss") {
  Config cfg = tiny_config();
  cfg.loss.alpha = 0.0;  // pure language objective, reached through the chain
  cfg.train.learning_rate = 0.02;
  const auto data = gen_dataset(cfg.task);
  ToyBaseModel base = tiny_base(cfg);
  ToyAssistantModel asst = tiny_assistant(cfg);
  base.params().freeze_all();
  asst.params().freeze_all();
  TrainableHead head = init_head(cfg, base);

  double first = 0.0, last = 0.0;
  for (int s = 0; s < 12; ++s) {
    const StepRecord rec = train_step(cfg, data, {0, 1}, base, asst, head, 0, s, false);
    REQUIRE_FALSE(rec.rejected);
    if (s == 0) first = rec.l_lm;
    last = rec.l_lm;
  }
  CHECK(last < first);
}

TEST_CASE("identical runs produce bit-identical heads") {
  Config cfg = tiny_config();
  cfg.task.count = 8;
  cfg.train.epochs = 2;
  const auto data = gen_dataset(cfg.task);
  ToyBaseModel base = tiny_base(cfg);
  ToyAssistantModel asst = tiny_assistant(cfg);
  base.params().freeze_all();
  asst.params().freeze_all();

  const TrainableHead h1 = train(cfg, data, base, asst, nullptr);
  const TrainableHead h2 = train(cfg, data, base, asst, nullptr);
  CHECK(content_hash(head_to_params(h1)) == content_hash(head_to_params(h2)));
}

TEST_CASE("calibration and decoding run end to end on an untrained stack") {
  Config cfg = tiny_config();
  const auto data = gen_dataset(cfg.task);
  ToyBaseModel base = tiny_base(cfg);
  ToyAssistantModel asst = tiny_assistant(cfg);
  base.params().freeze_all();
  asst.params().freeze_all();
  const TrainableHead head = init_head(cfg, base);

  const CalibratedQuestion cq = calibrate_question(data[0], cfg, base, asst, head);
  CHECK(static_cast<int>(cq.prefix_ids.size()) ==
        question_width(cfg.task) + cfg.model.n_thoughts);
  REQUIRE(static_cast<int>(cq.energy_trace.size()) == cfg.langevin.steps + 1);
  CHECK(cq.latents.rows() == cfg.model.n_thoughts);

  // inference never injects noise: the trace is a deterministic descent path
  const CalibratedQuestion again = calibrate_question(data[0], cfg, base, asst, head);
  for (std::size_t i = 0; i < cq.energy_trace.size(); ++i)
    CHECK(cq.energy_trace[i] == again.energy_trace[i]);

  const InferResult greedy = decode_chain(cq, cfg, base, 0.0, nullptr);
  CHECK(greedy.generated.size() > 0);
  CHECK(greedy.generated.size() <= 64);

  // same stream, same chain; different chain index, independent stream
  const auto chains = sample_chains(cq, cfg, base, 3, 0.7, 0);
  const auto chains2 = sample_chains(cq, cfg, base, 3, 0.7, 0);
  REQUIRE(chains.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(chains[i].generated == chains2[i].generated);
}
