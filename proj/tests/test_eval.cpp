#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "ebmcot/evalreport.hpp"

using namespace ebmcot;

TEST_CASE("majority vote counts answers and breaks ties toward the smaller") {
  CHECK(majority_vote({4}) == 4);
  CHECK(majority_vote({4, 4, 7}) == 4);
  CHECK(majority_vote({7, 4, 7}) == 7);
  CHECK(majority_vote({4, 7}) == 4);        // tie
  CHECK(majority_vote({9, 2, 9, 2}) == 2);  // tie
  CHECK(majority_vote({-1, -1, 5}) == -1);  // failed parses are votes too
  CHECK_THROWS_AS(majority_vote({}), std::invalid_argument);
}

TEST_CASE("pass@N scores the vote per question and insists on exactly N chains") {
  const std::vector<std::vector<int>> chains = {{4, 4, 7}, {1, 2, 3}, {5, 5, 5}, {0, 9, 9}};
  const std::vector<int> gold = {4, 1, 5, 0};
  // votes: 4 correct, 1 (three-way tie) correct, 5 correct, 9 wrong
  CHECK(pass_at_n(chains, gold, 3) == 75.0);
  CHECK(pass_at_n({{4}, {1}}, {4, 2}, 1) == 50.0);

  CHECK_THROWS_AS(pass_at_n({}, {}, 3), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_n({{1, 2}}, {1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_n({{1}}, {1, 2}, 1), std::invalid_argument);
}

TEST_CASE("consistency rate reproduces its pinned ratios") {
  CHECK(std::abs(consistency_rate(85.26, 90.48) - 94.23) < 0.01);
  CHECK(std::abs(consistency_rate(81.03, 90.63) - 89.41) < 0.01);
  CHECK(consistency_rate(50.0, 50.0) == 100.0);
  // the ratio is reported as-is even above 100
  CHECK(consistency_rate(60.0, 50.0) > 100.0);
  CHECK_THROWS_AS(consistency_rate(10.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(consistency_rate(10.0, -5.0), std::invalid_argument);
}

TEST_CASE("energy gap statistics summarize initial minus final") {
  const std::vector<std::pair<double, double>> traces = {{1.0, 0.4}, {0.8, 0.9}};
  const EnergyGapStats s = energy_gap_stats(traces);
  CHECK(s.mean_gap == 0.25);  // (0.6 + -0.1) / 2
  CHECK(s.fraction_positive == 0.5);
  CHECK(s.median_gap == 0.25);  // even count, midpoint of {-0.1, 0.6}

  const EnergyGapStats odd = energy_gap_stats({{3.0, 1.0}, {1.0, 1.0}, {0.0, 2.0}});
  CHECK(odd.median_gap == 0.0);
  CHECK(odd.fraction_positive == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(energy_gap_stats({}), std::invalid_argument);
}

TEST_CASE("an eval report survives the jsonl round trip byte for byte") {
  EvalReport r;
  r.pass1_accuracy = 62.5;
  r.passN_accuracy = 75.0;
  r.n_chains = 3;
  r.consistency = consistency_rate(62.5, 75.0);
  r.mean_energy_raw = 1.25;
  r.mean_energy_calibrated = 0.875;
  r.fraction_energy_decreased = 0.75;
  r.questions = {
      {0, 4, {4, 4, 7}, 4, true, 1.5, 0.5},
      {1, 2, {-1, 2, 2}, 2, true, 1.0, 1.25},
  };

  const std::string text = report_to_jsonl(r);
  const EvalReport back = report_from_jsonl(text);
  CHECK(report_to_jsonl(back) == text);
  CHECK(back.pass1_accuracy == r.pass1_accuracy);
  CHECK(back.questions.size() == 2);
  CHECK(back.questions[1].chains == std::vector<int>{-1, 2, 2});
  CHECK(back.questions[1].energy_final == 1.25);
  REQUIRE(back.consistency.has_value());
  CHECK(*back.consistency == *r.consistency);

  // the vote-never-correct case reports a null consistency and survives too
  EvalReport zero = r;
  zero.passN_accuracy = 0.0;
  zero.consistency.reset();
  const std::string ztext = report_to_jsonl(zero);
  const EvalReport zback = report_from_jsonl(ztext);
  CHECK_FALSE(zback.consistency.has_value());
  CHECK(report_to_jsonl(zback) == ztext);

  // a summary line promising more questions than follow is an error
  const std::string truncated = text.substr(0, text.find('\n', text.find('\n') + 1) + 1);
  CHECK_THROWS_AS(report_from_jsonl(truncated), std::invalid_argument);
  CHECK_THROWS_AS(report_from_jsonl(""), std::invalid_argument);
}

TEST_CASE("evaluation runs a small stack and fills every summary field") {
  Config cfg;
  cfg.task.count = 6;
  cfg.task.seed = 9;
  cfg.model.d_base = 16;
  cfg.model.d_asst = 8;
  cfg.model.n_thoughts = 2;
  cfg.model.energy_hidden = {8};

  BaseConfig bc;
  bc.vocab = Vocab{cfg.task.modulus}.size();
  bc.d_model = cfg.model.d_base;
  bc.d_ff = 2 * cfg.model.d_base;
  RngStream brng(cfg.task.seed, "init/base");
  ToyBaseModel base(bc, brng);
  AssistantConfig ac;
  ac.vocab = bc.vocab;
  ac.d = cfg.model.d_asst;
  RngStream arng(cfg.task.seed, "init/assistant");
  ToyAssistantModel asst(ac, arng);
  base.params().freeze_all();
  asst.params().freeze_all();
  const TrainableHead head = init_head(cfg, base);
  const auto questions = gen_dataset(cfg.task);

  const EvalReport rep = run_eval(cfg, questions, base, asst, head, 3, 0.7);
  REQUIRE(rep.questions.size() == questions.size());
  CHECK(rep.n_chains == 3);
  for (std::size_t i = 0; i < rep.questions.size(); ++i) {
    const QuestionRecord& q = rep.questions[i];
    CHECK(q.question_id == static_cast<int>(i));
    CHECK(q.gold == questions[i].answer);
    REQUIRE(q.chains.size() == 3);
    CHECK(q.vote == majority_vote(q.chains));
    CHECK(q.correct == (q.vote == q.gold));
  }
  CHECK(rep.pass1_accuracy >= 0.0);
  CHECK(rep.pass1_accuracy <= 100.0);
  CHECK(std::isfinite(rep.mean_energy_raw));
  CHECK(std::isfinite(rep.mean_energy_calibrated));

  // identical inputs, identical bytes: the whole pipeline is replayable
  const EvalReport rep2 = run_eval(cfg, questions, base, asst, head, 3, 0.7);
  CHECK(report_to_jsonl(rep) == report_to_jsonl(rep2));

  // with no calibration steps there is nothing to decrease
  Config flat = cfg;
  flat.langevin.steps = 0;
  const EvalReport frep = run_eval(flat, questions, base, asst, head, 2, 0.0);
  CHECK(frep.fraction_energy_decreased == 0.0);
  CHECK(frep.mean_energy_raw == frep.mean_energy_calibrated);

  CHECK_THROWS_AS(run_eval(cfg, {}, base, asst, head, 3, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(run_eval(cfg, questions, base, asst, head, 0, 0.7), std::invalid_argument);
}
