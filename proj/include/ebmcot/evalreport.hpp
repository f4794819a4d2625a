#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ebmcot/pipeline.hpp"

namespace ebmcot {

// most frequent answer; ties break toward the smallest token value so the
// vote is deterministic
int majority_vote(const std::vector<int>& answers);

// percentage of questions whose majority vote over exactly n chains matches
// the gold answer; ragged chain counts are rejected
double pass_at_n(const std::vector<std::vector<int>>& chains_per_question,
                 const std::vector<int>& gold, int n);

// acc1 / accN x 100, reported without clamping (voting can flip answers, so
// values above 100 are possible and meaningful); accN must be positive
double consistency_rate(double acc1, double accN);

struct EnergyGapStats {
  double mean_gap = 0.0;    // energy at the initial state minus the final state
  double median_gap = 0.0;
  double fraction_positive = 0.0;
};

// (initial, final) energy per question
EnergyGapStats energy_gap_stats(const std::vector<std::pair<double, double>>& traces);

struct QuestionRecord {
  int question_id = 0;
  int gold = 0;
  std::vector<int> chains;  // answer token per chain, -1 for unparsed
  int vote = -1;
  bool correct = false;
  double energy_initial = 0.0;
  double energy_final = 0.0;
};

struct EvalReport {
  double pass1_accuracy = 0.0;
  double passN_accuracy = 0.0;
  int n_chains = 0;
  std::optional<double> consistency;  // absent when passN is 0
  double mean_energy_raw = 0.0;
  double mean_energy_calibrated = 0.0;
  double fraction_energy_decreased = 0.0;
  std::vector<QuestionRecord> questions;
};

// one summary line followed by one line per question; parsing validates the
// question count so round-trips are lossless
std::string report_to_jsonl(const EvalReport& report);
EvalReport report_from_jsonl(const std::string& text);

EvalReport run_eval(const Config& cfg, const std::vector<TaskInstance>& questions,
                    const ToyBaseModel& base, const ToyAssistantModel& assistant,
                    const TrainableHead& head, int n_chains, double temperature);

}  // namespace ebmcot
