#include "ebmcot/evalreport.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ebmcot {

int majority_vote(const std::vector<int>& answers) {
  if (answers.empty()) throw std::invalid_argument("majority_vote: empty answer list");
  std::map<int, int> counts;
  for (int a : answers) ++counts[a];
  int best = answers.front(), best_count = 0;
  for (const auto& [token, count] : counts)
    if (count > best_count) {  // map iterates ascending, so ties keep the smaller token
      best = token;
      best_count = count;
    }
  return best;
}

double pass_at_n(const std::vector<std::vector<int>>& chains_per_question,
                 const std::vector<int>& gold, int n) {
  if (chains_per_question.empty())
    throw std::invalid_argument("pass_at_n: no questions");
  if (chains_per_question.size() != gold.size())
    throw std::invalid_argument("pass_at_n: questions and gold answers differ in count");
  int hits = 0;
  for (std::size_t i = 0; i < chains_per_question.size(); ++i) {
    if (static_cast<int>(chains_per_question[i].size()) != n)
      throw std::invalid_argument("pass_at_n: question " + std::to_string(i) + " has " +
                                  std::to_string(chains_per_question[i].size()) +
                                  " chains, expected " + std::to_string(n));
    hits += majority_vote(chains_per_question[i]) == gold[i];
  }
  return 100.0 * hits / static_cast<double>(chains_per_question.size());
}

double consistency_rate(double acc1, double accN) {
  if (!(accN > 0.0))
    throw std::invalid_argument("consistency_rate: undefined when pass@N is 0");
  return acc1 / accN * 100.0;
}

EnergyGapStats energy_gap_stats(const std::vector<std::pair<double, double>>& traces) {
  if (traces.empty()) throw std::invalid_argument("energy_gap_stats: no traces");
  std::vector<double> gaps;
  gaps.reserve(traces.size());
  EnergyGapStats s;
  for (const auto& [initial, final_e] : traces) {
    const double gap = initial - final_e;
    gaps.push_back(gap);
    s.mean_gap += gap;
    s.fraction_positive += gap > 0.0;
  }
  s.mean_gap /= static_cast<double>(gaps.size());
  s.fraction_positive /= static_cast<double>(gaps.size());
  std::sort(gaps.begin(), gaps.end());
  const std::size_t mid = gaps.size() / 2;
  s.median_gap = gaps.size() % 2 == 1 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
  return s;
}

std::string report_to_jsonl(const EvalReport& report) {
  nlohmann::json summary{
      {"pass1_accuracy", report.pass1_accuracy},
      {"passN_accuracy", report.passN_accuracy},
      {"n_chains", report.n_chains},
      {"consistency_rate",
       report.consistency.has_value() ? nlohmann::json(*report.consistency)
                                      : nlohmann::json(nullptr)},
      {"mean_energy_raw", report.mean_energy_raw},
      {"mean_energy_calibrated", report.mean_energy_calibrated},
      {"fraction_energy_decreased", report.fraction_energy_decreased},
      {"n_questions", report.questions.size()}};
  std::ostringstream out;
  out << summary.dump() << "\n";
  for (const QuestionRecord& q : report.questions) {
    nlohmann::json line{{"question_id", q.question_id}, {"gold", q.gold},
                        {"chains", q.chains},           {"vote", q.vote},
                        {"correct", q.correct},         {"energy_initial", q.energy_initial},
                        {"energy_final", q.energy_final}};
    out << line.dump() << "\n";
  }
  return out.str();
}

EvalReport report_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::invalid_argument("report: missing summary line");
  const nlohmann::json summary = nlohmann::json::parse(line);

  EvalReport r;
  r.pass1_accuracy = summary.at("pass1_accuracy").get<double>();
  r.passN_accuracy = summary.at("passN_accuracy").get<double>();
  r.n_chains = summary.at("n_chains").get<int>();
  if (!summary.at("consistency_rate").is_null())
    r.consistency = summary.at("consistency_rate").get<double>();
  r.mean_energy_raw = summary.at("mean_energy_raw").get<double>();
  r.mean_energy_calibrated = summary.at("mean_energy_calibrated").get<double>();
  r.fraction_energy_decreased = summary.at("fraction_energy_decreased").get<double>();
  const std::size_t n_questions = summary.at("n_questions").get<std::size_t>();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    QuestionRecord q;
    q.question_id = j.at("question_id").get<int>();
    q.gold = j.at("gold").get<int>();
    q.chains = j.at("chains").get<std::vector<int>>();
    q.vote = j.at("vote").get<int>();
    q.correct = j.at("correct").get<bool>();
    q.energy_initial = j.at("energy_initial").get<double>();
    q.energy_final = j.at("energy_final").get<double>();
    r.questions.push_back(std::move(q));
  }
  if (r.questions.size() != n_questions)
    throw std::invalid_argument("report: summary promises " + std::to_string(n_questions) +
                                " questions, found " + std::to_string(r.questions.size()));
  return r;
}

EvalReport run_eval(const Config& cfg, const std::vector<TaskInstance>& questions,
                    const ToyBaseModel& base, const ToyAssistantModel& assistant,
                    const TrainableHead& head, int n_chains, double temperature) {
  if (questions.empty()) throw std::invalid_argument("run_eval: no questions");
  if (n_chains < 1) throw std::invalid_argument("run_eval: n_chains must be >= 1");

  EvalReport report;
  report.n_chains = n_chains;

  int pass1_hits = 0;
  std::vector<std::vector<int>> all_chains;
  std::vector<int> gold;
  std::vector<std::pair<double, double>> traces;

  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    const TaskInstance& inst = questions[qi];
    const CalibratedQuestion cq = calibrate_question(inst, cfg, base, assistant, head);
    const std::vector<InferResult> chains =
        sample_chains(cq, cfg, base, n_chains, temperature, qi);

    QuestionRecord q;
    q.question_id = static_cast<int>(qi);
    q.gold = inst.answer;
    for (const InferResult& c : chains) q.chains.push_back(c.answer);
    q.vote = majority_vote(q.chains);
    q.correct = q.vote == inst.answer;
    q.energy_initial = cq.energy_trace.front();
    q.energy_final = cq.energy_trace.back();

    pass1_hits += q.chains.front() == inst.answer;
    all_chains.push_back(q.chains);
    gold.push_back(inst.answer);
    traces.emplace_back(q.energy_initial, q.energy_final);
    report.mean_energy_raw += q.energy_initial;
    report.mean_energy_calibrated += q.energy_final;
    report.questions.push_back(std::move(q));
  }

  const double nq = static_cast<double>(questions.size());
  report.pass1_accuracy = 100.0 * pass1_hits / nq;
  report.passN_accuracy = pass_at_n(all_chains, gold, n_chains);
  if (report.passN_accuracy > 0.0)
    report.consistency = consistency_rate(report.pass1_accuracy, report.passN_accuracy);
  report.mean_energy_raw /= nq;
  report.mean_energy_calibrated /= nq;
  report.fraction_energy_decreased = energy_gap_stats(traces).fraction_positive;
  return report;
}

}  // namespace ebmcot
