#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ebmcot/config.hpp"
#include "ebmcot/energy.hpp"
#include "ebmcot/langevin.hpp"
#include "ebmcot/losses.hpp"
#include "ebmcot/models.hpp"
#include "ebmcot/task.hpp"

namespace ebmcot {

// Sequence geometry shared by pretraining, calibration training, and
// decoding: [question | thought slots | reasoning | ANS answer EOS].
struct PipelineLayout {
  Vocab vocab;
  int question_width = 0;
  int thought_start = 0;  // first thought-slot position
  int first_target = 0;   // first predicted position (the row after the slots)
};
PipelineLayout layout_for(const Config& cfg);

// architecture settings implied by a run configuration; checkpoint loading
// must derive them the same way pretraining did
BaseConfig base_config_for(const Config& cfg);
AssistantConfig assistant_config_for(const Config& cfg);

// held-out questions are the trailing index range, so the two splits are
// disjoint by construction
struct DatasetSplit {
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> held_out;
};
DatasetSplit split_dataset(const std::vector<TaskInstance>& all);

// --- stage 1: frozen components -------------------------------------------

struct PretrainStats {
  int epochs_run = 0;
  double final_mean_loss = 0.0;
  double held_answer_accuracy = 0.0;  // greedy decode, answer only
  double probe_reproduction = 0.0;    // greedy decode matches the full trace
  bool target_met = false;
};

struct PretrainResult {
  ToyBaseModel base;
  ToyAssistantModel assistant;
  PretrainStats stats;
};

// Teacher-forced pretraining of the base on full sequences (thought slots
// filled with the slot token), early-stopped once greedy held-out answer
// accuracy and train-probe trace reproduction both reach the target. The
// assistant is drawn from the seed and never trained. Both come back frozen.
// `log`, when given, receives one json line per epoch.
PretrainResult pretrain_base(const Config& cfg, const std::vector<TaskInstance>& train,
                             const std::vector<TaskInstance>& held_out, std::ostream* log);

// --- stage 2: trainable head ----------------------------------------------

struct TrainableHead {
  Projection projection;
  EnergyModel energy;
};

TrainableHead init_head(const Config& cfg, const ToyBaseModel& base);

// head checkpoint: one ParamSet holding both parts under name prefixes
ParamSet head_to_params(const TrainableHead& head);
TrainableHead head_from_params(const Config& cfg, const ParamSet& merged);

struct StepRecord {
  int step = 0;
  int epoch = 0;
  int batch_size = 0;
  double l_lm = 0.0;
  double l_ebm = 0.0;
  double l_total = 0.0;
  double mean_hinge = 0.0;
  double mean_consistency = 0.0;
  double grad_norm = 0.0;
  bool rejected = false;
  std::string reject_reason;
  // relative disagreement between the closed-form and taped chain gradients,
  // present on audited steps
  std::optional<double> audit_rel_err;
};
std::string step_record_json(const StepRecord& r);

// One optimizer step over a batch of dataset indices. Exposed for tests;
// training loops call it in sequence. `audit` additionally computes the
// chain gradient by the other route and records the disagreement.
StepRecord train_step(const Config& cfg, const std::vector<TaskInstance>& data,
                      const std::vector<int>& batch_indices, const ToyBaseModel& base,
                      const ToyAssistantModel& assistant, TrainableHead& head, int epoch,
                      int step_index, bool audit);

struct TrainStats {
  int steps = 0;
  int rejected_steps = 0;
  double first_batch_lm = 0.0;          // L_LM of the very first step
  double first_epoch_running_lm = 0.0;  // running mean at the end of epoch 0
  std::vector<double> audit_errors;
};

TrainableHead train(const Config& cfg, const std::vector<TaskInstance>& train_data,
                    const ToyBaseModel& base, const ToyAssistantModel& assistant,
                    std::ostream* log, TrainStats* stats = nullptr);

// --- inference --------------------------------------------------------------

// question prefix with its calibrated latent block; computed once per
// question, shared by every sampled chain
struct CalibratedQuestion {
  std::vector<int> prefix_ids;  // question tokens plus slot tokens
  Tensor latents;               // final chain state, spliced at decode time
  std::vector<double> energy_trace;  // energy at every chain state
};

CalibratedQuestion calibrate_question(const TaskInstance& q, const Config& cfg,
                                      const ToyBaseModel& base,
                                      const ToyAssistantModel& assistant,
                                      const TrainableHead& head);

struct InferResult {
  std::vector<int> generated;  // tokens produced after the thought block
  std::vector<int> reasoning;  // digit tokens preceding the answer marker
  int answer = -1;             // -1 when no well-formed answer was produced
  bool truncated = false;      // hit the length cap before an end token
};

// temperature 0 (or rng == nullptr) decodes greedily
InferResult decode_chain(const CalibratedQuestion& cq, const Config& cfg,
                         const ToyBaseModel& base, double temperature, RngStream* rng);

InferResult infer(const TaskInstance& q, const Config& cfg, const ToyBaseModel& base,
                  const ToyAssistantModel& assistant, const TrainableHead& head,
                  double temperature, RngStream* rng,
                  std::vector<double>* energy_trace = nullptr);

// N chains from one shared calibration; chain i draws from the stream
// (seed, "decode", question_id, i), so results do not depend on scheduling
std::vector<InferResult> sample_chains(const CalibratedQuestion& cq, const Config& cfg,
                                       const ToyBaseModel& base, int n_chains,
                                       double temperature, std::uint64_t question_id);

}  // namespace ebmcot
