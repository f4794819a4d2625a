#include "ebmcot/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "ebmcot/gradcheck.hpp"
#include "json.hpp"

namespace ebmcot {

namespace {

constexpr double kPretrainLr = 0.25;
constexpr int kPretrainBatch = 16;
constexpr int kMaxPretrainEpochs = 150;
constexpr double kPretrainTarget = 0.9;
constexpr int kProbeSize = 64;
constexpr int kAuditEvery = 50;
// fraction of pretraining items whose thought slots keep the plain THINK
// filler, so decoding from uninformative slots stays trained
constexpr double kHintDropout = 0.5;
// strength of the answer code added to the THINK embedding in the slots
constexpr double kHintGain = 0.5;

Tensor scaled(const Tensor& t, double s) {
  Tensor out = t;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return out;
}

Context question_context(const ToyBaseModel& base, const std::vector<int>& q_ids) {
  return Context::from_question_embeddings(base.embed_tokens(q_ids));
}

struct ParsedTail {
  std::vector<int> reasoning;
  int answer = -1;
};

// expected tail shape: residue digits, the answer marker, one answer digit
ParsedTail parse_tail(const std::vector<int>& generated, const Vocab& vocab) {
  ParsedTail out;
  std::size_t i = 0;
  while (i < generated.size() && vocab.is_digit(generated[i]))
    out.reasoning.push_back(generated[i++]);
  if (i < generated.size() && generated[i] == vocab.ans() && i + 1 < generated.size() &&
      vocab.is_digit(generated[i + 1]))
    out.answer = generated[i + 1];
  return out;
}

struct DecodeOut {
  std::vector<int> generated;
  bool truncated = false;
};

DecodeOut run_decode(const ToyBaseModel& base, std::vector<int> ids, const Tensor* latents,
                     int splice_at, const Vocab& vocab, double temperature,
                     RngStream* rng) {
  DecodeOut out;
  RngStream greedy_unused(0, "decode/greedy-unused");
  const int cap = base.config().max_len;
  while (static_cast<int>(ids.size()) < cap) {
    const Tensor all = latents != nullptr ? base.logits(ids, *latents, splice_at)
                                          : base.logits(ids);
    Tensor row({base.config().vocab});
    for (int c = 0; c < base.config().vocab; ++c)
      row[c] = all.at(all.rows() - 1, c);
    const bool greedy = temperature <= 0.0 || rng == nullptr;
    const int next = greedy ? sample_token(row, 0.0, greedy_unused)
                            : sample_token(row, temperature, *rng);
    ids.push_back(next);
    out.generated.push_back(next);
    if (next == vocab.eos()) return out;
  }
  out.truncated = true;
  return out;
}

InferResult to_infer_result(DecodeOut d, const Vocab& vocab) {
  InferResult r;
  ParsedTail tail = parse_tail(d.generated, vocab);
  r.generated = std::move(d.generated);
  r.reasoning = std::move(tail.reasoning);
  r.answer = tail.answer;
  r.truncated = d.truncated;
  return r;
}

// greedy decode from the question with the slot tokens left in place (the
// pretraining regime, no latents involved)
InferResult greedy_plain(const ToyBaseModel& base, const TaskInstance& q,
                         const Config& cfg, const PipelineLayout& lay) {
  std::vector<int> ids = question_tokens(q, cfg.task);
  for (int i = 0; i < cfg.model.n_thoughts; ++i) ids.push_back(lay.vocab.think());
  return to_infer_result(run_decode(base, std::move(ids), nullptr, -1, lay.vocab, 0.0, nullptr),
                         lay.vocab);
}

bool all_finite(const GradMap& g) {
  for (const auto& [name, t] : g)
    if (!t.all_finite()) return false;
  return true;
}

double grad_sq_sum(const GradMap& g) {
  double s = 0.0;
  for (const auto& [name, t] : g)
    for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
  return s;
}

// per-item quantities shared by every gradient route
struct ItemWork {
  std::vector<int> q_ids, seq;
  Tensor h_asst;
  Tensor l0, lS;
  Context ctx;
  LangevinTrajectory traj;
  double e_raw = 0.0, e_cal = 0.0;
};

ItemWork prepare_item(const TaskInstance& inst, const Config& cfg,
                      const PipelineLayout& lay, const ToyBaseModel& base,
                      const ToyAssistantModel& assistant, const TrainableHead& head,
                      int epoch, int dataset_index) {
  ItemWork w;
  w.q_ids = question_tokens(inst, cfg.task);
  w.seq = full_sequence(inst, cfg.task, cfg.model.n_thoughts);
  w.h_asst = assistant.encode(w.q_ids, cfg.model.n_thoughts, lay.vocab.think());
  w.l0 = head.projection.apply(w.h_asst);
  w.ctx = question_context(base, w.q_ids);
  RngStream noise(cfg.task.seed, "langevin",
                  {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(dataset_index)});
  w.traj = calibrate(head.energy, w.ctx, ThoughtBlock(w.l0), cfg.langevin, noise);
  w.lS = w.traj.final();
  w.e_raw = head.energy.energy(w.ctx, ThoughtBlock(w.l0));
  w.e_cal = head.energy.energy(w.ctx, ThoughtBlock(w.lS));
  return w;
}

// language loss with the calibrated block entering as a leaf; returns the
// loss value and its gradient in that leaf
struct LmAtLeaf {
  double l_lm = 0.0;
  Tensor u0;
};

LmAtLeaf lm_grad_at_latents(const ToyBaseModel& base, const PipelineLayout& lay,
                            const ItemWork& w) {
  Tape tape;
  auto pb = base.insert_params(tape, true);
  Value latents = tape.leaf(w.lS);
  Value lm = base.prediction_loss_node(tape, pb, w.seq, latents, lay.thought_start,
                                       lay.first_target);
  tape.backward(lm);
  return {tape.value(lm).item(), tape.grad(latents)};
}

// whole-path tape: projection -> chain -> spliced language loss plus the
// proximity term, differentiated in one reverse sweep
struct TapeRouteOut {
  double l_lm = 0.0;
  GradMap proj;
  GradMap phi;
};

TapeRouteOut tape_route(const PipelineLayout& lay, const ToyBaseModel& base,
                        const TrainableHead& head, const ItemWork& w, double lm_weight,
                        double cons_weight) {
  Tape tape;
  auto pb = base.insert_params(tape, true);
  auto pp = head.projection.insert_params(tape, false);
  auto pe = head.energy.insert_params(tape, false);

  Value l0 = head.projection.node(tape, pp, tape.constant(w.h_asst));
  Value l = l0;
  const double noise_scale = std::sqrt(2.0 * w.traj.eta);
  for (int s = 0; s < w.traj.steps(); ++s) {
    Value g = head.energy.grad_latent_node(tape, pe, w.ctx, l);
    l = add(sub(l, scale(g, w.traj.eta)),
            scale(tape.constant(w.traj.noises[s]), noise_scale));
  }
  Value lm = base.prediction_loss_node(tape, pb, w.seq, l, lay.thought_start,
                                       lay.first_target);
  Value loss = scale(lm, lm_weight);
  if (cons_weight != 0.0) loss = add(loss, scale(squared_norm(sub(l, l0)), cons_weight));
  tape.backward(loss);
  return {tape.value(lm).item(), collect_grads(tape, pp), collect_grads(tape, pe)};
}

// closed-form route for the same scalar: transport the combined upstream
// through the recorded chain, then push it into the projection
struct ClosedRouteOut {
  double l_lm = 0.0;
  GradMap proj;
  GradMap phi;  // chain contribution only
};

ClosedRouteOut closed_route(const PipelineLayout& lay, const ToyBaseModel& base,
                            const TrainableHead& head, const ItemWork& w,
                            double lm_weight, double cons_weight, bool through_chain) {
  ClosedRouteOut out;
  LmAtLeaf lm = lm_grad_at_latents(base, lay, w);
  out.l_lm = lm.l_lm;

  Tensor delta = w.lS;
  axpy(delta, -1.0, w.l0);

  Tensor p_up;
  if (through_chain && w.traj.steps() > 0) {
    Tensor upstream = scaled(lm.u0, lm_weight);
    axpy(upstream, 2.0 * cons_weight, delta);
    UnrolledGrad ug = unrolled_param_grad(head.energy, w.ctx, w.traj, upstream);
    out.phi = std::move(ug.phi);
    p_up = std::move(ug.u_initial);
  } else {
    // chain treated as the identity for the language term; the proximity
    // term keeps only its direct dependence on the initial block
    p_up = scaled(lm.u0, lm_weight);
  }
  axpy(p_up, -2.0 * cons_weight, delta);

  Tape tape;
  auto pp = head.projection.insert_params(tape, false);
  Value l0 = head.projection.node(tape, pp, tape.constant(w.h_asst));
  tape.backward(dot(tape.constant(p_up), l0));
  out.proj = collect_grads(tape, pp);
  return out;
}

}  // namespace

PipelineLayout layout_for(const Config& cfg) {
  PipelineLayout lay;
  lay.vocab = Vocab{cfg.task.modulus};
  lay.question_width = question_width(cfg.task);
  lay.thought_start = thought_start(cfg.task);
  lay.first_target = lay.thought_start + cfg.model.n_thoughts;
  return lay;
}

BaseConfig base_config_for(const Config& cfg) {
  return BaseConfig{Vocab{cfg.task.modulus}.size(), cfg.model.d_base, 64, 64};
}

AssistantConfig assistant_config_for(const Config& cfg) {
  return AssistantConfig{Vocab{cfg.task.modulus}.size(), cfg.model.d_asst};
}

DatasetSplit split_dataset(const std::vector<TaskInstance>& all) {
  DatasetSplit out;
  const int n = static_cast<int>(all.size());
  const int held = n >= 2 ? std::max(1, n / 6) : 0;
  out.train.assign(all.begin(), all.end() - held);
  out.held_out.assign(all.end() - held, all.end());
  return out;
}

PretrainResult pretrain_base(const Config& cfg, const std::vector<TaskInstance>& train,
                             const std::vector<TaskInstance>& held_out,
                             std::ostream* log) {
  if (train.empty() || held_out.empty())
    throw std::invalid_argument("pretrain: need nonempty train and held-out sets");
  const PipelineLayout lay = layout_for(cfg);

  RngStream base_rng(cfg.task.seed, "init/base");
  ToyBaseModel base(base_config_for(cfg), base_rng);
  RngStream asst_rng(cfg.task.seed, "init/assistant");
  ToyAssistantModel assistant(assistant_config_for(cfg), asst_rng);

  const int probe_n = std::min<int>(kProbeSize, static_cast<int>(train.size()));
  PretrainStats stats;

  // the accuracy gate, checked several times per epoch: one optimizer epoch
  // can jump held accuracy far past the target, and a base that overshoots
  // is much sharper than one stopped at the threshold
  const auto gate = [&](int epoch, double loss_mean) {
    int held_hits = 0;
    for (const TaskInstance& q : held_out)
      held_hits += greedy_plain(base, q, cfg, lay).answer == q.answer;
    int probe_hits = 0;
    for (int i = 0; i < probe_n; ++i) {
      const InferResult r = greedy_plain(base, train[i], cfg, lay);
      probe_hits += r.answer == train[i].answer && r.reasoning == train[i].reasoning_residues;
    }
    stats.epochs_run = epoch + 1;
    stats.final_mean_loss = loss_mean;
    stats.held_answer_accuracy = static_cast<double>(held_hits) / held_out.size();
    stats.probe_reproduction = static_cast<double>(probe_hits) / probe_n;
    stats.target_met = stats.held_answer_accuracy >= kPretrainTarget &&
                       stats.probe_reproduction >= kPretrainTarget;
    if (log != nullptr) {
      nlohmann::json line{{"epoch", epoch},
                          {"mean_loss", loss_mean},
                          {"held_answer_accuracy", stats.held_answer_accuracy},
                          {"probe_reproduction", stats.probe_reproduction}};
      *log << line.dump() << "\n" << std::flush;
    }
    return stats.target_met;
  };

  bool done = false;
  for (int epoch = 0; epoch < kMaxPretrainEpochs && !done; ++epoch) {
    RngStream shuffle(cfg.task.seed, "pretrain/shuffle",
                      {static_cast<std::uint64_t>(epoch)});
    const std::vector<int> perm = shuffle.permutation(static_cast<int>(train.size()));
    const std::size_t n_batches = (perm.size() + kPretrainBatch - 1) / kPretrainBatch;
    const std::size_t gate_stride =
        std::max<std::size_t>(1, n_batches / kGateChecksPerEpoch);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    for (std::size_t b0 = 0; b0 < perm.size(); b0 += kPretrainBatch) {
      const std::size_t b1 = std::min(perm.size(), b0 + kPretrainBatch);
      GradMap grads;
      const double w = 1.0 / static_cast<double>(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        // most slots carry the gold answer as an additive code on top of the
        // THINK embedding, so the block stays recognizable as a slot while
        // the answer position learns to read the code; targets start after
        // the slots, so the code is input only
        const TaskInstance& inst = train[perm[i]];
        const std::vector<int> seq =
            full_sequence(inst, cfg.task, cfg.model.n_thoughts);
        RngStream hint(cfg.task.seed, "pretrain/hint",
                       {static_cast<std::uint64_t>(epoch),
                        static_cast<std::uint64_t>(perm[i])});
        const bool hinted = hint.uniform() >= kHintDropout;
        Tape tape;
        auto p = base.insert_params(tape, false);
        Value loss;
        if (hinted) {
          const std::vector<int> think_ids(cfg.model.n_thoughts, lay.vocab.think());
          const std::vector<int> ans_ids(cfg.model.n_thoughts,
                                         lay.vocab.digit(inst.answer));
          Tensor block = base.embed_tokens(think_ids);
          const Tensor code = base.embed_tokens(ans_ids);
          for (std::size_t k = 0; k < block.numel(); ++k)
            block[k] += kHintGain * code[k];
          loss = base.prediction_loss_node(tape, p, seq, tape.constant(block),
                                           lay.thought_start, lay.first_target);
        } else {
          loss = base.prediction_loss_node(tape, p, seq, lay.first_target);
        }
        tape.backward(loss);
        grad_accumulate(grads, collect_grads(tape, p), w);
        epoch_loss += tape.value(loss).item();
      }
      sgd_step(base.params(), grads, kPretrainLr);
    }
    epoch_loss /= static_cast<double>(perm.size());

    int held_hits = 0;
    for (const TaskInstance& q : held_out)
      held_hits += greedy_plain(base, q, cfg, lay).answer == q.answer;
    int probe_hits = 0;
    for (int i = 0; i < probe_n; ++i) {
      const InferResult r = greedy_plain(base, train[i], cfg, lay);
      probe_hits += r.answer == train[i].answer && r.reasoning == train[i].reasoning_residues;
    }

    stats.epochs_run = epoch + 1;
    stats.final_mean_loss = epoch_loss;
    stats.held_answer_accuracy = static_cast<double>(held_hits) / held_out.size();
    stats.probe_reproduction = static_cast<double>(probe_hits) / probe_n;
    stats.target_met = stats.held_answer_accuracy >= kPretrainTarget &&
                       stats.probe_reproduction >= kPretrainTarget;

    if (log != nullptr) {
      nlohmann::json line{{"epoch", epoch},
                          {"mean_loss", epoch_loss},
                          {"held_answer_accuracy", stats.held_answer_accuracy},
                          {"probe_reproduction", stats.probe_reproduction}};
      *log << line.dump() << "\n" << std::flush;
    }
    if (stats.target_met) break;
  }

  base.params().freeze_all();
  assistant.params().freeze_all();
  return PretrainResult{std::move(base), std::move(assistant), stats};
}

TrainableHead init_head(const Config& cfg, const ToyBaseModel& base) {
  (void)base;
  RngStream proj_rng(cfg.task.seed, "init/projection");
  Projection projection(cfg.model.d_asst, cfg.model.d_base, proj_rng);

  EnergyConfig ecfg;
  ecfg.context_dim = cfg.model.d_base;
  ecfg.latent_dim = cfg.model.d_base;
  ecfg.position_dim = 8;
  ecfg.max_thoughts = cfg.model.n_thoughts;
  ecfg.hidden = cfg.model.energy_hidden;
  RngStream energy_rng(cfg.task.seed, "init/energy");
  return TrainableHead{std::move(projection), EnergyModel(ecfg, energy_rng)};
}

ParamSet head_to_params(const TrainableHead& head) {
  ParamSet merged = head.projection.params().with_prefix("proj");
  merged.merge(head.energy.params().with_prefix("energy"));
  return merged;
}

TrainableHead head_from_params(const Config& cfg, const ParamSet& merged) {
  Projection projection(merged.strip_prefix("proj"));
  EnergyConfig ecfg;
  ecfg.context_dim = cfg.model.d_base;
  ecfg.latent_dim = cfg.model.d_base;
  ecfg.position_dim = 8;
  ecfg.max_thoughts = cfg.model.n_thoughts;
  ecfg.hidden = cfg.model.energy_hidden;
  return TrainableHead{std::move(projection), EnergyModel(ecfg, merged.strip_prefix("energy"))};
}

std::string step_record_json(const StepRecord& r) {
  nlohmann::json j{{"step", r.step},
                   {"epoch", r.epoch},
                   {"batch_size", r.batch_size},
                   {"l_lm", r.l_lm},
                   {"l_ebm", r.l_ebm},
                   {"l_total", r.l_total},
                   {"mean_hinge", r.mean_hinge},
                   {"mean_consistency", r.mean_consistency},
                   {"grad_norm", r.grad_norm},
                   {"rejected", r.rejected}};
  if (r.rejected) j["reject_reason"] = r.reject_reason;
  if (r.audit_rel_err.has_value()) j["audit_rel_err"] = *r.audit_rel_err;
  return j.dump();
}

StepRecord train_step(const Config& cfg, const std::vector<TaskInstance>& data,
                      const std::vector<int>& batch_indices, const ToyBaseModel& base,
                      const ToyAssistantModel& assistant, TrainableHead& head, int epoch,
                      int step_index, bool audit) {
  if (batch_indices.empty()) throw std::invalid_argument("train_step: empty batch");
  if (!base.params().all_frozen() || !assistant.params().all_frozen())
    throw std::invalid_argument("train_step: base and assistant must be frozen");
  const PipelineLayout lay = layout_for(cfg);
  const double b = static_cast<double>(batch_indices.size());
  const double alpha = cfg.loss.alpha;
  const double lambda = cfg.loss.lambda;
  const BackpropMode mode = cfg.train.backprop_mode;

  StepRecord rec;
  rec.step = step_index;
  rec.epoch = epoch;
  rec.batch_size = static_cast<int>(batch_indices.size());

  GradMap proj_grads, energy_grads;
  std::vector<EbmPair> pairs;
  double lm_sum = 0.0;

  for (std::size_t bi = 0; bi < batch_indices.size(); ++bi) {
    const int idx = batch_indices[bi];
    const ItemWork w = prepare_item(data.at(idx), cfg, lay, base, assistant, head, epoch, idx);
    pairs.push_back(EbmPair{w.e_raw, w.e_cal, ThoughtBlock(w.l0), ThoughtBlock(w.lS)});

    // hinge trains the energy parameters only; both blocks are constants
    if (alpha > 0.0 &&
        hinge_active(w.e_raw, w.e_cal, cfg.loss.margin, cfg.loss.hinge_orientation)) {
      const double sign = cfg.loss.hinge_orientation == HingeOrientation::paper ? 1.0 : -1.0;
      grad_accumulate(energy_grads, head.energy.grad_params(w.ctx, ThoughtBlock(w.l0)),
                      sign * alpha / b);
      grad_accumulate(energy_grads, head.energy.grad_params(w.ctx, ThoughtBlock(w.lS)),
                      -sign * alpha / b);
    }

    const double cons_weight = alpha * lambda / b;
    if (mode == BackpropMode::unroll_autodiff) {
      TapeRouteOut out = tape_route(lay, base, head, w, 1.0 / b, cons_weight);
      lm_sum += out.l_lm;
      grad_accumulate(proj_grads, out.proj, 1.0);
      grad_accumulate(energy_grads, out.phi, 1.0);
    } else {
      const bool through_chain = mode == BackpropMode::unroll_closed_form;
      ClosedRouteOut out =
          closed_route(lay, base, head, w, 1.0 / b, cons_weight, through_chain);
      lm_sum += out.l_lm;
      grad_accumulate(proj_grads, out.proj, 1.0);
      grad_accumulate(energy_grads, out.phi, 1.0);
    }

    if (audit && bi == 0 && w.traj.steps() > 0) {
      // same per-item scalar, both chain routes; hinge excluded on both sides
      ClosedRouteOut c = closed_route(lay, base, head, w, 1.0, alpha * lambda, true);
      TapeRouteOut t = tape_route(lay, base, head, w, 1.0, alpha * lambda);
      rec.audit_rel_err = std::max(rel_error(c.phi, t.phi), rel_error(c.proj, t.proj));
    }
  }

  rec.l_lm = lm_sum / b;
  rec.l_ebm = ebm_loss_batch(pairs, cfg.loss);
  rec.l_total = total_loss(rec.l_lm, rec.l_ebm, alpha);
  double hinge_sum = 0.0, cons_sum = 0.0;
  for (const EbmPair& p : pairs) {
    hinge_sum += hinge_loss(p.e_raw, p.e_cal, cfg.loss.margin, cfg.loss.hinge_orientation);
    cons_sum += consistency_loss(p.l_cal, p.l_raw, lambda);
  }
  rec.mean_hinge = hinge_sum / b;
  rec.mean_consistency = cons_sum / b;
  rec.grad_norm = std::sqrt(grad_sq_sum(proj_grads) + grad_sq_sum(energy_grads));

  if (!std::isfinite(rec.l_total) || !std::isfinite(rec.grad_norm) ||
      !all_finite(proj_grads) || !all_finite(energy_grads)) {
    rec.rejected = true;
    rec.reject_reason = "non-finite loss or gradient";
    return rec;
  }

  sgd_step(head.projection.params(), proj_grads, cfg.train.learning_rate);
  sgd_step(head.energy.params(), energy_grads, cfg.train.learning_rate);
  return rec;
}

TrainableHead train(const Config& cfg, const std::vector<TaskInstance>& train_data,
                    const ToyBaseModel& base, const ToyAssistantModel& assistant,
                    std::ostream* log, TrainStats* stats) {
  if (train_data.empty()) throw std::invalid_argument("train: empty dataset");
  TrainableHead head = init_head(cfg, base);

  TrainStats local;
  int step = 0;
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    RngStream shuffle(cfg.task.seed, "train/shuffle",
                      {static_cast<std::uint64_t>(epoch)});
    const std::vector<int> perm = shuffle.permutation(static_cast<int>(train_data.size()));

    double running_lm = 0.0;
    int epoch_steps = 0;
    for (std::size_t b0 = 0; b0 < perm.size(); b0 += cfg.train.batch_size) {
      const std::size_t b1 = std::min(perm.size(), b0 + cfg.train.batch_size);
      const std::vector<int> batch(perm.begin() + b0, perm.begin() + b1);
      const bool audit = cfg.langevin.steps > 0 && step % kAuditEvery == 0;
      const StepRecord rec =
          train_step(cfg, train_data, batch, base, assistant, head, epoch, step, audit);
      if (log != nullptr) *log << step_record_json(rec) << "\n";

      if (step == 0) local.first_batch_lm = rec.l_lm;
      if (rec.audit_rel_err.has_value()) local.audit_errors.push_back(*rec.audit_rel_err);
      local.rejected_steps += rec.rejected;
      running_lm += rec.l_lm;
      ++epoch_steps;
      ++step;
    }
    if (epoch == 0 && epoch_steps > 0)
      local.first_epoch_running_lm = running_lm / epoch_steps;
  }
  local.steps = step;
  if (stats != nullptr) *stats = local;
  return head;
}

CalibratedQuestion calibrate_question(const TaskInstance& q, const Config& cfg,
                                      const ToyBaseModel& base,
                                      const ToyAssistantModel& assistant,
                                      const TrainableHead& head) {
  const PipelineLayout lay = layout_for(cfg);
  CalibratedQuestion cq;
  cq.prefix_ids = question_tokens(q, cfg.task);
  const Tensor h = assistant.encode(cq.prefix_ids, cfg.model.n_thoughts, lay.vocab.think());
  const Tensor l0 = head.projection.apply(h);
  const Context ctx = question_context(base, cq.prefix_ids);

  LangevinConfig inference_cfg = cfg.langevin;
  inference_cfg.noise_enabled = false;  // calibration is deterministic at decode time
  RngStream unused(cfg.task.seed, "infer/noise-disabled");
  const LangevinTrajectory traj =
      calibrate(head.energy, ctx, ThoughtBlock(l0), inference_cfg, unused);

  cq.energy_trace.reserve(traj.states.size());
  for (const Tensor& state : traj.states)
    cq.energy_trace.push_back(head.energy.energy(ctx, ThoughtBlock(state)));
  cq.latents = traj.final();
  for (int i = 0; i < cfg.model.n_thoughts; ++i) cq.prefix_ids.push_back(lay.vocab.think());
  return cq;
}

InferResult decode_chain(const CalibratedQuestion& cq, const Config& cfg,
                         const ToyBaseModel& base, double temperature, RngStream* rng) {
  const PipelineLayout lay = layout_for(cfg);
  return to_infer_result(
      run_decode(base, cq.prefix_ids, &cq.latents, lay.thought_start, lay.vocab,
                 temperature, rng),
      lay.vocab);
}

InferResult infer(const TaskInstance& q, const Config& cfg, const ToyBaseModel& base,
                  const ToyAssistantModel& assistant, const TrainableHead& head,
                  double temperature, RngStream* rng, std::vector<double>* energy_trace) {
  const CalibratedQuestion cq = calibrate_question(q, cfg, base, assistant, head);
  if (energy_trace != nullptr) *energy_trace = cq.energy_trace;
  return decode_chain(cq, cfg, base, temperature, rng);
}

std::vector<InferResult> sample_chains(const CalibratedQuestion& cq, const Config& cfg,
                                       const ToyBaseModel& base, int n_chains,
                                       double temperature, std::uint64_t question_id) {
  if (n_chains < 1) throw std::invalid_argument("sample_chains: n_chains must be >= 1");
  std::vector<InferResult> chains;
  chains.reserve(n_chains);
  for (int i = 0; i < n_chains; ++i) {
    RngStream rng(cfg.task.seed, "decode", {question_id, static_cast<std::uint64_t>(i)});
    chains.push_back(decode_chain(cq, cfg, base, temperature, &rng));
  }
  return chains;
}

}  // namespace ebmcot
