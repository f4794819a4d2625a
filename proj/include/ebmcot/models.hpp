#pragma once

#include <map>
#include <string>
#include <vector>

#include "ebmcot/paramset.hpp"
#include "ebmcot/rng.hpp"
#include "ebmcot/tape.hpp"
#include "ebmcot/tensor.hpp"

namespace ebmcot {

struct BaseConfig {
  int vocab = 35;
  int d_model = 32;
  int d_ff = 64;
  int max_len = 64;
};

// Small causal decoder: token + learned position embeddings, one single-head
// self-attention layer and one tanh feed-forward layer (both residual), and
// a linear vocabulary head. Thought slots are ordinary token positions whose
// embedded rows can be replaced by externally supplied latent vectors.
class ToyBaseModel {
 public:
  ToyBaseModel(BaseConfig cfg, RngStream& rng);
  ToyBaseModel(BaseConfig cfg, ParamSet params);

  const BaseConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::map<std::string, Value> insert_params(Tape& tape, bool as_constants) const;

  // all-position vocabulary logits; `latents` (n x d_model), when given,
  // replaces the embedded rows starting at `splice_at` before positions are
  // added, leaving every other row untouched
  Value logits_node(Tape& tape, const std::map<std::string, Value>& p,
                    const std::vector<int>& ids) const;
  Value logits_node(Tape& tape, const std::map<std::string, Value>& p,
                    const std::vector<int>& ids, Value latents, int splice_at) const;

  // mean cross-entropy of predicting ids[t] from position t-1, for every
  // t >= first_target
  Value prediction_loss_node(Tape& tape, const std::map<std::string, Value>& p,
                             const std::vector<int>& ids, int first_target) const;
  Value prediction_loss_node(Tape& tape, const std::map<std::string, Value>& p,
                             const std::vector<int>& ids, Value latents, int splice_at,
                             int first_target) const;

  // plain forward passes used by decoding and evaluation
  Tensor logits(const std::vector<int>& ids) const;
  Tensor logits(const std::vector<int>& ids, const Tensor& latents, int splice_at) const;

  // frozen question-token embeddings, the conditioning input of the energy
  Tensor embed_tokens(const std::vector<int>& ids) const;

 private:
  BaseConfig cfg_;
  ParamSet params_;
  void check_ids(const std::vector<int>& ids) const;
};

// distribution over the next token from one logit row; temperature 0 is
// argmax with ties broken toward the smallest id
int sample_token(const Tensor& logit_row, double temperature, RngStream& rng);

struct AssistantConfig {
  int vocab = 35;
  int d = 16;
};

// Frozen random encoder: a tanh recurrence over the question tokens that
// then free-runs for n_thoughts extra steps on a designated slot token,
// emitting those hidden states. Deterministic given the question.
class ToyAssistantModel {
 public:
  ToyAssistantModel(AssistantConfig cfg, RngStream& rng);
  ToyAssistantModel(AssistantConfig cfg, ParamSet params);

  const AssistantConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  Tensor encode(const std::vector<int>& question_ids, int n_thoughts,
                int slot_token) const;  // n_thoughts x d

 private:
  AssistantConfig cfg_;
  ParamSet params_;
};

// Trainable linear map from assistant hidden states to base-width latents.
class Projection {
 public:
  // bias_init, when given, seeds the bias so fresh latents land near a
  // chosen embedding row instead of near zero
  Projection(int d_in, int d_out, RngStream& rng, const Tensor* bias_init = nullptr);
  explicit Projection(ParamSet params);

  int d_in() const { return params_.at("w").value.rows(); }
  int d_out() const { return params_.at("w").value.cols(); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  Tensor apply(const Tensor& h) const;  // (n x d_in) -> (n x d_out)
  Value node(Tape& tape, const std::map<std::string, Value>& p, Value h) const;
  std::map<std::string, Value> insert_params(Tape& tape, bool as_constants) const;

 private:
  ParamSet params_;
};

}  // namespace ebmcot
