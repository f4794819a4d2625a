#pragma once

#include <map>
#include <string>
#include <vector>

#include "ebmcot/paramset.hpp"
#include "ebmcot/rng.hpp"
#include "ebmcot/tape.hpp"
#include "ebmcot/tensor.hpp"

namespace ebmcot {

// Conditioning side of the energy network: a pooled summary of the question.
// Token history ahead of the thought block never enters the energy; the
// whole block is scored against the question summary alone.
struct Context {
  Tensor pooled_question;  // rank-1

  // arithmetic mean over the rows of a (tokens x dim) embedding matrix
  static Context from_question_embeddings(const Tensor& rows);
  int dim() const { return pooled_question.shape()[0]; }
};

// A group of latent thought vectors, one row per thought position.
struct ThoughtBlock {
  Tensor latents;  // rank-2: n_thoughts x latent_dim

  ThoughtBlock() = default;
  explicit ThoughtBlock(Tensor t);
  int n_thoughts() const { return latents.rows(); }
  int latent_dim() const { return latents.cols(); }
};

// What the update-rule machinery needs from an energy: scalar value, its
// gradient in the latents, and a vector-Jacobian product of that gradient
// against the parameters. Small test energies implement this directly.
class EnergyFunction {
 public:
  virtual ~EnergyFunction() = default;
  virtual double energy(const Context& ctx, const ThoughtBlock& block) const = 0;
  virtual Tensor grad_latent(const Context& ctx, const ThoughtBlock& block) const = 0;
  // u has the block's shape; returns u . d(grad_latent)/d(params), obtained
  // by differentiating <u, grad_latent> with respect to the parameters
  virtual GradMap vjp_params(const Context& ctx, const ThoughtBlock& block,
                             const Tensor& u) const = 0;
};

// Hessian-vector product in the latents via central differences of the
// analytic gradient; the default second-order route everywhere.
Tensor hvp_latent(const EnergyFunction& e, const Context& ctx, const ThoughtBlock& at,
                  const Tensor& v);

struct EnergyConfig {
  int context_dim = 32;
  int latent_dim = 32;
  int position_dim = 8;
  int max_thoughts = 4;
  std::vector<int> hidden = {64, 32};
  double temperature = 1.0;
};

// MLP scoring head: each thought row is scored from
// [pooled_question ; latent_i ; position_embedding_i] and the block energy is
// the sum over rows, so it is invariant to permuting (row, position) pairs.
class EnergyModel : public EnergyFunction {
 public:
  EnergyModel(EnergyConfig cfg, RngStream& rng);
  EnergyModel(EnergyConfig cfg, ParamSet params);  // shapes validated

  const EnergyConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  double energy(const Context& ctx, const ThoughtBlock& block) const override;
  Tensor grad_latent(const Context& ctx, const ThoughtBlock& block) const override;
  GradMap vjp_params(const Context& ctx, const ThoughtBlock& block,
                     const Tensor& u) const override;
  GradMap grad_params(const Context& ctx, const ThoughtBlock& block) const;  // dE/dparams

  // tape builders shared by the training paths; `phi` maps parameter names
  // to on-tape values (leaves or constants as the caller decides)
  Value energy_node(Tape& tape, const std::map<std::string, Value>& phi, const Context& ctx,
                    Value latents) const;
  // the analytic latent gradient expressed with primitives, so a tape can
  // differentiate THROUGH it (this is what makes the whole-chain route work)
  Value grad_latent_node(Tape& tape, const std::map<std::string, Value>& phi,
                         const Context& ctx, Value latents) const;
  std::map<std::string, Value> insert_params(Tape& tape, bool as_constants) const;

 private:
  EnergyConfig cfg_;
  ParamSet params_;
  int n_layers() const { return static_cast<int>(cfg_.hidden.size()); }
  void validate_block(const Context& ctx, const ThoughtBlock& block) const;
};

// p_i proportional to base_i * exp(-energy_i / T); overflow-safe via max
// subtraction; T <= 0 and a fully vanished numerator are rejected
Tensor residual_reweight(const Tensor& base_probs, const Tensor& energies, double temperature);

// elementwise negation: scoring logits reinterpreted as (negative) energies
Tensor logits_to_energies(const Tensor& logits);

}  // namespace ebmcot
