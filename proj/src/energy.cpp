#include "ebmcot/energy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ebmcot/gradcheck.hpp"

namespace ebmcot {

Context Context::from_question_embeddings(const Tensor& rows) {
  if (rows.rank() != 2)
    throw std::invalid_argument("question embeddings must be rank-2, got " + rows.shape_str());
  const int n = rows.rows(), d = rows.cols();
  Tensor pooled({d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pooled[j] += rows.at(i, j);
  for (int j = 0; j < d; ++j) pooled[j] /= n;
  return Context{std::move(pooled)};
}

ThoughtBlock::ThoughtBlock(Tensor t) : latents(std::move(t)) {
  if (latents.rank() != 2 || latents.rows() < 1)
    throw std::invalid_argument("thought block must be rank-2 with >= 1 rows, got " +
                                latents.shape_str());
}

Tensor hvp_latent(const EnergyFunction& e, const Context& ctx, const ThoughtBlock& at,
                  const Tensor& v) {
  return hvp(
      [&](const Tensor& l) { return e.grad_latent(ctx, ThoughtBlock(l)); }, at.latents, v);
}

namespace {

std::string w_name(int i) { return "mlp.w" + std::to_string(i); }
std::string b_name(int i) { return "mlp.b" + std::to_string(i); }

}  // namespace

EnergyModel::EnergyModel(EnergyConfig cfg, RngStream& rng) : cfg_(std::move(cfg)) {
  if (cfg_.context_dim < 1 || cfg_.latent_dim < 1 || cfg_.position_dim < 1 ||
      cfg_.max_thoughts < 1 || cfg_.hidden.empty())
    throw std::invalid_argument("energy config dimensions must be positive");
  int in_dim = cfg_.context_dim + cfg_.latent_dim + cfg_.position_dim;
  for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
    const int out_dim = cfg_.hidden[i];
    params_.insert(w_name(static_cast<int>(i)),
                   rng.gaussian_tensor({in_dim, out_dim}, 1.0 / std::sqrt(in_dim)));
    params_.insert(b_name(static_cast<int>(i)), Tensor({out_dim}));
    in_dim = out_dim;
  }
  const int out_idx = n_layers();
  params_.insert(w_name(out_idx), rng.gaussian_tensor({in_dim, 1}, 1.0 / std::sqrt(in_dim)));
  params_.insert(b_name(out_idx), Tensor({1}));
  params_.insert("pos", rng.gaussian_tensor({cfg_.max_thoughts, cfg_.position_dim}, 0.5));
}

EnergyModel::EnergyModel(EnergyConfig cfg, ParamSet params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  int in_dim = cfg_.context_dim + cfg_.latent_dim + cfg_.position_dim;
  for (int i = 0; i <= n_layers(); ++i) {
    const int out_dim = i < n_layers() ? cfg_.hidden[i] : 1;
    const Tensor& w = params_.at(w_name(i)).value;
    const Tensor& b = params_.at(b_name(i)).value;
    if (w.rank() != 2 || w.rows() != in_dim || w.cols() != out_dim ||
        b.numel() != static_cast<std::size_t>(out_dim))
      throw std::invalid_argument("energy checkpoint shape mismatch at layer " +
                                  std::to_string(i));
    in_dim = out_dim;
  }
  const Tensor& pos = params_.at("pos").value;
  if (pos.rank() != 2 || pos.rows() != cfg_.max_thoughts || pos.cols() != cfg_.position_dim)
    throw std::invalid_argument("energy checkpoint position table mismatch");
}

void EnergyModel::validate_block(const Context& ctx, const ThoughtBlock& block) const {
  if (ctx.dim() != cfg_.context_dim)
    throw std::invalid_argument("context dim " + std::to_string(ctx.dim()) +
                                " does not match energy config " +
                                std::to_string(cfg_.context_dim));
  if (block.latent_dim() != cfg_.latent_dim)
    throw std::invalid_argument("latent dim " + std::to_string(block.latent_dim()) +
                                " does not match energy config " +
                                std::to_string(cfg_.latent_dim));
  if (block.n_thoughts() > cfg_.max_thoughts)
    throw std::invalid_argument("thought count " + std::to_string(block.n_thoughts()) +
                                " exceeds position table of " +
                                std::to_string(cfg_.max_thoughts));
}

std::map<std::string, Value> EnergyModel::insert_params(Tape& tape, bool as_constants) const {
  return ebmcot::insert_params(tape, params_, as_constants);
}

Value EnergyModel::energy_node(Tape& tape, const std::map<std::string, Value>& phi,
                               const Context& ctx, Value latents) const {
  const Tensor& lv = tape.value(latents);
  validate_block(ctx, ThoughtBlock(lv));
  const int n = lv.rows();
  Value q = broadcast_row(tape.constant(ctx.pooled_question), n);
  Value pos = slice_rows(phi.at("pos"), 0, n);
  Value h = concat_cols(concat_cols(q, latents), pos);
  for (int i = 0; i < n_layers(); ++i) {
    h = tanh(add(matmul(h, phi.at(w_name(i))), broadcast_row(phi.at(b_name(i)), n)));
  }
  Value per_token = add(matmul(h, phi.at(w_name(n_layers()))),
                        broadcast_row(phi.at(b_name(n_layers())), n));
  return sum(per_token);
}

Value EnergyModel::grad_latent_node(Tape& tape, const std::map<std::string, Value>& phi,
                                    const Context& ctx, Value latents) const {
  const Tensor& lv = tape.value(latents);
  validate_block(ctx, ThoughtBlock(lv));
  const int n = lv.rows();
  Value q = broadcast_row(tape.constant(ctx.pooled_question), n);
  Value pos = slice_rows(phi.at("pos"), 0, n);
  Value h = concat_cols(concat_cols(q, latents), pos);

  std::vector<Value> activations;  // tanh outputs per hidden layer
  for (int i = 0; i < n_layers(); ++i) {
    h = tanh(add(matmul(h, phi.at(w_name(i))), broadcast_row(phi.at(b_name(i)), n)));
    activations.push_back(h);
  }
  // delta = dE/d(pre-activation) walked backwards, written with primitives so
  // the tape can differentiate through it
  auto one_minus_sq = [](Value z) { return add_scalar(scale(mul(z, z), -1.0), 1.0); };
  Value delta = mul(one_minus_sq(activations.back()),
                    broadcast_row(transpose(phi.at(w_name(n_layers()))), n));
  for (int i = n_layers() - 1; i >= 1; --i) {
    delta = mul(one_minus_sq(activations[i - 1]),
                matmul(delta, transpose(phi.at(w_name(i)))));
  }
  Value gx = matmul(delta, transpose(phi.at(w_name(0))));
  return slice_cols(gx, cfg_.context_dim, cfg_.context_dim + cfg_.latent_dim);
}

double EnergyModel::energy(const Context& ctx, const ThoughtBlock& block) const {
  validate_block(ctx, block);
  const int n = block.n_thoughts();
  const Tensor& pos = params_.at("pos").value;
  double total = 0.0;
  std::vector<double> h, next;
  for (int t = 0; t < n; ++t) {
    h.assign(cfg_.context_dim + cfg_.latent_dim + cfg_.position_dim, 0.0);
    for (int j = 0; j < cfg_.context_dim; ++j) h[j] = ctx.pooled_question[j];
    for (int j = 0; j < cfg_.latent_dim; ++j) h[cfg_.context_dim + j] = block.latents.at(t, j);
    for (int j = 0; j < cfg_.position_dim; ++j)
      h[cfg_.context_dim + cfg_.latent_dim + j] = pos.at(t, j);
    for (int i = 0; i <= n_layers(); ++i) {
      const Tensor& w = params_.at(w_name(i)).value;
      const Tensor& b = params_.at(b_name(i)).value;
      const int out_dim = w.cols();
      next.assign(out_dim, 0.0);
      for (int o = 0; o < out_dim; ++o) {
        double a = b[o];
        for (int k = 0; k < w.rows(); ++k) a += h[k] * w.at(k, o);
        next[o] = i < n_layers() ? std::tanh(a) : a;
      }
      h.swap(next);
    }
    total += h[0];
  }
  return total;
}

Tensor EnergyModel::grad_latent(const Context& ctx, const ThoughtBlock& block) const {
  Tape tape;
  auto phi = insert_params(tape, true);
  Value g = grad_latent_node(tape, phi, ctx, tape.constant(block.latents));
  return tape.value(g);
}

GradMap EnergyModel::vjp_params(const Context& ctx, const ThoughtBlock& block,
                                const Tensor& u) const {
  if (!u.same_shape(block.latents))
    throw std::invalid_argument("vjp vector shape " + u.shape_str() +
                                " does not match block " + block.latents.shape_str());
  Tape tape;
  auto phi = insert_params(tape, false);
  Value g = grad_latent_node(tape, phi, ctx, tape.constant(block.latents));
  tape.backward(dot(tape.constant(u), g));
  return collect_grads(tape, phi);
}

GradMap EnergyModel::grad_params(const Context& ctx, const ThoughtBlock& block) const {
  Tape tape;
  auto phi = insert_params(tape, false);
  Value e = energy_node(tape, phi, ctx, tape.constant(block.latents));
  tape.backward(e);
  return collect_grads(tape, phi);
}

Tensor residual_reweight(const Tensor& base_probs, const Tensor& energies,
                         double temperature) {
  if (!base_probs.same_shape(energies))
    throw std::invalid_argument("residual_reweight shape mismatch: " + base_probs.shape_str() +
                                " vs " + energies.shape_str());
  if (!(temperature > 0.0))
    throw std::invalid_argument("residual_reweight: temperature must be positive");
  if (!base_probs.all_finite() || !energies.all_finite())
    throw std::invalid_argument("residual_reweight: non-finite input");

  const std::size_t n = base_probs.numel();
  double max_exponent = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    max_exponent = std::max(max_exponent, -energies[i] / temperature);

  Tensor out = Tensor::zeros_like(base_probs);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (base_probs[i] < 0.0)
      throw std::invalid_argument("residual_reweight: negative base probability");
    out[i] = base_probs[i] * std::exp(-energies[i] / temperature - max_exponent);
    z += out[i];
  }
  if (!(z > 0.0))
    throw std::runtime_error("residual_reweight: renormalizer vanished (all mass underflowed)");
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  return out;
}

Tensor logits_to_energies(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = -out[i];
  return out;
}

}  // namespace ebmcot
