#include "ebmcot/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ebmcot {

namespace {

Tensor glorot_ish(RngStream& rng, int rows, int cols) {
  return rng.gaussian_tensor({rows, cols}, 1.0 / std::sqrt(static_cast<double>(rows)));
}

}  // namespace

ToyBaseModel::ToyBaseModel(BaseConfig cfg, RngStream& rng) : cfg_(cfg) {
  if (cfg.vocab < 2 || cfg.d_model < 1 || cfg.d_ff < 1 || cfg.max_len < 2)
    throw std::invalid_argument("base model: degenerate configuration");
  params_.insert("emb", rng.gaussian_tensor({cfg.vocab, cfg.d_model}, 1.0));
  params_.insert("pos", rng.gaussian_tensor({cfg.max_len, cfg.d_model}, 0.25));
  params_.insert("attn.wq", glorot_ish(rng, cfg.d_model, cfg.d_model));
  params_.insert("attn.wk", glorot_ish(rng, cfg.d_model, cfg.d_model));
  params_.insert("attn.wv", glorot_ish(rng, cfg.d_model, cfg.d_model));
  params_.insert("attn.wo", glorot_ish(rng, cfg.d_model, cfg.d_model));
  params_.insert("ff.w1", glorot_ish(rng, cfg.d_model, cfg.d_ff));
  params_.insert("ff.b1", Tensor({cfg.d_ff}));
  params_.insert("ff.w2", glorot_ish(rng, cfg.d_ff, cfg.d_model));
  params_.insert("ff.b2", Tensor({cfg.d_model}));
  params_.insert("out.w", glorot_ish(rng, cfg.d_model, cfg.vocab));
  params_.insert("out.b", Tensor({cfg.vocab}));
}

ToyBaseModel::ToyBaseModel(BaseConfig cfg, ParamSet params)
    : cfg_(cfg), params_(std::move(params)) {
  const std::vector<std::pair<std::string, std::vector<int>>> want = {
      {"emb", {cfg.vocab, cfg.d_model}},     {"pos", {cfg.max_len, cfg.d_model}},
      {"attn.wq", {cfg.d_model, cfg.d_model}}, {"attn.wk", {cfg.d_model, cfg.d_model}},
      {"attn.wv", {cfg.d_model, cfg.d_model}}, {"attn.wo", {cfg.d_model, cfg.d_model}},
      {"ff.w1", {cfg.d_model, cfg.d_ff}},    {"ff.b1", {cfg.d_ff}},
      {"ff.w2", {cfg.d_ff, cfg.d_model}},    {"ff.b2", {cfg.d_model}},
      {"out.w", {cfg.d_model, cfg.vocab}},   {"out.b", {cfg.vocab}}};
  for (const auto& [name, shape] : want)
    if (params_.at(name).value.shape() != shape)
      throw std::invalid_argument("base model: parameter '" + name +
                                  "' has shape " + params_.at(name).value.shape_str());
  if (params_.size() != want.size())
    throw std::invalid_argument("base model: unexpected extra parameters in checkpoint");
}

void ToyBaseModel::check_ids(const std::vector<int>& ids) const {
  if (ids.empty()) throw std::invalid_argument("base model: empty token sequence");
  if (static_cast<int>(ids.size()) > cfg_.max_len)
    throw std::invalid_argument("base model: sequence of " + std::to_string(ids.size()) +
                                " tokens exceeds the position table (" +
                                std::to_string(cfg_.max_len) + ")");
  for (int id : ids)
    if (id < 0 || id >= cfg_.vocab)
      throw std::invalid_argument("base model: token id " + std::to_string(id) +
                                  " outside the vocabulary");
}

std::map<std::string, Value> ToyBaseModel::insert_params(Tape& tape,
                                                         bool as_constants) const {
  return ebmcot::insert_params(tape, params_, as_constants);
}

Value ToyBaseModel::logits_node(Tape& tape, const std::map<std::string, Value>& p,
                                const std::vector<int>& ids) const {
  return logits_node(tape, p, ids, Value{}, -1);
}

Value ToyBaseModel::logits_node(Tape& tape, const std::map<std::string, Value>& p,
                                const std::vector<int>& ids, Value latents,
                                int splice_at) const {
  check_ids(ids);
  const int len = static_cast<int>(ids.size());

  Value x = select_rows(p.at("emb"), ids);
  if (splice_at >= 0) x = splice_rows(x, latents, splice_at);
  x = add(x, slice_rows(p.at("pos"), 0, len));

  // causal mask: position t may only attend to positions <= t
  Tensor mask({len, len});
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) mask.at(i, j) = -1e30;

  Value q = matmul(x, p.at("attn.wq"));
  Value k = matmul(x, p.at("attn.wk"));
  Value v = matmul(x, p.at("attn.wv"));
  Value scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(cfg_.d_model));
  Value weights = softmax_rows(add(scores, tape.constant(mask)));
  Value attended = add(x, matmul(matmul(weights, v), p.at("attn.wo")));

  Value hidden = tanh(add(matmul(attended, p.at("ff.w1")), broadcast_row(p.at("ff.b1"), len)));
  Value out = add(attended, add(matmul(hidden, p.at("ff.w2")), broadcast_row(p.at("ff.b2"), len)));

  return add(matmul(out, p.at("out.w")), broadcast_row(p.at("out.b"), len));
}

Value ToyBaseModel::prediction_loss_node(Tape& tape, const std::map<std::string, Value>& p,
                                         const std::vector<int>& ids,
                                         int first_target) const {
  return prediction_loss_node(tape, p, ids, Value{}, -1, first_target);
}

Value ToyBaseModel::prediction_loss_node(Tape& tape, const std::map<std::string, Value>& p,
                                         const std::vector<int>& ids, Value latents,
                                         int splice_at, int first_target) const {
  const int len = static_cast<int>(ids.size());
  if (first_target < 1 || first_target >= len)
    throw std::invalid_argument("prediction loss: first_target must be in [1, len)");
  Value logits = logits_node(tape, p, ids, latents, splice_at);
  Value predicting = slice_rows(logits, first_target - 1, len - 1);
  const std::vector<int> targets(ids.begin() + first_target, ids.end());
  return cross_entropy(predicting, targets);
}

Tensor ToyBaseModel::logits(const std::vector<int>& ids) const {
  Tape tape;
  return tape.value(logits_node(tape, insert_params(tape, true), ids));
}

Tensor ToyBaseModel::logits(const std::vector<int>& ids, const Tensor& latents,
                            int splice_at) const {
  Tape tape;
  return tape.value(
      logits_node(tape, insert_params(tape, true), ids, tape.constant(latents), splice_at));
}

Tensor ToyBaseModel::embed_tokens(const std::vector<int>& ids) const {
  check_ids(ids);
  const Tensor& emb = params_.at("emb").value;
  Tensor rows({static_cast<int>(ids.size()), cfg_.d_model});
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (int c = 0; c < cfg_.d_model; ++c) rows.at(static_cast<int>(r), c) = emb.at(ids[r], c);
  return rows;
}

int sample_token(const Tensor& logit_row, double temperature, RngStream& rng) {
  const std::size_t n = logit_row.numel();
  if (n == 0) throw std::invalid_argument("sample_token: empty logits");
  if (temperature < 0.0) throw std::invalid_argument("sample_token: negative temperature");
  if (temperature == 0.0) {
    int best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (logit_row[i] > logit_row[best]) best = static_cast<int>(i);
    return best;
  }
  double mx = logit_row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logit_row[i]);
  std::vector<double> p(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += p[i] = std::exp((logit_row[i] - mx) / temperature);
  const double r = rng.uniform() * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += p[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(n) - 1;  // r landed on the rounding tail
}

namespace {
// output scale of the frozen question encoder at initialization
constexpr double kAssistantInitScale = 0.05;
Tensor scale_tensor(Tensor t, double s) {
  for (auto& x : t.data()) x *= s;
  return t;
}
}  // namespace

ToyAssistantModel::ToyAssistantModel(AssistantConfig cfg, RngStream& rng) : cfg_(cfg) {
  if (cfg.vocab < 2 || cfg.d < 1)
    throw std::invalid_argument("assistant model: degenerate configuration");
  params_.insert("emb", rng.gaussian_tensor({cfg.vocab, cfg.d}, 0.5 * kAssistantInitScale));
  params_.insert("rnn.wx", scale_tensor(glorot_ish(rng, cfg.d, cfg.d), kAssistantInitScale));
  params_.insert("rnn.wh", scale_tensor(glorot_ish(rng, cfg.d, cfg.d), kAssistantInitScale));
  params_.insert("rnn.b", Tensor({cfg.d}));
}

ToyAssistantModel::ToyAssistantModel(AssistantConfig cfg, ParamSet params)
    : cfg_(cfg), params_(std::move(params)) {
  const std::vector<std::pair<std::string, std::vector<int>>> want = {
      {"emb", {cfg.vocab, cfg.d}},
      {"rnn.wx", {cfg.d, cfg.d}},
      {"rnn.wh", {cfg.d, cfg.d}},
      {"rnn.b", {cfg.d}}};
  for (const auto& [name, shape] : want)
    if (params_.at(name).value.shape() != shape)
      throw std::invalid_argument("assistant model: parameter '" + name +
                                  "' has shape " + params_.at(name).value.shape_str());
  if (params_.size() != want.size())
    throw std::invalid_argument("assistant model: unexpected extra parameters");
}

Tensor ToyAssistantModel::encode(const std::vector<int>& question_ids, int n_thoughts,
                                 int slot_token) const {
  if (question_ids.empty())
    throw std::invalid_argument("assistant: empty question");
  if (n_thoughts < 1) throw std::invalid_argument("assistant: n_thoughts must be >= 1");
  const Tensor& emb = params_.at("emb").value;
  const Tensor& wx = params_.at("rnn.wx").value;
  const Tensor& wh = params_.at("rnn.wh").value;
  const Tensor& b = params_.at("rnn.b").value;
  const int d = cfg_.d;

  std::vector<double> h(d, 0.0), next(d);
  auto step = [&](int token) {
    if (token < 0 || token >= cfg_.vocab)
      throw std::invalid_argument("assistant: token id out of range");
    for (int j = 0; j < d; ++j) {
      double a = b[j];
      for (int i = 0; i < d; ++i) a += emb.at(token, i) * wx.at(i, j) + h[i] * wh.at(i, j);
      next[j] = std::tanh(a);
    }
    h = next;
  };

  for (int id : question_ids) step(id);
  Tensor states({n_thoughts, d});
  for (int t = 0; t < n_thoughts; ++t) {
    step(slot_token);
    for (int j = 0; j < d; ++j) states.at(t, j) = h[j];
  }
  return states;
}

Projection::Projection(int d_in, int d_out, RngStream& rng, const Tensor* bias_init) {
  if (d_in < 1 || d_out < 1) throw std::invalid_argument("projection: degenerate dims");
  params_.insert("w", rng.gaussian_tensor({d_in, d_out}, 1.0 / std::sqrt(d_in)));
  if (bias_init != nullptr) {
    if (bias_init->numel() != static_cast<std::size_t>(d_out))
      throw std::invalid_argument("projection: bias_init length != d_out");
    Tensor b({d_out});
    for (int i = 0; i < d_out; ++i) b[i] = (*bias_init)[i];
    params_.insert("b", b);
  } else {
    params_.insert("b", Tensor({d_out}));
  }
}

Projection::Projection(ParamSet params) : params_(std::move(params)) {
  if (params_.size() != 2 || params_.at("w").value.rank() != 2 ||
      params_.at("b").value.numel() !=
          static_cast<std::size_t>(params_.at("w").value.cols()))
    throw std::invalid_argument("projection: checkpoint must hold matching 'w' and 'b'");
}

Tensor Projection::apply(const Tensor& h) const {
  Tensor out = matmul_values(h, params_.at("w").value);
  const Tensor& b = params_.at("b").value;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out.at(r, c) += b[c];
  return out;
}

Value Projection::node(Tape& tape, const std::map<std::string, Value>& p, Value h) const {
  Value prod = matmul(h, p.at("w"));
  return add(prod, broadcast_row(p.at("b"), tape.value(prod).rows()));
}

std::map<std::string, Value> Projection::insert_params(Tape& tape, bool as_constants) const {
  return ebmcot::insert_params(tape, params_, as_constants);
}

}  // namespace ebmcot
