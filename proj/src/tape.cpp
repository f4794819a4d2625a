#include "ebmcot/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace ebmcot {

namespace {

void require_same_tape(Value a, Value b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands must live on one tape");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

}  // namespace

void Tape::check(Value v) const {
  if (v.tape != this || v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("value does not belong to this tape");
}

Value Tape::leaf(Tensor v) {
  if (!v.all_finite()) throw std::invalid_argument("leaf: non-finite input");
  nodes_.push_back(Node{std::move(v), Tensor{}, true, {}, nullptr});
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::constant(Tensor v) {
  if (!v.all_finite()) throw std::invalid_argument("constant: non-finite input");
  nodes_.push_back(Node{std::move(v), Tensor{}, false, {}, nullptr});
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::emit(Tensor value, std::vector<int> parents,
                 std::function<void(Tape&, int)> pull) {
  bool needs = false;
  for (int p : parents) needs = needs || nodes_[p].needs_grad;
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, std::move(parents),
                        needs ? std::move(pull) : nullptr});
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Value v) const {
  check(v);
  return nodes_[v.idx].value;
}

const Tensor& Tape::grad(Value v) const {
  check(v);
  const Node& n = nodes_[v.idx];
  if (n.grad.numel() == 0)
    throw std::logic_error("grad read before backward, or node not differentiable");
  return n.grad;
}

void Tape::backward(Value loss) {
  check(loss);
  if (nodes_[loss.idx].value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                nodes_[loss.idx].value.shape_str());
  for (Node& n : nodes_) n.grad = Tensor::zeros_like(n.value);
  nodes_[loss.idx].grad[0] = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.pull) n.pull(*this, i);
  }
}

// --- op helpers ------------------------------------------------------------

namespace {

Tensor& pgrad(Tape& t, int parent) { return t.grad_ref(parent); }

}  // namespace

Value matmul(Value a, Value b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  Tensor out = matmul_values(av, bv);  // shape-checks internally
  const int ia = a.idx, ib = b.idx;
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& av = tp.value_ref(ia);
    const Tensor& bv = tp.value_ref(ib);
    const int n = av.rows(), k = av.cols(), m = bv.cols();
    if (tp.needs_grad(ia)) {
      Tensor& ga = pgrad(tp, ia);  // g * b^T
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double gv = g.at(i, j);
          for (int l = 0; l < k; ++l) ga.at(i, l) += gv * bv.at(l, j);
        }
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = pgrad(tp, ib);  // a^T * g
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < k; ++l) {
          const double av_il = av.at(i, l);
          for (int j = 0; j < m; ++j) gb.at(l, j) += av_il * g.at(i, j);
        }
    }
  });
}

Value add(Value a, Value b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv))
    throw std::invalid_argument("add shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const int ia = a.idx, ib = b.idx;
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_ref(self);
    if (tp.needs_grad(ia)) axpy(pgrad(tp, ia), 1.0, g);
    if (tp.needs_grad(ib)) axpy(pgrad(tp, ib), 1.0, g);
  });
}

Value sub(Value a, Value b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv))
    throw std::invalid_argument("sub shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  const int ia = a.idx, ib = b.idx;
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_ref(self);
    if (tp.needs_grad(ia)) axpy(pgrad(tp, ia), 1.0, g);
    if (tp.needs_grad(ib)) axpy(pgrad(tp, ib), -1.0, g);
  });
}

Value mul(Value a, Value b) {
  require_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv))
    throw std::invalid_argument("mul shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const int ia = a.idx, ib = b.idx;
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& av = tp.value_ref(ia);
    const Tensor& bv = tp.value_ref(ib);
    if (tp.needs_grad(ia)) {
      Tensor& ga = pgrad(tp, ia);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = pgrad(tp, ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Value scale(Value a, double s) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia, s](Tape& tp, int self) {
    if (tp.needs_grad(ia)) axpy(pgrad(tp, ia), s, tp.grad_ref(self));
  });
}

Value add_scalar(Value a, double s) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += s;
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
    if (tp.needs_grad(ia)) axpy(pgrad(tp, ia), 1.0, tp.grad_ref(self));
  });
}

Value tanh(Value a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    const Tensor& y = tp.value_ref(self);
    Tensor& ga = pgrad(tp, ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Value relu(Value a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    const Tensor& x = tp.value_ref(ia);
    Tensor& ga = pgrad(tp, ia);
    // strict inequality: the hinge is closed, zero slope at the boundary
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

namespace {

// rows/cols view of a rank-1 or rank-2 tensor for the row-softmax family
void row_extents(const Tensor& t, int& rows, int& cols) {
  if (t.rank() == 1) {
    rows = 1;
    cols = t.shape()[0];
  } else if (t.rank() == 2) {
    rows = t.shape()[0];
    cols = t.shape()[1];
  } else {
    throw std::invalid_argument("softmax: expected rank 1 or 2, got " + t.shape_str());
  }
}

}  // namespace

Value softmax_rows(Value a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  int rows = 0, cols = 0;
  row_extents(av, rows, cols);
  Tensor out = av;
  for (int r = 0; r < rows; ++r) {
    double* p = out.data().data() + static_cast<std::size_t>(r) * cols;
    double mx = p[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(p[c] - mx);
      z += p[c];
    }
    for (int c = 0; c < cols; ++c) p[c] /= z;
  }
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia, rows, cols](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    const Tensor& y = tp.value_ref(self);
    Tensor& ga = pgrad(tp, ia);
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * cols;
      double dotgy = 0.0;
      for (int c = 0; c < cols; ++c) dotgy += g[off + c] * y[off + c];
      for (int c = 0; c < cols; ++c) ga[off + c] += y[off + c] * (g[off + c] - dotgy);
    }
  });
}

Value cross_entropy(Value logits, const std::vector<int>& targets) {
  Tape& t = *logits.tape;
  const Tensor& lv = t.value(logits);
  require_rank2(lv, "cross_entropy");
  const int rows = lv.rows(), cols = lv.cols();
  if (static_cast<int>(targets.size()) != rows)
    throw std::invalid_argument("cross_entropy: targets length != logit rows");
  for (int tr : targets)
    if (tr < 0 || tr >= cols) throw std::invalid_argument("cross_entropy: target out of range");
  // softmax cached for the backward pass
  Tensor probs = lv;
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    double* p = probs.data().data() + static_cast<std::size_t>(r) * cols;
    double mx = p[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(p[c] - mx);
    const double lse = mx + std::log(z);
    loss += lse - p[targets[r]];
    for (int c = 0; c < cols; ++c) p[c] = std::exp(p[c] - lse);
  }
  loss /= rows;
  const int il = logits.idx;
  return t.emit(Tensor::scalar(loss), {il},
                [il, targets, probs = std::move(probs), rows, cols](Tape& tp, int self) {
                  if (!tp.needs_grad(il)) return;
                  const double gs = tp.grad_ref(self)[0] / rows;
                  Tensor& gl = pgrad(tp, il);
                  for (int r = 0; r < rows; ++r) {
                    const std::size_t off = static_cast<std::size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) gl[off + c] += gs * probs[off + c];
                    gl[off + targets[r]] -= gs;
                  }
                });
}

Value sum(Value a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  const int ia = a.idx;
  return t.emit(Tensor::scalar(s), {ia}, [ia](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const double g = tp.grad_ref(self)[0];
    Tensor& ga = pgrad(tp, ia);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Value mean(Value a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const double n = static_cast<double>(av.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  const int ia = a.idx;
  return t.emit(Tensor::scalar(s / n), {ia}, [ia, n](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const double g = tp.grad_ref(self)[0] / n;
    Tensor& ga = pgrad(tp, ia);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Value squared_norm(Value a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i] * av[i];
  const int ia = a.idx;
  return t.emit(Tensor::scalar(s), {ia}, [ia](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const double g = tp.grad_ref(self)[0];
    const Tensor& x = tp.value_ref(ia);
    Tensor& ga = pgrad(tp, ia);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += 2.0 * g * x[i];
  });
}

Value transpose(Value a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_rank2(av, "transpose");
  const int n = av.rows(), m = av.cols();
  Tensor out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = av.at(i, j);
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia, n, m](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = pgrad(tp, ia);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Value concat_cols(Value a, Value b) {
  require_same_tape(a, b, "concat_cols");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank2(av, "concat_cols");
  require_rank2(bv, "concat_cols");
  if (av.rows() != bv.rows())
    throw std::invalid_argument("concat_cols row mismatch: " + av.shape_str() + " vs " +
                                bv.shape_str());
  const int n = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out({n, ca + cb});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
    for (int j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
  }
  const int ia = a.idx, ib = b.idx;
  return t.emit(std::move(out), {ia, ib}, [ia, ib, n, ca, cb](Tape& tp, int self) {
    const Tensor& g = tp.grad_ref(self);
    if (tp.needs_grad(ia)) {
      Tensor& ga = pgrad(tp, ia);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
    }
    if (tp.needs_grad(ib)) {
      Tensor& gb = pgrad(tp, ib);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
    }
  });
}

Value slice_cols(Value a, int c0, int c1) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_rank2(av, "slice_cols");
  if (c0 < 0 || c1 > av.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range on " + av.shape_str());
  const int n = av.rows(), w = c1 - c0;
  Tensor out({n, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = av.at(i, c0 + j);
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia, n, w, c0](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = pgrad(tp, ia);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) ga.at(i, c0 + j) += g.at(i, j);
  });
}

Value slice_rows(Value a, int r0, int r1) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_rank2(av, "slice_rows");
  if (r0 < 0 || r1 > av.rows() || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range on " + av.shape_str());
  const int h = r1 - r0, m = av.cols();
  Tensor out({h, m});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = av.at(r0 + i, j);
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia, h, m, r0](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = pgrad(tp, ia);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < m; ++j) ga.at(r0 + i, j) += g.at(i, j);
  });
}

Value select_rows(Value a, const std::vector<int>& rows) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_rank2(av, "select_rows");
  for (int r : rows)
    if (r < 0 || r >= av.rows())
      throw std::invalid_argument("select_rows: index out of range on " + av.shape_str());
  const int h = static_cast<int>(rows.size()), m = av.cols();
  if (h == 0) throw std::invalid_argument("select_rows: empty selection");
  Tensor out({h, m});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = av.at(rows[i], j);
  const int ia = a.idx;
  return t.emit(std::move(out), {ia}, [ia, rows, m](Tape& tp, int self) {
    if (!tp.needs_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = pgrad(tp, ia);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < m; ++j) ga.at(rows[i], j) += g.at(static_cast<int>(i), j);
  });
}

Value broadcast_row(Value v, int n) {
  Tape& t = *v.tape;
  const Tensor& vv = t.value(v);
  int m = 0;
  if (vv.rank() == 1)
    m = vv.shape()[0];
  else if (vv.rank() == 2 && vv.rows() == 1)
    m = vv.cols();
  else
    throw std::invalid_argument("broadcast_row: expected a row, got " + vv.shape_str());
  if (n <= 0) throw std::invalid_argument("broadcast_row: n must be positive");
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = vv[j];
  const int iv = v.idx;
  return t.emit(std::move(out), {iv}, [iv, n, m](Tape& tp, int self) {
    if (!tp.needs_grad(iv)) return;
    const Tensor& g = tp.grad_ref(self);
    Tensor& gv = pgrad(tp, iv);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) gv[j] += g.at(i, j);
  });
}

Value splice_rows(Value base, Value block, int r0) {
  require_same_tape(base, block, "splice_rows");
  Tape& t = *base.tape;
  const Tensor& bv = t.value(base);
  const Tensor& kv = t.value(block);
  require_rank2(bv, "splice_rows");
  require_rank2(kv, "splice_rows");
  if (bv.cols() != kv.cols() || r0 < 0 || r0 + kv.rows() > bv.rows())
    throw std::invalid_argument("splice_rows: block " + kv.shape_str() + " does not fit " +
                                bv.shape_str() + " at row " + std::to_string(r0));
  const int h = kv.rows(), m = bv.cols();
  Tensor out = bv;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < m; ++j) out.at(r0 + i, j) = kv.at(i, j);
  const int ib = base.idx, ik = block.idx;
  return t.emit(std::move(out), {ib, ik}, [ib, ik, r0, h, m](Tape& tp, int self) {
    const Tensor& g = tp.grad_ref(self);
    if (tp.needs_grad(ib)) {
      Tensor& gb = pgrad(tp, ib);
      const int n = gb.rows();
      for (int i = 0; i < n; ++i) {
        if (i >= r0 && i < r0 + h) continue;  // replaced rows contribute nothing
        for (int j = 0; j < m; ++j) gb.at(i, j) += g.at(i, j);
      }
    }
    if (tp.needs_grad(ik)) {
      Tensor& gk = pgrad(tp, ik);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < m; ++j) gk.at(i, j) += g.at(r0 + i, j);
    }
  });
}

Value dot(Value a, Value b) { return sum(mul(a, b)); }

}  // namespace ebmcot
