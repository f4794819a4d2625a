#pragma once

#include <functional>
#include <vector>

#include "ebmcot/tensor.hpp"

namespace ebmcot {

class Tape;

// Handle to a node on a tape. Cheap to copy; only meaningful together with
// the tape that created it.
struct Value {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

// Reverse-mode autodiff over a linear tape. Nodes are appended in evaluation
// order, so walking the tape backwards is a valid reverse topological order.
// Replaying the same graph with the same inputs is bit-deterministic: every
// op is a fixed-order loop over doubles.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Tensor v);      // differentiable input; rejects non-finite data
  Value constant(Tensor v);  // fixed input, no gradient is propagated into it

  const Tensor& value(Value v) const;
  // gradient of the last backward() target w.r.t. this node
  const Tensor& grad(Value v) const;

  // scalar loss only; zeroes all gradients, seeds d(loss) = 1, sweeps back
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }

  // --- used by op implementations ---------------------------------------
  Value emit(Tensor value, std::vector<int> parents,
             std::function<void(Tape&, int)> pull);
  bool needs_grad(int idx) const { return nodes_[idx].needs_grad; }
  Tensor& grad_ref(int idx) { return nodes_[idx].grad; }
  const Tensor& value_ref(int idx) const { return nodes_[idx].value; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> pull;  // adds self.grad contributions into parents
  };
  std::vector<Node> nodes_;

  void check(Value v) const;
};

// --- primitives ----------------------------------------------------------
Value matmul(Value a, Value b);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  // elementwise
Value scale(Value a, double s);
Value add_scalar(Value a, double s);
Value tanh(Value a);
Value relu(Value a);  // subgradient 0 at exactly 0
Value softmax_rows(Value a);  // over the last axis; rank 1 or 2
// mean over rows of (logsumexp(row) - row[target]); computed via the
// stabilized logsumexp so finite logits always give a finite loss
Value cross_entropy(Value logits, const std::vector<int>& targets);
Value sum(Value a);
Value mean(Value a);
Value squared_norm(Value a);
Value transpose(Value a);
Value concat_cols(Value a, Value b);
Value slice_cols(Value a, int c0, int c1);
Value slice_rows(Value a, int r0, int r1);
Value select_rows(Value a, const std::vector<int>& rows);  // gather / scatter-add
Value broadcast_row(Value v, int n);  // rank-1 m (or 1 x m) -> n x m
// copy of `base` with rows [r0, r0 + block.rows()) replaced by `block`
Value splice_rows(Value base, Value block, int r0);
Value dot(Value a, Value b);  // sum(mul(a, b))

}  // namespace ebmcot
