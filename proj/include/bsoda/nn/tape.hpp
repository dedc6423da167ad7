#ifndef BSODA_NN_TAPE_HPP
#define BSODA_NN_TAPE_HPP

#include <functional>
#include <string>
#include <vector>

#include "bsoda/nn/params.hpp"
#include "bsoda/nn/tensor.hpp"

namespace bsoda::nn {

/// Handle to a node recorded on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode gradient tape. Operations append nodes in evaluation order;
/// backward() walks them in reverse, so the tape is its own topological
/// order. A tape is single-use: build, backward once, discard.
class Tape {
 public:
  /// Receives the gradient flowing into the node and the node's own handle.
  using BackwardFn = std::function<void(Tape&, const Tensor2& out_grad, Var self)>;

  Var constant(Tensor2 value);
  /// Leaf bound to a named parameter; its gradient is reported by backward().
  Var parameter(const ParamStore& store, const std::string& name);

  const Tensor2& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }

  /// Gradient of a 1x1 loss w.r.t. every parameter leaf on the tape.
  Gradients backward(Var loss);
  /// Gradient accumulated at any node by the last backward() (zero if none).
  Tensor2 grad(Var v) const;

  // Used by operation implementations.
  Var record(std::string op, Tensor2 value, std::initializer_list<Var> parents, BackwardFn fn);
  void accumulate(Var v, const Tensor2& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor2 value;
    Tensor2 grad;
    bool requires_grad = false;
    std::string param_name;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear algebra. Shape mismatches throw ContractError
// naming the operation.
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);  // row-wise bias: a (r x c) + row (1 x c)
Var scale(Tape& t, Var a, double s);
Var add_scalar(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var log(Tape& t, Var a);
Var sqrt(Tape& t, Var a);
Var square(Tape& t, Var a);
Var reciprocal(Tape& t, Var a);

// Structural.
Var concat_cols(Tape& t, Var a, Var b);
Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count);
Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols);
Var gather_rows(Tape& t, Var a, std::vector<Eigen::Index> rows);

// Reductions to a 1x1 scalar.
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);

// Block attention: a and b are stacks of `block`-row matrices.
/// Per block: a_b * b_b^T, giving (n*block) x block.
Var block_matmul_nt(Tape& t, Var a, Var b, Eigen::Index block);
/// Per block: a_b * b_b with a_b of size block x block.
Var block_matmul(Tape& t, Var a, Var b, Eigen::Index block);
/// Row softmax of logits + mask, where the block x block additive mask is
/// repeated for every block of rows.
Var masked_softmax_rows(Tape& t, Var logits, const Tensor2& mask);

/// Sum over rows of -sum_j targets_ij * log softmax(logits_i)_j.
Var softmax_cross_entropy_sum(Tape& t, Var logits, const Tensor2& targets);
/// Sum over all entries of the Bernoulli negative log-likelihood with logits.
Var bce_with_logits_sum(Tape& t, Var logits, const Tensor2& targets);

/// Mean over counted rows of KL(p_row || q_row). Entries where the mask is
/// nonzero or p is zero are excluded (0 log 0 = 0); rows whose p sums to
/// zero are skipped. p either matches q's shape or is a single block that is
/// repeated for every block of q. Returns 0 when no row counts.
/// Optional block_weights (one per block of q) turn the mean into a
/// weighted mean over rows.
Var kl_rows_mean(Tape& t, Var p, Var q, const Tensor2& mask,
                 std::vector<double> block_weights = {});

}  // namespace bsoda::nn

#endif  // BSODA_NN_TAPE_HPP
