#include "bsoda/nn/tape.hpp"

#include <cmath>

#include "bsoda/core/types.hpp"

namespace bsoda::nn {

namespace {
constexpr double kFloor = 1e-300;
}  // namespace

void require_finite(const Tensor2& t, std::string_view where) {
  if (!t.allFinite()) throw NumericError("non-finite value produced by " + std::string(where));
}

namespace {

std::string shape(const Tensor2& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

[[noreturn]] void shape_error(std::string_view op, const Tensor2& a, const Tensor2& b) {
  throw ContractError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

void require_same_shape(std::string_view op, const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 scalar(double v) {
  Tensor2 s(1, 1);
  s(0, 0) = v;
  return s;
}

}  // namespace

Var Tape::constant(Tensor2 value) {
  require_finite(value, "constant");
  nodes_.push_back({"constant", std::move(value), {}, false, {}, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  const Tensor2& v = store.value(name);
  nodes_.push_back({"parameter", v, {}, true, name, {}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(std::string op, Tensor2 value, std::initializer_list<Var> parents, BackwardFn fn) {
  require_finite(value, op);
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_.at(static_cast<std::size_t>(p.id)).requires_grad;
  nodes_.push_back({std::move(op), std::move(value), {}, needs, {}, needs ? std::move(fn) : BackwardFn{}});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Tensor2& g) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Gradients Tape::backward(Var loss) {
  Node& root = nodes_.at(static_cast<std::size_t>(loss.id));
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ContractError("backward: loss must be a 1x1 scalar, got " + shape(root.value));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (root.requires_grad) root.grad = scalar(1.0);

  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    const Tensor2 g = n.grad;  // copy: callbacks may grow nodes_ storage
    n.backward(*this, g, Var{i});
  }

  Gradients grads;
  for (const auto& n : nodes_) {
    if (n.param_name.empty()) continue;
    Tensor2 g = n.grad.size() ? n.grad : Tensor2::Zero(n.value.rows(), n.value.cols());
    auto [it, inserted] = grads.emplace(n.param_name, g);
    if (!inserted) it->second += g;
  }
  return grads;
}

Tensor2 Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.size() == 0) return Tensor2::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor2& A = t.value(a);
  const Tensor2& B = t.value(b);
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  Tensor2 out = A * B;
  return t.record("matmul", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g, Var) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape("add", t.value(a), t.value(b));
  return t.record("add", t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape("sub", t.value(a), t.value(b));
  return t.record("sub", t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, -g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape("mul", t.value(a), t.value(b));
  Tensor2 out = t.value(a).cwiseProduct(t.value(b));
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g, Var) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

Var div(Tape& t, Var a, Var b) {
  require_same_shape("div", t.value(a), t.value(b));
  Tensor2 out = t.value(a).cwiseQuotient(t.value(b));
  return t.record("div", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g, Var) {
    const Tensor2& B = tp.value(b);
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseQuotient(B));
    if (tp.requires_grad(b)) {
      tp.accumulate(b, -(g.cwiseProduct(tp.value(a))).cwiseQuotient(B.cwiseProduct(B)));
    }
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Tensor2& A = t.value(a);
  const Tensor2& R = t.value(row);
  if (R.rows() != 1 || R.cols() != A.cols()) shape_error("add_row", A, R);
  Tensor2 out = A.rowwise() + R.row(0);
  return t.record("add_row", std::move(out), {a, row}, [a, row](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record("scale", t.value(a) * s, {a},
                  [a, s](Tape& tp, const Tensor2& g, Var) { tp.accumulate(a, g * s); });
}

Var add_scalar(Tape& t, Var a, double s) {
  Tensor2 out = t.value(a).array() + s;
  return t.record("add_scalar", std::move(out), {a},
                  [a](Tape& tp, const Tensor2& g, Var) { tp.accumulate(a, g); });
}

Var relu(Tape& t, Var a) {
  Tensor2 out = t.value(a).cwiseMax(0.0);
  return t.record("relu", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var) {
    const Tensor2& x = tp.value(a);
    tp.accumulate(a, (x.array() > 0.0).select(g, 0.0));
  });
}

Var softplus(Tape& t, Var a) {
  Tensor2 out = t.value(a).unaryExpr(&stable_softplus);
  return t.record("softplus", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, g.cwiseProduct(tp.value(a).unaryExpr(&sigmoid)));
  });
}

Var exp(Tape& t, Var a) {
  Tensor2 out = t.value(a).array().exp();
  return t.record("exp", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var self) {
    tp.accumulate(a, g.cwiseProduct(tp.value(self)));
  });
}

Var log(Tape& t, Var a) {
  Tensor2 out = t.value(a).array().log();
  return t.record("log", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, g.cwiseQuotient(tp.value(a)));
  });
}

Var sqrt(Tape& t, Var a) {
  Tensor2 out = t.value(a).cwiseSqrt();
  return t.record("sqrt", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, (0.5 * g.array() / tp.value(a).array().sqrt()).matrix());
  });
}

Var square(Tape& t, Var a) {
  Tensor2 out = t.value(a).cwiseAbs2();
  return t.record("square", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, 2.0 * g.cwiseProduct(tp.value(a)));
  });
}

Var reciprocal(Tape& t, Var a) {
  Tensor2 out = t.value(a).cwiseInverse();
  return t.record("reciprocal", std::move(out), {a}, [a](Tape& tp, const Tensor2& g, Var) {
    const Tensor2& x = tp.value(a);
    tp.accumulate(a, -g.cwiseQuotient(x.cwiseProduct(x)));
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Tensor2& A = t.value(a);
  const Tensor2& B = t.value(b);
  if (A.rows() != B.rows()) shape_error("concat_cols", A, B);
  Tensor2 out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Eigen::Index ac = A.cols();
  const Eigen::Index bc = B.cols();
  return t.record("concat_cols", std::move(out), {a, b}, [a, b, ac, bc](Tape& tp, const Tensor2& g, Var) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.leftCols(ac));
    if (tp.requires_grad(b)) tp.accumulate(b, g.rightCols(bc));
  });
}

Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  const Tensor2& A = t.value(a);
  if (start < 0 || count <= 0 || start + count > A.cols()) {
    throw ContractError("slice_cols: range [" + std::to_string(start) + ", " +
                        std::to_string(start + count) + ") outside " + shape(A));
  }
  Tensor2 out = A.middleCols(start, count);
  const Eigen::Index rows = A.rows();
  const Eigen::Index cols = A.cols();
  return t.record("slice_cols", std::move(out), {a},
                  [a, start, count, rows, cols](Tape& tp, const Tensor2& g, Var) {
                    Tensor2 full = Tensor2::Zero(rows, cols);
                    full.middleCols(start, count) = g;
                    tp.accumulate(a, full);
                  });
}

Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols) {
  const Tensor2& A = t.value(a);
  if (rows * cols != A.size()) {
    throw ContractError("reshape: cannot view " + shape(A) + " as (" + std::to_string(rows) + "x" +
                        std::to_string(cols) + ")");
  }
  Tensor2 out = Eigen::Map<const Tensor2>(A.data(), rows, cols);
  const Eigen::Index r0 = A.rows();
  const Eigen::Index c0 = A.cols();
  return t.record("reshape", std::move(out), {a}, [a, r0, c0](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, Eigen::Map<const Tensor2>(g.data(), r0, c0));
  });
}

Var gather_rows(Tape& t, Var a, std::vector<Eigen::Index> rows) {
  const Tensor2& A = t.value(a);
  Tensor2 out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= A.rows()) throw ContractError("gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = A.row(rows[i]);
  }
  const Eigen::Index r0 = A.rows();
  return t.record("gather_rows", std::move(out), {a},
                  [a, rows = std::move(rows), r0](Tape& tp, const Tensor2& g, Var) {
                    Tensor2 full = Tensor2::Zero(r0, g.cols());
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      full.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                    }
                    tp.accumulate(a, full);
                  });
}

Var sum(Tape& t, Var a) {
  const Tensor2& A = t.value(a);
  const Eigen::Index r = A.rows();
  const Eigen::Index c = A.cols();
  return t.record("sum", scalar(A.sum()), {a}, [a, r, c](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, Tensor2::Constant(r, c, g(0, 0)));
  });
}

Var mean(Tape& t, Var a) {
  const Tensor2& A = t.value(a);
  const Eigen::Index r = A.rows();
  const Eigen::Index c = A.cols();
  const double n = static_cast<double>(A.size());
  return t.record("mean", scalar(A.sum() / n), {a}, [a, r, c, n](Tape& tp, const Tensor2& g, Var) {
    tp.accumulate(a, Tensor2::Constant(r, c, g(0, 0) / n));
  });
}

namespace {

Eigen::Index block_count(std::string_view op, const Tensor2& a, Eigen::Index block) {
  if (block <= 0 || a.rows() % block != 0) {
    throw ContractError(std::string(op) + ": " + shape(a) + " is not a stack of " +
                        std::to_string(block) + "-row blocks");
  }
  return a.rows() / block;
}

}  // namespace

Var block_matmul_nt(Tape& t, Var a, Var b, Eigen::Index block) {
  const Tensor2& A = t.value(a);
  const Tensor2& B = t.value(b);
  require_same_shape("block_matmul_nt", A, B);
  const Eigen::Index n = block_count("block_matmul_nt", A, block);
  Tensor2 out(A.rows(), block);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleRows(i * block, block).noalias() =
        A.middleRows(i * block, block) * B.middleRows(i * block, block).transpose();
  }
  return t.record("block_matmul_nt", std::move(out), {a, b}, [a, b, block, n](Tape& tp, const Tensor2& g, Var) {
    const Tensor2& A = tp.value(a);
    const Tensor2& B = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor2 ga(A.rows(), A.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        ga.middleRows(i * block, block).noalias() =
            g.middleRows(i * block, block) * B.middleRows(i * block, block);
      }
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Tensor2 gb(B.rows(), B.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        gb.middleRows(i * block, block).noalias() =
            g.middleRows(i * block, block).transpose() * A.middleRows(i * block, block);
      }
      tp.accumulate(b, gb);
    }
  });
}

Var block_matmul(Tape& t, Var a, Var b, Eigen::Index block) {
  const Tensor2& A = t.value(a);
  const Tensor2& B = t.value(b);
  const Eigen::Index n = block_count("block_matmul", A, block);
  if (A.cols() != block || B.rows() != A.rows()) shape_error("block_matmul", A, B);
  Tensor2 out(B.rows(), B.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleRows(i * block, block).noalias() =
        A.middleRows(i * block, block) * B.middleRows(i * block, block);
  }
  return t.record("block_matmul", std::move(out), {a, b}, [a, b, block, n](Tape& tp, const Tensor2& g, Var) {
    const Tensor2& A = tp.value(a);
    const Tensor2& B = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor2 ga(A.rows(), A.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        ga.middleRows(i * block, block).noalias() =
            g.middleRows(i * block, block) * B.middleRows(i * block, block).transpose();
      }
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Tensor2 gb(B.rows(), B.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        gb.middleRows(i * block, block).noalias() =
            A.middleRows(i * block, block).transpose() * g.middleRows(i * block, block);
      }
      tp.accumulate(b, gb);
    }
  });
}

Var masked_softmax_rows(Tape& t, Var logits, const Tensor2& mask) {
  const Tensor2& X = t.value(logits);
  if (mask.cols() != X.cols()) shape_error("masked_softmax_rows", X, mask);
  const Eigen::Index block = mask.rows();
  const Eigen::Index n = block_count("masked_softmax_rows", X, block);
  Tensor2 out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto rows = out.middleRows(i * block, block);
    rows = X.middleRows(i * block, block) + mask;
    softmax_rows_inplace(rows);
  }
  return t.record("masked_softmax_rows", std::move(out), {logits},
                  [logits](Tape& tp, const Tensor2& g, Var self) {
                    const Tensor2& y = tp.value(self);
                    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
                    Tensor2 grad = y.cwiseProduct((g.colwise() - dots));
                    tp.accumulate(logits, grad);
                  });
}

Var softmax_cross_entropy_sum(Tape& t, Var logits, const Tensor2& targets) {
  const Tensor2& X = t.value(logits);
  require_same_shape("softmax_cross_entropy_sum", X, targets);
  Tensor2 probs(X.rows(), X.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double m = X.row(r).maxCoeff();
    const double lse = m + std::log((X.row(r).array() - m).exp().sum());
    probs.row(r) = (X.row(r).array() - lse).exp();
    loss += (targets.row(r).array() * (lse - X.row(r).array())).sum();
  }
  return t.record("softmax_cross_entropy_sum", scalar(loss), {logits},
                  [logits, probs = std::move(probs), targets](Tape& tp, const Tensor2& g, Var) {
                    Tensor2 grad = probs.array().colwise() * targets.rowwise().sum().array();
                    grad -= targets;
                    tp.accumulate(logits, grad * g(0, 0));
                  });
}

Var bce_with_logits_sum(Tape& t, Var logits, const Tensor2& targets) {
  const Tensor2& X = t.value(logits);
  require_same_shape("bce_with_logits_sum", X, targets);
  const double loss = (X.unaryExpr(&stable_softplus).array() - targets.array() * X.array()).sum();
  return t.record("bce_with_logits_sum", scalar(loss), {logits},
                  [logits, targets](Tape& tp, const Tensor2& g, Var) {
                    Tensor2 grad = tp.value(logits).unaryExpr(&sigmoid) - targets;
                    tp.accumulate(logits, grad * g(0, 0));
                  });
}

Var kl_rows_mean(Tape& t, Var p, Var q, const Tensor2& mask, std::vector<double> block_weights) {
  const Tensor2& P = t.value(p);
  const Tensor2& Q = t.value(q);
  const Eigen::Index block = mask.rows();
  if (mask.cols() != Q.cols() || P.cols() != Q.cols()) shape_error("kl_rows_mean", P, Q);
  const Eigen::Index blocks = block_count("kl_rows_mean", Q, block);
  if (block_weights.empty()) block_weights.assign(static_cast<std::size_t>(blocks), 1.0);
  if (static_cast<Eigen::Index>(block_weights.size()) != blocks) {
    throw ContractError("kl_rows_mean: expected one weight per block");
  }
  const bool broadcast = P.rows() != Q.rows();
  if (broadcast && P.rows() != block) shape_error("kl_rows_mean", P, Q);

  // counted[r] holds the row's weight, 0 for skipped rows.
  std::vector<double> counted(static_cast<std::size_t>(Q.rows()), 0.0);
  double total = 0.0;
  double weight_sum = 0.0;
  for (Eigen::Index r = 0; r < Q.rows(); ++r) {
    const Eigen::Index pr = broadcast ? r % block : r;
    const Eigen::Index mr = r % block;
    const double w = block_weights[static_cast<std::size_t>(r / block)];
    if (P.row(pr).sum() <= 0.0 || w == 0.0) continue;
    counted[static_cast<std::size_t>(r)] = w;
    weight_sum += w;
    double row_kl = 0.0;
    for (Eigen::Index j = 0; j < Q.cols(); ++j) {
      const double pj = P(pr, j);
      if (pj <= 0.0 || mask(mr, j) != 0.0) continue;
      row_kl += pj * (std::log(pj) - std::log(std::max(Q(r, j), kFloor)));
    }
    total += w * row_kl;
  }
  const double denom = weight_sum > 0.0 ? weight_sum : 1.0;
  return t.record("kl_rows_mean", scalar(total / denom), {p, q},
                  [p, q, mask, block, broadcast, counted = std::move(counted), denom](
                      Tape& tp, const Tensor2& g, Var) {
                    const Tensor2& P = tp.value(p);
                    const Tensor2& Q = tp.value(q);
                    const double base = g(0, 0) / denom;
                    const bool want_p = tp.requires_grad(p);
                    Tensor2 gq = Tensor2::Zero(Q.rows(), Q.cols());
                    Tensor2 gp = Tensor2::Zero(P.rows(), P.cols());
                    for (Eigen::Index r = 0; r < Q.rows(); ++r) {
                      const double w = counted[static_cast<std::size_t>(r)];
                      if (w == 0.0) continue;
                      const double s = base * w;
                      const Eigen::Index pr = broadcast ? r % block : r;
                      const Eigen::Index mr = r % block;
                      for (Eigen::Index j = 0; j < Q.cols(); ++j) {
                        const double pj = P(pr, j);
                        if (pj <= 0.0 || mask(mr, j) != 0.0) continue;
                        const double qj = std::max(Q(r, j), kFloor);
                        gq(r, j) = -s * pj / qj;
                        if (want_p) gp(pr, j) += s * (std::log(pj) - std::log(qj) + 1.0);
                      }
                    }
                    tp.accumulate(q, gq);
                    if (want_p) tp.accumulate(p, gp);
                  });
}

}  // namespace bsoda::nn
