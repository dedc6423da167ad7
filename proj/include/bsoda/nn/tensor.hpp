#ifndef BSODA_NN_TENSOR_HPP
#define BSODA_NN_TENSOR_HPP

#include <string_view>

#include <Eigen/Dense>

namespace bsoda::nn {

/// Row-major dense matrix of doubles; the value type of every tape node.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Throws NumericError naming `where` if any entry is NaN or infinite.
void require_finite(const Tensor2& t, std::string_view where);

/// Row-wise softmax in place. Shifted logits are clamped at -600 so masked
/// entries end up near 1e-261 rather than subnormal, which keeps later
/// products at full speed.
template <typename Rows>
void softmax_rows_inplace(Rows&& rows) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    auto row = rows.row(r);
    row.array() = (row.array() - row.maxCoeff()).max(-600.0).exp();
    row /= row.sum();
  }
}

}  // namespace bsoda::nn

#endif  // BSODA_NN_TENSOR_HPP
