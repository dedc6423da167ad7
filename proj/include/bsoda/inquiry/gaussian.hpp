#ifndef BSODA_INQUIRY_GAUSSIAN_HPP
#define BSODA_INQUIRY_GAUSSIAN_HPP

#include <vector>

#include <Eigen/Dense>

namespace bsoda {

/// Diagonal Gaussian over the latent space. Variances are strictly positive.
struct DiagGaussian {
  Eigen::VectorXd mu;
  Eigen::VectorXd var;

  std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }
  static DiagGaussian standard(std::size_t dim);
};

/// Running product of Gaussian experts in natural parameters: precision
/// sum(1/V_i) and precision-weighted mean sum(mu_i/V_i). Adding an expert is
/// O(dim), which is what makes per-candidate posteriors cheap.
class GaussianProduct {
 public:
  explicit GaussianProduct(const DiagGaussian& prior);

  void add(const DiagGaussian& expert);
  void add_natural(const Eigen::VectorXd& precision, const Eigen::VectorXd& weighted_mean);
  GaussianProduct with(const DiagGaussian& expert) const;

  DiagGaussian gaussian() const;
  const Eigen::VectorXd& precision() const { return precision_; }
  const Eigen::VectorXd& weighted_mean() const { return weighted_mean_; }

 private:
  Eigen::VectorXd precision_;
  Eigen::VectorXd weighted_mean_;
};

/// V = (V0^-1 + sum V_i^-1)^-1, mu = (mu0 V0^-1 + sum mu_i V_i^-1) V.
/// Throws ContractError on a non-positive variance or dimension mismatch.
DiagGaussian poe_product(const std::vector<DiagGaussian>& experts, const DiagGaussian& prior);

/// KL(q1 || q2) = 0.5 sum[ log(V2/V1) + (V1 + (mu1-mu2)^2)/V2 - 1 ].
double gaussian_kl(const DiagGaussian& q1, const DiagGaussian& q2);

}  // namespace bsoda

#endif  // BSODA_INQUIRY_GAUSSIAN_HPP
