#include "bsoda/inquiry/gaussian.hpp"

#include "bsoda/core/types.hpp"

namespace bsoda {

namespace {

void require_valid(const DiagGaussian& g, std::size_t dim, const char* what) {
  if (g.mu.size() != g.var.size() || g.dim() != dim) {
    throw ContractError(std::string(what) + ": dimension mismatch");
  }
  if ((g.var.array() <= 0.0).any() || !g.var.allFinite() || !g.mu.allFinite()) {
    throw ContractError(std::string(what) + ": variances must be positive and finite");
  }
}

}  // namespace

DiagGaussian DiagGaussian::standard(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

GaussianProduct::GaussianProduct(const DiagGaussian& prior) {
  require_valid(prior, prior.dim(), "GaussianProduct prior");
  precision_ = prior.var.cwiseInverse();
  weighted_mean_ = prior.mu.cwiseProduct(precision_);
}

void GaussianProduct::add(const DiagGaussian& expert) {
  require_valid(expert, static_cast<std::size_t>(precision_.size()), "GaussianProduct expert");
  const Eigen::VectorXd p = expert.var.cwiseInverse();
  precision_ += p;
  weighted_mean_ += expert.mu.cwiseProduct(p);
}

void GaussianProduct::add_natural(const Eigen::VectorXd& precision, const Eigen::VectorXd& weighted_mean) {
  precision_ += precision;
  weighted_mean_ += weighted_mean;
}

GaussianProduct GaussianProduct::with(const DiagGaussian& expert) const {
  GaussianProduct next = *this;
  next.add(expert);
  return next;
}

DiagGaussian GaussianProduct::gaussian() const {
  DiagGaussian g;
  g.var = precision_.cwiseInverse();
  g.mu = weighted_mean_.cwiseProduct(g.var);
  return g;
}

DiagGaussian poe_product(const std::vector<DiagGaussian>& experts, const DiagGaussian& prior) {
  GaussianProduct product(prior);
  for (const auto& e : experts) product.add(e);
  return product.gaussian();
}

double gaussian_kl(const DiagGaussian& q1, const DiagGaussian& q2) {
  require_valid(q1, q1.dim(), "gaussian_kl");
  require_valid(q2, q1.dim(), "gaussian_kl");
  const auto v1 = q1.var.array();
  const auto v2 = q2.var.array();
  const auto diff = q1.mu.array() - q2.mu.array();
  const double kl = 0.5 * ((v2 / v1).log() + (v1 + diff.square()) / v2 - 1.0).sum();
  return std::max(kl, 0.0);
}

}  // namespace bsoda
