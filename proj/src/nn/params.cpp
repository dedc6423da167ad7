#include "bsoda/nn/params.hpp"

#include <cmath>

#include "bsoda/core/types.hpp"

namespace bsoda::nn {

Parameter& ParamStore::add(const std::string& name, Tensor2 value) {
  if (params_.contains(name)) throw ContractError("parameter '" + name + "' already exists");
  if (value.size() == 0) throw ContractError("parameter '" + name + "' has an empty shape");
  Parameter p;
  p.first_moment = Tensor2::Zero(value.rows(), value.cols());
  p.second_moment = Tensor2::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor2 v(rows, cols);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  return add(name, std::move(v));
}

Parameter& ParamStore::create_zero(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return add(name, Tensor2::Zero(rows, cols));
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParamStore::round_to_float() {
  for (auto& [_, p] : params_) p.value = p.value.cast<float>().cast<double>();
}

void optimizer_step(ParamStore& store, const Gradients& grads, const AdamConfig& config) {
  for (const auto& [name, g] : grads) {
    const Parameter& p = store.at(name);
    if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
      throw ContractError("gradient for '" + name + "' has the wrong shape");
    }
    if (!g.allFinite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  store.set_step_count(store.step_count() + 1);
  const double t = static_cast<double>(store.step_count());
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Parameter& p = store.at(name);
    p.first_moment = config.beta1 * p.first_moment + (1.0 - config.beta1) * g;
    p.second_moment = config.beta2 * p.second_moment + (1.0 - config.beta2) * g.cwiseAbs2();
    p.value.array() -= config.learning_rate * (p.first_moment.array() / c1) /
                       ((p.second_moment.array() / c2).sqrt() + config.epsilon);
  }
}

}  // namespace bsoda::nn
