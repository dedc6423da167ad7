#ifndef BSODA_NN_PARAMS_HPP
#define BSODA_NN_PARAMS_HPP

#include <map>
#include <string>
#include <vector>

#include "bsoda/nn/tensor.hpp"
#include "bsoda/simulator/rng.hpp"

namespace bsoda::nn {

struct Parameter {
  Tensor2 value;
  Tensor2 first_moment;
  Tensor2 second_moment;
};

using Gradients = std::map<std::string, Tensor2>;

/// Named parameter tensors plus Adam moments. Shapes are fixed at creation.
class ParamStore {
 public:
  /// Glorot-uniform initialisation in +-sqrt(6 / (rows + cols)).
  Parameter& create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng);
  Parameter& create_zero(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& add(const std::string& name, Tensor2 value);

  bool contains(const std::string& name) const { return params_.contains(name); }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  const Tensor2& value(const std::string& name) const { return at(name).value; }

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t step_count() const { return steps_; }
  void set_step_count(std::size_t s) { steps_ = s; }

  /// Round every value to float precision, the precision checkpoints carry.
  void round_to_float();

 private:
  std::map<std::string, Parameter> params_;
  std::size_t steps_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update over the parameters named in `grads`. Parameters with no
/// gradient entry are left untouched. A non-finite gradient throws
/// NumericError before anything is modified.
void optimizer_step(ParamStore& store, const Gradients& grads, const AdamConfig& config = {});

}  // namespace bsoda::nn

#endif  // BSODA_NN_PARAMS_HPP
