#ifndef BSODA_TESTS_GRADCHECK_HPP
#define BSODA_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "bsoda/nn/tape.hpp"

namespace bsoda::testing {

struct GradCheckResult {
  double worst_relative = 0.0;
  std::string worst_entry;
  std::size_t entries = 0;
};

/// Central differences over every entry of every parameter in `store`,
/// compared against Tape::backward. Relative error uses
/// max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheckResult check_gradients(nn::ParamStore& store,
                                       const std::function<nn::Var(nn::Tape&)>& build,
                                       double step = 1e-6, double floor = 1e-6) {
  nn::Tape tape;
  const nn::Gradients grads = tape.backward(build(tape));
  auto loss_at = [&] {
    nn::Tape t;
    return t.value(build(t))(0, 0);
  };
  GradCheckResult result;
  for (const std::string& name : store.names()) {
    nn::Tensor2& value = store.at(name).value;
    const auto it = grads.find(name);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + step;
      const double up = loss_at();
      value.data()[i] = saved - step;
      const double down = loss_at();
      value.data()[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = it == grads.end() ? 0.0 : it->second.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.entries;
      if (rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_entry = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                             " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace bsoda::testing

#endif  // BSODA_TESTS_GRADCHECK_HPP
