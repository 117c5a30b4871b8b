#include "cartoonize/optim.hpp"

#include <cmath>

#include "cartoonize/errors.hpp"

namespace ctz {

void adam_step(const ParameterList& params, AdamState& state, const AdamOptions& options) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.var.value().shape());
      state.second_moment.emplace_back(p.var.value().shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    raise(ErrorKind::integrity, "optimizer state does not match the parameter list");
  }
  ++state.steps;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var v = params[i].var;
    if (!v.has_grad()) continue;
    const Tensor& g = v.grad();
    Tensor& m = state.first_moment[i];
    Tensor& s = state.second_moment[i];
    Tensor& value = v.mutable_value();
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
      s[j] = options.beta2 * s[j] + (1.0 - options.beta2) * g[j] * g[j];
      value[j] -= options.learning_rate * (m[j] / c1) / (std::sqrt(s[j] / c2) + options.epsilon);
    }
  }
}

}  // namespace ctz
