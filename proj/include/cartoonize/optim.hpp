#pragma once

#include <cstdint>
#include <vector>

#include "cartoonize/networks.hpp"

namespace ctz {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::int64_t steps = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update of every parameter that holds a gradient.
// Moments are created lazily and aligned with `params` by position.
void adam_step(const ParameterList& params, AdamState& state, const AdamOptions& options);

}  // namespace ctz
