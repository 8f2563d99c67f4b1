#pragma once

#include <cstdint>

#include "mvf/nn/params.hpp"

namespace mvf::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  NetParams m, v;
  std::uint64_t step = 0;

  static AdamState for_params(const NetParams& p);
};

/// One bias-corrected Adam update of params in place.
void adam_step(NetParams& params, const NetParams& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace mvf::nn
