#pragma once

#include "capra/types.hpp"

namespace capra {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates per parameter plus the step counter.
// Moments are allocated lazily on the first step.
struct AdamState {
  AdamConfig cfg;
  long long step = 0;
  ParamMap m;
  ParamMap v;
};

// Bias-corrected ADAM update, in place. Rejects shape mismatches and
// non-finite gradients.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state);

}  // namespace capra
