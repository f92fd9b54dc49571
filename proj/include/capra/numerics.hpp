#pragma once

#include "capra/types.hpp"

namespace capra {

// Overflow-safe logistic function.
inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Max-shifted log(sum(exp(x))). Throws on empty input.
double log_sum_exp(const Vec& x);

// Max-shifted softmax; output is nonnegative and sums to 1 within 1e-12
// for any finite input. Throws on empty input.
Vec softmax(const Vec& logits);

}  // namespace capra
