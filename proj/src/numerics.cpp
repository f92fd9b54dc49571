#include "capra/numerics.hpp"

#include <stdexcept>

namespace capra {

double log_sum_exp(const Vec& x) {
  if (x.size() == 0) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

Vec softmax(const Vec& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax: empty input");
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

}  // namespace capra
