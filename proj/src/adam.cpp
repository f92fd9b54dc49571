#include "capra/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace capra {

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state) {
  for (auto& [name, theta] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) {
      throw std::invalid_argument("adam_step: missing gradient for " + name);
    }
    const Mat& g = git->second;
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + name);
    }
    if (!g.allFinite()) {
      throw std::runtime_error("adam_step: non-finite gradient for " + name);
    }
  }

  state.step += 1;
  const double b1 = state.cfg.beta1;
  const double b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (auto& [name, theta] : params) {
    const Mat& g = grads.at(name);
    Mat& m = state.m.try_emplace(name, Mat::Zero(theta.rows(), theta.cols())).first->second;
    Mat& v = state.v.try_emplace(name, Mat::Zero(theta.rows(), theta.cols())).first->second;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const Mat m_hat = m / corr1;
    const Mat v_hat = v / corr2;
    theta.array() -= state.cfg.lr * m_hat.array() / (v_hat.array().sqrt() + state.cfg.eps);
  }
}

}  // namespace capra
