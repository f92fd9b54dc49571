#include "capra/lstm.hpp"

#include <stdexcept>

namespace capra {

Mat factorized_matrix(const Mat& A, const Mat& B, const Mat& F, const Vec& scene) {
  if (A.cols() != B.rows()) throw std::invalid_argument("factorized_matrix: A/B rank mismatch");
  if (F.rows() != A.cols()) throw std::invalid_argument("factorized_matrix: F rows must equal rank");
  if (F.cols() != scene.size()) {
    throw std::invalid_argument("factorized_matrix: scene dimension does not match F columns");
  }
  const Vec gain = F * scene;
  return A * gain.asDiagonal() * B;
}

namespace {

Var gate_preactivation(Tape& tape, const GateVars& gate, Var input,
                       const std::optional<Var>& gain) {
  if (gate.factorized) {
    if (!gain) throw std::invalid_argument("lstm_step: factorized gate requires a scene vector");
    // A * (diag(F s) * (B x)) — the factored weight is never materialized.
    Var bx = matmul(gate.B, input);
    return add(matmul(gate.A, mul(*gain, bx)), gate.b);
  }
  return add(matmul(gate.W, input), gate.b);
}

}  // namespace

std::pair<Var, Var> lstm_step(Tape& tape, const LstmLayerVars& layer, Var input,
                              Var prev_c, const std::optional<Var>& scene) {
  std::optional<Var> gain;
  if (layer.has_factorized) {
    if (!scene) throw std::invalid_argument("lstm_step: missing scene vector for factorized layer");
    gain = matmul(layer.F, *scene);
  }
  Var i = sigmoid(gate_preactivation(tape, layer.in_gate, input, gain));
  Var f = sigmoid(gate_preactivation(tape, layer.forget_gate, input, gain));
  Var o = sigmoid(gate_preactivation(tape, layer.out_gate, input, gain));
  Var g = tanh(gate_preactivation(tape, layer.cell_gate, input, gain));
  Var c = add(mul(f, prev_c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

namespace {

GateVars track_gate(Tape& tape, const GateParams& gate, const std::string& prefix) {
  if (gate.factorized() && gate.W.size() > 0) {
    throw std::invalid_argument("lstm_step: gate " + prefix +
                                " carries both dense and factorized weights");
  }
  GateVars out;
  out.factorized = gate.factorized();
  if (out.factorized) {
    out.A = tape.parameter(prefix + ".A", gate.A);
    out.B = tape.parameter(prefix + ".B", gate.B);
  } else {
    out.W = tape.parameter(prefix + ".W", gate.W);
  }
  out.b = tape.parameter(prefix + ".b", Mat(gate.b));
  return out;
}

}  // namespace

std::pair<Vec, Vec> lstm_step(const LstmLayerParams& layer, const Vec& input,
                              const Vec& prev_c, const Vec* scene) {
  if (layer.any_factorized() && scene == nullptr) {
    throw std::invalid_argument("lstm_step: factorized layer requires a scene vector");
  }
  Tape tape;
  LstmLayerVars vars;
  vars.in_gate = track_gate(tape, layer.in_gate, "i");
  vars.forget_gate = track_gate(tape, layer.forget_gate, "f");
  vars.out_gate = track_gate(tape, layer.out_gate, "o");
  vars.cell_gate = track_gate(tape, layer.cell_gate, "g");
  vars.has_factorized = layer.any_factorized();
  if (vars.has_factorized) vars.F = tape.parameter("F", layer.F);
  Var x = tape.constant(Mat(input));
  Var c_prev = tape.constant(Mat(prev_c));
  std::optional<Var> s;
  if (scene != nullptr) s = tape.constant(Mat(*scene));
  auto [h, c] = lstm_step(tape, vars, x, c_prev, vars.has_factorized ? s : std::nullopt);
  return {Vec(h.value()), Vec(c.value())};
}

Var init_mlp_apply(Tape& tape, const InitMlpVars& mlp, Var v0) {
  Var hidden = tanh(add(matmul(mlp.W1, v0), mlp.b1));
  return tanh(add(matmul(mlp.W2, hidden), mlp.b2));
}

Vec init_mlp_apply(const InitMlp& mlp, const Vec& v0) {
  const Vec hidden = ((mlp.W1 * v0 + mlp.b1).array().tanh()).matrix();
  return ((mlp.W2 * hidden + mlp.b2).array().tanh()).matrix();
}

std::pair<Vec, LstmState> init_states(const RegionSet& regions, const InitMlpSet& mlps) {
  if (regions.count() == 0) throw std::invalid_argument("init_states: empty region set");
  const Vec v0 = regions.feature_matrix().rowwise().mean();
  LstmState state;
  state.c1 = init_mlp_apply(mlps.c1, v0);
  state.h1 = init_mlp_apply(mlps.h1, v0);
  state.c2 = init_mlp_apply(mlps.c2, v0);
  state.h2 = init_mlp_apply(mlps.h2, v0);
  return {v0, state};
}

}  // namespace capra
