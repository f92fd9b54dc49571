#pragma once

#include "capra/autodiff.hpp"
#include "capra/regions.hpp"
#include "capra/types.hpp"

#include <optional>
#include <utility>

namespace capra {

// One gate block: either a dense affine map W over the layer input, or the
// scene-factorized triple (A, B) whose effective weight is A diag(F s) B.
// The factor map F is shared across a layer's factorized gates and lives on
// the enclosing LstmLayerParams. The bias is never factorized.
struct GateParams {
  Mat W;  // dense: out x in (empty when factorized)
  Mat A;  // factorized: out x k
  Mat B;  // factorized: k x in
  Vec b;  // out

  bool factorized() const { return A.size() > 0; }
};

struct LstmLayerParams {
  GateParams in_gate;      // i
  GateParams forget_gate;  // f
  GateParams out_gate;     // o
  GateParams cell_gate;    // g
  Mat F;                   // k x K; used by any factorized gate

  bool any_factorized() const {
    return in_gate.factorized() || forget_gate.factorized() ||
           out_gate.factorized() || cell_gate.factorized();
  }
};

// Stacked-pair state; h2 is the exported abstract-meaning vector.
struct LstmState {
  Vec h1, c1, h2, c2;
};

// One-hidden-layer network with tanh on hidden and output; the hidden width
// equals the input width.
struct InitMlp {
  Mat W1;
  Vec b1;
  Mat W2;
  Vec b2;
};

// Four independent networks mapping v0 to the initial c1, h1, c2, h2.
struct InitMlpSet {
  InitMlp c1, h1, c2, h2;
};

// A diag(F s) B. Linear in s; shapes must chain (out x k)(k x k)(k x in)
// and F must have as many columns as s has entries.
Mat factorized_matrix(const Mat& A, const Mat& B, const Mat& F, const Vec& scene);

// One LSTM update: gates i, f, o through the logistic function, candidate g
// through tanh, then c = f.*c_prev + i.*g and h = o.*tanh(c). `input` is the
// full concatenated layer input. A factorized layer requires `scene`.
std::pair<Vec, Vec> lstm_step(const LstmLayerParams& layer, const Vec& input,
                              const Vec& prev_c, const Vec* scene);

Vec init_mlp_apply(const InitMlp& mlp, const Vec& v0);

// v0 (the mean region feature vector) and the four MLP-initialized state
// vectors. Throws on an empty region set.
std::pair<Vec, LstmState> init_states(const RegionSet& regions, const InitMlpSet& mlps);

// Tracked counterparts used during training.
struct GateVars {
  bool factorized = false;
  Var W;
  Var A, B;
  Var b;
};

struct LstmLayerVars {
  GateVars in_gate, forget_gate, out_gate, cell_gate;
  Var F;
  bool has_factorized = false;
};

std::pair<Var, Var> lstm_step(Tape& tape, const LstmLayerVars& layer, Var input,
                              Var prev_c, const std::optional<Var>& scene);

struct InitMlpVars {
  Var W1, b1, W2, b2;
};

Var init_mlp_apply(Tape& tape, const InitMlpVars& mlp, Var v0);

}  // namespace capra
