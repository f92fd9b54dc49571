#pragma once

#include "capra/attention.hpp"
#include "capra/autodiff.hpp"
#include "capra/lstm.hpp"
#include "capra/regions.hpp"
#include "capra/rng.hpp"
#include "capra/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capra {

struct ModelConfig {
  int vocab = 0;     // W, including the three reserved tokens
  int hidden = 32;   // H, LSTM hidden/cell width
  int embed = 32;    // M, word embedding width
  int feat_dim = 0;  // D, region feature width including geometry
  int rank = 64;     // k, factorization rank
  int topics = 0;    // K, scene vector length (0 unless scene-factored)
  bool region_attention = true;
  bool scene_factored = false;
  bool factor_cell_gate = false;  // include g in the factorization (ablation)
  bool factor_bottom = true;
  bool factor_top = true;
  bool attn_use_h1 = false;  // feed h1 alongside h2 into the scorer

  int attn_hidden() const { return hidden; }
  int attn_state() const { return attn_use_h1 ? 2 * hidden : hidden; }
  int bottom_input() const { return embed + 2 * hidden + feat_dim; }
  int top_input() const { return 2 * hidden; }
};

// All learnable parameters, stored as named matrices. Construction zeroes
// everything; call randomize() before training.
struct CaptionModel {
  ModelConfig cfg;
  ParamMap params;

  static CaptionModel build(const ModelConfig& cfg);
  void randomize(Rng& rng, double scale);

  const Mat& at(const std::string& name) const;
  LstmLayerParams layer_params(int layer) const;  // 1 = bottom, 2 = top
  AttentionNetParams attention_params() const;
  InitMlpSet init_mlps() const;
};

// Per-timestep decoding context.
struct DecoderState {
  LstmState lstm;
  Vec v;               // current visual context
  int prev_token = 0;  // token consumed at the next step
  int t = 0;
};

struct StepResult {
  DecoderState state;  // prev_token is left for the caller to fill
  Vec word_dist;
  Vec attention;
  Vec logits;

  // Same fused form the training loss uses, so per-step values sum to the
  // teacher-forced loss bit-exactly.
  double cross_entropy(int token) const;
};

DecoderState initial_state(const CaptionModel& model, const Mat& region_feats);

// One decode step: attend (Eqs. of the scorer), blend, both LSTM layers,
// then the word softmax. Without region attention the weights are uniform,
// which makes the context the mean region feature.
StepResult step(const CaptionModel& model, const DecoderState& state,
                const Mat& region_feats, const Vec* scene);
StepResult step(const CaptionModel& model, const DecoderState& state,
                const RegionSet& regions, const Vec* scene);

// Negative log-likelihood of the caption (content tokens, no markers); the
// #END# prediction is included. Differentiable through every parameter.
double teacher_forced_loss(const CaptionModel& model, const Mat& region_feats,
                           const Vec* scene, const std::vector<int>& tokens);
double teacher_forced_loss(const CaptionModel& model, const RegionSet& regions,
                           const Vec* scene, const std::vector<int>& tokens);

// Tracked flavor for training: parameters are registered on the tape and the
// returned Var is the caption loss.
Var teacher_forced_loss_tracked(Tape& tape, const CaptionModel& model,
                                const Mat& region_feats, const Vec* scene,
                                const std::vector<int>& tokens);

}  // namespace capra
