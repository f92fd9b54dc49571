#pragma once

#include "capra/autodiff.hpp"
#include "capra/types.hpp"

namespace capra {

// One-hidden-layer scoring network shared across regions: each region's
// score is u . tanh(Wr r_i + Ww e + Wh h + Wv v + b), softmaxed over regions.
struct AttentionNetParams {
  Mat Wr;  // Ha x D
  Mat Ww;  // Ha x M
  Mat Wh;  // Ha x H (or Ha x 2H when the bottom hidden state is included)
  Mat Wv;  // Ha x D
  Vec b;   // Ha
  Mat u;   // 1 x Ha
};

// Region features as columns of a D x R matrix.
Vec attend(const AttentionNetParams& params, const Mat& region_feats,
           const Vec& word_embed, const Vec& prev_h, const Vec& prev_v);

// Weighted sum of region features; a convex combination when the weights
// are a probability vector.
Vec blend(const Vec& weights, const Mat& region_feats);

struct AttentionVars {
  Var Wr, Ww, Wh, Wv, b, u;
};

Var attend(Tape& tape, const AttentionVars& params, Var region_feats, Var word_embed,
           Var prev_h, Var prev_v);

Var blend(Tape& tape, Var weights, Var region_feats);

}  // namespace capra
