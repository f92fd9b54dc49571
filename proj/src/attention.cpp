#include "capra/attention.hpp"

#include <stdexcept>
#include <vector>

namespace capra {

Var attend(Tape& tape, const AttentionVars& params, Var region_feats, Var word_embed,
           Var prev_h, Var prev_v) {
  const int R = static_cast<int>(region_feats.cols());
  if (R == 0) throw std::invalid_argument("attend: empty region set");
  // The word/history terms do not depend on the region; compute them once.
  Var shared = add(matmul(params.Ww, word_embed),
                   add(matmul(params.Wh, prev_h),
                       add(matmul(params.Wv, prev_v), params.b)));
  std::vector<Var> scores;
  scores.reserve(R);
  for (int i = 0; i < R; ++i) {
    Var hidden = tanh(add(matmul(params.Wr, column(region_feats, i)), shared));
    scores.push_back(matmul(params.u, hidden));
  }
  return softmax(concat_rows(scores));
}

Var blend(Tape& tape, Var weights, Var region_feats) {
  if (weights.rows() != region_feats.cols()) {
    throw std::invalid_argument("blend: weight count does not match region count");
  }
  return matmul(region_feats, weights);
}

Vec attend(const AttentionNetParams& params, const Mat& region_feats,
           const Vec& word_embed, const Vec& prev_h, const Vec& prev_v) {
  Tape tape;
  AttentionVars vars;
  vars.Wr = tape.constant(params.Wr);
  vars.Ww = tape.constant(params.Ww);
  vars.Wh = tape.constant(params.Wh);
  vars.Wv = tape.constant(params.Wv);
  vars.b = tape.constant(Mat(params.b));
  vars.u = tape.constant(params.u);
  Var w = attend(tape, vars, tape.constant(region_feats), tape.constant(Mat(word_embed)),
                 tape.constant(Mat(prev_h)), tape.constant(Mat(prev_v)));
  return Vec(w.value());
}

Vec blend(const Vec& weights, const Mat& region_feats) {
  if (weights.size() != region_feats.cols()) {
    throw std::invalid_argument("blend: weight count does not match region count");
  }
  return region_feats * weights;
}

}  // namespace capra
