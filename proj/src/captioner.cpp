#include "capra/captioner.hpp"

#include "capra/numerics.hpp"

#include <stdexcept>

namespace capra {

namespace {

constexpr int kBegin = 0;
constexpr int kEnd = 1;

void add_gate(ParamMap& p, const std::string& prefix, int out, int in, bool factorized, int rank) {
  if (factorized) {
    p[prefix + ".A"] = Mat::Zero(out, rank);
    p[prefix + ".B"] = Mat::Zero(rank, in);
  } else {
    p[prefix + ".W"] = Mat::Zero(out, in);
  }
  p[prefix + ".b"] = Mat::Zero(out, 1);
}

void add_layer(ParamMap& p, const ModelConfig& cfg, int layer, int in) {
  const std::string name = "lstm" + std::to_string(layer);
  const bool factored = cfg.scene_factored && (layer == 1 ? cfg.factor_bottom : cfg.factor_top);
  add_gate(p, name + ".i", cfg.hidden, in, factored, cfg.rank);
  add_gate(p, name + ".f", cfg.hidden, in, factored, cfg.rank);
  add_gate(p, name + ".o", cfg.hidden, in, factored, cfg.rank);
  add_gate(p, name + ".g", cfg.hidden, in, factored && cfg.factor_cell_gate, cfg.rank);
}

}  // namespace

CaptionModel CaptionModel::build(const ModelConfig& cfg) {
  if (cfg.vocab < 3) throw std::invalid_argument("CaptionModel: vocabulary too small");
  if (cfg.hidden <= 0 || cfg.embed <= 0 || cfg.feat_dim <= 0) {
    throw std::invalid_argument("CaptionModel: sizes must be positive");
  }
  if (cfg.scene_factored && (cfg.topics <= 0 || cfg.rank <= 0)) {
    throw std::invalid_argument("CaptionModel: scene factorization needs topics and rank");
  }
  CaptionModel model;
  model.cfg = cfg;
  ParamMap& p = model.params;

  p["embed"] = Mat::Zero(cfg.embed, cfg.vocab);
  if (cfg.region_attention) {
    p["attn.Wr"] = Mat::Zero(cfg.attn_hidden(), cfg.feat_dim);
    p["attn.Ww"] = Mat::Zero(cfg.attn_hidden(), cfg.embed);
    p["attn.Wh"] = Mat::Zero(cfg.attn_hidden(), cfg.attn_state());
    p["attn.Wv"] = Mat::Zero(cfg.attn_hidden(), cfg.feat_dim);
    p["attn.b"] = Mat::Zero(cfg.attn_hidden(), 1);
    p["attn.u"] = Mat::Zero(1, cfg.attn_hidden());
  }
  add_layer(p, cfg, 1, cfg.bottom_input());
  add_layer(p, cfg, 2, cfg.top_input());
  if (cfg.scene_factored) p["sf.F"] = Mat::Zero(cfg.rank, cfg.topics);

  p["pred.We"] = Mat::Zero(cfg.embed, cfg.embed);
  p["pred.Wh"] = Mat::Zero(cfg.embed, cfg.hidden);
  p["pred.Wv"] = Mat::Zero(cfg.embed, cfg.feat_dim);
  p["pred.b"] = Mat::Zero(cfg.embed, 1);
  p["pred.Wo"] = Mat::Zero(cfg.vocab, cfg.embed);
  p["pred.bo"] = Mat::Zero(cfg.vocab, 1);

  for (const char* q : {"c1", "h1", "c2", "h2"}) {
    const std::string prefix = std::string("init.") + q;
    p[prefix + ".W1"] = Mat::Zero(cfg.feat_dim, cfg.feat_dim);
    p[prefix + ".b1"] = Mat::Zero(cfg.feat_dim, 1);
    p[prefix + ".W2"] = Mat::Zero(cfg.hidden, cfg.feat_dim);
    p[prefix + ".b2"] = Mat::Zero(cfg.hidden, 1);
  }
  return model;
}

void CaptionModel::randomize(Rng& rng, double scale) {
  for (auto& [name, mat] : params) {
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      for (Eigen::Index i = 0; i < mat.rows(); ++i) mat(i, j) = scale * rng.gaussian();
    }
  }
}

const Mat& CaptionModel::at(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("CaptionModel: no parameter " + name);
  return it->second;
}

namespace {

GateParams gate_from(const ParamMap& p, const std::string& prefix) {
  GateParams g;
  if (p.count(prefix + ".A")) {
    g.A = p.at(prefix + ".A");
    g.B = p.at(prefix + ".B");
  } else {
    g.W = p.at(prefix + ".W");
  }
  g.b = p.at(prefix + ".b").col(0);
  return g;
}

}  // namespace

LstmLayerParams CaptionModel::layer_params(int layer) const {
  const std::string name = "lstm" + std::to_string(layer);
  LstmLayerParams lp;
  lp.in_gate = gate_from(params, name + ".i");
  lp.forget_gate = gate_from(params, name + ".f");
  lp.out_gate = gate_from(params, name + ".o");
  lp.cell_gate = gate_from(params, name + ".g");
  if (lp.any_factorized()) lp.F = at("sf.F");
  return lp;
}

AttentionNetParams CaptionModel::attention_params() const {
  AttentionNetParams a;
  a.Wr = at("attn.Wr");
  a.Ww = at("attn.Ww");
  a.Wh = at("attn.Wh");
  a.Wv = at("attn.Wv");
  a.b = at("attn.b").col(0);
  a.u = at("attn.u");
  return a;
}

InitMlpSet CaptionModel::init_mlps() const {
  auto mlp = [this](const std::string& q) {
    InitMlp m;
    m.W1 = at("init." + q + ".W1");
    m.b1 = at("init." + q + ".b1").col(0);
    m.W2 = at("init." + q + ".W2");
    m.b2 = at("init." + q + ".b2").col(0);
    return m;
  };
  return InitMlpSet{mlp("c1"), mlp("h1"), mlp("c2"), mlp("h2")};
}

namespace {

// Tracked views over the parameter map.
struct TrackedModel {
  const ModelConfig* cfg = nullptr;
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    const auto it = vars.find(name);
    if (it == vars.end()) throw std::invalid_argument("TrackedModel: no parameter " + name);
    return it->second;
  }
};

TrackedModel track_model(Tape& tape, const CaptionModel& model) {
  TrackedModel tm;
  tm.cfg = &model.cfg;
  tm.vars = tape.parameters(model.params);
  return tm;
}

GateVars tracked_gate(const TrackedModel& tm, const std::string& prefix) {
  GateVars g;
  if (tm.vars.count(prefix + ".A")) {
    g.factorized = true;
    g.A = tm.at(prefix + ".A");
    g.B = tm.at(prefix + ".B");
  } else {
    g.W = tm.at(prefix + ".W");
  }
  g.b = tm.at(prefix + ".b");
  return g;
}

LstmLayerVars tracked_layer(const TrackedModel& tm, int layer) {
  const std::string name = "lstm" + std::to_string(layer);
  LstmLayerVars lv;
  lv.in_gate = tracked_gate(tm, name + ".i");
  lv.forget_gate = tracked_gate(tm, name + ".f");
  lv.out_gate = tracked_gate(tm, name + ".o");
  lv.cell_gate = tracked_gate(tm, name + ".g");
  lv.has_factorized = lv.in_gate.factorized || lv.forget_gate.factorized ||
                      lv.out_gate.factorized || lv.cell_gate.factorized;
  if (lv.has_factorized) lv.F = tm.at("sf.F");
  return lv;
}

struct TrackedState {
  Var h1, c1, h2, c2, v;
};

struct TrackedStep {
  TrackedState state;
  Var logits;
  Var attention;
};

TrackedState tracked_initial_state(Tape& tape, const TrackedModel& tm, const Mat& region_feats) {
  if (region_feats.cols() == 0) throw std::invalid_argument("initial_state: empty region set");
  Var v0 = tape.constant(Mat(region_feats.rowwise().mean()));
  auto apply = [&](const std::string& q) {
    InitMlpVars mlp{tm.at("init." + q + ".W1"), tm.at("init." + q + ".b1"),
                    tm.at("init." + q + ".W2"), tm.at("init." + q + ".b2")};
    return init_mlp_apply(tape, mlp, v0);
  };
  TrackedState s;
  s.c1 = apply("c1");
  s.h1 = apply("h1");
  s.c2 = apply("c2");
  s.h2 = apply("h2");
  s.v = v0;
  return s;
}

TrackedStep tracked_step(Tape& tape, const TrackedModel& tm, const TrackedState& state,
                         Var region_feats, int prev_token, const std::optional<Var>& scene) {
  const ModelConfig& cfg = *tm.cfg;
  if (prev_token < 0 || prev_token >= cfg.vocab) {
    throw std::invalid_argument("step: previous token out of vocabulary");
  }
  const int R = static_cast<int>(region_feats.cols());
  if (R == 0) throw std::invalid_argument("step: empty region set");
  if (cfg.scene_factored) {
    if (!scene) throw std::invalid_argument("step: missing scene vector");
    if (scene->rows() != cfg.topics) {
      throw std::invalid_argument("step: scene vector has length " +
                                  std::to_string(scene->rows()) + " but the model expects " +
                                  std::to_string(cfg.topics) + " topics");
    }
  }

  Var emb = column(tm.at("embed"), prev_token);

  Var weights;
  if (cfg.region_attention) {
    AttentionVars attn{tm.at("attn.Wr"), tm.at("attn.Ww"), tm.at("attn.Wh"),
                       tm.at("attn.Wv"), tm.at("attn.b"), tm.at("attn.u")};
    Var attn_state = cfg.attn_use_h1 ? concat_rows({state.h1, state.h2}) : state.h2;
    weights = attend(tape, attn, region_feats, emb, attn_state, state.v);
  } else {
    weights = tape.constant(Mat::Constant(R, 1, 1.0 / R));
  }
  Var v_t = blend(tape, weights, region_feats);

  LstmLayerVars layer1 = tracked_layer(tm, 1);
  LstmLayerVars layer2 = tracked_layer(tm, 2);
  Var x1 = concat_rows({emb, state.h1, state.h2, v_t});
  auto [h1, c1] = lstm_step(tape, layer1, x1, state.c1, scene);
  Var x2 = concat_rows({h1, state.h2});
  auto [h2, c2] = lstm_step(tape, layer2, x2, state.c2, scene);

  Var hidden = tanh(add(matmul(tm.at("pred.We"), emb),
                        add(matmul(tm.at("pred.Wh"), h2),
                            add(matmul(tm.at("pred.Wv"), v_t), tm.at("pred.b")))));
  Var logits = add(matmul(tm.at("pred.Wo"), hidden), tm.at("pred.bo"));

  TrackedStep out;
  out.state = TrackedState{h1, c1, h2, c2, v_t};
  out.logits = logits;
  out.attention = weights;
  return out;
}

std::vector<int> with_end(const std::vector<int>& tokens, int vocab) {
  for (int tok : tokens) {
    if (tok < 0 || tok >= vocab) throw std::invalid_argument("caption token out of vocabulary");
    if (tok == kBegin) throw std::invalid_argument("caption may not contain #BEGIN#");
  }
  std::vector<int> targets = tokens;
  targets.push_back(kEnd);
  return targets;
}

}  // namespace

double StepResult::cross_entropy(int token) const {
  if (token < 0 || token >= logits.size()) {
    throw std::invalid_argument("cross_entropy: token out of range");
  }
  return log_sum_exp(logits) - logits(token);
}

DecoderState initial_state(const CaptionModel& model, const Mat& region_feats) {
  Tape tape;
  TrackedModel tm = track_model(tape, model);
  TrackedState s = tracked_initial_state(tape, tm, region_feats);
  DecoderState out;
  out.lstm = LstmState{Vec(s.h1.value()), Vec(s.c1.value()), Vec(s.h2.value()), Vec(s.c2.value())};
  out.v = Vec(s.v.value());
  out.prev_token = kBegin;
  out.t = 0;
  return out;
}

StepResult step(const CaptionModel& model, const DecoderState& state,
                const Mat& region_feats, const Vec* scene) {
  Tape tape;
  TrackedModel tm = track_model(tape, model);
  TrackedState ts;
  ts.h1 = tape.constant(Mat(state.lstm.h1));
  ts.c1 = tape.constant(Mat(state.lstm.c1));
  ts.h2 = tape.constant(Mat(state.lstm.h2));
  ts.c2 = tape.constant(Mat(state.lstm.c2));
  ts.v = tape.constant(Mat(state.v));
  std::optional<Var> s;
  if (scene != nullptr) s = tape.constant(Mat(*scene));
  Var feats = tape.constant(region_feats);

  TrackedStep res = tracked_step(tape, tm, ts, feats, state.prev_token, s);
  StepResult out;
  out.state.lstm = LstmState{Vec(res.state.h1.value()), Vec(res.state.c1.value()),
                             Vec(res.state.h2.value()), Vec(res.state.c2.value())};
  out.state.v = Vec(res.state.v.value());
  out.state.prev_token = state.prev_token;
  out.state.t = state.t + 1;
  out.logits = Vec(res.logits.value());
  out.word_dist = softmax(out.logits);
  out.attention = Vec(res.attention.value());
  return out;
}

StepResult step(const CaptionModel& model, const DecoderState& state,
                const RegionSet& regions, const Vec* scene) {
  return step(model, state, regions.feature_matrix(), scene);
}

Var teacher_forced_loss_tracked(Tape& tape, const CaptionModel& model,
                                const Mat& region_feats, const Vec* scene,
                                const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("teacher_forced_loss: empty caption");
  const std::vector<int> targets = with_end(tokens, model.cfg.vocab);

  TrackedModel tm = track_model(tape, model);
  std::optional<Var> s;
  if (model.cfg.scene_factored) {
    if (scene == nullptr) throw std::invalid_argument("teacher_forced_loss: missing scene vector");
    s = tape.constant(Mat(*scene));
  }
  Var feats = tape.constant(region_feats);
  TrackedState state = tracked_initial_state(tape, tm, region_feats);

  Var total;
  int prev = kBegin;
  for (size_t t = 0; t < targets.size(); ++t) {
    TrackedStep res = tracked_step(tape, tm, state, feats, prev, s);
    Var xent = softmax_cross_entropy(res.logits, targets[t]);
    total = t == 0 ? xent : add(total, xent);
    state = res.state;
    prev = targets[t];
  }
  return total;
}

double teacher_forced_loss(const CaptionModel& model, const Mat& region_feats,
                           const Vec* scene, const std::vector<int>& tokens) {
  Tape tape;
  return teacher_forced_loss_tracked(tape, model, region_feats, scene, tokens).scalar();
}

double teacher_forced_loss(const CaptionModel& model, const RegionSet& regions,
                           const Vec* scene, const std::vector<int>& tokens) {
  return teacher_forced_loss(model, regions.feature_matrix(), scene, tokens);
}

}  // namespace capra
