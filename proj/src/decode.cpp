#include "capra/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace capra {

namespace {

constexpr int kBegin = 0;
constexpr int kEnd = 1;

}  // namespace

DecodeResult greedy_decode(const CaptionModel& model, const Mat& region_feats,
                           const Vec* scene, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  DecodeResult out;
  DecoderState state = initial_state(model, region_feats);
  state.prev_token = kBegin;
  for (int t = 0; t < max_len; ++t) {
    const StepResult res = step(model, state, region_feats, scene);
    int best = kEnd;
    for (int tok = kEnd; tok < model.cfg.vocab; ++tok) {
      if (res.word_dist(tok) > res.word_dist(best)) best = tok;
    }
    out.log_prob += std::log(res.word_dist(best));
    if (best == kEnd) break;
    out.tokens.push_back(best);
    out.attention_per_step.push_back(res.attention);
    state = res.state;
    state.prev_token = best;
  }
  return out;
}

DecodeResult greedy_decode(const CaptionModel& model, const RegionSet& regions,
                           const Vec* scene, int max_len) {
  return greedy_decode(model, regions.feature_matrix(), scene, max_len);
}

std::vector<Hypothesis> beam_decode(const CaptionModel& model, const Mat& region_feats,
                                    const Vec* scene, int beam, int max_len) {
  if (beam < 1) throw std::invalid_argument("beam_decode: beam must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_decode: max_len must be >= 1");

  Hypothesis root;
  root.state = initial_state(model, region_feats);
  root.state.prev_token = kBegin;
  std::vector<Hypothesis> live{root};
  std::vector<Hypothesis> pool;

  while (!live.empty()) {
    struct Expansion {
      double log_prob;
      int token;
      int origin;
    };
    std::vector<Expansion> expansions;
    std::vector<StepResult> steps(live.size());
    for (size_t i = 0; i < live.size(); ++i) {
      steps[i] = step(model, live[i].state, region_feats, scene);
      for (int tok = kEnd; tok < model.cfg.vocab; ++tok) {
        expansions.push_back(Expansion{live[i].log_prob + std::log(steps[i].word_dist(tok)),
                                       tok, static_cast<int>(i)});
      }
    }
    std::stable_sort(expansions.begin(), expansions.end(), [](const Expansion& a, const Expansion& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.token != b.token) return a.token < b.token;
      return a.origin < b.origin;
    });
    if (static_cast<int>(expansions.size()) > beam) expansions.resize(beam);

    std::vector<Hypothesis> next;
    for (const Expansion& e : expansions) {
      Hypothesis hyp = live[e.origin];
      hyp.log_prob = e.log_prob;
      hyp.state = steps[e.origin].state;
      hyp.state.prev_token = e.token;
      if (e.token == kEnd) {
        hyp.finished = true;
        pool.push_back(std::move(hyp));
      } else {
        hyp.tokens.push_back(e.token);
        if (static_cast<int>(hyp.tokens.size()) >= max_len) {
          pool.push_back(std::move(hyp));
        } else {
          next.push_back(std::move(hyp));
        }
      }
    }
    live = std::move(next);
  }

  std::stable_sort(pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.log_prob > b.log_prob;
  });
  std::vector<Hypothesis> ranked;
  std::set<std::vector<int>> seen;
  for (Hypothesis& h : pool) {
    if (seen.insert(h.tokens).second) ranked.push_back(std::move(h));
  }
  return ranked;
}

std::vector<Hypothesis> beam_decode(const CaptionModel& model, const RegionSet& regions,
                                    const Vec* scene, int beam, int max_len) {
  return beam_decode(model, regions.feature_matrix(), scene, beam, max_len);
}

int patch_word_match(const CaptionModel& model, const RegionSet& regions, const Vec* scene,
                     const std::vector<int>& tokens, int position) {
  if (position < 0 || position >= static_cast<int>(tokens.size())) {
    throw std::invalid_argument("patch_word_match: position out of range");
  }
  const Mat feats = regions.feature_matrix();
  DecoderState state = initial_state(model, feats);
  state.prev_token = kBegin;
  Vec weights;
  for (int t = 0; t <= position; ++t) {
    const StepResult res = step(model, state, feats, scene);
    weights = res.attention;
    state = res.state;
    state.prev_token = tokens[t];
  }
  int best = 0;
  for (int i = 1; i < weights.size(); ++i) {
    if (weights(i) > weights(best)) best = i;
  }
  return best;
}

std::vector<Mat> attention_heatmap(const std::vector<Vec>& weights_per_step,
                                   const std::vector<BoundingBox>& boxes,
                                   int img_w, int img_h) {
  if (img_w <= 0 || img_h <= 0) throw std::invalid_argument("attention_heatmap: bad image dims");
  for (const BoundingBox& b : boxes) {
    if (b.x < 0 || b.y < 0 || b.w <= 0 || b.h <= 0 ||
        b.x + b.w > img_w + 1e-9 || b.y + b.h > img_h + 1e-9) {
      throw std::invalid_argument("attention_heatmap: box out of image bounds");
    }
  }
  std::vector<Mat> grids;
  grids.reserve(weights_per_step.size());
  for (const Vec& weights : weights_per_step) {
    if (weights.size() != static_cast<Eigen::Index>(boxes.size())) {
      throw std::invalid_argument("attention_heatmap: weight/box count mismatch");
    }
    Mat grid = Mat::Zero(img_h, img_w);
    for (size_t r = 0; r < boxes.size(); ++r) {
      const BoundingBox& b = boxes[r];
      const int x0 = std::max(0, static_cast<int>(std::ceil(b.x)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(b.y)));
      const int x1 = std::min(img_w, static_cast<int>(std::ceil(b.x + b.w)));
      const int y1 = std::min(img_h, static_cast<int>(std::ceil(b.y + b.h)));
      for (int py = y0; py < y1; ++py) {
        for (int px = x0; px < x1; ++px) grid(py, px) += weights(r);
      }
    }
    grids.push_back(std::move(grid));
  }
  return grids;
}

void write_pgm(const std::string& path, const Mat& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  const double max = grid.maxCoeff();
  out << "P2\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  for (Eigen::Index y = 0; y < grid.rows(); ++y) {
    for (Eigen::Index x = 0; x < grid.cols(); ++x) {
      const int v = max > 0.0 ? static_cast<int>(std::lround(grid(y, x) / max * 255.0)) : 0;
      out << v << (x + 1 == grid.cols() ? "" : " ");
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

DecodeResult distort_scene_decode(const CaptionModel& model, const Mat& region_feats,
                                  int topic_index, int beam, int max_len) {
  if (!model.cfg.scene_factored) {
    throw std::invalid_argument("distort_scene_decode: model is not scene-factored");
  }
  if (topic_index < 0 || topic_index >= model.cfg.topics) {
    throw std::invalid_argument("distort_scene_decode: topic index out of range");
  }
  Vec onehot = Vec::Zero(model.cfg.topics);
  onehot(topic_index) = 1.0;
  const auto ranked = beam_decode(model, region_feats, &onehot, beam, max_len);
  DecodeResult out;
  if (!ranked.empty()) {
    out.tokens = ranked[0].tokens;
    out.log_prob = ranked[0].log_prob;
  }
  return out;
}

}  // namespace capra
