#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "capra/captioner.hpp"
#include "capra/decode.hpp"
#include "capra/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace capra;

namespace {

Mat random_mat(Rng& rng, int rows, int cols, double scale = 0.5) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.gaussian();
  }
  return m;
}

ModelConfig toy_config(bool attention, bool scene) {
  ModelConfig cfg;
  cfg.vocab = 8;
  cfg.hidden = 6;
  cfg.embed = 5;
  cfg.feat_dim = 6;
  cfg.rank = 7;
  cfg.topics = scene ? 2 : 0;
  cfg.region_attention = attention;
  cfg.scene_factored = scene;
  return cfg;
}

CaptionModel random_model(const ModelConfig& cfg, uint64_t seed, double scale = 0.4) {
  CaptionModel model = CaptionModel::build(cfg);
  Rng rng(seed);
  model.randomize(rng, scale);
  return model;
}

// Exhaustive search over the decode space: strings over the emittable
// tokens, terminated by #END# or truncated at max_len.
struct Enumerated {
  std::vector<int> tokens;
  double log_prob = -std::numeric_limits<double>::infinity();
};

void enumerate_all(const CaptionModel& model, const Mat& feats, const Vec* scene,
                   const DecoderState& state, std::vector<int>& prefix, double lp,
                   int max_len, Enumerated& best) {
  const StepResult res = step(model, state, feats, scene);
  for (int tok = 1; tok < model.cfg.vocab; ++tok) {
    const double lp2 = lp + std::log(res.word_dist(tok));
    if (tok == 1) {  // #END#
      if (lp2 > best.log_prob) best = Enumerated{prefix, lp2};
      continue;
    }
    prefix.push_back(tok);
    if (static_cast<int>(prefix.size()) >= max_len) {
      if (lp2 > best.log_prob) best = Enumerated{prefix, lp2};
    } else {
      DecoderState next = res.state;
      next.prev_token = tok;
      enumerate_all(model, feats, scene, next, prefix, lp2, max_len, best);
    }
    prefix.pop_back();
  }
}

}  // namespace

TEST_CASE("step returns a word distribution summing to 1") {
  const CaptionModel model = random_model(toy_config(true, false), 3);
  Rng rng(4);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 5, 1.0);
  DecoderState state = initial_state(model, feats);
  const StepResult res = step(model, state, feats, nullptr);
  CHECK(std::abs(res.word_dist.sum() - 1.0) <= 1e-12);
  CHECK(res.word_dist.minCoeff() >= 0.0);
  CHECK(std::abs(res.attention.sum() - 1.0) <= 1e-12);
}

TEST_CASE("single-region image: context equals the region regardless of attention") {
  const CaptionModel model = random_model(toy_config(true, false), 5);
  Rng rng(6);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 1, 1.0);
  DecoderState state = initial_state(model, feats);
  const StepResult res = step(model, state, feats, nullptr);
  CHECK((res.state.v - feats.col(0)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("zero-parameter model: uniform word distribution") {
  const CaptionModel model = CaptionModel::build(toy_config(true, false));
  Rng rng(7);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 3, 1.0);
  DecoderState state = initial_state(model, feats);
  const StepResult res = step(model, state, feats, nullptr);
  for (int w = 0; w < model.cfg.vocab; ++w) {
    CHECK(res.word_dist(w) == doctest::Approx(1.0 / model.cfg.vocab).epsilon(1e-12));
  }
}

TEST_CASE("teacher-forced loss of a uniform model is (T+1) ln W") {
  ModelConfig cfg = toy_config(false, false);
  cfg.vocab = 12;
  const CaptionModel model = CaptionModel::build(cfg);
  Rng rng(8);
  const Mat feats = random_mat(rng, cfg.feat_dim, 4, 1.0);
  const std::vector<int> caption{3, 5, 2, 7};
  const double loss = teacher_forced_loss(model, feats, nullptr, caption);
  CHECK(loss == doctest::Approx(5.0 * std::log(12.0)).epsilon(1e-12));
}

TEST_CASE("teacher-forced loss rejects bad captions") {
  const CaptionModel model = random_model(toy_config(true, false), 9);
  Rng rng(10);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 2, 1.0);
  CHECK_THROWS_AS(teacher_forced_loss(model, feats, nullptr, {}), std::invalid_argument);
  CHECK_THROWS_AS(teacher_forced_loss(model, feats, nullptr, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(teacher_forced_loss(model, feats, nullptr, {99}), std::invalid_argument);
}

TEST_CASE("per-step cross entropies sum to the loss bit-exactly") {
  const CaptionModel model = random_model(toy_config(true, true), 11);
  Rng rng(12);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 4, 1.0);
  Vec scene(2);
  scene << 0.7, 0.3;
  const std::vector<int> caption{4, 2, 6, 3, 5};

  const double loss = teacher_forced_loss(model, feats, &scene, caption);

  std::vector<int> targets = caption;
  targets.push_back(1);
  DecoderState state = initial_state(model, feats);
  double acc = 0.0;
  for (int target : targets) {
    const StepResult res = step(model, state, feats, &scene);
    acc += res.cross_entropy(target);
    state = res.state;
    state.prev_token = target;
  }
  CHECK(acc == loss);  // identical operation order, so bitwise equality
}

TEST_CASE("full-model gradient check, scene-factored toy config") {
  const CaptionModel model = random_model(toy_config(true, true), 13);
  Rng rng(14);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 3, 1.0);
  Vec scene(2);
  scene << 0.6, 0.4;
  const std::vector<int> caption{2, 7, 4};
  auto f = [&](Tape& t, const std::map<std::string, Var>&) {
    return teacher_forced_loss_tracked(t, model, feats, &scene, caption);
  };
  // h = 2e-4 balances truncation against cancellation for a loss of
  // magnitude ~10; smaller steps let roundoff dominate the tiniest
  // gradient coordinates.
  CHECK(finite_diff_check(f, model.params, 2e-4) < 1e-5);
}

TEST_CASE("config axes: per-layer factorization, g gate, h1 in the scorer") {
  ModelConfig cfg = toy_config(true, true);
  cfg.factor_cell_gate = true;
  cfg.factor_top = false;
  cfg.attn_use_h1 = true;
  CaptionModel model = CaptionModel::build(cfg);
  Rng rng(17);
  model.randomize(rng, 0.4);

  // Bottom layer fully factorized, top layer dense, wider scorer input.
  CHECK(model.params.count("lstm1.g.A") == 1);
  CHECK(model.params.count("lstm2.i.W") == 1);
  CHECK(model.at("attn.Wh").cols() == 2 * cfg.hidden);

  const Mat feats = random_mat(rng, cfg.feat_dim, 3, 1.0);
  Vec scene(2);
  scene << 0.3, 0.7;
  DecoderState state = initial_state(model, feats);
  const StepResult res = step(model, state, feats, &scene);
  CHECK(std::abs(res.word_dist.sum() - 1.0) <= 1e-12);

  const std::vector<int> caption{2, 5};
  auto f = [&](Tape& t, const std::map<std::string, Var>&) {
    return teacher_forced_loss_tracked(t, model, feats, &scene, caption);
  };
  CHECK(finite_diff_check(f, model.params, 2e-4) < 1e-5);
}

TEST_CASE("zero-parameter model greedy-decodes to the empty caption") {
  const CaptionModel model = CaptionModel::build(toy_config(true, false));
  Rng rng(15);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 3, 1.0);
  const DecodeResult dec = greedy_decode(model, feats, nullptr, 10);
  CHECK(dec.tokens.empty());
  CHECK(dec.attention_per_step.empty());
  CHECK(dec.log_prob == doctest::Approx(std::log(1.0 / 8)).epsilon(1e-12));
}

TEST_CASE("greedy output never contains markers") {
  for (uint64_t seed = 20; seed < 40; ++seed) {
    const CaptionModel model = random_model(toy_config(true, false), seed, 0.8);
    Rng rng(seed + 1000);
    const Mat feats = random_mat(rng, model.cfg.feat_dim, 4, 1.0);
    const DecodeResult dec = greedy_decode(model, feats, nullptr, 6);
    for (int tok : dec.tokens) {
      CHECK(tok != 0);
      CHECK(tok != 1);
    }
    CHECK(dec.tokens.size() <= 6);
    CHECK(dec.attention_per_step.size() == dec.tokens.size());
  }
}

TEST_CASE("beam width 1 reproduces greedy decoding") {
  for (uint64_t seed = 50; seed < 70; ++seed) {
    const CaptionModel model = random_model(toy_config(true, false), seed, 0.8);
    Rng rng(seed + 2000);
    const Mat feats = random_mat(rng, model.cfg.feat_dim, 3, 1.0);
    const DecodeResult greedy = greedy_decode(model, feats, nullptr, 5);
    const auto beam = beam_decode(model, feats, nullptr, 1, 5);
    REQUIRE(!beam.empty());
    CHECK(beam[0].tokens == greedy.tokens);
    CHECK(beam[0].log_prob == doctest::Approx(greedy.log_prob).epsilon(1e-12));
  }
}

TEST_CASE("exhaustive beam equals brute-force enumeration argmax") {
  // W = 5 (3 emittable words), max_len = 4, beam 625 >= all live paths.
  ModelConfig cfg = toy_config(true, false);
  cfg.vocab = 5;
  for (uint64_t seed = 100; seed < 150; ++seed) {
    const CaptionModel model = random_model(cfg, seed, 0.9);
    Rng rng(seed + 3000);
    const Mat feats = random_mat(rng, cfg.feat_dim, 3, 1.0);

    const auto ranked = beam_decode(model, feats, nullptr, 625, 4);
    REQUIRE(!ranked.empty());

    Enumerated best;
    std::vector<int> prefix;
    enumerate_all(model, feats, nullptr, initial_state(model, feats), prefix, 0.0, 4, best);

    CAPTURE(seed);
    CHECK(ranked[0].tokens == best.tokens);
    CHECK(ranked[0].log_prob == doctest::Approx(best.log_prob).epsilon(1e-9));
  }
}

TEST_CASE("beam-10 top hypothesis is at least as good as greedy") {
  for (uint64_t seed = 200; seed < 250; ++seed) {
    const CaptionModel model = random_model(toy_config(true, false), seed, 0.9);
    Rng rng(seed + 4000);
    const Mat feats = random_mat(rng, model.cfg.feat_dim, 4, 1.0);
    const DecodeResult greedy = greedy_decode(model, feats, nullptr, 6);
    const auto ranked = beam_decode(model, feats, nullptr, 10, 6);
    REQUIRE(!ranked.empty());
    CAPTURE(seed);
    CHECK(ranked[0].log_prob >= greedy.log_prob - 1e-12);
  }
}

TEST_CASE("beam results contain no duplicate sequences and are sorted") {
  const CaptionModel model = random_model(toy_config(true, false), 77, 0.8);
  Rng rng(78);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 3, 1.0);
  const auto ranked = beam_decode(model, feats, nullptr, 12, 5);
  std::set<std::vector<int>> seen;
  for (size_t i = 0; i < ranked.size(); ++i) {
    CHECK(seen.insert(ranked[i].tokens).second);
    if (i > 0) CHECK(ranked[i - 1].log_prob >= ranked[i].log_prob);
  }
}

TEST_CASE("patch_word_match follows the attention argmax") {
  const int D = 4;
  SUBCASE("single region: always region 0") {
    const CaptionModel model = random_model(toy_config(true, false), 80);
    RegionSet regions;
    Vec f = Vec::Zero(model.cfg.feat_dim);
    f(0) = 1.0;
    regions.regions.push_back(Region{f, BoundingBox{0, 0, 4, 4}});
    CHECK(patch_word_match(model, regions, nullptr, {3, 4}, 1) == 0);
  }
  SUBCASE("attention forced one-hot on region 2") {
    ModelConfig cfg = toy_config(true, false);
    cfg.feat_dim = D;
    CaptionModel model = CaptionModel::build(cfg);
    // Scorer reads feature 2 through one huge hidden unit.
    model.params["attn.Wr"](0, 2) = 50.0;
    model.params["attn.u"](0, 0) = 50.0;
    RegionSet regions;
    for (int i = 0; i < D; ++i) {
      Vec f = Vec::Zero(D);
      f(i) = 1.0;
      regions.regions.push_back(Region{f, BoundingBox{double(i), 0, 1, 4}});
    }
    CHECK(patch_word_match(model, regions, nullptr, {3, 4, 5}, 1) == 2);
  }
  SUBCASE("uniform ties resolve to the lowest region index") {
    const CaptionModel model = CaptionModel::build(toy_config(true, false));
    RegionSet regions;
    for (int i = 0; i < 3; ++i) {
      regions.regions.push_back(Region{Vec::Zero(model.cfg.feat_dim), BoundingBox{0, 0, 4, 4}});
    }
    CHECK(patch_word_match(model, regions, nullptr, {2, 3}, 0) == 0);
  }
  SUBCASE("position out of range is an error") {
    const CaptionModel model = random_model(toy_config(true, false), 81);
    RegionSet regions;
    regions.regions.push_back(Region{Vec::Zero(model.cfg.feat_dim), BoundingBox{0, 0, 4, 4}});
    CHECK_THROWS_AS(patch_word_match(model, regions, nullptr, {2}, 5), std::invalid_argument);
  }
}

TEST_CASE("attention heatmap accumulates weights over covering regions") {
  std::vector<BoundingBox> boxes{{0, 0, 4, 4}, {0, 0, 2, 4}, {2, 0, 2, 4}};

  SUBCASE("one full-image region with weight 1") {
    Vec w(1);
    w << 1.0;
    const auto grids = attention_heatmap({w}, {BoundingBox{0, 0, 4, 4}}, 4, 4);
    REQUIRE(grids.size() == 1);
    CHECK(grids[0].minCoeff() == doctest::Approx(1.0));
    CHECK(grids[0].maxCoeff() == doctest::Approx(1.0));
  }
  SUBCASE("cells sum the weights of the regions covering them") {
    Vec w(3);
    w << 0.5, 0.3, 0.2;
    const auto grids = attention_heatmap({w}, boxes, 4, 4);
    CHECK(grids[0](1, 0) == doctest::Approx(0.8));  // full + left
    CHECK(grids[0](1, 3) == doctest::Approx(0.7));  // full + right
  }
  SUBCASE("uncovered pixels stay zero") {
    Vec w(1);
    w << 1.0;
    const auto grids = attention_heatmap({w}, {BoundingBox{0, 0, 2, 2}}, 4, 4);
    CHECK(grids[0](3, 3) == 0.0);
    CHECK(grids[0](0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("out-of-bounds boxes are rejected") {
    Vec w(1);
    w << 1.0;
    CHECK_THROWS_AS(attention_heatmap({w}, {BoundingBox{2, 2, 4, 4}}, 4, 4),
                    std::invalid_argument);
  }
}

TEST_CASE("write_pgm emits a plain graymap scaled by the max cell") {
  Mat grid(2, 3);
  grid << 0.0, 0.5, 1.0, 0.25, 0.75, 0.5;
  const std::string path = (std::filesystem::temp_directory_path() / "capra_test.pgm").string();
  write_pgm(path, grid);
  std::ifstream in(path);
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  std::vector<int> values;
  int v;
  while (in >> v) values.push_back(v);
  REQUIRE(values.size() == 6);
  CHECK(values[0] == 0);
  CHECK(values[2] == 255);
  CHECK(values[1] == 128);  // round(0.5 * 255)
  std::filesystem::remove(path);
}

TEST_CASE("distort_scene_decode contract") {
  SUBCASE("rejects non-factorized models") {
    const CaptionModel model = random_model(toy_config(true, false), 90);
    CHECK_THROWS_AS(distort_scene_decode(model, Mat::Ones(model.cfg.feat_dim, 2), 0, 3, 5),
                    std::invalid_argument);
  }
  SUBCASE("rejects out-of-range topics") {
    const CaptionModel model = random_model(toy_config(true, true), 91);
    CHECK_THROWS_AS(distort_scene_decode(model, Mat::Ones(model.cfg.feat_dim, 2), 5, 3, 5),
                    std::invalid_argument);
  }
  SUBCASE("distorting to the already-one-hot topic changes nothing") {
    const CaptionModel model = random_model(toy_config(true, true), 92, 0.8);
    Rng rng(93);
    const Mat feats = random_mat(rng, model.cfg.feat_dim, 3, 1.0);
    Vec onehot = Vec::Zero(2);
    onehot(1) = 1.0;
    const auto direct = beam_decode(model, feats, &onehot, 4, 5);
    const DecodeResult distorted = distort_scene_decode(model, feats, 1, 4, 5);
    REQUIRE(!direct.empty());
    CHECK(distorted.tokens == direct[0].tokens);
  }
}

TEST_CASE("decoding is deterministic across runs") {
  const CaptionModel model = random_model(toy_config(true, true), 95, 0.8);
  Rng rng(96);
  const Mat feats = random_mat(rng, model.cfg.feat_dim, 4, 1.0);
  Vec scene(2);
  scene << 0.4, 0.6;
  const DecodeResult a = greedy_decode(model, feats, &scene, 8);
  const DecodeResult b = greedy_decode(model, feats, &scene, 8);
  CHECK(a.tokens == b.tokens);
  CHECK(a.log_prob == b.log_prob);
  const auto beam_a = beam_decode(model, feats, &scene, 7, 8);
  const auto beam_b = beam_decode(model, feats, &scene, 7, 8);
  REQUIRE(beam_a.size() == beam_b.size());
  for (size_t i = 0; i < beam_a.size(); ++i) {
    CHECK(beam_a[i].tokens == beam_b[i].tokens);
    CHECK(beam_a[i].log_prob == beam_b[i].log_prob);
  }
}
