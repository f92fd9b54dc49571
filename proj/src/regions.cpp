#include "capra/regions.hpp"

#include "capra/numerics.hpp"
#include "capra/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace capra {

Mat RegionSet::feature_matrix() const {
  if (regions.empty()) throw std::invalid_argument("RegionSet: empty region set");
  Mat m(regions[0].feat.size(), regions.size());
  for (size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].feat.size() != m.rows()) {
      throw std::invalid_argument("RegionSet: inconsistent feature dimensions");
    }
    m.col(i) = regions[i].feat;
  }
  return m;
}

Vec geometry_features(const BoundingBox& box, int img_w, int img_h) {
  if (img_w <= 0 || img_h <= 0) throw std::invalid_argument("geometry_features: zero image dimension");
  if (box.w <= 0 || box.h <= 0) throw std::invalid_argument("geometry_features: degenerate box");
  Vec g(5);
  g << (box.x + box.w / 2.0) / img_w, (box.y + box.h / 2.0) / img_h,
      box.w / img_w, box.h / img_h, (box.w * box.h) / (double(img_w) * img_h);
  return g;
}

double overlap_over_positive(const BoundingBox& candidate, const BoundingBox& positive) {
  if (positive.w <= 0 || positive.h <= 0) {
    throw std::invalid_argument("overlap_over_positive: degenerate positive box");
  }
  const double ix = std::max(0.0, std::min(candidate.x + candidate.w, positive.x + positive.w) -
                                      std::max(candidate.x, positive.x));
  const double iy = std::max(0.0, std::min(candidate.y + candidate.h, positive.y + positive.h) -
                                      std::max(candidate.y, positive.y));
  return (ix * iy) / (positive.w * positive.h);
}

LogisticModel objectness_train(const std::vector<Vec>& positives,
                               const std::vector<Vec>& negatives,
                               const AdamConfig& adam, int steps, uint64_t seed) {
  if (positives.empty() || negatives.empty()) {
    throw std::invalid_argument("objectness_train: both classes must be nonempty");
  }
  const Eigen::Index dim = positives[0].size();
  Rng rng(seed);
  Vec w(dim);
  for (Eigen::Index i = 0; i < dim; ++i) w(i) = 0.01 * rng.gaussian();
  double b = 0.0;

  ParamMap params;
  params["b"] = Mat::Constant(1, 1, b);
  params["w"] = Mat(w);
  AdamState state;
  state.cfg = adam;

  const double n = static_cast<double>(positives.size() + negatives.size());
  for (int step = 0; step < steps; ++step) {
    Vec gw = Vec::Zero(dim);
    double gb = 0.0;
    auto accumulate = [&](const Vec& x, double y) {
      if (x.size() != dim) throw std::invalid_argument("objectness_train: feature dimension mismatch");
      const double p = sigmoid_scalar(params.at("w").col(0).dot(x) + params.at("b")(0, 0));
      gw += (p - y) * x;
      gb += (p - y);
    };
    for (const Vec& x : positives) accumulate(x, 1.0);
    for (const Vec& x : negatives) accumulate(x, 0.0);
    ParamMap grads;
    grads["b"] = Mat::Constant(1, 1, gb / n);
    grads["w"] = Mat(gw / n);
    adam_step(params, grads, state);
  }
  return LogisticModel{Vec(params.at("w").col(0)), params.at("b")(0, 0)};
}

double objectness_score(const LogisticModel& model, const Vec& feat) {
  if (feat.size() != model.w.size()) {
    throw std::invalid_argument("objectness_score: feature dimension mismatch");
  }
  return sigmoid_scalar(model.w.dot(feat) + model.b);
}

RegionSet make_region_set(const std::vector<std::pair<Vec, BoundingBox>>& feats_boxes,
                          int img_w, int img_h) {
  RegionSet set;
  set.regions.reserve(feats_boxes.size());
  for (const auto& [feat, box] : feats_boxes) {
    const Vec geo = geometry_features(box, img_w, img_h);
    Vec full(feat.size() + geo.size());
    full << feat, geo;
    set.regions.push_back(Region{std::move(full), box});
  }
  return set;
}

namespace {

// Pixel membership mask over the image grid; pixel (px, py) is covered when
// box.x <= px < box.x + box.w (and likewise vertically).
struct PixelMask {
  std::vector<uint64_t> words;

  static PixelMask for_box(const BoundingBox& box, int img_w, int img_h) {
    PixelMask m;
    m.words.assign((static_cast<size_t>(img_w) * img_h + 63) / 64, 0);
    const int x0 = std::max(0, static_cast<int>(std::ceil(box.x)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(box.y)));
    const int x1 = std::min(img_w, static_cast<int>(std::ceil(box.x + box.w)));
    const int y1 = std::min(img_h, static_cast<int>(std::ceil(box.y + box.h)));
    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        const size_t bit = static_cast<size_t>(py) * img_w + px;
        m.words[bit >> 6] |= (1ull << (bit & 63));
      }
    }
    return m;
  }

  void or_with(const PixelMask& o) {
    for (size_t i = 0; i < words.size(); ++i) words[i] |= o.words[i];
  }

  long long count() const {
    long long n = 0;
    for (uint64_t w : words) n += __builtin_popcountll(w);
    return n;
  }

  long long count_new(const PixelMask& covered) const {
    long long n = 0;
    for (size_t i = 0; i < words.size(); ++i) {
      n += __builtin_popcountll(words[i] & ~covered.words[i]);
    }
    return n;
  }
};

}  // namespace

RegionSet select_regions(const std::vector<CandidateBox>& candidates, int R,
                         int img_w, int img_h, uint64_t seed, double min_coverage) {
  if (candidates.empty()) throw std::invalid_argument("select_regions: no candidates");
  if (R <= 0) throw std::invalid_argument("select_regions: R must be positive");
  if (img_w <= 0 || img_h <= 0) throw std::invalid_argument("select_regions: bad image dims");
  const int n = static_cast<int>(candidates.size());
  for (const CandidateBox& c : candidates) {
    if (c.box.w <= 0 || c.box.h <= 0 || c.box.x < 0 || c.box.y < 0 ||
        c.box.x + c.box.w > img_w + 1e-9 || c.box.y + c.box.h > img_h + 1e-9) {
      throw std::invalid_argument("select_regions: candidate box out of image bounds");
    }
  }

  std::vector<PixelMask> masks(n);
  for (int i = 0; i < n; ++i) masks[i] = PixelMask::for_box(candidates[i].box, img_w, img_h);
  const double total_pixels = static_cast<double>(img_w) * img_h;

  PixelMask all_union = masks[0];
  for (int i = 1; i < n; ++i) all_union.or_with(masks[i]);
  const double attainable = all_union.count() / total_pixels;
  if (attainable + 1e-12 < min_coverage) {
    throw std::runtime_error("select_regions: coverage unattainable, candidates cover " +
                             std::to_string(attainable * 100.0) + "% of the image");
  }

  // Area-quartile strata.
  std::vector<int> by_area(n);
  std::iota(by_area.begin(), by_area.end(), 0);
  std::stable_sort(by_area.begin(), by_area.end(), [&](int a, int b) {
    return candidates[a].box.w * candidates[a].box.h < candidates[b].box.w * candidates[b].box.h;
  });
  std::vector<int> stratum(n);
  for (int rank = 0; rank < n; ++rank) {
    stratum[by_area[rank]] = std::min(3, static_cast<int>(4ll * rank / n));
  }
  int populated_strata = 0;
  {
    bool seen[4] = {false, false, false, false};
    for (int i = 0; i < n; ++i) seen[stratum[i]] = true;
    for (bool s : seen) populated_strata += s ? 1 : 0;
  }

  // Within each stratum: score descending, seeded shuffle breaking ties.
  Rng rng(seed);
  std::vector<uint64_t> tiebreak(n);
  for (int i = 0; i < n; ++i) tiebreak[i] = rng.next_u64();
  std::vector<std::vector<int>> buckets(4);
  for (int i = 0; i < n; ++i) buckets[stratum[i]].push_back(i);
  for (auto& bucket : buckets) {
    std::stable_sort(bucket.begin(), bucket.end(), [&](int a, int b) {
      if (candidates[a].score != candidates[b].score) {
        return candidates[a].score > candidates[b].score;
      }
      if (tiebreak[a] != tiebreak[b]) return tiebreak[a] < tiebreak[b];
      return a < b;
    });
  }

  const int want = std::min(R, n);
  std::vector<int> selected;
  std::vector<char> in_selection(n, 0);
  {
    size_t heads[4] = {0, 0, 0, 0};
    while (static_cast<int>(selected.size()) < want) {
      bool advanced = false;
      for (int q = 0; q < 4 && static_cast<int>(selected.size()) < want; ++q) {
        if (heads[q] < buckets[q].size()) {
          const int idx = buckets[q][heads[q]++];
          selected.push_back(idx);
          in_selection[idx] = 1;
          advanced = true;
        }
      }
      if (!advanced) break;
    }
  }

  auto coverage_of = [&](const std::vector<int>& sel) {
    PixelMask u;
    u.words.assign(masks[0].words.size(), 0);
    for (int i : sel) u.or_with(masks[i]);
    return u;
  };
  auto strata_count = [&](const std::vector<int>& sel) {
    bool seen[4] = {false, false, false, false};
    for (int i : sel) seen[stratum[i]] = true;
    int c = 0;
    for (bool s : seen) c += s ? 1 : 0;
    return c;
  };

  // Coverage repair: swap the least-useful selected box for the unselected
  // candidate adding the most uncovered pixels, keeping the stratum spread.
  const int min_strata = std::min(3, std::min(populated_strata, want));
  std::vector<char> locked(n, 0);
  for (int iter = 0; iter < n; ++iter) {
    PixelMask covered = coverage_of(selected);
    if (covered.count() / total_pixels + 1e-12 >= min_coverage) break;

    int best_in = -1;
    long long best_gain = 0;
    for (int i = 0; i < n; ++i) {
      if (in_selection[i]) continue;
      const long long gain = masks[i].count_new(covered);
      if (gain > best_gain ||
          (gain == best_gain && best_in >= 0 && gain > 0 &&
           (candidates[i].score > candidates[best_in].score ||
            (candidates[i].score == candidates[best_in].score && i < best_in)))) {
        best_gain = gain;
        best_in = i;
      }
    }
    if (best_in < 0 || best_gain == 0) {
      throw std::runtime_error("select_regions: coverage stalled at " +
                               std::to_string(covered.count() / total_pixels * 100.0) + "%");
    }

    if (static_cast<int>(selected.size()) < want) {
      selected.push_back(best_in);
      in_selection[best_in] = 1;
      locked[best_in] = 1;
      continue;
    }

    // Unique pixels each selected box would forfeit, with best_in assumed in.
    int best_out = -1;
    long long best_loss = 0;
    for (size_t slot = 0; slot < selected.size(); ++slot) {
      const int cand = selected[slot];
      if (locked[cand]) continue;
      std::vector<int> rest;
      rest.reserve(selected.size());
      for (size_t k = 0; k < selected.size(); ++k) {
        if (k != slot) rest.push_back(selected[k]);
      }
      rest.push_back(best_in);
      if (strata_count(rest) < min_strata) continue;
      const long long loss = masks[cand].count_new(coverage_of(rest));
      if (best_out < 0 || loss < best_loss ||
          (loss == best_loss && candidates[cand].score < candidates[best_out].score)) {
        best_loss = loss;
        best_out = cand;
      }
    }
    if (best_out < 0) {
      throw std::runtime_error("select_regions: coverage stalled at " +
                               std::to_string(covered.count() / total_pixels * 100.0) + "%");
    }
    for (size_t slot = 0; slot < selected.size(); ++slot) {
      if (selected[slot] == best_out) {
        selected[slot] = best_in;
        break;
      }
    }
    in_selection[best_out] = 0;
    in_selection[best_in] = 1;
    locked[best_in] = 1;
  }

  PixelMask final_cover = coverage_of(selected);
  if (final_cover.count() / total_pixels + 1e-12 < min_coverage) {
    throw std::runtime_error("select_regions: coverage stalled at " +
                             std::to_string(final_cover.count() / total_pixels * 100.0) + "%");
  }

  std::vector<std::pair<Vec, BoundingBox>> picked;
  picked.reserve(selected.size());
  for (int i : selected) picked.emplace_back(candidates[i].feat, candidates[i].box);
  return make_region_set(picked, img_w, img_h);
}

}  // namespace capra
