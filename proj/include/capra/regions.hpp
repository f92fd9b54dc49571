#pragma once

#include "capra/adam.hpp"
#include "capra/types.hpp"

#include <cstdint>
#include <vector>

namespace capra {

// Axis-aligned box, top-left origin, pixel units.
struct BoundingBox {
  double x = 0, y = 0, w = 0, h = 0;
};

struct CandidateBox {
  BoundingBox box;
  Vec feat;            // ingested feature vector (no geometry)
  double score = 0.0;  // objectness
};

struct Region {
  Vec feat;  // ingested features with the 5 geometry values appended
  BoundingBox box;
};

// Regions kept per image at full scale.
inline constexpr int kDefaultRegionCount = 30;

struct RegionSet {
  std::vector<Region> regions;

  int count() const { return static_cast<int>(regions.size()); }
  // Region feature vectors as columns of a D x R matrix.
  Mat feature_matrix() const;
};

// (center_x/W, center_y/H, w/W, h/H, area/(W*H)). Throws on a zero image
// dimension or a degenerate box.
Vec geometry_features(const BoundingBox& box, int img_w, int img_h);

// Intersection area divided by the positive box's area; the overlap measure
// used when mining negatives against annotated objects.
double overlap_over_positive(const BoundingBox& candidate, const BoundingBox& positive);

struct LogisticModel {
  Vec w;
  double b = 0.0;
};

// Binary logistic regression by full-batch ADAM on the mean cross-entropy.
LogisticModel objectness_train(const std::vector<Vec>& positives,
                               const std::vector<Vec>& negatives,
                               const AdamConfig& adam, int steps, uint64_t seed);

double objectness_score(const LogisticModel& model, const Vec& feat);

RegionSet make_region_set(const std::vector<std::pair<Vec, BoundingBox>>& feats_boxes,
                          int img_w, int img_h);

// Picks min(R, #candidates) regions by score under two constraints: the
// selected boxes' union must cover at least `min_coverage` of the image
// (measured on the integer pixel grid) and box sizes should stay diverse
// (candidates are bucketed into 4 area quartile strata and drawn
// round-robin, with a seeded shuffle breaking score ties). Throws, naming
// the achieved coverage, when no selection can reach the threshold.
RegionSet select_regions(const std::vector<CandidateBox>& candidates, int R,
                         int img_w, int img_h, uint64_t seed,
                         double min_coverage = 0.95);

}  // namespace capra
