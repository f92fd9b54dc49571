#pragma once

#include "capra/dataset.hpp"

#include <cstdint>

namespace capra {

// Synthetic corpus where region attention and scene factorization are each
// learnable and ablatable:
//   - every scene has its own word for each shared "content" concept, so the
//     scene identity is never recoverable from region features alone;
//   - each caption token is tied to one region whose feature encodes the
//     token's content prototype (plus noise) and its slot geometry, so the
//     token order is recoverable only by attending to regions (the mean
//     feature loses the content-to-slot binding).
struct SynthSpec {
  int scenes = 2;
  int vocab_per_scene = 6;   // content words per scene
  int images = 64;
  int regions_per_image = 4;  // also the caption length
  int feat_dim = 8;           // raw region feature width (geometry excluded)
  int global_dim = 8;         // whole-image feature width for the scene MLP
  double noise = 0.0;
  uint64_t seed = 1;
  int width = 224;
  int height = 224;
  double train_frac = 0.7;
  double val_frac = 0.15;  // remainder is the test split
};

struct SynthDataset {
  std::vector<DatasetRecord> train, val, test;

  std::vector<DatasetRecord> all() const;
  std::map<std::string, std::vector<std::string>> splits() const;
};

SynthDataset synth_dataset(const SynthSpec& spec);

}  // namespace capra
