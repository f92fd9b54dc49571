#pragma once

#include "capra/adam.hpp"
#include "capra/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace capra {

// Feed-forward scene predictor: sigmoid hidden layers, softmax output.
struct SceneMlpParams {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int topic_count() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
};

struct SceneMlpTrainResult {
  SceneMlpParams params;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

SceneMlpParams scene_mlp_init(int input_dim, const std::vector<int>& hidden_sizes,
                              int topics, uint64_t seed, double scale = 0.1);

// Minimizes cross-entropy between the softmax output and the soft targets by
// minibatch ADAM. Deterministic given the seed.
SceneMlpTrainResult scene_mlp_train(const std::vector<Vec>& features,
                                    const std::vector<Vec>& targets,
                                    const std::vector<int>& hidden_sizes,
                                    const AdamConfig& adam, int epochs, int batch,
                                    uint64_t seed);

// Always a valid probability vector.
Vec scene_predict(const SceneMlpParams& mlp, const Vec& feature);

void write_scene_mlp(std::ostream& out, const SceneMlpParams& mlp);
SceneMlpParams read_scene_mlp(std::istream& in);
void save_scene_mlp(const std::string& path, const SceneMlpParams& mlp);
SceneMlpParams load_scene_mlp(const std::string& path);

}  // namespace capra
