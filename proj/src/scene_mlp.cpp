#include "capra/scene_mlp.hpp"

#include "capra/autodiff.hpp"
#include "capra/numerics.hpp"
#include "capra/rng.hpp"
#include "capra/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace capra {

namespace {

std::string weight_key(int layer) { return "W" + std::to_string(layer); }
std::string bias_key(int layer) { return "b" + std::to_string(layer); }

ParamMap to_params(const SceneMlpParams& mlp) {
  ParamMap p;
  for (int l = 0; l < mlp.layer_count(); ++l) {
    p[weight_key(l)] = mlp.weights[l];
    p[bias_key(l)] = Mat(mlp.biases[l]);
  }
  return p;
}

SceneMlpParams from_params(const ParamMap& p, int layers) {
  SceneMlpParams mlp;
  for (int l = 0; l < layers; ++l) {
    mlp.weights.push_back(p.at(weight_key(l)));
    mlp.biases.push_back(Vec(p.at(bias_key(l)).col(0)));
  }
  return mlp;
}

}  // namespace

SceneMlpParams scene_mlp_init(int input_dim, const std::vector<int>& hidden_sizes,
                              int topics, uint64_t seed, double scale) {
  if (input_dim <= 0 || topics <= 0) throw std::invalid_argument("scene_mlp_init: bad dimensions");
  Rng rng(seed);
  SceneMlpParams mlp;
  int in = input_dim;
  std::vector<int> sizes = hidden_sizes;
  sizes.push_back(topics);
  for (int out : sizes) {
    if (out <= 0) throw std::invalid_argument("scene_mlp_init: bad layer size");
    Mat w(out, in);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.gaussian();
    }
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Vec::Zero(out));
    in = out;
  }
  return mlp;
}

SceneMlpTrainResult scene_mlp_train(const std::vector<Vec>& features,
                                    const std::vector<Vec>& targets,
                                    const std::vector<int>& hidden_sizes,
                                    const AdamConfig& adam, int epochs, int batch,
                                    uint64_t seed) {
  if (features.size() != targets.size()) {
    throw std::invalid_argument("scene_mlp_train: feature/target count mismatch");
  }
  if (features.empty()) throw std::invalid_argument("scene_mlp_train: empty training set");
  const int input_dim = static_cast<int>(features[0].size());
  const int topics = static_cast<int>(targets[0].size());
  for (const Vec& f : features) {
    if (f.size() != input_dim) throw std::invalid_argument("scene_mlp_train: feature dim mismatch");
  }
  for (const Vec& t : targets) {
    if (t.size() != topics) throw std::invalid_argument("scene_mlp_train: target dim mismatch");
  }
  if (batch <= 0) batch = static_cast<int>(features.size());

  Rng rng(seed);
  SceneMlpParams mlp = scene_mlp_init(input_dim, hidden_sizes, topics, rng.next_u64());
  ParamMap params = to_params(mlp);
  const int layers = mlp.layer_count();
  AdamState state;
  state.cfg = adam;

  auto batch_loss = [&](Tape& tape, const std::map<std::string, Var>& vars,
                        const std::vector<int>& index) {
    Var total;
    for (size_t n = 0; n < index.size(); ++n) {
      Var x = tape.constant(Mat(features[index[n]]));
      for (int l = 0; l < layers; ++l) {
        Var z = add(matmul(vars.at(weight_key(l)), x), vars.at(bias_key(l)));
        x = l + 1 < layers ? sigmoid(z) : z;
      }
      Var xent = softmax_cross_entropy(x, targets[index[n]]);
      total = n == 0 ? xent : add(total, xent);
    }
    return scale(total, 1.0 / static_cast<double>(index.size()));
  };

  SceneMlpTrainResult result;
  std::vector<int> order(features.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t stop = std::min(order.size(), start + batch);
      std::vector<int> index(order.begin() + start, order.begin() + stop);
      Tape tape;
      auto vars = tape.parameters(params);
      Var loss = batch_loss(tape, vars, index);
      epoch_loss += loss.scalar();
      batches += 1;
      ParamMap grads = tape.gradients(loss);
      adam_step(params, grads, state);
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1, batches));
  }
  result.params = from_params(params, layers);
  return result;
}

Vec scene_predict(const SceneMlpParams& mlp, const Vec& feature) {
  if (mlp.layer_count() == 0) throw std::invalid_argument("scene_predict: empty model");
  if (feature.size() != mlp.input_dim()) {
    throw std::invalid_argument("scene_predict: feature dimension mismatch");
  }
  Vec x = feature;
  for (int l = 0; l < mlp.layer_count(); ++l) {
    Vec z = mlp.weights[l] * x + mlp.biases[l];
    if (l + 1 < mlp.layer_count()) {
      x = z.unaryExpr([](double v) { return sigmoid_scalar(v); });
    } else {
      x = softmax(z);
    }
  }
  return x;
}

void write_scene_mlp(std::ostream& out, const SceneMlpParams& mlp) {
  write_u32(out, static_cast<uint32_t>(mlp.layer_count()));
  for (int l = 0; l < mlp.layer_count(); ++l) {
    write_mat(out, mlp.weights[l]);
    write_mat(out, Mat(mlp.biases[l]));
  }
}

SceneMlpParams read_scene_mlp(std::istream& in) {
  SceneMlpParams mlp;
  const uint32_t layers = read_u32(in);
  for (uint32_t l = 0; l < layers; ++l) {
    mlp.weights.push_back(read_mat(in));
    mlp.biases.push_back(Vec(read_mat(in).col(0)));
  }
  return mlp;
}

void save_scene_mlp(const std::string& path, const SceneMlpParams& mlp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_scene_mlp: cannot open " + path);
  write_magic(out, "CAPRAMLP");
  write_u32(out, 1);
  write_scene_mlp(out, mlp);
  if (!out) throw std::runtime_error("save_scene_mlp: write failed");
}

SceneMlpParams load_scene_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_scene_mlp: cannot open " + path);
  read_magic(in, "CAPRAMLP");
  if (read_u32(in) != 1) throw std::runtime_error("load_scene_mlp: unsupported version");
  return read_scene_mlp(in);
}

}  // namespace capra
