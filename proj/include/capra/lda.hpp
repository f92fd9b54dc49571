#pragma once

#include "capra/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace capra {

// Topic model fitted by collapsed Gibbs sampling. Counts are integers and
// conserved by every sweep; fitted models are immutable during inference.
struct LdaModel {
  int K = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::string> vocab;  // word id -> word
  std::map<std::string, int> word_ids;
  Eigen::MatrixXi topic_word;  // K x V
  Eigen::VectorXi topic_total;  // K
  std::vector<std::vector<int>> doc_topics;  // training assignments (not serialized)

  int vocab_size() const { return static_cast<int>(vocab.size()); }
};

using LdaSweepHook = std::function<void(const LdaModel&, int sweep)>;

// alpha <= 0 selects the 50/K heuristic; beta <= 0 selects 0.01.
LdaModel lda_fit(const std::vector<std::vector<std::string>>& corpus, int K,
                 double alpha, double beta, int iterations, uint64_t seed,
                 const LdaSweepHook& hook = nullptr);

// Gibbs sampling over the held-fixed topic-word counts; returns the smoothed
// document-topic proportions (n_k + alpha) / (N + K alpha), averaged over the
// post-burn-in sweeps. Tokens outside the model vocabulary are dropped; a
// document with no in-vocabulary tokens is an error.
Vec lda_infer(const LdaModel& model, const std::vector<std::string>& doc,
              int iterations, uint64_t seed, int burn_in = -1);

void save_lda(const std::string& path, const LdaModel& model);
LdaModel load_lda(const std::string& path);

}  // namespace capra
