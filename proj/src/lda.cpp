#include "capra/lda.hpp"

#include "capra/rng.hpp"
#include "capra/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace capra {

namespace {

int sample_from_weights(const std::vector<double>& w, Rng& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (size_t k = 0; k < w.size(); ++k) {
    acc += w[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(w.size()) - 1;
}

}  // namespace

LdaModel lda_fit(const std::vector<std::vector<std::string>>& corpus, int K,
                 double alpha, double beta, int iterations, uint64_t seed,
                 const LdaSweepHook& hook) {
  if (corpus.empty()) throw std::invalid_argument("lda_fit: empty corpus");
  if (K < 2) throw std::invalid_argument("lda_fit: K must be >= 2");

  LdaModel model;
  model.K = K;
  model.alpha = alpha > 0.0 ? alpha : 50.0 / K;
  model.beta = beta > 0.0 ? beta : 0.01;

  std::vector<std::vector<int>> docs(corpus.size());
  for (size_t d = 0; d < corpus.size(); ++d) {
    if (corpus[d].empty()) throw std::invalid_argument("lda_fit: empty document");
    for (const std::string& w : corpus[d]) {
      auto [it, inserted] = model.word_ids.try_emplace(w, model.vocab_size());
      if (inserted) model.vocab.push_back(w);
      docs[d].push_back(it->second);
    }
  }
  const int V = model.vocab_size();
  const int D = static_cast<int>(docs.size());

  model.topic_word = Eigen::MatrixXi::Zero(K, V);
  model.topic_total = Eigen::VectorXi::Zero(K);
  Eigen::MatrixXi doc_topic = Eigen::MatrixXi::Zero(D, K);
  model.doc_topics.resize(D);

  Rng rng(seed);
  for (int d = 0; d < D; ++d) {
    model.doc_topics[d].resize(docs[d].size());
    for (size_t i = 0; i < docs[d].size(); ++i) {
      const int k = rng.uniform_int(K);
      model.doc_topics[d][i] = k;
      model.topic_word(k, docs[d][i]) += 1;
      model.topic_total(k) += 1;
      doc_topic(d, k) += 1;
    }
  }

  std::vector<double> weights(K);
  const double vbeta = V * model.beta;
  for (int sweep = 0; sweep < iterations; ++sweep) {
    for (int d = 0; d < D; ++d) {
      for (size_t i = 0; i < docs[d].size(); ++i) {
        const int w = docs[d][i];
        const int old_k = model.doc_topics[d][i];
        model.topic_word(old_k, w) -= 1;
        model.topic_total(old_k) -= 1;
        doc_topic(d, old_k) -= 1;
        for (int k = 0; k < K; ++k) {
          weights[k] = (doc_topic(d, k) + model.alpha) *
                       (model.topic_word(k, w) + model.beta) /
                       (model.topic_total(k) + vbeta);
        }
        const int new_k = sample_from_weights(weights, rng);
        model.doc_topics[d][i] = new_k;
        model.topic_word(new_k, w) += 1;
        model.topic_total(new_k) += 1;
        doc_topic(d, new_k) += 1;
      }
    }
    if (hook) hook(model, sweep);
  }
  return model;
}

Vec lda_infer(const LdaModel& model, const std::vector<std::string>& doc,
              int iterations, uint64_t seed, int burn_in) {
  if (model.K < 2) throw std::invalid_argument("lda_infer: model not fitted");
  std::vector<int> tokens;
  for (const std::string& w : doc) {
    const auto it = model.word_ids.find(w);
    if (it != model.word_ids.end()) tokens.push_back(it->second);
  }
  if (tokens.empty()) {
    throw std::invalid_argument("lda_infer: document has no in-vocabulary tokens");
  }
  if (burn_in < 0) burn_in = iterations / 2;
  if (burn_in >= iterations) throw std::invalid_argument("lda_infer: burn-in exceeds iterations");

  const int K = model.K;
  const int V = model.vocab_size();
  const double vbeta = V * model.beta;
  Rng rng(seed);

  Eigen::VectorXi doc_topic = Eigen::VectorXi::Zero(K);
  std::vector<int> assignment(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    assignment[i] = rng.uniform_int(K);
    doc_topic(assignment[i]) += 1;
  }

  std::vector<double> weights(K);
  Vec accumulated = Vec::Zero(K);
  int kept = 0;
  for (int sweep = 0; sweep < iterations; ++sweep) {
    for (size_t i = 0; i < tokens.size(); ++i) {
      const int w = tokens[i];
      doc_topic(assignment[i]) -= 1;
      for (int k = 0; k < K; ++k) {
        weights[k] = (doc_topic(k) + model.alpha) *
                     (model.topic_word(k, w) + model.beta) /
                     (model.topic_total(k) + vbeta);
      }
      assignment[i] = sample_from_weights(weights, rng);
      doc_topic(assignment[i]) += 1;
    }
    if (sweep >= burn_in) {
      for (int k = 0; k < K; ++k) accumulated(k) += doc_topic(k);
      kept += 1;
    }
  }

  const double n = static_cast<double>(tokens.size());
  Vec s(K);
  for (int k = 0; k < K; ++k) {
    s(k) = (accumulated(k) / kept + model.alpha) / (n + K * model.alpha);
  }
  return s;
}

void save_lda(const std::string& path, const LdaModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_lda: cannot open " + path);
  write_magic(out, "CAPRALDA");
  write_u32(out, 1);
  write_u32(out, static_cast<uint32_t>(model.K));
  write_f64(out, model.alpha);
  write_f64(out, model.beta);
  write_u32(out, static_cast<uint32_t>(model.vocab_size()));
  for (const std::string& w : model.vocab) write_string(out, w);
  for (int k = 0; k < model.K; ++k) {
    for (int v = 0; v < model.vocab_size(); ++v) {
      write_i64(out, model.topic_word(k, v));
    }
  }
  if (!out) throw std::runtime_error("save_lda: write failed for " + path);
}

LdaModel load_lda(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_lda: cannot open " + path);
  read_magic(in, "CAPRALDA");
  const uint32_t version = read_u32(in);
  if (version != 1) throw std::runtime_error("load_lda: unsupported version");
  LdaModel model;
  model.K = static_cast<int>(read_u32(in));
  model.alpha = read_f64(in);
  model.beta = read_f64(in);
  const int V = static_cast<int>(read_u32(in));
  model.vocab.reserve(V);
  for (int v = 0; v < V; ++v) {
    model.vocab.push_back(read_string(in));
    model.word_ids[model.vocab.back()] = v;
  }
  model.topic_word = Eigen::MatrixXi::Zero(model.K, V);
  model.topic_total = Eigen::VectorXi::Zero(model.K);
  for (int k = 0; k < model.K; ++k) {
    for (int v = 0; v < V; ++v) {
      model.topic_word(k, v) = static_cast<int>(read_i64(in));
      model.topic_total(k) += model.topic_word(k, v);
    }
  }
  return model;
}

}  // namespace capra
