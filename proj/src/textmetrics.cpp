#include "capra/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace capra {

namespace {

bool is_split_punct(char c) {
  return c == ',' || c == '.' || c == '!' || c == '?' || c == ';' || c == ':';
}

const char* kReserved[3] = {"#BEGIN#", "#END#", "#OOV#"};

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, long long>;

NgramCounts ngram_counts(const TokenList& toks, int n) {
  NgramCounts counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    counts[Ngram(toks.begin() + i, toks.begin() + i + n)] += 1;
  }
  return counts;
}

int lcs_length(const TokenList& a, const TokenList& b) {
  const size_t m = a.size(), n = b.size();
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

void check_pairing(const std::vector<TokenList>& candidates,
                   const std::vector<std::vector<TokenList>>& references,
                   const char* op) {
  if (candidates.empty()) throw std::invalid_argument(std::string(op) + ": empty candidate list");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument(std::string(op) + ": candidate/reference count mismatch");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument(std::string(op) + ": image with no references");
  }
}

}  // namespace

TokenList tokenize(const std::string& sentence) {
  std::string spaced;
  spaced.reserve(sentence.size() * 2);
  for (char ch : sentence) {
    const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (is_split_punct(lower)) {
      spaced += ' ';
      spaced += lower;
      spaced += ' ';
    } else {
      spaced += lower;
    }
  }
  TokenList out;
  std::istringstream stream(spaced);
  std::string tok;
  while (stream >> tok) out.push_back(tok);
  return out;
}

int Vocabulary::encode_token(const std::string& token) const {
  const auto it = index.find(token);
  return it == index.end() ? kOov : it->second;
}

std::vector<int> Vocabulary::encode(const TokenList& toks) const {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(encode_token(t));
  return ids;
}

TokenList Vocabulary::decode(const std::vector<int>& ids) const {
  TokenList out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= size()) throw std::invalid_argument("Vocabulary: index out of range");
    out.push_back(tokens[id]);
  }
  return out;
}

Vocabulary build_vocab(const std::vector<TokenList>& corpus, int min_freq) {
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
  std::map<std::string, long long> freq;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) freq[tok] += 1;
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, count] : freq) {
    if (count < min_freq) continue;
    if (tok == kReserved[0] || tok == kReserved[1] || tok == kReserved[2]) continue;
    kept.emplace_back(tok, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.min_freq = min_freq;
  for (const char* r : kReserved) vocab.tokens.emplace_back(r);
  for (const auto& [tok, count] : kept) vocab.tokens.push_back(tok);
  for (int i = 0; i < vocab.size(); ++i) vocab.index[vocab.tokens[i]] = i;
  return vocab;
}

double bleu(const std::vector<TokenList>& candidates,
            const std::vector<std::vector<TokenList>>& references, int n) {
  check_pairing(candidates, references, "bleu");
  if (n < 1 || n > 4) throw std::invalid_argument("bleu: order must be in 1..4");

  std::vector<long long> matches(n, 0), totals(n, 0);
  long long cand_len = 0, ref_len = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenList& cand = candidates[i];
    cand_len += static_cast<long long>(cand.size());

    // Closest reference length; ties go to the shorter reference.
    long long best_ref = static_cast<long long>(references[i][0].size());
    for (const TokenList& ref : references[i]) {
      const long long rl = static_cast<long long>(ref.size());
      const long long cl = static_cast<long long>(cand.size());
      if (std::llabs(rl - cl) < std::llabs(best_ref - cl) ||
          (std::llabs(rl - cl) == std::llabs(best_ref - cl) && rl < best_ref)) {
        best_ref = rl;
      }
    }
    ref_len += best_ref;

    for (int order = 1; order <= n; ++order) {
      const NgramCounts cand_counts = ngram_counts(cand, order);
      NgramCounts max_ref;
      for (const TokenList& ref : references[i]) {
        for (const auto& [gram, count] : ngram_counts(ref, order)) {
          max_ref[gram] = std::max(max_ref[gram], count);
        }
      }
      for (const auto& [gram, count] : cand_counts) {
        const auto it = max_ref.find(gram);
        matches[order - 1] += std::min(count, it == max_ref.end() ? 0ll : it->second);
      }
      totals[order - 1] += std::max<long long>(0, static_cast<long long>(cand.size()) - order + 1);
    }
  }

  double log_precision = 0.0;
  for (int order = 0; order < n; ++order) {
    if (totals[order] == 0 || matches[order] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matches[order]) / totals[order]);
  }
  if (cand_len == 0) return 0.0;
  const double bp = cand_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / cand_len);
  return bp * std::exp(log_precision / n);
}

double rouge_l(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references, double beta) {
  check_pairing(candidates, references, "rouge_l");
  const double b2 = beta * beta;
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    double best = 0.0;
    for (const TokenList& ref : references[i]) {
      if (candidates[i].empty() || ref.empty()) continue;
      const double lcs = lcs_length(candidates[i], ref);
      const double recall = lcs / static_cast<double>(ref.size());
      const double precision = lcs / static_cast<double>(candidates[i].size());
      if (recall + b2 * precision > 0.0) {
        best = std::max(best, (1.0 + b2) * recall * precision / (recall + b2 * precision));
      }
    }
    total += best;
  }
  return total / static_cast<double>(candidates.size());
}

double cider_d(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references, double sigma) {
  check_pairing(candidates, references, "cider_d");
  const size_t num_images = candidates.size();
  if (num_images < 2) {
    throw std::invalid_argument("cider_d: needs at least two images (degenerate IDF otherwise)");
  }
  constexpr int kMaxOrder = 4;

  // Document frequency: number of images whose reference set contains the
  // n-gram at least once.
  std::map<Ngram, long long> doc_freq;
  for (const auto& refs : references) {
    std::map<Ngram, long long> seen;
    for (const TokenList& ref : refs) {
      for (int order = 1; order <= kMaxOrder; ++order) {
        for (const auto& [gram, count] : ngram_counts(ref, order)) seen[gram] = 1;
      }
    }
    for (const auto& [gram, one] : seen) doc_freq[gram] += 1;
  }
  const double log_images = std::log(static_cast<double>(num_images));

  struct TfIdf {
    std::vector<std::map<Ngram, double>> vec;
    std::vector<double> norm;
    double length = 0.0;
  };
  auto vectorize = [&](const TokenList& toks) {
    TfIdf out;
    out.vec.resize(kMaxOrder);
    out.norm.assign(kMaxOrder, 0.0);
    out.length = static_cast<double>(toks.size());
    for (int order = 1; order <= kMaxOrder; ++order) {
      for (const auto& [gram, count] : ngram_counts(toks, order)) {
        const auto it = doc_freq.find(gram);
        const double df = it == doc_freq.end() ? 0.0 : static_cast<double>(it->second);
        const double weight = count * (log_images - std::log(std::max(1.0, df)));
        out.vec[order - 1][gram] = weight;
        out.norm[order - 1] += weight * weight;
      }
      out.norm[order - 1] = std::sqrt(out.norm[order - 1]);
    }
    return out;
  };

  double corpus = 0.0;
  for (size_t i = 0; i < num_images; ++i) {
    const TfIdf hyp = vectorize(candidates[i]);
    std::vector<double> score(kMaxOrder, 0.0);
    for (const TokenList& ref : references[i]) {
      const TfIdf rv = vectorize(ref);
      const double delta = hyp.length - rv.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      for (int order = 0; order < kMaxOrder; ++order) {
        double dot = 0.0;
        for (const auto& [gram, weight] : hyp.vec[order]) {
          const auto it = rv.vec[order].find(gram);
          if (it != rv.vec[order].end()) dot += std::min(weight, it->second) * it->second;
        }
        if (hyp.norm[order] > 0.0 && rv.norm[order] > 0.0) {
          dot /= hyp.norm[order] * rv.norm[order];
        } else {
          dot = 0.0;
        }
        score[order] += dot * penalty;
      }
    }
    double image_score = 0.0;
    for (int order = 0; order < kMaxOrder; ++order) {
      image_score += score[order] / static_cast<double>(references[i].size());
    }
    corpus += image_score / kMaxOrder * 10.0;
  }
  return corpus / static_cast<double>(num_images);
}

}  // namespace capra
