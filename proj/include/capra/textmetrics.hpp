#pragma once

#include <map>
#include <string>
#include <vector>

namespace capra {

using TokenList = std::vector<std::string>;

// Lowercase, whitespace-split, with , . ! ? ; : broken out as separate
// tokens. Idempotent over its own output.
TokenList tokenize(const std::string& sentence);

// Token inventory with three reserved entries at fixed indices.
struct Vocabulary {
  static constexpr int kBegin = 0;
  static constexpr int kEnd = 1;
  static constexpr int kOov = 2;

  std::vector<std::string> tokens;  // index -> token, reserved entries first
  std::map<std::string, int> index;
  int min_freq = 1;

  int size() const { return static_cast<int>(tokens.size()); }
  int encode_token(const std::string& token) const;
  std::vector<int> encode(const TokenList& toks) const;
  TokenList decode(const std::vector<int>& ids) const;
};

// Keeps tokens whose corpus frequency meets min_freq, ordered by
// (frequency desc, token asc) after the reserved entries.
Vocabulary build_vocab(const std::vector<TokenList>& corpus, int min_freq);

// Corpus-level BLEU-n: clipped n-gram precisions, geometric mean over
// orders 1..n, multiplied by the closest-reference brevity penalty.
// A zero precision at any order yields 0.
double bleu(const std::vector<TokenList>& candidates,
            const std::vector<std::vector<TokenList>>& references, int n);

// Mean over candidates of the best-reference LCS F-measure.
double rouge_l(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references,
               double beta = 1.2);

// CIDEr-D over orders 1..4 with the sigma = 6 length gaussian. Requires at
// least two images (the IDF is degenerate otherwise). The returned score is
// on the raw 0..10 scale; reports multiply by 100.
double cider_d(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references,
               double sigma = 6.0);

}  // namespace capra
