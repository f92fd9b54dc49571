#pragma once

#include "capra/captioner.hpp"

#include <string>
#include <vector>

namespace capra {

// Beam-search candidate: content tokens (markers excluded), summed token
// log-probability (the #END# probability is included once finished), and
// the decoder state after the last consumed token.
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  DecoderState state;
  bool finished = false;
};

struct DecodeResult {
  std::vector<int> tokens;               // content tokens, no markers
  std::vector<Vec> attention_per_step;   // one entry per emitted token
  double log_prob = 0.0;                 // includes the #END# step when taken
};

// Argmax decoding; #BEGIN# is never emitted and ties resolve to the lowest
// token index. Stops at #END# or after max_len content tokens.
DecodeResult greedy_decode(const CaptionModel& model, const Mat& region_feats,
                           const Vec* scene, int max_len);
DecodeResult greedy_decode(const CaptionModel& model, const RegionSet& regions,
                           const Vec* scene, int max_len);

// Width-limited best-first search over token expansions ranked by summed
// log-probability (no length normalization). Finished hypotheses retire to
// the result pool; hypotheses hitting max_len retire unfinished. Ties break
// by token index, then insertion order. The ranked pool is returned with
// duplicate token sequences removed.
std::vector<Hypothesis> beam_decode(const CaptionModel& model, const Mat& region_feats,
                                    const Vec* scene, int beam, int max_len);
std::vector<Hypothesis> beam_decode(const CaptionModel& model, const RegionSet& regions,
                                    const Vec* scene, int beam, int max_len);

// Teacher-forces `tokens` up to (and including) the step emitting
// tokens[position] and returns the region with maximal attention weight at
// that step (ties to the lowest region index).
int patch_word_match(const CaptionModel& model, const RegionSet& regions, const Vec* scene,
                     const std::vector<int>& tokens, int position);

// Per-step pixel grids: cell (x, y) accumulates the attention weight of
// every region whose box contains that pixel; uncovered cells stay 0.
std::vector<Mat> attention_heatmap(const std::vector<Vec>& weights_per_step,
                                   const std::vector<BoundingBox>& boxes,
                                   int img_w, int img_h);

// Plain-text portable graymap, values scaled to 0..255 by the max cell.
void write_pgm(const std::string& path, const Mat& grid);

// Decodes with a one-hot scene vector in place of the predicted one.
DecodeResult distort_scene_decode(const CaptionModel& model, const Mat& region_feats,
                                  int topic_index, int beam, int max_len);

}  // namespace capra
