#pragma once

#include "capra/captioner.hpp"
#include "capra/scene_mlp.hpp"
#include "capra/textmetrics.hpp"
#include "capra/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capra {

// Versioned training artifact. The binary encoding is canonical, so a
// load/save round-trip is byte-identical.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::map<std::string, std::string> config;  // flat key-value echo
  Vocabulary vocab;
  ModelConfig model_cfg;
  ParamMap params;
  std::optional<SceneMlpParams> scene_mlp;
  std::string lda_path;  // reference to the topic model used in training
  int64_t step = 0;
  std::vector<double> val_history;  // validation BLEU-1 per epoch

  CaptionModel model() const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace capra
