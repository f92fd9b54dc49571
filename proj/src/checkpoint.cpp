#include "capra/checkpoint.hpp"

#include "capra/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace capra {

CaptionModel Checkpoint::model() const {
  CaptionModel m = CaptionModel::build(model_cfg);
  for (auto& [name, mat] : m.params) {
    const auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("Checkpoint: missing parameter " + name);
    if (it->second.rows() != mat.rows() || it->second.cols() != mat.cols()) {
      throw std::runtime_error("Checkpoint: shape mismatch for " + name);
    }
    mat = it->second;
  }
  return m;
}

namespace {

void write_model_cfg(std::ostream& out, const ModelConfig& cfg) {
  write_u32(out, static_cast<uint32_t>(cfg.vocab));
  write_u32(out, static_cast<uint32_t>(cfg.hidden));
  write_u32(out, static_cast<uint32_t>(cfg.embed));
  write_u32(out, static_cast<uint32_t>(cfg.feat_dim));
  write_u32(out, static_cast<uint32_t>(cfg.rank));
  write_u32(out, static_cast<uint32_t>(cfg.topics));
  write_u8(out, cfg.region_attention);
  write_u8(out, cfg.scene_factored);
  write_u8(out, cfg.factor_cell_gate);
  write_u8(out, cfg.factor_bottom);
  write_u8(out, cfg.factor_top);
  write_u8(out, cfg.attn_use_h1);
}

ModelConfig read_model_cfg(std::istream& in) {
  ModelConfig cfg;
  cfg.vocab = static_cast<int>(read_u32(in));
  cfg.hidden = static_cast<int>(read_u32(in));
  cfg.embed = static_cast<int>(read_u32(in));
  cfg.feat_dim = static_cast<int>(read_u32(in));
  cfg.rank = static_cast<int>(read_u32(in));
  cfg.topics = static_cast<int>(read_u32(in));
  cfg.region_attention = read_u8(in) != 0;
  cfg.scene_factored = read_u8(in) != 0;
  cfg.factor_cell_gate = read_u8(in) != 0;
  cfg.factor_bottom = read_u8(in) != 0;
  cfg.factor_top = read_u8(in) != 0;
  cfg.attn_use_h1 = read_u8(in) != 0;
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  write_magic(out, "CAPRACKP");
  write_u32(out, Checkpoint::kVersion);

  write_u32(out, static_cast<uint32_t>(ckpt.config.size()));
  for (const auto& [k, v] : ckpt.config) {
    write_string(out, k);
    write_string(out, v);
  }

  write_u32(out, static_cast<uint32_t>(ckpt.vocab.min_freq));
  write_u32(out, static_cast<uint32_t>(ckpt.vocab.tokens.size()));
  for (const std::string& tok : ckpt.vocab.tokens) write_string(out, tok);

  write_model_cfg(out, ckpt.model_cfg);

  write_u32(out, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, mat] : ckpt.params) {
    write_string(out, name);
    write_mat(out, mat);
  }

  write_u8(out, ckpt.scene_mlp.has_value());
  if (ckpt.scene_mlp) write_scene_mlp(out, *ckpt.scene_mlp);

  write_string(out, ckpt.lda_path);
  write_i64(out, ckpt.step);
  write_u32(out, static_cast<uint32_t>(ckpt.val_history.size()));
  for (double v : ckpt.val_history) write_f64(out, v);

  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  read_magic(in, "CAPRACKP");
  const uint32_t version = read_u32(in);
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;

  const uint32_t config_entries = read_u32(in);
  for (uint32_t i = 0; i < config_entries; ++i) {
    std::string k = read_string(in);
    ckpt.config[k] = read_string(in);
  }

  ckpt.vocab.min_freq = static_cast<int>(read_u32(in));
  const uint32_t vocab_size = read_u32(in);
  for (uint32_t i = 0; i < vocab_size; ++i) {
    ckpt.vocab.tokens.push_back(read_string(in));
    ckpt.vocab.index[ckpt.vocab.tokens.back()] = static_cast<int>(i);
  }

  ckpt.model_cfg = read_model_cfg(in);

  const uint32_t param_count = read_u32(in);
  for (uint32_t i = 0; i < param_count; ++i) {
    std::string name = read_string(in);
    ckpt.params[name] = read_mat(in);
  }

  if (read_u8(in) != 0) ckpt.scene_mlp = read_scene_mlp(in);
  ckpt.lda_path = read_string(in);
  ckpt.step = read_i64(in);
  const uint32_t history = read_u32(in);
  for (uint32_t i = 0; i < history; ++i) ckpt.val_history.push_back(read_f64(in));
  return ckpt;
}

}  // namespace capra
