#include "capra/train.hpp"

#include "capra/adam.hpp"
#include "capra/decode.hpp"
#include "capra/rng.hpp"
#include "capra/textmetrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace capra {

Mode parse_mode(const std::string& name) {
  if (name == "base") return Mode::Base;
  if (name == "ra") return Mode::RegionAttention;
  if (name == "sf") return Mode::SceneFactored;
  if (name == "ra+sf" || name == "sf+ra") return Mode::Full;
  throw std::invalid_argument("unknown mode '" + name + "' (expected base|ra|sf|ra+sf)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Base: return "base";
    case Mode::RegionAttention: return "ra";
    case Mode::SceneFactored: return "sf";
    case Mode::Full: return "ra+sf";
  }
  return "?";
}

std::map<std::string, std::string> TrainConfig::echo() const {
  std::map<std::string, std::string> kv;
  kv["hidden"] = std::to_string(hidden);
  kv["embed"] = std::to_string(embed);
  kv["rank"] = std::to_string(rank);
  kv["topics"] = std::to_string(topics);
  kv["regions"] = std::to_string(regions);
  kv["batch"] = std::to_string(batch);
  kv["lr"] = std::to_string(lr);
  kv["beam"] = std::to_string(beam);
  kv["epochs"] = std::to_string(max_epochs);
  kv["patience"] = std::to_string(patience);
  kv["seed"] = std::to_string(seed);
  kv["mode"] = mode_name(mode);
  kv["min-freq"] = std::to_string(min_freq);
  kv["max-len"] = std::to_string(max_len);
  kv["scene-source"] = scene_source;
  kv["factor-g"] = factor_cell_gate ? "1" : "0";
  if (!lda_path.empty()) kv["lda"] = lda_path;
  kv["lda-alpha"] = std::to_string(lda_alpha);
  return kv;
}

namespace {

bool uses_attention(Mode m) { return m == Mode::RegionAttention || m == Mode::Full; }
bool uses_scene(Mode m) { return m == Mode::SceneFactored || m == Mode::Full; }

struct PreparedRecord {
  Mat feats;                           // D x R
  std::vector<std::vector<int>> caps;  // encoded captions
  std::vector<TokenList> cap_tokens;   // tokenized reference captions
  Vec scene;                           // empty unless scene-factored
};

std::vector<TokenList> caption_doc(const DatasetRecord& rec) {
  std::vector<TokenList> docs;
  for (const std::string& c : rec.captions) docs.push_back(tokenize(c));
  return docs;
}

std::vector<std::string> flat_tokens(const DatasetRecord& rec) {
  std::vector<std::string> doc;
  for (const std::string& c : rec.captions) {
    for (std::string& t : tokenize(c)) doc.push_back(std::move(t));
  }
  return doc;
}

}  // namespace

std::vector<Vec> lda_scene_vectors(const LdaModel& lda, const std::vector<DatasetRecord>& records,
                                   int infer_iters, uint64_t seed) {
  std::vector<Vec> out;
  out.reserve(records.size());
  Rng rng(seed);
  for (const DatasetRecord& rec : records) {
    out.push_back(lda_infer(lda, flat_tokens(rec), infer_iters, rng.next_u64()));
  }
  return out;
}

std::vector<Vec> mlp_scene_vectors(const SceneMlpParams& mlp,
                                   const std::vector<DatasetRecord>& records) {
  std::vector<Vec> out;
  out.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    if (rec.global.size() == 0) {
      throw std::runtime_error("mlp_scene_vectors: record " + rec.id + " has no global feature");
    }
    out.push_back(scene_predict(mlp, rec.global));
  }
  return out;
}

std::vector<Vec> record_scene_vectors(const std::vector<DatasetRecord>& records) {
  std::vector<Vec> out;
  out.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    if (rec.scene.size() == 0) {
      throw std::runtime_error("record_scene_vectors: record " + rec.id + " has no scene vector");
    }
    out.push_back(rec.scene);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::vector<DatasetRecord>& train_set,
                  const std::vector<DatasetRecord>& val_set, std::ostream* log) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation split");
  if (cfg.hidden <= 0 || cfg.embed <= 0 || cfg.batch <= 0 || cfg.regions <= 0 ||
      cfg.max_epochs <= 0 || cfg.patience <= 0 || !(cfg.lr > 0.0) || cfg.max_len <= 0) {
    throw std::invalid_argument("train: all sizes and rates must be positive");
  }
  if (uses_scene(cfg.mode) && cfg.topics < 2) {
    throw std::invalid_argument("train: scene-factored modes need topics >= 2");
  }
  for (const DatasetRecord& rec : train_set) {
    if (rec.captions.empty()) throw std::invalid_argument("train: record " + rec.id + " has no captions");
  }

  // Vocabulary from the training captions only.
  std::vector<TokenList> corpus;
  for (const DatasetRecord& rec : train_set) {
    for (const std::string& c : rec.captions) corpus.push_back(tokenize(c));
  }
  const Vocabulary vocab = build_vocab(corpus, cfg.min_freq);

  TrainResult result;

  // Scene vectors, when the mode calls for them.
  std::vector<Vec> train_scenes, val_scenes;
  if (uses_scene(cfg.mode)) {
    if (cfg.scene_source == "lda") {
      if (!cfg.lda_path.empty()) {
        result.lda = load_lda(cfg.lda_path);
        if (result.lda->K != cfg.topics) {
          throw std::invalid_argument("train: topic model " + cfg.lda_path + " has K = " +
                                      std::to_string(result.lda->K) + " but topics = " +
                                      std::to_string(cfg.topics));
        }
      } else {
        std::vector<std::vector<std::string>> docs;
        docs.reserve(train_set.size());
        for (const DatasetRecord& rec : train_set) docs.push_back(flat_tokens(rec));
        result.lda =
            lda_fit(docs, cfg.topics, cfg.lda_alpha, cfg.lda_beta, cfg.lda_iters, cfg.seed);
      }
      train_scenes = lda_scene_vectors(*result.lda, train_set, cfg.lda_infer_iters, cfg.seed + 1);
      val_scenes = lda_scene_vectors(*result.lda, val_set, cfg.lda_infer_iters, cfg.seed + 2);
    } else if (cfg.scene_source == "record") {
      train_scenes = record_scene_vectors(train_set);
      val_scenes = record_scene_vectors(val_set);
    } else {
      throw std::invalid_argument("train: unknown scene source '" + cfg.scene_source + "'");
    }
  }

  // Region features and encoded captions.
  auto prepare = [&](const std::vector<DatasetRecord>& recs,
                     const std::vector<Vec>& scenes) {
    std::vector<PreparedRecord> out(recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
      out[i].feats = record_regions(recs[i], cfg.regions, cfg.seed).feature_matrix();
      out[i].cap_tokens = caption_doc(recs[i]);
      for (const TokenList& toks : out[i].cap_tokens) {
        if (toks.empty()) throw std::invalid_argument("train: empty caption in record " + recs[i].id);
        out[i].caps.push_back(vocab.encode(toks));
      }
      if (!scenes.empty()) out[i].scene = scenes[i];
    }
    return out;
  };
  const std::vector<PreparedRecord> train_data = prepare(train_set, train_scenes);
  const std::vector<PreparedRecord> val_data = prepare(val_set, val_scenes);

  const int feat_dim = static_cast<int>(train_data[0].feats.rows());
  for (const PreparedRecord& r : train_data) {
    if (r.feats.rows() != feat_dim) throw std::invalid_argument("train: inconsistent feature dims");
  }

  ModelConfig mc;
  mc.vocab = vocab.size();
  mc.hidden = cfg.hidden;
  mc.embed = cfg.embed;
  mc.feat_dim = feat_dim;
  mc.rank = cfg.rank > 0 ? cfg.rank : 2 * cfg.hidden;
  mc.topics = uses_scene(cfg.mode) ? cfg.topics : 0;
  mc.region_attention = uses_attention(cfg.mode);
  mc.scene_factored = uses_scene(cfg.mode);
  mc.factor_cell_gate = cfg.factor_cell_gate;
  CaptionModel model = CaptionModel::build(mc);
  Rng init_rng(cfg.seed);
  model.randomize(init_rng, cfg.init_scale);

  AdamState adam;
  adam.cfg.lr = cfg.lr;

  struct Pair {
    int record;
    int caption;
  };
  std::vector<Pair> pairs;
  for (size_t r = 0; r < train_data.size(); ++r) {
    for (size_t c = 0; c < train_data[r].caps.size(); ++c) {
      pairs.push_back(Pair{static_cast<int>(r), static_cast<int>(c)});
    }
  }

  auto validation_bleu1 = [&]() {
    std::vector<TokenList> cands;
    std::vector<std::vector<TokenList>> refs;
    for (size_t i = 0; i < val_data.size(); ++i) {
      const Vec* s = val_data[i].scene.size() > 0 ? &val_data[i].scene : nullptr;
      const DecodeResult dec = greedy_decode(model, val_data[i].feats, s, cfg.max_len);
      cands.push_back(vocab.decode(dec.tokens));
      refs.push_back(val_data[i].cap_tokens);
    }
    return bleu(cands, refs, 1);
  };

  Rng order_rng(cfg.seed + 17);
  double best_bleu = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  ParamMap best_params = model.params;
  long long best_step = 0;
  int epochs_without_improvement = 0;
  std::vector<double> history;
  bool stop = false;

  for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    order_rng.shuffle(pairs);
    double epoch_nll = 0.0;
    long long epoch_tokens = 0;
    for (size_t start = 0; start < pairs.size() && !stop; start += cfg.batch) {
      const size_t stop_idx = std::min(pairs.size(), start + cfg.batch);
      Tape tape;
      Var batch_loss;
      for (size_t p = start; p < stop_idx; ++p) {
        const PreparedRecord& rec = train_data[pairs[p].record];
        const std::vector<int>& caption = rec.caps[pairs[p].caption];
        const Vec* s = rec.scene.size() > 0 ? &rec.scene : nullptr;
        Var loss = teacher_forced_loss_tracked(tape, model, rec.feats, s, caption);
        batch_loss = p == start ? loss : add(batch_loss, loss);
        epoch_nll += loss.scalar();
        epoch_tokens += static_cast<long long>(caption.size()) + 1;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop_idx - start));
      if (!std::isfinite(batch_loss.scalar())) {
        throw std::runtime_error("train: non-finite loss in batch starting at pair " +
                                 std::to_string(start) + " of epoch " + std::to_string(epoch));
      }
      ParamMap grads = tape.gradients(batch_loss);
      adam_step(model.params, grads, adam);
      result.steps += 1;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) stop = true;
    }

    EpochStats stats;
    stats.train_loss_per_token = epoch_nll / static_cast<double>(std::max(1ll, epoch_tokens));
    stats.val_bleu1 = validation_bleu1();
    history.push_back(stats.val_bleu1);
    result.epochs.push_back(stats);
    if (log) {
      (*log) << "epoch " << epoch << " loss/token " << stats.train_loss_per_token
             << " val-bleu1 " << stats.val_bleu1 << "\n";
    }

    // Snapshot on strictly better BLEU-1; equal BLEU-1 with lower training
    // loss also refreshes the snapshot (never worse than a previous one).
    if (stats.val_bleu1 > best_bleu) {
      best_bleu = stats.val_bleu1;
      best_loss = stats.train_loss_per_token;
      best_params = model.params;
      best_step = result.steps;
      epochs_without_improvement = 0;
    } else {
      if (stats.val_bleu1 == best_bleu && stats.train_loss_per_token < best_loss) {
        best_loss = stats.train_loss_per_token;
        best_params = model.params;
        best_step = result.steps;
      }
      epochs_without_improvement += 1;
      if (epochs_without_improvement >= cfg.patience) stop = true;
    }
    if (cfg.target_train_loss > 0.0 && stats.train_loss_per_token < cfg.target_train_loss) {
      stop = true;
    }
  }

  Checkpoint ckpt;
  ckpt.config = cfg.echo();
  ckpt.vocab = vocab;
  ckpt.model_cfg = mc;
  ckpt.params = std::move(best_params);
  ckpt.step = best_step;
  ckpt.val_history = history;
  result.best = std::move(ckpt);
  return result;
}

namespace {

int config_int(const Checkpoint& ckpt, const std::string& key, int fallback) {
  const auto it = ckpt.config.find(key);
  return it == ckpt.config.end() ? fallback : std::stoi(it->second);
}

std::vector<Mat> prepared_features(const Checkpoint& ckpt,
                                   const std::vector<DatasetRecord>& records) {
  std::vector<Mat> feats;
  feats.reserve(records.size());
  const int regions = config_int(ckpt, "regions", kDefaultRegionCount);
  const auto seed_it = ckpt.config.find("seed");
  const uint64_t seed = seed_it != ckpt.config.end() ? std::stoull(seed_it->second) : 1;
  for (const DatasetRecord& rec : records) {
    Mat m = record_regions(rec, regions, seed).feature_matrix();
    if (m.rows() != ckpt.model_cfg.feat_dim) {
      throw std::runtime_error("evaluate: feature dimension mismatch for record " + rec.id);
    }
    feats.push_back(std::move(m));
  }
  return feats;
}

const Vec* scene_for(const Checkpoint& ckpt, const std::vector<Vec>& scenes, size_t i) {
  if (!ckpt.model_cfg.scene_factored) return nullptr;
  if (scenes.size() <= i || scenes[i].size() == 0) {
    throw std::runtime_error("scene-factored checkpoint needs a scene vector per record");
  }
  return &scenes[i];
}

}  // namespace

EvalResult evaluate(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                    const std::vector<Vec>& scenes, int beam) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty record set");
  const CaptionModel model = ckpt.model();
  const std::vector<Mat> feats = prepared_features(ckpt, records);

  EvalResult out;
  std::vector<TokenList> cands;
  std::vector<std::vector<TokenList>> refs;
  const int max_len = config_int(ckpt, "max-len", 30);
  for (size_t i = 0; i < records.size(); ++i) {
    const Vec* s = scene_for(ckpt, scenes, i);
    std::vector<int> tokens;
    if (beam <= 1) {
      tokens = greedy_decode(model, feats[i], s, max_len).tokens;
    } else {
      const auto ranked = beam_decode(model, feats[i], s, beam, max_len);
      if (!ranked.empty()) tokens = ranked[0].tokens;
    }
    TokenList words = ckpt.vocab.decode(tokens);
    std::string text;
    for (size_t w = 0; w < words.size(); ++w) {
      if (w > 0) text += " ";
      text += words[w];
    }
    out.captions.emplace_back(records[i].id, text);
    cands.push_back(std::move(words));
    refs.push_back(caption_doc(records[i]));
  }
  out.metrics["bleu1"] = bleu(cands, refs, 1);
  out.metrics["bleu2"] = bleu(cands, refs, 2);
  out.metrics["bleu3"] = bleu(cands, refs, 3);
  out.metrics["bleu4"] = bleu(cands, refs, 4);
  out.metrics["rougeL"] = rouge_l(cands, refs);
  out.metrics["ciderD"] = cider_d(cands, refs);
  return out;
}

RetrievalReport retrieval_eval(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                               const std::vector<Vec>& scenes) {
  const size_t n = records.size();
  if (n < 2) throw std::invalid_argument("retrieval_eval: needs at least two pairs");
  const CaptionModel model = ckpt.model();
  const std::vector<Mat> feats = prepared_features(ckpt, records);

  // One ground-truth caption per image: the record's first caption.
  std::vector<std::vector<int>> captions;
  for (const DatasetRecord& rec : records) {
    if (rec.captions.empty()) throw std::invalid_argument("retrieval_eval: record without caption");
    captions.push_back(ckpt.vocab.encode(tokenize(rec.captions[0])));
  }

  // score(i, j) = log P(S_j | I_i), the negated teacher-forced loss.
  Mat score(n, n);
  for (size_t i = 0; i < n; ++i) {
    const Vec* s = scene_for(ckpt, scenes, i);
    for (size_t j = 0; j < n; ++j) {
      score(i, j) = -teacher_forced_loss(model, feats[i], s, captions[j]);
    }
  }

  auto ranks_of = [&](bool caption_to_image) {
    std::vector<int> ranks(n);
    for (size_t q = 0; q < n; ++q) {
      int rank = 1;
      const double own = score(q, q);
      for (size_t other = 0; other < n; ++other) {
        if (other == q) continue;
        const double val = caption_to_image ? score(other, q) : score(q, other);
        if (val > own || (val == own && other < q)) rank += 1;
      }
      ranks[q] = rank;
    }
    return ranks;
  };
  auto summarize = [&](const std::vector<int>& ranks, double& r1, double& r5, double& r10,
                       double& median) {
    double c1 = 0, c5 = 0, c10 = 0;
    for (int r : ranks) {
      c1 += r <= 1;
      c5 += r <= 5;
      c10 += r <= 10;
    }
    r1 = c1 / n;
    r5 = c5 / n;
    r10 = c10 / n;
    std::vector<int> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    median = n % 2 == 1 ? sorted[n / 2]
                        : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  };

  RetrievalReport report;
  const std::vector<int> c2i = ranks_of(true);
  const std::vector<int> i2c = ranks_of(false);
  summarize(c2i, report.caption_to_image_r1, report.caption_to_image_r5,
            report.caption_to_image_r10, report.caption_to_image_median);
  summarize(i2c, report.image_to_caption_r1, report.image_to_caption_r5,
            report.image_to_caption_r10, report.image_to_caption_median);
  return report;
}

double next_token_accuracy(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                           const std::vector<Vec>& scenes) {
  if (records.empty()) throw std::invalid_argument("next_token_accuracy: empty record set");
  const CaptionModel model = ckpt.model();
  const std::vector<Mat> feats = prepared_features(ckpt, records);

  long long correct = 0, total = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const Vec* s = scene_for(ckpt, scenes, i);
    for (const std::string& caption : records[i].captions) {
      const std::vector<int> tokens = ckpt.vocab.encode(tokenize(caption));
      DecoderState state = initial_state(model, feats[i]);
      for (size_t t = 0; t < tokens.size(); ++t) {
        const StepResult res = step(model, state, feats[i], s);
        int best = 1;
        for (int tok = 1; tok < model.cfg.vocab; ++tok) {
          if (res.word_dist(tok) > res.word_dist(best)) best = tok;
        }
        correct += best == tokens[t];
        total += 1;
        state = res.state;
        state.prev_token = tokens[t];
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(std::max(1ll, total));
}

void write_metrics_txt(const std::string& path, const std::map<std::string, double>& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_txt: cannot open " + path);
  out.precision(12);
  for (const auto& [k, v] : metrics) out << k << " " << v << "\n";
}

void write_metrics_json(const std::string& path, const std::map<std::string, double>& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_json: cannot open " + path);
  nlohmann::json obj(metrics);
  out << obj.dump(2) << "\n";
}

}  // namespace capra
