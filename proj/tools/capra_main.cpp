#include "capra/config.hpp"
#include "capra/decode.hpp"
#include "capra/lda.hpp"
#include "capra/scene_mlp.hpp"
#include "capra/synth.hpp"
#include "capra/train.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace capra;

namespace {

struct DataArgs {
  std::string records;
  std::string splits;
  std::string split = "test";
};

void add_data_options(CLI::App* cmd, DataArgs& args, const std::string& default_split) {
  args.split = default_split;
  cmd->add_option("--records", args.records, "records file (one JSON object per line)")->required();
  cmd->add_option("--splits", args.splits, "split file (\"<split> <id>\" per line)")->required();
  cmd->add_option("--split", args.split, "split name to use");
}

std::vector<DatasetRecord> load_split_records(const DataArgs& args) {
  const auto records = load_records(args.records);
  const auto splits = load_splits(args.splits);
  const auto it = splits.find(args.split);
  if (it == splits.end()) throw std::runtime_error("split '" + args.split + "' not found");
  return records_for_split(records, it->second);
}

// Scene vectors for decoding: the scene MLP on global features when one is
// available (embedded in the checkpoint or passed on the command line),
// otherwise the vectors stored in the records.
std::vector<Vec> decode_scenes(const Checkpoint& ckpt, const std::string& scene_mlp_path,
                               const std::vector<DatasetRecord>& records) {
  if (!ckpt.model_cfg.scene_factored) return {};
  std::optional<SceneMlpParams> mlp = ckpt.scene_mlp;
  if (!scene_mlp_path.empty()) mlp = load_scene_mlp(scene_mlp_path);
  if (mlp) return mlp_scene_vectors(*mlp, records);
  return record_scene_vectors(records);
}

int config_int_cli(const Checkpoint& ckpt, const std::string& key, int fallback) {
  const auto it = ckpt.config.find(key);
  return it == ckpt.config.end() ? fallback : std::stoi(it->second);
}

uint64_t config_seed_cli(const Checkpoint& ckpt) {
  const auto it = ckpt.config.find("seed");
  return it == ckpt.config.end() ? 1 : std::stoull(it->second);
}

std::vector<std::vector<std::string>> caption_docs(const std::vector<DatasetRecord>& recs) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(recs.size());
  for (const DatasetRecord& rec : recs) {
    std::vector<std::string> doc;
    for (const std::string& c : rec.captions) {
      for (std::string& t : tokenize(c)) doc.push_back(std::move(t));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

int run(int argc, char** argv) {
  CLI::App app{"Region-attention, scene-factored caption decoder"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthSpec spec;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", spec.seed, "RNG seed")->required();
  synth_cmd->add_option("--scenes", spec.scenes);
  synth_cmd->add_option("--vocab-per-scene", spec.vocab_per_scene);
  synth_cmd->add_option("--images", spec.images);
  synth_cmd->add_option("--regions-per-image", spec.regions_per_image);
  synth_cmd->add_option("--feat-dim", spec.feat_dim);
  synth_cmd->add_option("--global-dim", spec.global_dim);
  synth_cmd->add_option("--noise", spec.noise);
  synth_cmd->add_option("--width", spec.width);
  synth_cmd->add_option("--height", spec.height);
  synth_cmd->callback([&] {
    fs::create_directories(synth_out);
    const SynthDataset data = synth_dataset(spec);
    save_records((fs::path(synth_out) / "records.jsonl").string(), data.all());
    save_splits((fs::path(synth_out) / "splits.txt").string(), data.splits());
    std::cout << "wrote " << data.train.size() << " train / " << data.val.size() << " val / "
              << data.test.size() << " test records to " << synth_out << "\n";
  });

  // --- lda-fit ---
  auto* lda_cmd = app.add_subcommand("lda-fit", "fit the caption topic model");
  DataArgs lda_data;
  add_data_options(lda_cmd, lda_data, "train");
  int lda_topics = 4, lda_iters = 200;
  double lda_alpha = -1.0, lda_beta = 0.01;
  uint64_t lda_seed = 1;
  std::string lda_out;
  lda_cmd->add_option("--topics", lda_topics);
  lda_cmd->add_option("--alpha", lda_alpha, "<=0 selects 50/K");
  lda_cmd->add_option("--beta", lda_beta);
  lda_cmd->add_option("--iters", lda_iters);
  lda_cmd->add_option("--seed", lda_seed)->required();
  lda_cmd->add_option("--out", lda_out, "output model file")->required();
  lda_cmd->callback([&] {
    const auto recs = load_split_records(lda_data);
    const LdaModel model =
        lda_fit(caption_docs(recs), lda_topics, lda_alpha, lda_beta, lda_iters, lda_seed);
    save_lda(lda_out, model);
    std::cout << "fitted " << model.K << " topics over " << model.vocab_size()
              << " words; wrote " << lda_out << "\n";
  });

  // --- scene-train ---
  auto* scene_cmd = app.add_subcommand("scene-train", "train the scene-vector predictor");
  DataArgs scene_data;
  add_data_options(scene_cmd, scene_data, "train");
  std::string scene_lda, scene_out;
  std::vector<int> scene_hidden{32, 16};
  int scene_epochs = 500, scene_batch = 16, scene_infer_iters = 50;
  double scene_lr = 5e-3;
  uint64_t scene_seed = 1;
  scene_cmd->add_option("--lda", scene_lda, "fitted topic model")->required();
  scene_cmd->add_option("--hidden", scene_hidden, "hidden layer sizes");
  scene_cmd->add_option("--epochs", scene_epochs);
  scene_cmd->add_option("--batch", scene_batch);
  scene_cmd->add_option("--lr", scene_lr);
  scene_cmd->add_option("--infer-iters", scene_infer_iters);
  scene_cmd->add_option("--seed", scene_seed)->required();
  scene_cmd->add_option("--out", scene_out, "output model file")->required();
  scene_cmd->callback([&] {
    const auto recs = load_split_records(scene_data);
    const LdaModel lda = load_lda(scene_lda);
    const std::vector<Vec> targets = lda_scene_vectors(lda, recs, scene_infer_iters, scene_seed);
    std::vector<Vec> feats;
    for (const DatasetRecord& rec : recs) {
      if (rec.global.size() == 0) {
        throw std::runtime_error("record " + rec.id + " has no global feature vector");
      }
      feats.push_back(rec.global);
    }
    AdamConfig adam;
    adam.lr = scene_lr;
    const auto result =
        scene_mlp_train(feats, targets, scene_hidden, adam, scene_epochs, scene_batch, scene_seed);
    save_scene_mlp(scene_out, result.params);
    std::cout << "trained scene predictor";
    if (!result.epoch_loss.empty()) std::cout << ", final loss " << result.epoch_loss.back();
    std::cout << "; wrote " << scene_out << "\n";
  });

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "train a caption model");
  DataArgs train_data;
  add_data_options(train_cmd, train_data, "train");
  std::string val_split = "val", mode_name_arg = "ra+sf", train_out, train_scene_mlp, report_dir;
  std::string train_config_path;
  TrainConfig tc;
  train_cmd->add_option("--config", train_config_path,
                        "flat key=value config file; command-line flags win");
  std::map<std::string, CLI::Option*> train_opts;
  train_opts["val-split"] = train_cmd->add_option("--val-split", val_split);
  train_opts["mode"] = train_cmd->add_option("--mode", mode_name_arg, "base | ra | sf | ra+sf");
  train_opts["hidden"] = train_cmd->add_option("--hidden", tc.hidden);
  train_opts["embed"] = train_cmd->add_option("--embed", tc.embed);
  train_opts["rank"] = train_cmd->add_option("--rank", tc.rank);
  train_opts["topics"] = train_cmd->add_option("--topics", tc.topics);
  train_opts["regions"] = train_cmd->add_option("--regions", tc.regions);
  train_opts["batch"] = train_cmd->add_option("--batch", tc.batch);
  train_opts["lr"] = train_cmd->add_option("--lr", tc.lr);
  train_opts["beam"] = train_cmd->add_option("--beam", tc.beam);
  train_opts["epochs"] = train_cmd->add_option("--epochs", tc.max_epochs);
  train_opts["patience"] = train_cmd->add_option("--patience", tc.patience);
  train_opts["min-freq"] = train_cmd->add_option("--min-freq", tc.min_freq);
  train_opts["max-len"] = train_cmd->add_option("--max-len", tc.max_len);
  train_opts["scene-source"] =
      train_cmd->add_option("--scene-source", tc.scene_source, "lda | record");
  train_opts["lda"] = train_cmd->add_option(
      "--lda", tc.lda_path, "fitted topic model for scene inference (fits one when absent)");
  train_opts["lda-iters"] = train_cmd->add_option("--lda-iters", tc.lda_iters);
  train_opts["lda-alpha"] = train_cmd->add_option("--lda-alpha", tc.lda_alpha);
  train_opts["max-steps"] = train_cmd->add_option("--max-steps", tc.max_steps);
  train_opts["factor-g"] = train_cmd->add_flag("--factor-g", tc.factor_cell_gate,
                                               "factor the cell gate as well");
  train_cmd->add_option("--seed", tc.seed)->required();
  train_cmd->add_option("--scene-mlp", train_scene_mlp, "embed this scene predictor");
  train_cmd->add_option("--report-dir", report_dir, "directory for training reports");
  train_cmd->add_option("--out", train_out, "output checkpoint")->required();
  train_cmd->callback([&] {
    if (!train_config_path.empty()) {
      const auto file = read_flat_config(train_config_path);
      // Config entries apply only where no command-line flag was given.
      auto pending = [&](const std::string& key) {
        return file.count(key) != 0 && train_opts.at(key)->count() == 0;
      };
      auto apply_int = [&](const std::string& key, auto& target) {
        if (pending(key)) target = std::stoll(file.at(key));
      };
      apply_int("hidden", tc.hidden);
      apply_int("embed", tc.embed);
      apply_int("rank", tc.rank);
      apply_int("topics", tc.topics);
      apply_int("regions", tc.regions);
      apply_int("batch", tc.batch);
      apply_int("beam", tc.beam);
      apply_int("epochs", tc.max_epochs);
      apply_int("patience", tc.patience);
      apply_int("min-freq", tc.min_freq);
      apply_int("max-len", tc.max_len);
      apply_int("lda-iters", tc.lda_iters);
      apply_int("max-steps", tc.max_steps);
      if (pending("lr")) tc.lr = std::stod(file.at("lr"));
      if (pending("lda-alpha")) tc.lda_alpha = std::stod(file.at("lda-alpha"));
      if (pending("lda")) tc.lda_path = file.at("lda");
      if (pending("mode")) mode_name_arg = file.at("mode");
      if (pending("scene-source")) tc.scene_source = file.at("scene-source");
      if (pending("val-split")) val_split = file.at("val-split");
      if (pending("factor-g")) tc.factor_cell_gate = file.at("factor-g") != "0";
      for (const auto& [key, value] : file) {
        if (!train_opts.count(key)) {
          throw std::runtime_error("unknown config key '" + key + "' in " + train_config_path);
        }
      }
    }
    tc.mode = parse_mode(mode_name_arg);
    const auto records = load_records(train_data.records);
    const auto splits = load_splits(train_data.splits);
    if (!splits.count(train_data.split) || !splits.count(val_split)) {
      throw std::runtime_error("train/val split not found in " + train_data.splits);
    }
    const auto train_recs = records_for_split(records, splits.at(train_data.split));
    const auto val_recs = records_for_split(records, splits.at(val_split));
    TrainResult result = train(tc, train_recs, val_recs, &std::cout);
    if (!train_scene_mlp.empty()) result.best.scene_mlp = load_scene_mlp(train_scene_mlp);
    if (!tc.lda_path.empty()) {
      result.best.lda_path = tc.lda_path;
    } else if (result.lda) {
      const std::string lda_path = train_out + ".lda";
      save_lda(lda_path, *result.lda);
      result.best.lda_path = lda_path;
    }
    save_checkpoint(train_out, result.best);
    std::cout << "best validation BLEU-1 "
              << *std::max_element(result.best.val_history.begin(), result.best.val_history.end())
              << " after " << result.steps << " steps; wrote " << train_out << "\n";
    if (!report_dir.empty()) {
      fs::create_directories(report_dir);
      std::ofstream trace(fs::path(report_dir) / "training.txt");
      trace.precision(12);
      for (size_t e = 0; e < result.epochs.size(); ++e) {
        trace << "epoch " << e + 1 << " loss/token " << result.epochs[e].train_loss_per_token
              << " val-bleu1 " << result.epochs[e].val_bleu1 << "\n";
      }
    }
  });

  // --- generate ---
  auto* gen_cmd = app.add_subcommand("generate", "decode captions for a split");
  DataArgs gen_data;
  add_data_options(gen_cmd, gen_data, "test");
  std::string gen_ckpt, gen_out, gen_scene_mlp;
  int gen_beam = 10;
  gen_cmd->add_option("--ckpt", gen_ckpt)->required();
  gen_cmd->add_option("--beam", gen_beam);
  gen_cmd->add_option("--scene-mlp", gen_scene_mlp);
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->callback([&] {
    const Checkpoint ckpt = load_checkpoint(gen_ckpt);
    const auto recs = load_split_records(gen_data);
    const auto scenes = decode_scenes(ckpt, gen_scene_mlp, recs);
    const EvalResult result = evaluate(ckpt, recs, scenes, gen_beam);
    fs::create_directories(gen_out);
    std::ofstream out(fs::path(gen_out) / "captions.tsv");
    for (const auto& [id, text] : result.captions) out << id << "\t" << text << "\n";
    std::cout << "wrote " << result.captions.size() << " captions to " << gen_out << "\n";
  });

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand("evaluate", "decode and score a split");
  DataArgs eval_data;
  add_data_options(eval_cmd, eval_data, "test");
  std::string eval_ckpt, eval_out, eval_scene_mlp;
  int eval_beam = 10;
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--beam", eval_beam);
  eval_cmd->add_option("--scene-mlp", eval_scene_mlp);
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->callback([&] {
    const Checkpoint ckpt = load_checkpoint(eval_ckpt);
    const auto recs = load_split_records(eval_data);
    const auto scenes = decode_scenes(ckpt, eval_scene_mlp, recs);
    const EvalResult result = evaluate(ckpt, recs, scenes, eval_beam);
    fs::create_directories(eval_out);
    std::ofstream caps(fs::path(eval_out) / "captions.tsv");
    for (const auto& [id, text] : result.captions) caps << id << "\t" << text << "\n";
    write_metrics_txt((fs::path(eval_out) / "metrics.txt").string(), result.metrics);
    write_metrics_json((fs::path(eval_out) / "metrics.json").string(), result.metrics);
    for (const auto& [k, v] : result.metrics) std::cout << k << " " << v << "\n";
  });

  // --- retrieve ---
  auto* retr_cmd = app.add_subcommand("retrieve", "paired image/caption retrieval scores");
  DataArgs retr_data;
  add_data_options(retr_cmd, retr_data, "test");
  std::string retr_ckpt, retr_out, retr_scene_mlp;
  retr_cmd->add_option("--ckpt", retr_ckpt)->required();
  retr_cmd->add_option("--scene-mlp", retr_scene_mlp);
  retr_cmd->add_option("--out", retr_out, "output directory")->required();
  retr_cmd->callback([&] {
    const Checkpoint ckpt = load_checkpoint(retr_ckpt);
    const auto recs = load_split_records(retr_data);
    const auto scenes = decode_scenes(ckpt, retr_scene_mlp, recs);
    const RetrievalReport rep = retrieval_eval(ckpt, recs, scenes);
    std::map<std::string, double> metrics{
        {"c2i_r1", rep.caption_to_image_r1},     {"c2i_r5", rep.caption_to_image_r5},
        {"c2i_r10", rep.caption_to_image_r10},   {"c2i_median", rep.caption_to_image_median},
        {"i2c_r1", rep.image_to_caption_r1},     {"i2c_r5", rep.image_to_caption_r5},
        {"i2c_r10", rep.image_to_caption_r10},   {"i2c_median", rep.image_to_caption_median}};
    fs::create_directories(retr_out);
    write_metrics_txt((fs::path(retr_out) / "retrieval.txt").string(), metrics);
    write_metrics_json((fs::path(retr_out) / "retrieval.json").string(), metrics);
    for (const auto& [k, v] : metrics) std::cout << k << " " << v << "\n";
  });

  // --- heatmap ---
  auto* heat_cmd = app.add_subcommand("heatmap", "attention heatmaps for one image");
  DataArgs heat_data;
  add_data_options(heat_cmd, heat_data, "test");
  std::string heat_ckpt, heat_id, heat_out, heat_scene_mlp;
  heat_cmd->add_option("--ckpt", heat_ckpt)->required();
  heat_cmd->add_option("--id", heat_id, "image id")->required();
  heat_cmd->add_option("--scene-mlp", heat_scene_mlp);
  heat_cmd->add_option("--out", heat_out, "output directory")->required();
  heat_cmd->callback([&] {
    const Checkpoint ckpt = load_checkpoint(heat_ckpt);
    auto recs = load_split_records(heat_data);
    std::erase_if(recs, [&](const DatasetRecord& r) { return r.id != heat_id; });
    if (recs.empty()) throw std::runtime_error("image id '" + heat_id + "' not in split");
    const auto scenes = decode_scenes(ckpt, heat_scene_mlp, recs);
    const CaptionModel model = ckpt.model();
    const RegionSet regions = record_regions(recs[0], config_int_cli(ckpt, "regions", kDefaultRegionCount),
                                             config_seed_cli(ckpt));
    const Vec* s = scenes.empty() ? nullptr : &scenes[0];
    const DecodeResult dec =
        greedy_decode(model, regions, s, config_int_cli(ckpt, "max-len", 30));
    std::vector<BoundingBox> boxes;
    for (const Region& r : regions.regions) boxes.push_back(r.box);
    const auto grids =
        attention_heatmap(dec.attention_per_step, boxes, recs[0].width, recs[0].height);
    fs::create_directories(heat_out);
    const TokenList words = ckpt.vocab.decode(dec.tokens);
    std::ofstream caption(fs::path(heat_out) / "caption.txt");
    for (size_t t = 0; t < grids.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%02zu.pgm", t);
      write_pgm((fs::path(heat_out) / name).string(), grids[t]);
      caption << name << "\t" << words[t] << "\n";
    }
    std::cout << "wrote " << grids.size() << " heatmaps to " << heat_out << "\n";
  });

  // --- match-words ---
  auto* match_cmd = app.add_subcommand("match-words", "region matched to a word in a sentence");
  DataArgs match_data;
  add_data_options(match_cmd, match_data, "test");
  std::string match_ckpt, match_id, match_sentence, match_word, match_scene_mlp;
  match_cmd->add_option("--ckpt", match_ckpt)->required();
  match_cmd->add_option("--id", match_id, "image id")->required();
  match_cmd->add_option("--sentence", match_sentence)->required();
  match_cmd->add_option("--word", match_word)->required();
  match_cmd->add_option("--scene-mlp", match_scene_mlp);
  match_cmd->callback([&] {
    const Checkpoint ckpt = load_checkpoint(match_ckpt);
    auto recs = load_split_records(match_data);
    std::erase_if(recs, [&](const DatasetRecord& r) { return r.id != match_id; });
    if (recs.empty()) throw std::runtime_error("image id '" + match_id + "' not in split");
    const auto scenes = decode_scenes(ckpt, match_scene_mlp, recs);
    const CaptionModel model = ckpt.model();
    const RegionSet regions = record_regions(recs[0], config_int_cli(ckpt, "regions", kDefaultRegionCount),
                                             config_seed_cli(ckpt));
    const TokenList words = tokenize(match_sentence);
    const auto pos_it = std::find(words.begin(), words.end(), match_word);
    if (pos_it == words.end()) {
      throw std::runtime_error("word '" + match_word + "' does not occur in the sentence");
    }
    const int position = static_cast<int>(pos_it - words.begin());
    const Vec* s = scenes.empty() ? nullptr : &scenes[0];
    const int region =
        patch_word_match(model, regions, s, ckpt.vocab.encode(words), position);
    const BoundingBox& box = regions.regions[region].box;
    std::cout << "word '" << match_word << "' (timestep " << position + 1 << ") -> region "
              << region << " box [" << box.x << ", " << box.y << ", " << box.w << ", " << box.h
              << "]\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
