#include "capra/synth.hpp"

#include "capra/rng.hpp"

#include <stdexcept>

namespace capra {

std::vector<DatasetRecord> SynthDataset::all() const {
  std::vector<DatasetRecord> out = train;
  out.insert(out.end(), val.begin(), val.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

std::map<std::string, std::vector<std::string>> SynthDataset::splits() const {
  std::map<std::string, std::vector<std::string>> s;
  for (const auto& r : train) s["train"].push_back(r.id);
  for (const auto& r : val) s["val"].push_back(r.id);
  for (const auto& r : test) s["test"].push_back(r.id);
  return s;
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  if (spec.scenes < 1 || spec.vocab_per_scene < 1 || spec.images < 1 ||
      spec.regions_per_image < 1 || spec.feat_dim < 1 || spec.global_dim < 1) {
    throw std::invalid_argument("synth_dataset: sizes must be positive");
  }
  if (spec.regions_per_image > spec.vocab_per_scene) {
    throw std::invalid_argument("synth_dataset: regions per image exceeds vocab per scene");
  }
  Rng rng(spec.seed);

  // Unit-norm content prototypes shared across scenes; unit-norm scene
  // prototypes for the whole-image feature.
  auto draw_unit = [&rng](int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.gaussian();
    return Vec(v / v.norm());
  };
  std::vector<Vec> content_proto;
  for (int c = 0; c < spec.vocab_per_scene; ++c) content_proto.push_back(draw_unit(spec.feat_dim));
  std::vector<Vec> scene_proto;
  for (int s = 0; s < spec.scenes; ++s) scene_proto.push_back(draw_unit(spec.global_dim));

  auto word_for = [](int scene, int content) {
    return "s" + std::to_string(scene) + "w" + std::to_string(content);
  };

  SynthDataset out;
  const int L = spec.regions_per_image;
  const double slot_w = static_cast<double>(spec.width) / L;
  for (int img = 0; img < spec.images; ++img) {
    const int scene = img % spec.scenes;

    // A random subset of contents, in random slot order.
    std::vector<int> contents = rng.permutation(spec.vocab_per_scene);
    contents.resize(L);

    DatasetRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "img%04d", img);
    rec.id = id;
    rec.width = spec.width;
    rec.height = spec.height;

    std::string caption;
    for (int slot = 0; slot < L; ++slot) {
      Vec feat = content_proto[contents[slot]];
      if (spec.noise > 0.0) {
        for (int i = 0; i < spec.feat_dim; ++i) feat(i) += spec.noise * rng.gaussian();
      }
      BoundingBox box{slot * slot_w, 0.0, slot_w, static_cast<double>(spec.height)};
      rec.regions.emplace_back(std::move(feat), box);
      if (slot > 0) caption += " ";
      caption += word_for(scene, contents[slot]);
    }
    rec.captions.push_back(caption);

    rec.global = scene_proto[scene];
    if (spec.noise > 0.0) {
      for (int i = 0; i < spec.global_dim; ++i) rec.global(i) += spec.noise * rng.gaussian();
    }
    rec.scene = Vec::Zero(spec.scenes);
    rec.scene(scene) = 1.0;

    // Round-robin split assignment keeps scenes balanced in every split.
    const double pos = (img / spec.scenes + 0.5) /
                       std::max(1.0, std::ceil(static_cast<double>(spec.images) / spec.scenes));
    if (pos <= spec.train_frac) {
      out.train.push_back(std::move(rec));
    } else if (pos <= spec.train_frac + spec.val_frac) {
      out.val.push_back(std::move(rec));
    } else {
      out.test.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace capra
