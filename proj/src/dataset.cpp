#include "capra/dataset.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace capra {

namespace {

using nlohmann::json;

Vec vec_from_json(const json& arr) {
  Vec v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
  return v;
}

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

BoundingBox box_from_json(const json& arr) {
  if (arr.size() != 4) throw std::runtime_error("dataset: box must have 4 entries");
  return BoundingBox{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(),
                     arr[3].get<double>()};
}

json box_to_json(const BoundingBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

}  // namespace

std::vector<DatasetRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_records: cannot open " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_records: " + path + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
    DatasetRecord rec;
    rec.id = obj.at("id").get<std::string>();
    rec.width = obj.value("width", 0);
    rec.height = obj.value("height", 0);
    if (obj.contains("global")) rec.global = vec_from_json(obj["global"]);
    if (obj.contains("regions")) {
      for (const json& r : obj["regions"]) {
        rec.regions.emplace_back(vec_from_json(r.at("feat")), box_from_json(r.at("box")));
      }
    }
    if (obj.contains("candidates")) {
      for (const json& c : obj["candidates"]) {
        CandidateBox cand;
        cand.box = box_from_json(c.at("box"));
        cand.feat = vec_from_json(c.at("feat"));
        cand.score = c.value("score", 0.0);
        rec.candidates.push_back(std::move(cand));
      }
    }
    if (obj.contains("captions")) {
      for (const json& c : obj["captions"]) rec.captions.push_back(c.get<std::string>());
    }
    if (obj.contains("scene")) rec.scene = vec_from_json(obj["scene"]);
    if (rec.regions.empty() && rec.candidates.empty()) {
      throw std::runtime_error("load_records: record " + rec.id + " has no regions");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_records(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_records: cannot open " + path);
  for (const DatasetRecord& rec : records) {
    json obj;
    obj["id"] = rec.id;
    obj["width"] = rec.width;
    obj["height"] = rec.height;
    if (rec.global.size() > 0) obj["global"] = vec_to_json(rec.global);
    if (!rec.regions.empty()) {
      json arr = json::array();
      for (const auto& [feat, box] : rec.regions) {
        arr.push_back(json{{"box", box_to_json(box)}, {"feat", vec_to_json(feat)}});
      }
      obj["regions"] = arr;
    }
    if (!rec.candidates.empty()) {
      json arr = json::array();
      for (const CandidateBox& c : rec.candidates) {
        arr.push_back(json{{"box", box_to_json(c.box)},
                           {"feat", vec_to_json(c.feat)},
                           {"score", c.score}});
      }
      obj["candidates"] = arr;
    }
    if (!rec.captions.empty()) obj["captions"] = rec.captions;
    if (rec.scene.size() > 0) obj["scene"] = vec_to_json(rec.scene);
    out << obj.dump() << "\n";
  }
  if (!out) throw std::runtime_error("save_records: write failed for " + path);
}

std::map<std::string, std::vector<std::string>> load_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_splits: cannot open " + path);
  std::map<std::string, std::vector<std::string>> splits;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string split, id;
    if (!(row >> split >> id)) throw std::runtime_error("load_splits: malformed line: " + line);
    splits[split].push_back(id);
  }
  return splits;
}

void save_splits(const std::string& path,
                 const std::map<std::string, std::vector<std::string>>& splits) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_splits: cannot open " + path);
  for (const auto& [split, ids] : splits) {
    for (const std::string& id : ids) out << split << " " << id << "\n";
  }
  if (!out) throw std::runtime_error("save_splits: write failed for " + path);
}

std::vector<DatasetRecord> records_for_split(const std::vector<DatasetRecord>& records,
                                             const std::vector<std::string>& ids) {
  std::map<std::string, const DatasetRecord*> by_id;
  for (const DatasetRecord& rec : records) by_id[rec.id] = &rec;
  std::vector<DatasetRecord> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("records_for_split: unknown id " + id);
    out.push_back(*it->second);
  }
  return out;
}

RegionSet record_regions(const DatasetRecord& record, int R, uint64_t seed) {
  if (!record.regions.empty()) {
    return make_region_set(record.regions, record.width, record.height);
  }
  if (record.candidates.empty()) {
    throw std::runtime_error("record_regions: record " + record.id + " has no regions");
  }
  return select_regions(record.candidates, R, record.width, record.height, seed);
}

}  // namespace capra
