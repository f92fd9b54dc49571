#pragma once

#include "capra/regions.hpp"
#include "capra/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace capra {

// One image worth of data. Region features are stored raw; the 5 geometry
// values are appended when the RegionSet is built.
struct DatasetRecord {
  std::string id;
  int width = 0;
  int height = 0;
  Vec global;                                        // empty when absent
  std::vector<std::pair<Vec, BoundingBox>> regions;  // final regions
  std::vector<CandidateBox> candidates;              // scored proposals
  std::vector<std::string> captions;
  Vec scene;  // empty when absent
};

// Line-delimited records, one JSON object per line.
std::vector<DatasetRecord> load_records(const std::string& path);
void save_records(const std::string& path, const std::vector<DatasetRecord>& records);

// Split file: one "<split> <image id>" pair per line.
std::map<std::string, std::vector<std::string>> load_splits(const std::string& path);
void save_splits(const std::string& path,
                 const std::map<std::string, std::vector<std::string>>& splits);

std::vector<DatasetRecord> records_for_split(const std::vector<DatasetRecord>& records,
                                             const std::vector<std::string>& ids);

// Builds the per-image RegionSet: uses the stored regions directly, or runs
// objectness-ranked selection over the candidate pool when only candidates
// are present.
RegionSet record_regions(const DatasetRecord& record, int R, uint64_t seed);

}  // namespace capra
