#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcfuse::evalkit {

enum class Split { train, val, test, unassigned };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct ManifestRecord {
  std::uint64_t image_id = 0;
  std::string path;  // as written in the manifest
  int label = 0;
  std::string category;
  Split split = Split::unassigned;
};

/// CSV with header image_id,path,label,category,split. Relative paths are
/// resolved against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  /// Throws DataError on duplicate ids, bad labels or unknown splits.
  static DatasetManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  std::filesystem::path resolve(const ManifestRecord& r) const;
  std::vector<const ManifestRecord*> in_split(Split s) const;
  const ManifestRecord* find(std::uint64_t image_id) const;
};

struct SplitRatios {
  int train = 60;
  int val = 20;
  int test = 20;
};

/// Stratified by (label, category). Within each label the strata are taken in
/// category order and split counts use cumulative rounding, so every stratum
/// is within one image of the exact ratio and per-label totals are as exact
/// as the label size allows. Strata smaller than 3 go to train with a
/// warning. Deterministic in `seed`. Throws ContractError if any record is
/// already assigned or the ratios do not sum to 100.
DatasetManifest split_dataset(const DatasetManifest& m, SplitRatios ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

}  // namespace mcfuse::evalkit
