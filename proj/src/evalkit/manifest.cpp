#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/manifest.hpp"
#include "mcfuse/util/csv.hpp"
#include "mcfuse/util/hash.hpp"
#include "mcfuse/util/rng.hpp"

namespace mcfuse::evalkit {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) {
  for (Split v : {Split::train, Split::val, Split::test, Split::unassigned})
    if (s == to_string(v)) return v;
  if (s.empty()) return Split::unassigned;
  return std::nullopt;
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t c_id = t.column("image_id"), c_path = t.column("path"), c_label = t.column("label"),
                    c_cat = t.column("category"), c_split = t.column("split");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = path.string() + " row " + std::to_string(i + 2);
    ManifestRecord r;
    try {
      std::size_t used = 0;
      r.image_id = std::stoull(row[c_id], &used);
      if (used != row[c_id].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + ": bad image_id '" + row[c_id] + "'");
    }
    if (!seen.insert(r.image_id).second) throw DataError(where + ": duplicate image_id " + row[c_id]);
    if (row[c_label].size() != 1 || row[c_label][0] < '0' || row[c_label][0] > '2')
      throw DataError(where + ": label must be 0, 1 or 2");
    r.label = row[c_label][0] - '0';
    r.path = row[c_path];
    if (r.path.empty()) throw DataError(where + ": empty path");
    r.category = row[c_cat];
    const auto split = parse_split(row[c_split]);
    if (!split) throw DataError(where + ": unknown split '" + row[c_split] + "'");
    r.split = *split;
    m.records.push_back(std::move(r));
  }
  return m;
}

void DatasetManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "image_id,path,label,category,split\n";
  for (const auto& r : records)
    out << csv::join({std::to_string(r.image_id), r.path, std::to_string(r.label), r.category,
                      std::string(to_string(r.split))})
        << '\n';
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

std::filesystem::path DatasetManifest::resolve(const ManifestRecord& r) const {
  const std::filesystem::path p(r.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<const ManifestRecord*> DatasetManifest::in_split(Split s) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

const ManifestRecord* DatasetManifest::find(std::uint64_t image_id) const {
  for (const auto& r : records)
    if (r.image_id == image_id) return &r;
  return nullptr;
}

DatasetManifest split_dataset(const DatasetManifest& m, SplitRatios ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || ratios.train + ratios.val + ratios.test != 100)
    throw ContractError("split ratios must be non-negative and sum to 100");
  for (const auto& r : m.records)
    if (r.split != Split::unassigned)
      throw ContractError("split_dataset: record " + std::to_string(r.image_id) + " is already assigned");

  // label -> category -> record indices (sorted by image id)
  std::map<int, std::map<std::string, std::vector<std::size_t>>> strata;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    strata[m.records[i].label][m.records[i].category].push_back(i);

  DatasetManifest out = m;
  auto rounded = [](std::int64_t n, int pct) { return (2 * n * pct + 100) / 200; };
  for (auto& [label, cats] : strata) {
    std::int64_t cum = 0, cum_train = 0, cum_val = 0;
    for (auto& [category, idx] : cats) {
      std::sort(idx.begin(), idx.end(),
                [&](std::size_t a, std::size_t b) { return m.records[a].image_id < m.records[b].image_id; });
      if (idx.size() < 3) {
        for (std::size_t i : idx) out.records[i].split = Split::train;
        if (warnings)
          warnings->push_back("stratum label=" + std::to_string(label) + " category=" + category + " has " +
                              std::to_string(idx.size()) + " record(s); assigned to train");
        continue;
      }
      const std::string key = std::to_string(label) + "/" + category;
      Rng rng(derive_seed(seed, fnv1a64(key)));
      rng.shuffle(std::span(idx));
      cum += static_cast<std::int64_t>(idx.size());
      const std::int64_t t = rounded(cum, ratios.train) - cum_train;
      const std::int64_t v = rounded(cum, ratios.train + ratios.val) - cum_train - cum_val - t;
      cum_train += t;
      cum_val += v;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto pos = static_cast<std::int64_t>(j);
        out.records[idx[j]].split = pos < t ? Split::train : pos < t + v ? Split::val : Split::test;
      }
    }
  }
  return out;
}

}  // namespace mcfuse::evalkit
