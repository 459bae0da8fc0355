#pragma once

// Binary feature cache, little-endian:
//   header  "MCEF", u32 version, u32 count, u32 dim
//   record  u64 image_id, u8 label, u8 branch, dim x f32

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "mcfuse/colorspace.hpp"

namespace mcfuse {

struct CachedFeature {
  std::uint64_t image_id = 0;
  std::uint8_t label = 0;
  ColorspaceId branch = ColorspaceId::RGB;
  std::vector<float> values;
};

class FeatureCache {
 public:
  static constexpr std::uint32_t kVersion = 1;

  FeatureCache() = default;
  explicit FeatureCache(std::uint32_t dim) : dim_(dim) {}

  /// Throws DataError on a malformed or truncated file (IoError if unreadable).
  static FeatureCache read(const std::filesystem::path& path);
  /// Writes to a temporary file and renames it into place.
  void write(const std::filesystem::path& path) const;

  /// Appends records to an existing cache (or creates it) and updates the
  /// header count. A torn trailing record from an interrupted run is dropped.
  static void append(const std::filesystem::path& path, std::uint32_t dim,
                     std::span<const CachedFeature> records);

  void add(CachedFeature f);
  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<CachedFeature>& records() const { return records_; }
  const CachedFeature* find(std::uint64_t image_id) const;

 private:
  std::uint32_t dim_ = 0;
  std::vector<CachedFeature> records_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

}  // namespace mcfuse
