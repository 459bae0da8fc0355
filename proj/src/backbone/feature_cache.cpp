#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "mcfuse/error.hpp"
#include "mcfuse/feature_cache.hpp"

static_assert(std::endian::native == std::endian::little, "feature cache I/O assumes a little-endian host");

namespace mcfuse {
namespace {

constexpr char kMagic[4] = {'M', 'C', 'E', 'F'};
constexpr std::size_t kHeaderSize = 16;

std::size_t record_size(std::uint32_t dim) { return 8 + 1 + 1 + 4 * static_cast<std::size_t>(dim); }

struct Header {
  std::uint32_t version = 0, count = 0, dim = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  std::array<char, kHeaderSize> buf{};
  if (!in.read(buf.data(), kHeaderSize)) throw DataError(path.string() + ": truncated feature cache header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw DataError(path.string() + ": not a feature cache (bad magic)");
  Header h;
  std::memcpy(&h.version, buf.data() + 4, 4);
  std::memcpy(&h.count, buf.data() + 8, 4);
  std::memcpy(&h.dim, buf.data() + 12, 4);
  if (h.version != FeatureCache::kVersion)
    throw DataError(path.string() + ": unsupported feature cache version " + std::to_string(h.version));
  if (h.dim == 0) throw DataError(path.string() + ": zero feature dimension");
  return h;
}

void encode_record(const CachedFeature& f, std::uint32_t dim, std::vector<char>& buf) {
  if (f.values.size() != dim) throw ContractError("feature length does not match cache dimension");
  const std::size_t at = buf.size();
  buf.resize(at + record_size(dim));
  char* p = buf.data() + at;
  std::memcpy(p, &f.image_id, 8);
  p[8] = static_cast<char>(f.label);
  p[9] = static_cast<char>(f.branch);
  std::memcpy(p + 10, f.values.data(), 4 * static_cast<std::size_t>(dim));
}

void encode_header(std::uint32_t count, std::uint32_t dim, char* out) {
  const std::uint32_t version = FeatureCache::kVersion;
  std::memcpy(out, kMagic, 4);
  std::memcpy(out + 4, &version, 4);
  std::memcpy(out + 8, &count, 4);
  std::memcpy(out + 12, &dim, 4);
}

}  // namespace

void FeatureCache::add(CachedFeature f) {
  if (f.values.size() != dim_) throw ContractError("feature length does not match cache dimension");
  if (f.label > 2) throw ContractError("label must be 0, 1 or 2");
  auto [it, fresh] = index_.emplace(f.image_id, records_.size());
  if (!fresh) throw DataError("duplicate image id " + std::to_string(f.image_id) + " in feature cache");
  records_.push_back(std::move(f));
}

const CachedFeature* FeatureCache::find(std::uint64_t image_id) const {
  auto it = index_.find(image_id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

FeatureCache FeatureCache::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature cache " + path.string());
  const Header h = read_header(in, path);
  FeatureCache cache(h.dim);
  std::vector<char> buf(record_size(h.dim));
  for (std::uint32_t i = 0; i < h.count; ++i) {
    if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
      throw DataError(path.string() + ": truncated after " + std::to_string(i) + " of " +
                      std::to_string(h.count) + " records");
    CachedFeature f;
    std::memcpy(&f.image_id, buf.data(), 8);
    f.label = static_cast<std::uint8_t>(buf[8]);
    const auto branch = static_cast<std::uint8_t>(buf[9]);
    if (branch > static_cast<std::uint8_t>(ColorspaceId::YUV))
      throw DataError(path.string() + ": invalid branch id " + std::to_string(branch));
    f.branch = static_cast<ColorspaceId>(branch);
    f.values.resize(h.dim);
    std::memcpy(f.values.data(), buf.data() + 10, 4 * static_cast<std::size_t>(h.dim));
    for (float v : f.values)
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite feature value");
    if (f.label > 2) throw DataError(path.string() + ": invalid label");
    cache.add(std::move(f));
  }
  return cache;
}

void FeatureCache::write(const std::filesystem::path& path) const {
  std::vector<char> buf(kHeaderSize);
  encode_header(static_cast<std::uint32_t>(records_.size()), dim_, buf.data());
  for (const auto& r : records_) encode_record(r, dim_, buf);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void FeatureCache::append(const std::filesystem::path& path, std::uint32_t dim,
                          std::span<const CachedFeature> records) {
  if (!std::filesystem::exists(path)) {
    FeatureCache fresh(dim);
    for (const auto& r : records) fresh.add(r);
    fresh.write(path);
    return;
  }
  Header h;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature cache " + path.string());
    h = read_header(in, path);
  }
  if (h.dim != dim) throw DataError(path.string() + ": cache dimension " + std::to_string(h.dim) + " != " + std::to_string(dim));
  const auto committed = kHeaderSize + h.count * record_size(dim);
  if (std::filesystem::file_size(path) < committed) throw DataError(path.string() + ": truncated feature cache");
  std::filesystem::resize_file(path, committed);

  std::vector<char> buf;
  for (const auto& r : records) encode_record(r, dim, buf);
  std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!io) throw IoError("cannot open feature cache " + path.string());
  io.seekp(0, std::ios::end);
  io.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  io.flush();
  char header[kHeaderSize];
  encode_header(h.count + static_cast<std::uint32_t>(records.size()), dim, header);
  io.seekp(0);
  io.write(header, kHeaderSize);
  if (!io.flush()) throw IoError("write failed: " + path.string());
}

}  // namespace mcfuse
