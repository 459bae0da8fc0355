#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <spdlog/fmt/fmt.h>

#include "mcfuse/error.hpp"
#include "mcfuse/fusionhead.hpp"

static_assert(std::endian::native == std::endian::little, "head file I/O assumes a little-endian host");

namespace mcfuse {
namespace {

constexpr char kMagic[4] = {'M', 'C', 'H', 'D'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_head(const HeadModel& m, const std::filesystem::path& path) {
  if (m.weights.size() != static_cast<std::size_t>(kNumClasses) * m.dim)
    throw ContractError("save_head: weight matrix does not match dimension");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  const std::uint32_t header[3] = {kVersion, static_cast<std::uint32_t>(m.dim), kNumClasses};
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(m.weights.data()),
            static_cast<std::streamsize>(m.weights.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(m.bias.data()), sizeof(float) * kNumClasses);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

HeadModel load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open head file " + path.string());
  char magic[4];
  std::uint32_t header[3];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path.string() + ": not a head file (bad magic)");
  if (!in.read(reinterpret_cast<char*>(header), sizeof header)) throw DataError(path.string() + ": truncated header");
  if (header[0] != kVersion) throw DataError(path.string() + ": unsupported head version " + std::to_string(header[0]));
  if (header[2] != kNumClasses) throw DataError(path.string() + ": expected 3 classes");
  if (header[1] == 0 || header[1] > (1u << 24)) throw DataError(path.string() + ": implausible dimension");
  HeadModel m = HeadModel::zeros(static_cast<int>(header[1]));
  if (!in.read(reinterpret_cast<char*>(m.weights.data()), static_cast<std::streamsize>(m.weights.size() * sizeof(float))) ||
      !in.read(reinterpret_cast<char*>(m.bias.data()), sizeof(float) * kNumClasses))
    throw DataError(path.string() + ": truncated parameters");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  for (float v : m.weights)
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite weight");
  for (float v : m.bias)
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite bias");
  return m;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : log)
    out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

}  // namespace mcfuse
