#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mcfuse {

/// 64-bit FNV-1a. Stable across platforms; used for config and weight digests.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

std::string hex64(std::uint64_t v);

}  // namespace mcfuse
