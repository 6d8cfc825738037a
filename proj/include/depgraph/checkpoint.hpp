#pragma once

// Versioned parameter container:
//   "DGCK" u32 version, u64 fingerprint, str kind, str config, str rng_state,
//   u32 count, then per tensor (sorted by name): str name, u32 rank,
//   u32 dims[rank], float64 values.
// str is a u32 byte length followed by the bytes. Values are stored exactly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "depgraph/params.hpp"

namespace depgraph {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

struct Checkpoint {
  std::string kind;  // "short_term" or "head"
  std::uint64_t fingerprint = 0;
  std::string config;  // canonical JSON of the settings that produced it
  std::string rng_state;
  ParamStore params;

  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
// Refuses (ConfigError) when `expected_fingerprint` is given and differs.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

}  // namespace depgraph
