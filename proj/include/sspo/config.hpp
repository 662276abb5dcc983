#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sspo/trainer.hpp"

namespace sspo {

/// Everything a config file can set: the training config plus study seeds.
struct RunConfig {
  TrainConfig train;
  std::vector<std::uint64_t> study_seeds = {0, 1, 2, 3, 4};

  bool operator==(const RunConfig&) const = default;
};

/// Parses the line-oriented config format (see docs/config.md). Unknown
/// sections or keys, malformed values and duplicate keys raise
/// Error(kConfig) whose message starts with `source`.
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Sets one "section.key" to `value` on top of an existing config.
void apply_override(RunConfig& cfg, std::string_view dotted_key, std::string_view value);

/// Full effective config in the same format; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace sspo
