#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "sspo/numerics.hpp"
#include "sspo/policy.hpp"

namespace sspo {

/// Which saved checkpoint serves as the replay source and reference model.
enum class ErdStrategy {
  kInitial,  // ERD = 0
  kLast,     // ERD = k - 1
  kUniform,  // ERD = [0, k - 1], random checkpoint replay
};

std::string_view to_string(ErdStrategy strategy);
ErdStrategy parse_erd_strategy(std::string_view text);

struct CheckpointEntry {
  std::uint32_t index = 0;
  std::filesystem::path file;
  std::uint32_t crc = 0;
};

/// Append-only store of policy snapshots theta_0 .. theta_{k-1} on disk.
///
/// Layout: <run_dir>/ckpt/<k>.sspockpt plus <run_dir>/ckpt/manifest.txt
/// with one "<k> <filename> <crc32 hex>" line per entry. Loads go through a
/// two-entry most-recently-used cache.
class CheckpointStore {
 public:
  CheckpointStore(std::filesystem::path run_dir, ErdStrategy strategy, std::uint64_t seed = 0);

  ErdStrategy strategy() const noexcept { return strategy_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<CheckpointEntry>& entries() const noexcept { return entries_; }
  std::filesystem::path directory() const { return dir_; }

  /// Persists `policy` as entry k; k must equal size().
  void append(const Policy& policy, std::uint32_t k);

  /// Index chosen by the strategy. Always consumes exactly one draw from
  /// `rng` so sibling runs with different strategies stay in lockstep.
  std::uint32_t sample_index(SeededRng& rng) const;
  std::pair<std::uint32_t, Policy> sample(SeededRng& rng) const;

  Policy load(std::uint32_t index) const;

  /// Re-reads an existing store from its manifest.
  static CheckpointStore open(std::filesystem::path run_dir, ErdStrategy strategy);

 private:
  void write_manifest() const;

  std::filesystem::path dir_;
  ErdStrategy strategy_;
  std::uint64_t seed_;
  std::vector<CheckpointEntry> entries_;

  std::unique_ptr<std::mutex> cache_mutex_ = std::make_unique<std::mutex>();
  mutable std::list<std::pair<std::uint32_t, Policy>> cache_;
  static constexpr std::size_t kCacheCapacity = 2;
};

}  // namespace sspo
