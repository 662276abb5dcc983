#include "sspo/replay.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "sspo/error.hpp"

namespace sspo {

std::string_view to_string(ErdStrategy strategy) {
  switch (strategy) {
    case ErdStrategy::kInitial: return "init";
    case ErdStrategy::kLast: return "last";
    case ErdStrategy::kUniform: return "uniform";
  }
  return "uniform";
}

ErdStrategy parse_erd_strategy(std::string_view text) {
  if (text == "init" || text == "initial") return ErdStrategy::kInitial;
  if (text == "last") return ErdStrategy::kLast;
  if (text == "uniform") return ErdStrategy::kUniform;
  throw Error(ErrorCode::kConfig,
              "erd strategy must be init, last or uniform, got '" + std::string(text) + "'");
}

CheckpointStore::CheckpointStore(std::filesystem::path run_dir, ErdStrategy strategy,
                                 std::uint64_t seed)
    : dir_(std::move(run_dir) / "ckpt"), strategy_(strategy), seed_(seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir_.string() + ": " + ec.message());
}

void CheckpointStore::append(const Policy& policy, std::uint32_t k) {
  if (k != entries_.size()) {
    throw Error(ErrorCode::kIndexGap, "append at k=" + std::to_string(k) + " but store holds " +
                                          std::to_string(entries_.size()) + " entries");
  }
  const std::string name = std::to_string(k) + ".sspockpt";
  const std::uint32_t crc = save_params(dir_ / name, policy, {k, seed_});
  entries_.push_back({k, dir_ / name, crc});
  write_manifest();

  std::lock_guard lock(*cache_mutex_);
  cache_.emplace_front(k, policy);
  if (cache_.size() > kCacheCapacity) cache_.pop_back();
}

void CheckpointStore::write_manifest() const {
  std::ofstream out(dir_ / "manifest.txt", std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest in " + dir_.string());
  for (const auto& e : entries_) {
    char crc_hex[9];
    std::snprintf(crc_hex, sizeof(crc_hex), "%08x", e.crc);
    out << e.index << ' ' << e.file.filename().string() << ' ' << crc_hex << '\n';
  }
}

std::uint32_t CheckpointStore::sample_index(SeededRng& rng) const {
  if (entries_.empty()) throw Error(ErrorCode::kEmptyStore, "no checkpoints to replay");
  const auto n = static_cast<std::uint64_t>(entries_.size());
  const auto draw = static_cast<std::uint32_t>(rng.uniform_int(n));
  switch (strategy_) {
    case ErdStrategy::kInitial: return 0;
    case ErdStrategy::kLast: return static_cast<std::uint32_t>(n - 1);
    case ErdStrategy::kUniform: return draw;
  }
  return draw;
}

std::pair<std::uint32_t, Policy> CheckpointStore::sample(SeededRng& rng) const {
  const std::uint32_t index = sample_index(rng);
  return {index, load(index)};
}

Policy CheckpointStore::load(std::uint32_t index) const {
  if (index >= entries_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "checkpoint " + std::to_string(index) + " not in store");
  }
  {
    std::lock_guard lock(*cache_mutex_);
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->first == index) {
        cache_.splice(cache_.begin(), cache_, it);
        return cache_.front().second;
      }
    }
  }
  const CheckpointEntry& entry = entries_[index];
  LoadedCheckpoint loaded = load_params(entry.file);
  if (loaded.crc != entry.crc) {
    throw Error(ErrorCode::kChecksumMismatch,
                entry.file.string() + " does not match the CRC recorded in the manifest");
  }
  std::lock_guard lock(*cache_mutex_);
  cache_.emplace_front(index, loaded.policy);
  if (cache_.size() > kCacheCapacity) cache_.pop_back();
  return std::move(loaded.policy);
}

CheckpointStore CheckpointStore::open(std::filesystem::path run_dir, ErdStrategy strategy) {
  CheckpointStore store(std::move(run_dir), strategy);
  std::ifstream in(store.dir_ / "manifest.txt");
  if (!in) throw Error(ErrorCode::kIo, "no manifest in " + store.dir_.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    CheckpointEntry e;
    std::string file, crc_hex;
    if (!(fields >> e.index >> file >> crc_hex)) {
      throw Error(ErrorCode::kFormatVersionMismatch, "malformed manifest line: " + line);
    }
    if (e.index != store.entries_.size()) {
      throw Error(ErrorCode::kIndexGap, "manifest skips to index " + std::to_string(e.index));
    }
    e.file = store.dir_ / file;
    e.crc = static_cast<std::uint32_t>(std::stoul(crc_hex, nullptr, 16));
    store.entries_.push_back(std::move(e));
  }
  return store;
}

}  // namespace sspo
