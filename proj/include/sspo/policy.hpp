#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sspo/autodiff.hpp"
#include "sspo/numerics.hpp"
#include "sspo/schedule.hpp"

namespace sspo {

struct PolicySpec {
  std::uint32_t input_dim = 2;
  std::uint32_t cond_cardinality = 3;
  std::vector<std::uint32_t> hidden_dims = {64, 64};
  std::uint32_t time_embed_dim = 16;

  /// Width of the network input: x_t, time embedding, one-hot condition.
  std::size_t feature_dim() const;
  std::size_t param_count() const;
  std::vector<Segment> layout() const;
  void validate() const;
  std::string describe() const;

  bool operator==(const PolicySpec&) const = default;
};

/// Sinusoidal embedding of the timestep: sin(t f_i) for the first half,
/// cos(t f_i) for the second, with f_i = 10000^(-i / half).
void time_embedding(int t, std::span<double> out);

/// The epsilon-predictor: MLP over [x_t, embed(t), onehot(c)] with tanh
/// hidden layers and a linear output layer.
class Policy {
 public:
  Policy(PolicySpec spec, ParamVector params);

  /// Hidden layers ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output layer zero.
  static Policy initialize(const PolicySpec& spec, SeededRng& rng);
  static Policy zeros(const PolicySpec& spec);

  const PolicySpec& spec() const noexcept { return spec_; }
  const ParamVector& params() const noexcept { return params_; }
  ParamVector& mutable_params() noexcept { return params_; }

  Tensor predict_eps(const Tensor& x_t, int t, std::uint32_t c) const;
  void predict_eps(std::span<const double> x_t, int t, std::uint32_t c,
                   std::span<double> out) const;

  /// DDPM ancestral sampling from x_T ~ N(0, I) down to x_0. Draws exactly
  /// T standard-normal vectors of size input_dim from `rng`.
  Tensor ancestral_sample(std::uint32_t c, SeededRng& rng, const NoiseSchedule& schedule) const;

 private:
  PolicySpec spec_;
  ParamVector params_;
};

/// Records predict_eps on a tape whose parameters are laid out per `spec`.
/// Produces bit-identical values to Policy::predict_eps.
Var predict_eps(Tape& tape, const PolicySpec& spec, std::span<const double> x_t, int t,
                std::uint32_t c);

// ---------------------------------------------------------------- files

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointHeader {
  std::uint32_t iteration = 0;
  std::uint64_t seed = 0;
};

struct LoadedCheckpoint {
  Policy policy;
  CheckpointHeader header;
  std::uint32_t crc = 0;
};

/// Layout (little endian):
///   "SSPOCKPT" | version u32 | input_dim u32 | cond_cardinality u32 |
///   time_embed_dim u32 | hidden count u32 | widths u32 x n |
///   iteration u32 | seed u64 | param count u64 | params f64 x count |
///   CRC32 of all preceding bytes (u32).
/// Returns the CRC written.
std::uint32_t save_params(const std::filesystem::path& path, const Policy& policy,
                          CheckpointHeader header = {});
std::vector<std::uint8_t> encode_checkpoint(const Policy& policy, CheckpointHeader header);

/// When `expected` is given, a file for a different spec raises
/// FormatVersionMismatch naming both specs.
LoadedCheckpoint load_params(const std::filesystem::path& path,
                             const std::optional<PolicySpec>& expected = std::nullopt);
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                                   const std::optional<PolicySpec>& expected = std::nullopt);

}  // namespace sspo
