#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sspo {

/// Dense row-major tensor of doubles. Values are fixed at construction.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  /// 1-D tensor holding `data`.
  static Tensor vector(std::vector<double> data);
  static Tensor zeros(std::vector<std::size_t> shape);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::span<const double> data() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const Segment&) const = default;
};

/// Flat parameter array with named extents. The extents partition the array.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<double> values, std::vector<Segment> layout);

  /// Single anonymous segment spanning all values.
  static ParamVector flat(std::vector<double> values);
  /// Zero-filled vector with the same layout as `other`.
  static ParamVector zeros_like(const ParamVector& other);

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> mutable_values() noexcept { return values_; }
  const std::vector<Segment>& layout() const noexcept { return layout_; }

  const Segment& segment(std::string_view name) const;
  std::span<const double> segment_values(std::string_view name) const;

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
  std::vector<Segment> layout_;
};

/// Deterministic random source.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Uniform, integer and Gaussian transforms are implemented
/// here instead of using std:: distributions (those are implementation
/// defined), so a seed maps to the same stream under any conforming library.
///
/// - uniform():        top 53 bits of one draw, scaled into [0, 1).
/// - uniform_int(n):   rejection sampling on raw draws, unbiased on [0, n).
/// - normal():         Box-Muller on two uniforms; the second variate is
///                     cached and returned by the next call.
///
/// Child generators are derived from the *seed* (not the current state):
/// child({a, b, ...}) is seeded with splitmix64 folded over the path, so the
/// same path always yields the same child regardless of how much the parent
/// has been consumed.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  double uniform();
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  std::vector<double> normal_vector(std::size_t n);

  SeededRng child(std::initializer_list<std::uint64_t> path) const;
  static std::uint64_t derive_seed(std::uint64_t seed,
                                   std::span<const std::uint64_t> path);

  /// Number of Gaussian variates handed out so far.
  std::uint64_t normal_draws() const noexcept { return normal_draws_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> cached_normal_;
  std::uint64_t normal_draws_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Mean of squared elementwise differences.
double mse(const Tensor& pred, const Tensor& target);
double mse(std::span<const double> pred, std::span<const double> target);

double sigmoid(double x);
/// log(1 + e^x) without overflow.
double softplus(double x);
/// log(sigmoid(x)) = -softplus(-x).
double log_sigmoid(double x);

}  // namespace sspo
