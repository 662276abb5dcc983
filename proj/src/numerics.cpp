#include "sspo/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "sspo/error.hpp"

namespace sspo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnsupportedPrimitive: return "UnsupportedPrimitive";
    case ErrorCode::kTimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::kDegenerateWeight: return "DegenerateWeight";
    case ErrorCode::kConditionOutOfRange: return "ConditionOutOfRange";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kIndexGap: return "IndexGap";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kNonPositiveScale: return "NonPositiveScale";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t expected = std::accumulate(
      shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (expected != data_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "tensor data length " + std::to_string(data_.size()) +
                    " does not match shape product " +
                    std::to_string(expected));
  }
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(),
                                        std::size_t{1}, std::multiplies<>());
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

// ----------------------------------------------------------- ParamVector

ParamVector::ParamVector(std::vector<double> values, std::vector<Segment> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  std::size_t cursor = 0;
  for (const auto& seg : layout_) {
    if (seg.offset != cursor) {
      throw Error(ErrorCode::kShapeMismatch,
                  "segment '" + seg.name + "' does not start where the previous one ends");
    }
    cursor += seg.length;
  }
  if (cursor != values_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "layout covers " + std::to_string(cursor) + " values, array has " +
                    std::to_string(values_.size()));
  }
}

ParamVector ParamVector::flat(std::vector<double> values) {
  const std::size_t n = values.size();
  return ParamVector(std::move(values), {Segment{"all", 0, n}});
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
  return ParamVector(std::vector<double>(other.size(), 0.0), other.layout());
}

const Segment& ParamVector::segment(std::string_view name) const {
  auto it = std::find_if(layout_.begin(), layout_.end(),
                         [&](const Segment& s) { return s.name == name; });
  if (it == layout_.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no parameter segment named '" + std::string(name) + "'");
  }
  return *it;
}

std::span<const double> ParamVector::segment_values(std::string_view name) const {
  const Segment& seg = segment(name);
  return std::span<const double>(values_).subspan(seg.offset, seg.length);
}

// ------------------------------------------------------------- SeededRng

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_int(std::uint64_t n) {
  if (n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "uniform_int over an empty range");
  }
  // Reject the low (2^64 mod n) values so every residue is equally likely.
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t x = next_u64();
  while (x < threshold) x = next_u64();
  return x % n;
}

double SeededRng::normal() {
  ++normal_draws_;
  if (cached_normal_) {
    const double z = *cached_normal_;
    cached_normal_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(angle);
  return r * std::cos(angle);
}

std::vector<double> SeededRng::normal_vector(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = normal();
  return out;
}

std::uint64_t SeededRng::derive_seed(std::uint64_t seed,
                                     std::span<const std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t id : path) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

SeededRng SeededRng::child(std::initializer_list<std::uint64_t> path) const {
  return SeededRng(derive_seed(seed_, std::span<const std::uint64_t>(path.begin(), path.size())));
}

// ------------------------------------------------------------ scalar ops

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "mse over " + std::to_string(pred.size()) + " vs " +
                    std::to_string(target.size()) + " elements");
  }
  if (pred.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "mse operands have different shapes");
  }
  return mse(pred.data(), target.data());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_sigmoid(double x) { return -softplus(-x); }

}  // namespace sspo
