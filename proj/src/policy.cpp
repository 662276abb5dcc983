#include "sspo/policy.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sspo/error.hpp"

namespace sspo {
namespace {

constexpr char kMagic[8] = {'S', 'S', 'P', 'O', 'C', 'K', 'P', 'T'};

std::string layer_name(std::size_t layer, std::size_t n_hidden) {
  return layer == n_hidden ? std::string("out") : "hidden" + std::to_string(layer);
}

// Shared by the plain forward pass and the tape so both round identically.
void affine_forward(std::span<const double> weight, std::span<const double> bias,
                    std::span<const double> x, std::span<double> out) {
  const std::size_t cols = x.size();
  for (std::size_t i = 0; i < bias.size(); ++i) {
    double acc = bias[i];
    const double* row = weight.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

void build_features(const PolicySpec& spec, std::span<const double> x_t, int t,
                    std::uint32_t c, std::vector<double>& features) {
  if (x_t.size() != spec.input_dim) {
    throw Error(ErrorCode::kShapeMismatch, "x_t has " + std::to_string(x_t.size()) +
                                               " entries, policy expects " +
                                               std::to_string(spec.input_dim));
  }
  if (t < 1) {
    throw Error(ErrorCode::kTimestepOutOfRange, "t=" + std::to_string(t) + " is below 1");
  }
  if (c >= spec.cond_cardinality) {
    throw Error(ErrorCode::kConditionOutOfRange,
                "condition " + std::to_string(c) + " >= cardinality " +
                    std::to_string(spec.cond_cardinality));
  }
  features.assign(spec.feature_dim(), 0.0);
  std::copy(x_t.begin(), x_t.end(), features.begin());
  time_embedding(t, std::span<double>(features).subspan(spec.input_dim, spec.time_embed_dim));
  features[spec.input_dim + spec.time_embed_dim + c] = 1.0;
}

// Little-endian byte writer/reader for the checkpoint format.
class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint64_t take(int n) {
    if (remaining() < static_cast<std::size_t>(n)) {
      throw Error(ErrorCode::kChecksumMismatch, "checkpoint body ends early");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

// ------------------------------------------------------------ PolicySpec

std::size_t PolicySpec::feature_dim() const {
  return input_dim + time_embed_dim + cond_cardinality;
}

std::vector<Segment> PolicySpec::layout() const {
  std::vector<Segment> segments;
  std::size_t offset = 0;
  std::size_t fan_in = feature_dim();
  for (std::size_t layer = 0; layer <= hidden_dims.size(); ++layer) {
    const std::size_t fan_out = layer < hidden_dims.size() ? hidden_dims[layer] : input_dim;
    const std::string name = layer_name(layer, hidden_dims.size());
    segments.push_back({name + ".weight", offset, fan_out * fan_in});
    offset += fan_out * fan_in;
    segments.push_back({name + ".bias", offset, fan_out});
    offset += fan_out;
    fan_in = fan_out;
  }
  return segments;
}

std::size_t PolicySpec::param_count() const {
  const auto segments = layout();
  return segments.back().offset + segments.back().length;
}

void PolicySpec::validate() const {
  if (input_dim == 0 || cond_cardinality == 0 || time_embed_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "policy dimensions must be positive");
  }
  if (time_embed_dim % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "time_embed_dim must be even");
  }
  for (auto w : hidden_dims) {
    if (w == 0) throw Error(ErrorCode::kInvalidArgument, "hidden widths must be positive");
  }
}

std::string PolicySpec::describe() const {
  std::ostringstream os;
  os << "{input_dim=" << input_dim << ", cond_cardinality=" << cond_cardinality
     << ", time_embed_dim=" << time_embed_dim << ", hidden=[";
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) os << (i ? "," : "") << hidden_dims[i];
  os << "]}";
  return os.str();
}

void time_embedding(int t, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(static_cast<double>(t) * freq);
    out[half + i] = std::cos(static_cast<double>(t) * freq);
  }
}

// ----------------------------------------------------------------- Policy

Policy::Policy(PolicySpec spec, ParamVector params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != spec_.param_count()) {
    throw Error(ErrorCode::kShapeMismatch,
                "policy " + spec_.describe() + " needs " + std::to_string(spec_.param_count()) +
                    " parameters, got " + std::to_string(params_.size()));
  }
  if (params_.layout() != spec_.layout()) {
    params_ = ParamVector(std::vector<double>(params_.values().begin(), params_.values().end()),
                          spec_.layout());
  }
}

Policy Policy::zeros(const PolicySpec& spec) {
  spec.validate();
  return Policy(spec, ParamVector(std::vector<double>(spec.param_count(), 0.0), spec.layout()));
}

Policy Policy::initialize(const PolicySpec& spec, SeededRng& rng) {
  spec.validate();
  std::vector<double> values(spec.param_count(), 0.0);
  std::size_t fan_in = spec.feature_dim();
  const auto segments = spec.layout();
  for (std::size_t layer = 0; layer < spec.hidden_dims.size(); ++layer) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (const Segment* seg : {&segments[2 * layer], &segments[2 * layer + 1]}) {
      for (std::size_t i = 0; i < seg->length; ++i) {
        values[seg->offset + i] = bound * (2.0 * rng.uniform() - 1.0);
      }
    }
    fan_in = spec.hidden_dims[layer];
  }
  return Policy(spec, ParamVector(std::move(values), segments));
}

void Policy::predict_eps(std::span<const double> x_t, int t, std::uint32_t c,
                         std::span<double> out) const {
  if (out.size() != spec_.input_dim) {
    throw Error(ErrorCode::kShapeMismatch, "output buffer has the wrong size");
  }
  std::vector<double> act;
  build_features(spec_, x_t, t, c, act);
  std::vector<double> next;
  const std::size_t n_hidden = spec_.hidden_dims.size();
  const auto& segments = params_.layout();
  const auto values = params_.values();
  for (std::size_t layer = 0; layer <= n_hidden; ++layer) {
    const Segment& ws = segments[2 * layer];
    const Segment& bs = segments[2 * layer + 1];
    auto weight = values.subspan(ws.offset, ws.length);
    auto bias = values.subspan(bs.offset, bs.length);
    next.assign(bias.size(), 0.0);
    affine_forward(weight, bias, act, next);
    if (layer < n_hidden) {
      for (double& v : next) v = std::tanh(v);
    }
    act.swap(next);
  }
  std::copy(act.begin(), act.end(), out.begin());
}

Tensor Policy::predict_eps(const Tensor& x_t, int t, std::uint32_t c) const {
  std::vector<double> out(spec_.input_dim);
  predict_eps(x_t.data(), t, c, out);
  return Tensor(x_t.shape(), std::move(out));
}

Tensor Policy::ancestral_sample(std::uint32_t c, SeededRng& rng,
                                const NoiseSchedule& schedule) const {
  const std::size_t d = spec_.input_dim;
  const double alpha = schedule.alpha();
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  std::vector<double> x = rng.normal_vector(d);
  std::vector<double> eps(d);
  for (int t = schedule.steps(); t >= 1; --t) {
    predict_eps(x, t, c, eps);
    const double coef = (1.0 - alpha) / std::sqrt(1.0 - schedule.alpha_bar(t));
    for (std::size_t i = 0; i < d; ++i) x[i] = (x[i] - coef * eps[i]) * inv_sqrt_alpha;
    if (t > 1) {
      const double sigma = std::sqrt(schedule.sigma_t_sq(t));
      for (std::size_t i = 0; i < d; ++i) x[i] += sigma * rng.normal();
    }
  }
  return Tensor::vector(std::move(x));
}

Var predict_eps(Tape& tape, const PolicySpec& spec, std::span<const double> x_t, int t,
                std::uint32_t c) {
  std::vector<double> features;
  build_features(spec, x_t, t, c, features);
  Var act = tape.constant(features);
  const std::size_t n_hidden = spec.hidden_dims.size();
  const auto& segments = tape.params().layout();
  if (segments.size() != 2 * (n_hidden + 1) || tape.params().size() != spec.param_count()) {
    throw Error(ErrorCode::kShapeMismatch, "tape parameters do not match " + spec.describe());
  }
  for (std::size_t layer = 0; layer <= n_hidden; ++layer) {
    const Segment& ws = segments[2 * layer];
    const Segment& bs = segments[2 * layer + 1];
    act = tape.affine(tape.parameters(ws.offset, ws.length),
                      tape.parameters(bs.offset, bs.length), act);
    if (layer < n_hidden) act = tape.tanh(act);
  }
  return act;
}

// ------------------------------------------------------------ checkpoint

std::vector<std::uint8_t> encode_checkpoint(const Policy& policy, CheckpointHeader header) {
  const PolicySpec& spec = policy.spec();
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointFormatVersion);
  w.u32(spec.input_dim);
  w.u32(spec.cond_cardinality);
  w.u32(spec.time_embed_dim);
  w.u32(static_cast<std::uint32_t>(spec.hidden_dims.size()));
  for (auto width : spec.hidden_dims) w.u32(width);
  w.u32(header.iteration);
  w.u64(header.seed);
  w.u64(policy.params().size());
  for (double v : policy.params().values()) w.f64(v);
  w.u32(crc_of(w.bytes()));
  return std::move(w.bytes());
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                                   const std::optional<PolicySpec>& expected) {
  if (bytes.size() < sizeof(kMagic) + 4) {
    throw Error(ErrorCode::kChecksumMismatch, "checkpoint is too short to hold a checksum");
  }
  const auto body = bytes.first(bytes.size() - 4);
  const std::uint32_t stored = ByteReader(bytes.last(4)).u32();
  const std::uint32_t actual = crc_of(body);
  if (stored != actual) {
    throw Error(ErrorCode::kChecksumMismatch, "stored CRC does not match contents");
  }
  if (std::memcmp(body.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kFormatVersionMismatch, "missing SSPOCKPT magic");
  }
  ByteReader r(body.subspan(sizeof(kMagic)));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                "file version " + std::to_string(version) + ", reader supports " +
                    std::to_string(kCheckpointFormatVersion));
  }
  PolicySpec spec;
  spec.input_dim = r.u32();
  spec.cond_cardinality = r.u32();
  spec.time_embed_dim = r.u32();
  const std::uint32_t n_hidden = r.u32();
  if (n_hidden > r.remaining() / 4) {
    throw Error(ErrorCode::kFormatVersionMismatch, "implausible hidden layer count");
  }
  spec.hidden_dims.resize(n_hidden);
  for (auto& width : spec.hidden_dims) width = r.u32();
  if (expected && *expected != spec) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                "file spec " + spec.describe() + " differs from expected " + expected->describe());
  }
  CheckpointHeader header;
  header.iteration = r.u32();
  header.seed = r.u64();
  const std::uint64_t count = r.u64();
  if (count != r.remaining() / 8 || r.remaining() % 8 != 0) {
    throw Error(ErrorCode::kFormatVersionMismatch, "parameter count does not match payload");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = r.f64();
  const auto layout = spec.layout();
  return LoadedCheckpoint{Policy(spec, ParamVector(std::move(values), layout)), header, stored};
}

std::uint32_t save_params(const std::filesystem::path& path, const Policy& policy,
                          CheckpointHeader header) {
  const auto bytes = encode_checkpoint(policy, header);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
  return ByteReader(std::span(bytes).last(4)).u32();
}

LoadedCheckpoint load_params(const std::filesystem::path& path,
                             const std::optional<PolicySpec>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected);
}

}  // namespace sspo
