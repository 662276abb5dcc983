#include "sspo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sspo/error.hpp"

namespace sspo {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw Error(ErrorCode::kConfig, std::string(key) + ": expected " + std::string(want) + ", got '" +
                                      std::string(value) + "'");
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

template <typename Int>
std::vector<Int> parse_list(std::string_view key, std::string_view v) {
  std::vector<Int> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_int<Int>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) bad_value(key, v, "a comma-separated list");
  return out;
}

template <typename Int>
std::string join(const std::vector<Int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

// Enum parsers throw kConfig with their own message; prefix the key.
template <typename F>
auto parse_enum(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string(key) + ": " + e.detail());
  }
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"schedule.alpha", [](RunConfig& c, auto k, auto v) { c.train.alpha = parse_double(k, v); }},
      {"schedule.T", [](RunConfig& c, auto k, auto v) { c.train.steps_T = parse_int<int>(k, v); }},
      {"schedule.weighting_mode",
       [](RunConfig& c, auto k, auto v) {
         c.train.weighting = parse_enum(k, [&] { return parse_weighting_mode(v); });
       }},
      {"policy.hidden_dims",
       [](RunConfig& c, auto k, auto v) { c.train.policy.hidden_dims = parse_list<std::uint32_t>(k, v); }},
      {"policy.time_embed_dim",
       [](RunConfig& c, auto k, auto v) { c.train.policy.time_embed_dim = parse_int<std::uint32_t>(k, v); }},
      {"train.beta", [](RunConfig& c, auto k, auto v) { c.train.beta = parse_double(k, v); }},
      {"train.K", [](RunConfig& c, auto k, auto v) { c.train.K = parse_int<int>(k, v); }},
      {"train.updates_per_checkpoint",
       [](RunConfig& c, auto k, auto v) { c.train.updates_per_checkpoint = parse_int<int>(k, v); }},
      {"train.batch_size", [](RunConfig& c, auto k, auto v) { c.train.batch_size = parse_int<int>(k, v); }},
      {"train.lr", [](RunConfig& c, auto k, auto v) { c.train.lr = parse_double(k, v); }},
      {"train.erd_strategy",
       [](RunConfig& c, auto k, auto v) {
         c.train.erd_strategy = parse_enum(k, [&] { return parse_erd_strategy(v); });
       }},
      {"train.ssr_mode",
       [](RunConfig& c, auto k, auto v) {
         c.train.ssr_mode = parse_enum(k, [&] { return parse_ssr_mode(v); });
       }},
      {"train.replay_per_iteration",
       [](RunConfig& c, auto k, auto v) { c.train.replay_per_iteration = parse_bool(k, v); }},
      {"train.max_updates", [](RunConfig& c, auto k, auto v) { c.train.max_updates = parse_int<int>(k, v); }},
      {"train.seed", [](RunConfig& c, auto k, auto v) { c.train.seed = parse_int<std::uint64_t>(k, v); }},
      {"optimizer.kind",
       [](RunConfig& c, auto k, auto v) {
         c.train.optimizer.kind = parse_enum(k, [&] { return parse_optimizer_kind(v); });
       }},
      {"optimizer.beta1", [](RunConfig& c, auto k, auto v) { c.train.optimizer.beta1 = parse_double(k, v); }},
      {"optimizer.beta2", [](RunConfig& c, auto k, auto v) { c.train.optimizer.beta2 = parse_double(k, v); }},
      {"optimizer.eps", [](RunConfig& c, auto k, auto v) { c.train.optimizer.eps = parse_double(k, v); }},
      {"optimizer.weight_decay",
       [](RunConfig& c, auto k, auto v) { c.train.optimizer.weight_decay = parse_double(k, v); }},
      {"pretrain.steps", [](RunConfig& c, auto k, auto v) { c.train.pretrain_steps = parse_int<int>(k, v); }},
      {"pretrain.lr", [](RunConfig& c, auto k, auto v) { c.train.pretrain_lr = parse_double(k, v); }},
      {"pretrain.batch_size",
       [](RunConfig& c, auto k, auto v) { c.train.pretrain_batch_size = parse_int<int>(k, v); }},
      {"pretrain.loss_threshold",
       [](RunConfig& c, auto k, auto v) { c.train.pretrain_loss_threshold = parse_double(k, v); }},
      {"task.conditions",
       [](RunConfig& c, auto k, auto v) {
         c.train.task.conditions = parse_int<std::uint32_t>(k, v);
         c.train.policy.cond_cardinality = c.train.task.conditions;
       }},
      {"task.radius", [](RunConfig& c, auto k, auto v) { c.train.task.radius = parse_double(k, v); }},
      {"task.mode_offset", [](RunConfig& c, auto k, auto v) { c.train.task.mode_offset = parse_double(k, v); }},
      {"task.base_std", [](RunConfig& c, auto k, auto v) { c.train.task.base_std = parse_double(k, v); }},
      {"task.target_std", [](RunConfig& c, auto k, auto v) { c.train.task.target_std = parse_double(k, v); }},
      {"task.target_shift",
       [](RunConfig& c, auto k, auto v) { c.train.task.target_shift = parse_double(k, v); }},
      {"eval.every", [](RunConfig& c, auto k, auto v) { c.train.eval_every = parse_int<int>(k, v); }},
      {"eval.samples", [](RunConfig& c, auto k, auto v) { c.train.eval_samples = parse_int<int>(k, v); }},
      {"study.seeds",
       [](RunConfig& c, auto k, auto v) { c.study_seeds = parse_list<std::uint64_t>(k, v); }},
  };
  return table;
}

}  // namespace

void apply_override(RunConfig& cfg, std::string_view dotted_key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(dotted_key);
  if (it == table.end()) {
    throw Error(ErrorCode::kConfig, "unknown key '" + std::string(dotted_key) + "'");
  }
  it->second(cfg, dotted_key, trim(value));
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::kConfig, where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::kConfig, where + "expected key = value");
    if (section.empty()) throw Error(ErrorCode::kConfig, where + "key outside of any [section]");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw Error(ErrorCode::kConfig, where + "duplicate key '" + key + "'");
    try {
      apply_override(cfg, key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, where + e.detail());
    }
  }
  try {
    cfg.train.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string(source) + ": " + e.detail());
  }
  if (cfg.study_seeds.empty()) throw Error(ErrorCode::kConfig, std::string(source) + ": no study seeds");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  std::ostringstream out;
  out << "[schedule]\n"
      << "alpha = " << format_double(t.alpha) << '\n'
      << "T = " << t.steps_T << '\n'
      << "weighting_mode = " << to_string(t.weighting) << "\n\n"
      << "[policy]\n"
      << "hidden_dims = " << join(t.policy.hidden_dims) << '\n'
      << "time_embed_dim = " << t.policy.time_embed_dim << "\n\n"
      << "[train]\n"
      << "beta = " << format_double(t.beta) << '\n'
      << "K = " << t.K << '\n'
      << "updates_per_checkpoint = " << t.updates_per_checkpoint << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "lr = " << format_double(t.lr) << '\n'
      << "erd_strategy = " << to_string(t.erd_strategy) << '\n'
      << "ssr_mode = " << to_string(t.ssr_mode) << '\n'
      << "replay_per_iteration = " << (t.replay_per_iteration ? "true" : "false") << '\n'
      << "seed = " << t.seed << '\n'
      << "max_updates = " << t.max_updates << "\n\n"
      << "[optimizer]\n"
      << "kind = " << to_string(t.optimizer.kind) << '\n'
      << "beta1 = " << format_double(t.optimizer.beta1) << '\n'
      << "beta2 = " << format_double(t.optimizer.beta2) << '\n'
      << "eps = " << format_double(t.optimizer.eps) << '\n'
      << "weight_decay = " << format_double(t.optimizer.weight_decay) << "\n\n"
      << "[pretrain]\n"
      << "steps = " << t.pretrain_steps << '\n'
      << "lr = " << format_double(t.pretrain_lr) << '\n'
      << "batch_size = " << t.pretrain_batch_size << '\n'
      << "loss_threshold = " << format_double(t.pretrain_loss_threshold) << "\n\n"
      << "[task]\n"
      << "conditions = " << t.task.conditions << '\n'
      << "radius = " << format_double(t.task.radius) << '\n'
      << "mode_offset = " << format_double(t.task.mode_offset) << '\n'
      << "base_std = " << format_double(t.task.base_std) << '\n'
      << "target_std = " << format_double(t.task.target_std) << '\n'
      << "target_shift = " << format_double(t.task.target_shift) << "\n\n"
      << "[eval]\n"
      << "every = " << t.eval_every << '\n'
      << "samples = " << t.eval_samples << "\n\n"
      << "[study]\n"
      << "seeds = " << join(cfg.study_seeds) << '\n';
  return out.str();
}

}  // namespace sspo
