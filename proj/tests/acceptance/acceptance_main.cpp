// Runs the nine acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is 0 only when every line passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sspo/checks.hpp"
#include "sspo/config.hpp"
#include "sspo/error.hpp"
#include "sspo/study.hpp"

namespace fs = std::filesystem;
using namespace sspo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> g_verdicts;

void report(std::string id, std::string title, bool pass, std::string detail) {
  std::printf("%s  [%s] %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), title.c_str(),
              detail.c_str());
  std::fflush(stdout);
  g_verdicts.push_back({std::move(id), std::move(title), pass, std::move(detail)});
}

std::string fmt(const char* pattern, auto... args) {
  char buf[2048];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ------------------------------------------------------------- criterion 1

ErrorQuad random_quad(SeededRng& rng) {
  return {rng.uniform() * 2.0, rng.uniform() * 2.0, rng.uniform() * 2.0, rng.uniform() * 2.0};
}

void loss_identities() {
  const auto start = Clock::now();
  std::vector<std::string> problems;
  SeededRng rng(101);

  // theta == ref: loss is ln 2 exactly, for every mode and scale.
  const NoiseSchedule schedule(0.99, 50);
  const PolicySpec spec;
  std::size_t ln2_checked = 0;
  for (int i = 0; i < 60; ++i) {
    Policy p = Policy::zeros(spec);
    for (double& v : p.mutable_params().mutable_values()) v = (rng.uniform() - 0.5) * 0.6;
    const auto x0_w = rng.normal_vector(2), x0_r = rng.normal_vector(2);
    const auto eps_w = rng.normal_vector(2), eps_r = rng.normal_vector(2);
    const PairSample pair{x0_w, x0_r, static_cast<std::uint32_t>(i % 3),
                          1 + static_cast<int>(rng.uniform_int(50)), eps_w, eps_r};
    const SsrMode mode = std::array{SsrMode::kOff, SsrMode::kSign, SsrMode::kIndicator}[i % 3];
    const PairResult r = sspo_pair_loss(p, p, pair, schedule, {i % 2 ? 2000.0 : 0.2}, mode);
    ++ln2_checked;
    if (r.breakdown.loss != std::log(2.0) || r.breakdown.inside_term != 0.0) {
      problems.push_back(fmt("theta==ref case %d gave loss %.17g", i, r.breakdown.loss));
    }
  }

  // sign = +1: the SSR loss and the plain DPO loss coincide bit for bit.
  std::size_t eq8_checked = 0;
  for (int i = 0; i < 10000; ++i) {
    ErrorQuad q = random_quad(rng);
    if (!(q.ref_w > q.model_w)) std::swap(q.ref_w, q.model_w);
    if (!(q.ref_w > q.model_w)) continue;
    const double scale = std::exp(rng.uniform() * 10.0 - 5.0);
    const LossBreakdown sign = ssr_loss(q, scale, SsrMode::kSign);
    const LossBreakdown ind = ssr_loss(q, scale, SsrMode::kIndicator);
    const LossBreakdown off = ssr_loss(q, scale, SsrMode::kOff);
    ++eq8_checked;
    if (sign.sign != 1 || sign.loss != off.loss || sign.inside_term != off.inside_term ||
        ind.loss != off.loss) {
      problems.push_back(fmt("sign=+1 quad %d differs from the DPO loss", i));
      break;
    }
  }

  // Sign semantics, including the tie.
  struct SignCase {
    double ref_w, model_w;
    int expected;
  };
  for (const SignCase c : {SignCase{0.5, 0.3, 1}, SignCase{0.3, 0.5, -1}, SignCase{0.4, 0.4, -1}}) {
    const ErrorQuad q{c.model_w, c.ref_w, 0.1, 0.2};
    if (compute_sign(q, SsrMode::kSign) != c.expected ||
        compute_sign(q, SsrMode::kIndicator) != c.expected ||
        compute_sign(q, SsrMode::kOff) != 1) {
      problems.push_back(fmt("sign(ref_w=%g, model_w=%g) is wrong", c.ref_w, c.model_w));
    }
  }
  {
    const LossBreakdown b = ssr_loss({0.2, 0.4, 0.5, 0.3}, 1.0, SsrMode::kSign);
    if (b.sign != 1 || std::abs(b.inside_term - 0.4) > 1e-12 || std::abs(b.loss - 0.5130152523999526) > 1e-12) {
      problems.push_back(fmt("worked example gave inside %.17g loss %.17g", b.inside_term, b.loss));
    }
    const LossBreakdown tie = ssr_loss({0.4, 0.4, 0.7, 0.1}, 1.0, SsrMode::kIndicator);
    if (tie.sign != -1 || tie.inside_term != 0.0) problems.push_back("indicator tie keeps rand terms");
  }

  // The reference script's sign convention gives the same inside term.
  std::size_t recon_checked = 0;
  double recon_worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const ErrorQuad q = random_quad(rng);
    if (q.model_w == q.ref_w) continue;
    const double scale = std::exp(rng.uniform() * 10.0 - 5.0);
    const double ours = ssr_loss(q, scale, SsrMode::kSign).inside_term;
    const double theirs = pseudocode_inside_term(q, scale);
    const double magnitude = scale * (q.model_w + q.ref_w + q.model_r + q.ref_r);
    recon_worst = std::max(recon_worst, std::abs(ours - theirs) / magnitude);
    ++recon_checked;
  }
  if (recon_worst > 1e-15 * 8) problems.push_back(fmt("reconciliation residual %.3g", recon_worst));

  const double elapsed = seconds_since(start);
  if (elapsed >= 5.0) problems.push_back(fmt("took %.2fs", elapsed));
  std::string detail = fmt("ln2 %zu/%zu, dpo-equivalence %zu quads, reconciliation %zu quads "
                           "(worst %.2g), %.2fs",
                           ln2_checked, ln2_checked, eq8_checked, recon_checked, recon_worst, elapsed);
  for (const auto& p : problems) detail += "; " + p;
  report("1", "loss identity suite", problems.empty() && recon_checked >= 9000, detail);
}

// --------------------------------------------------------- criteria 2 - 4

void gradient_check() {
  const auto start = Clock::now();
  const GradcheckReport r = run_gradcheck({});
  const double elapsed = seconds_since(start);
  const bool pass = r.cases.size() >= 20 && r.max_rel_error < 1e-4 && r.max_weight_error < 1e-6 &&
                    elapsed < 60.0;
  report("2", "gradient check", pass,
         fmt("%zu cases, max rel error %.3g (< 1e-4), max weight error %.3g (< 1e-6), %.2fs",
             r.cases.size(), r.max_rel_error, r.max_weight_error, elapsed));
}

void theorem2_oracle() {
  const auto start = Clock::now();
  const Theorem2GridReport r = run_theorem2_grid();
  const double elapsed = seconds_since(start);
  const bool pass = r.points >= 1000 && r.max_identity_residual <= 1e-12 &&
                    r.ordering_agreements == r.points && elapsed < 5.0;
  report("3", "KL-MSE identity oracle", pass,
         fmt("%zu points, max residual %.3g (<= 1e-12), ordering %zu/%zu, %.2fs", r.points,
             r.max_identity_residual, r.ordering_agreements, r.points, elapsed));
}

void replay_statistics(const fs::path& work_dir) {
  const auto start = Clock::now();
  const auto rows = run_replay_stats({2, 5, 10}, 100000, 7, work_dir / "replay_stats");
  const double elapsed = seconds_since(start);
  bool pass = elapsed < 10.0;
  std::string detail;
  for (const auto& row : rows) {
    pass = pass && row.p_value > 0.01 && row.initial_constant && row.last_constant;
    detail += fmt("k=%u p=%.3f init/last %s; ", row.k, row.p_value,
                  row.initial_constant && row.last_constant ? "constant" : "NOT constant");
  }
  detail += fmt("%.2fs", elapsed);
  report("4", "checkpoint replay statistics", pass, detail);
}

// --------------------------------------------------------- criteria 5 - 8

struct Study {
  StudyReport report;
  std::map<std::string, double> seconds;  // per variant, summed over seeds
  double pretrain_seconds = 0.0;
};

Study run_study(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                const fs::path& dir) {
  std::vector<Variant> variants;
  for (const Variant& v : ablation_variants()) {
    if (v.name != "erd_last") variants.push_back(v);
  }
  for (const Variant& v : sft_compare_variants()) {
    if (v.name == "sft") variants.push_back(v);
  }
  Study study;
  auto last = Clock::now();
  const auto start = last;
  study.report = run_variants(base, seeds, variants, dir, [&](const RunSummary& row) {
    const double dt = seconds_since(last);
    last = Clock::now();
    study.seconds[row.variant] += dt;
    if (row.failed) {
      std::printf("  seed %llu %-9s failed: %s\n", static_cast<unsigned long long>(row.seed),
                  row.variant.c_str(), row.error.c_str());
    } else {
      std::printf("  seed %llu %-9s initial %.4f peak %.4f final %.4f  (%.1fs)\n",
                  static_cast<unsigned long long>(row.seed), row.variant.c_str(),
                  row.initial_score, row.peak_score, row.final_score, dt);
    }
    std::fflush(stdout);
  });
  // Time not attributed to a variant is pretraining, charged to criterion 5.
  double attributed = 0.0;
  for (const auto& [name, s] : study.seconds) attributed += s;
  study.pretrain_seconds = std::max(0.0, seconds_since(start) - attributed);
  return study;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

void study_criteria(const Study& study, const std::vector<std::uint64_t>& seeds) {
  const StudyReport& rep = study.report;
  const std::size_t need = seeds.size() >= 5 ? seeds.size() - 1 : seeds.size();
  auto ok = [&](const std::string& name, std::uint64_t seed) -> const RunSummary* {
    const RunSummary* row = rep.find(name, seed);
    return row && !row->failed ? row : nullptr;
  };
  auto secs = [&](const std::string& name) {
    auto it = study.seconds.find(name);
    return it == study.seconds.end() ? 0.0 : it->second;
  };

  {  // 5: ERD = 0 loses more of its peak than uniform replay and ends no better.
    std::size_t wins = 0;
    std::string per_seed;
    for (auto s : seeds) {
      const RunSummary* u = ok("sspo", s);
      const RunSummary* z = ok("erd0", s);
      const bool win = u && z && z->drop > u->drop && u->final_score <= z->final_score;
      wins += win;
      per_seed += u && z ? fmt(" s%llu[drop %.3f vs %.3f, final %.3f vs %.3f]%s",
                               static_cast<unsigned long long>(s), z->drop, u->drop,
                               u->final_score, z->final_score, win ? "" : "x")
                         : fmt(" s%llu[failed]", static_cast<unsigned long long>(s));
    }
    const double elapsed = study.pretrain_seconds + secs("sspo") + secs("erd0");
    report("5", "uniform replay vs ERD=0", wins >= need && elapsed < 900.0,
           fmt("%zu/%zu seeds (need %zu), %.0fs;", wins, seeds.size(), need, elapsed) + per_seed);
  }
  {  // 6: SSR beats plain DPO; the indicator variant stays within one std.
    std::size_t wins = 0;
    std::vector<double> full, ind;
    for (auto s : seeds) {
      const RunSummary* a = ok("sspo", s);
      const RunSummary* b = ok("wo_ssr", s);
      const RunSummary* c = ok("indicator", s);
      wins += a && b && a->final_score < b->final_score;
      if (a) full.push_back(a->final_score);
      if (c) ind.push_back(c->final_score);
    }
    bool within = false;
    double gap = 0.0, pooled = 0.0;
    if (full.size() >= 2 && ind.size() >= 2) {
      gap = std::abs(mean_of(ind) - mean_of(full));
      pooled = std::sqrt(0.5 * (sample_variance(full) + sample_variance(ind)));
      within = gap <= pooled;
    }
    const double elapsed = secs("wo_ssr") + secs("indicator");
    report("6", "SSR ablation", wins >= need && within && elapsed < 600.0,
           fmt("sspo beats w/o SSR in %zu/%zu seeds (need %zu); indicator mean %.4f vs sspo "
               "%.4f, gap %.4f <= std %.4f: %s; %.0fs",
               wins, seeds.size(), need, ind.empty() ? NAN : mean_of(ind),
               full.empty() ? NAN : mean_of(full), gap, pooled, within ? "yes" : "no", elapsed));
  }
  {  // 7: the SSR rate rises over training.
    std::size_t wins = 0;
    std::string per_seed;
    for (auto s : seeds) {
      const RunSummary* a = ok("sspo", s);
      const bool win = a && a->ssr_rate_first10 && a->ssr_rate_last10 &&
                       *a->ssr_rate_first10 < *a->ssr_rate_last10;
      wins += win;
      if (a && a->ssr_rate_first10 && a->ssr_rate_last10) {
        per_seed += fmt(" s%llu[%.3f -> %.3f]", static_cast<unsigned long long>(s),
                        *a->ssr_rate_first10, *a->ssr_rate_last10);
      }
    }
    report("7", "SSR rate trend", wins >= need,
           fmt("first-10%% < last-10%% in %zu/%zu seeds (need %zu);", wins, seeds.size(), need) +
               per_seed);
  }
  {  // 8: SSPO ends at least as good as SFT on the same budget.
    std::size_t wins = 0;
    std::string per_seed;
    for (auto s : seeds) {
      const RunSummary* a = ok("sspo", s);
      const RunSummary* b = ok("sft", s);
      const bool win = a && b && a->final_score <= b->final_score;
      wins += win;
      if (a && b) {
        per_seed += fmt(" s%llu[%.4f vs %.4f]", static_cast<unsigned long long>(s),
                        a->final_score, b->final_score);
      }
    }
    report("8", "SSPO vs SFT", wins >= need,
           fmt("sspo final <= sft final in %zu/%zu seeds (need %zu), %.0fs;", wins, seeds.size(),
               need, secs("sft")) +
               per_seed);
  }
  {  // The trainer's own multi-seed example: SSPO improves on theta_0.
    std::size_t wins = 0;
    for (auto s : seeds) {
      const RunSummary* a = ok("sspo", s);
      wins += a && a->final_score < a->initial_score;
    }
    report("5a", "SSPO improves on the base model", wins >= need,
           fmt("final < initial in %zu/%zu seeds (need %zu)", wins, seeds.size(), need));
  }
}

// ------------------------------------------------------------- criterion 9

void determinism(const TrainConfig& base, const fs::path& work_dir) {
  const auto start = Clock::now();
  std::vector<std::string> problems;
  TrainConfig cfg = base;
  cfg.seed = 11;
  cfg.pretrain_steps = 200;
  cfg.K = 3;
  cfg.updates_per_checkpoint = 10;
  cfg.batch_size = 16;
  cfg.eval_samples = 64;

  const PretrainResult pre = pretrain(cfg);
  const PretrainResult pre_again = pretrain(cfg);
  if (pre.policy.params() != pre_again.policy.params()) problems.push_back("pretrain differs");

  const fs::path a = work_dir / "determinism" / "a", b = work_dir / "determinism" / "b";
  fs::remove_all(work_dir / "determinism");
  const RunResult ra = sspo_train(cfg, pre.policy, a);
  const RunResult rb = sspo_train(cfg, pre.policy, b);
  std::size_t compared = 0;
  for (const char* name : {"metrics.csv", "config.snapshot"}) {
    const std::string x = read_bytes(a / name), y = read_bytes(b / name);
    if (x.empty() || x != y) problems.push_back(std::string(name) + " differs");
    ++compared;
  }
  for (const auto& entry : fs::directory_iterator(a / "ckpt")) {
    const std::string x = read_bytes(entry.path());
    if (x.empty() || x != read_bytes(b / "ckpt" / entry.path().filename())) {
      problems.push_back(entry.path().filename().string() + " differs");
    }
    ++compared;
  }
  if (ra.final_policy.params() != rb.final_policy.params()) problems.push_back("final params differ");
  if (ra.checkpoints != static_cast<std::size_t>(cfg.K) + 1) problems.push_back("checkpoint count");

  // Final checkpoint: save, reload, compare bits, then corrupt one byte.
  const fs::path ckpt = work_dir / "determinism" / "final.sspockpt";
  const std::uint32_t crc = save_params(ckpt, ra.final_policy, {static_cast<std::uint32_t>(cfg.K), cfg.seed});
  const LoadedCheckpoint back = load_params(ckpt, cfg.policy);
  if (back.crc != crc || back.policy.params() != ra.final_policy.params()) {
    problems.push_back("round trip is not bit-exact");
  }
  std::string bytes = read_bytes(ckpt);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
  std::ofstream(ckpt, std::ios::binary | std::ios::trunc) << bytes;
  bool caught = false;
  try {
    load_params(ckpt);
  } catch (const Error& e) {
    caught = e.code() == ErrorCode::kChecksumMismatch;
  }
  if (!caught) problems.push_back("corruption not detected");

  const double elapsed = seconds_since(start);
  if (elapsed >= 120.0) problems.push_back(fmt("took %.1fs", elapsed));
  std::string detail = fmt("%zu files byte-identical across repeated runs, CRC round trip ok, %.1fs",
                           compared, elapsed);
  if (!problems.empty()) {
    detail = fmt("%.1fs", elapsed);
    for (const auto& p : problems) detail += "; " + p;
  }
  report("9", "determinism and persistence", problems.empty(), detail);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work_dir = "acceptance_runs";
  std::string config_path;
  std::string seeds_text = "0,1,2,3,4";
  std::vector<std::string> overrides;
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "scratch directory for runs");
  app.add_option("--config", config_path, "config file layered over the defaults");
  app.add_option("--seeds", seeds_text, "comma-separated study seeds");
  app.add_option("--set", overrides, "section.key=value override (repeatable)");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::kConfig, "--set expects key=value");
      apply_override(rc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    rc.train.validate();
    const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);
    const fs::path dir(work_dir);
    fs::create_directories(dir);
    const std::set<int> selected(only.begin(), only.end());
    auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

    if (want(1)) loss_identities();
    if (want(2)) gradient_check();
    if (want(3)) theorem2_oracle();
    if (want(4)) replay_statistics(dir);
    if (want(5) || want(6) || want(7) || want(8)) {
      const Study study = run_study(rc.train, seeds, dir / "study");
      study_criteria(study, seeds);
    }
    if (want(9)) determinism(rc.train, dir);
  } catch (const Error& e) {
    std::printf("FAIL  aborted: %s\n", e.what());
    return 1;
  }

  const auto failed = std::count_if(g_verdicts.begin(), g_verdicts.end(),
                                    [](const Verdict& v) { return !v.pass; });
  std::printf("%zu/%zu acceptance checks passed\n", g_verdicts.size() - failed, g_verdicts.size());
  return failed == 0 ? 0 : 1;
}
