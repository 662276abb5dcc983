// sspo command-line front end. Exit codes: 0 ok, 1 config or input error,
// 2 diverged loss, 3 check tolerance violated.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sspo/checks.hpp"
#include "sspo/config.hpp"
#include "sspo/error.hpp"
#include "sspo/study.hpp"
#include "sspo/theorem2.hpp"

namespace fs = std::filesystem;
using namespace sspo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitTolerance = 3;

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategy;
  std::string ssr;
  std::vector<std::string> set;
};

// Precedence, lowest first: built-in defaults, --config file, --set
// section.key=value (in order), then --seed / --strategy / --ssr.
RunConfig effective_config(const GlobalFlags& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  for (const auto& kv : g.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "--set expects section.key=value, got '" + kv + "'");
    }
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.train.seed = *g.seed;
  if (!g.strategy.empty()) cfg.train.erd_strategy = parse_erd_strategy(g.strategy);
  if (!g.ssr.empty()) cfg.train.ssr_mode = parse_ssr_mode(g.ssr);
  // Re-validate through the parser so overrides get the same checks.
  return parse_config(serialize_config(cfg), g.config_path.empty() ? "<defaults>" : g.config_path);
}

fs::path output_dir(const GlobalFlags& g, const std::string& fallback_name) {
  if (!g.out.empty()) return g.out;
  const char* root = std::getenv("SSPO_RUN_DIR");
  return fs::path(root && *root ? root : "runs") / fallback_name;
}

Policy initial_policy(const RunConfig& cfg, const std::string& init_path, const fs::path& out) {
  if (!init_path.empty()) return load_params(init_path, cfg.train.policy).policy;
  std::cerr << "no --init checkpoint given; pretraining theta_0 (" << cfg.train.pretrain_steps
            << " steps)\n";
  const PretrainResult pre = pretrain(cfg.train);
  save_params(out / "theta0.sspockpt", pre.policy, {0, cfg.train.seed});
  return pre.policy;
}

int cmd_pretrain(const GlobalFlags& g) {
  const RunConfig cfg = effective_config(g);
  const fs::path out = output_dir(g, "pretrain-seed" + std::to_string(cfg.train.seed));
  fs::create_directories(out);
  write_text_file(out / "config.snapshot", serialize_config(cfg));
  const PretrainResult pre = pretrain(cfg.train);
  write_text_file(out / "metrics.csv", metrics_csv(pre.metrics));
  save_params(out / "theta0.sspockpt", pre.policy, {0, cfg.train.seed});
  std::cout << "held-out denoising loss " << format_double(pre.initial_heldout_loss) << " -> "
            << format_double(pre.final_heldout_loss)
            << (pre.below_threshold ? "" : " (above loss_threshold)") << '\n'
            << "theta_0 written to " << (out / "theta0.sspockpt").string() << '\n';
  return kExitOk;
}

int cmd_align(const GlobalFlags& g, const std::string& init_path, Method method) {
  const RunConfig cfg = effective_config(g);
  const std::string name = method == Method::kSspo ? "sspo" : "sft";
  const fs::path out = output_dir(g, name + "-seed" + std::to_string(cfg.train.seed));
  fs::create_directories(out);
  const Policy theta0 = initial_policy(cfg, init_path, out);
  const RunResult run = train_alignment(cfg.train, theta0, out, method);
  const RunSummary s = summarize(name, cfg.train.seed, run);
  std::cout << name << " finished: " << run.metrics.size() << " updates, final checkpoint "
            << run.checkpoints - 1 << '\n'
            << "eval score (energy distance, lower is better): initial "
            << format_double(s.initial_score) << ", peak " << format_double(s.peak_score)
            << ", final " << format_double(s.final_score) << '\n'
            << "outputs in " << out.string() << '\n';
  return kExitOk;
}

int cmd_study(const GlobalFlags& g, const std::string& kind, const std::vector<std::uint64_t>& seeds) {
  RunConfig cfg = effective_config(g);
  if (!seeds.empty()) cfg.study_seeds = seeds;
  std::vector<Variant> variants;
  if (kind == "erd") variants = erd_variants();
  else if (kind == "ablation") variants = ablation_variants();
  else variants = sft_compare_variants();
  const fs::path out = output_dir(g, "study-" + kind);
  fs::create_directories(out);
  write_text_file(out / "config.snapshot", serialize_config(cfg));
  const StudyReport report = run_variants(cfg.train, cfg.study_seeds, variants, out,
                                          [](const RunSummary& r) {
                                            std::cerr << r.variant << " seed " << r.seed << ": ";
                                            if (r.failed) std::cerr << "FAILED " << r.error << '\n';
                                            else std::cerr << "final " << format_double(r.final_score) << '\n';
                                          });
  std::cout << summary_csv(report);
  bool any_failed = false;
  for (const auto& r : report.rows) any_failed |= r.failed;
  return any_failed ? kExitDiverged : kExitOk;
}

int cmd_check(const std::string& which, int cases, std::uint64_t seed,
              const std::vector<std::uint32_t>& ks, std::size_t draws) {
  bool ok = true;
  if (which == "gradcheck" || which == "all") {
    GradcheckOptions opt;
    opt.cases = cases;
    opt.seed = seed;
    const GradcheckReport r = run_gradcheck(opt);
    for (const auto& c : r.cases) {
      const bool bad = !(c.max_rel_error < 1e-4) || (c.weight_error && !(*c.weight_error < 1e-6));
      if (bad) {
        std::cout << "gradcheck case " << c.index << " (mode " << to_string(c.mode) << ", sign "
                  << c.sign << ", beta " << c.beta << "): rel error " << c.max_rel_error
                  << ", weight error " << c.weight_error.value_or(0.0) << '\n';
      }
      ok &= !bad;
    }
    std::cout << "gradcheck: " << r.cases.size() << " cases, max relative error "
              << r.max_rel_error << " (tol 1e-4), max weight error " << r.max_weight_error
              << " (tol 1e-6)\n";
  }
  if (which == "theorem2" || which == "all") {
    const Theorem2GridReport r = run_theorem2_grid(seed);
    std::cout << "theorem2: " << r.points << " points, identity residual "
              << r.max_identity_residual << " (tol 1e-12), ordering agreement "
              << r.ordering_agreements << "/" << r.points << ", KL at b=0 " << r.zero_bias_kl << '\n';
    if (!(r.max_identity_residual <= 1e-12) || r.ordering_agreements != r.points || r.zero_bias_kl != 0.0) {
      std::cout << "theorem2 worst case: " << r.worst_case << '\n';
      ok = false;
    }
  }
  if (which == "replay-stats" || which == "all") {
    const fs::path scratch = fs::temp_directory_path() / ("sspo-replay-" + std::to_string(seed));
    for (const auto& row : run_replay_stats(ks, draws, seed, scratch)) {
      std::cout << "replay-stats k=" << row.k << ": frequencies";
      for (double f : row.frequencies) std::cout << ' ' << format_double(f);
      std::cout << "; chi2 " << row.chi_square << ", p " << row.p_value << ", init constant "
                << row.initial_constant << ", last constant " << row.last_constant << '\n';
      if (!(row.p_value > 0.01) || !row.initial_constant || !row.last_constant) {
        std::cout << "replay-stats k=" << row.k << " violates p > 0.01 or constant strategies\n";
        ok = false;
      }
    }
    std::error_code ec;
    fs::remove_all(scratch, ec);
  }
  return ok ? kExitOk : kExitTolerance;
}

int cmd_eval(const GlobalFlags& g, const std::string& checkpoint, int samples) {
  const RunConfig cfg = effective_config(g);
  const LoadedCheckpoint loaded = load_params(checkpoint, cfg.train.policy);
  const int n = samples > 0 ? samples : cfg.train.eval_samples;
  const EvalReport r = evaluate(loaded.policy, cfg.train.mixture_task(), cfg.train.schedule(),
                                cfg.train.eval_seed(), static_cast<std::size_t>(n));
  std::string csv = "condition,energy_distance\n";
  for (std::size_t c = 0; c < r.energy_distance.size(); ++c) {
    csv += std::to_string(c) + ',' + format_double(r.energy_distance[c]) + '\n';
  }
  csv += "pooled," + format_double(r.pooled) + '\n';
  std::cout << csv << "eps_mse," << format_double(r.eps_mse) << '\n';
  if (!g.out.empty()) write_text_file(fs::path(g.out) / "eval.csv", csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-sampling preference optimization on a toy diffusion task"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config_path, "Config file (key = value lines with [section] headers)");
  app.add_option("--seed", g.seed, "Run seed (overrides train.seed)");
  app.add_option("--out", g.out, "Output directory (default $SSPO_RUN_DIR/<command>-seed<k>)");
  app.add_option("--strategy", g.strategy, "Replay strategy")->check(CLI::IsMember({"init", "last", "uniform"}));
  app.add_option("--ssr", g.ssr, "Sign mode")->check(CLI::IsMember({"off", "sign", "indicator"}));
  app.add_option("--set", g.set, "Extra override section.key=value (repeatable)");

  auto* pre = app.add_subcommand("pretrain", "Train theta_0 on the base mixture");
  std::string init_path;
  auto* sspo_cmd = app.add_subcommand("sspo", "Run SSPO from theta_0");
  sspo_cmd->add_option("--init", init_path, "theta_0 checkpoint (pretrains when omitted)");
  auto* sft_cmd = app.add_subcommand("sft", "Run the SFT baseline from theta_0");
  sft_cmd->add_option("--init", init_path, "theta_0 checkpoint (pretrains when omitted)");

  auto* study = app.add_subcommand("study", "Multi-seed variant comparison");
  std::string study_kind;
  std::vector<std::uint64_t> seeds;
  study->add_option("kind", study_kind, "erd | ablation | sft")->required()->check(CLI::IsMember({"erd", "ablation", "sft"}));
  study->add_option("--seeds", seeds, "Seeds (overrides study.seeds)")->delimiter(',');

  auto* check = app.add_subcommand("check", "Numerical checks");
  std::string which;
  int cases = 20;
  std::uint64_t check_seed = 0;
  std::vector<std::uint32_t> ks = {2, 5, 10};
  std::size_t draws = 100000;
  check->add_option("which", which, "gradcheck | theorem2 | replay-stats | all")->required()->check(CLI::IsMember({"gradcheck", "theorem2", "replay-stats", "all"}));
  check->add_option("--cases", cases, "gradcheck cases");
  check->add_option("--check-seed", check_seed, "Seed for randomized checks");
  check->add_option("--k", ks, "replay-stats store sizes")->delimiter(',');
  check->add_option("--draws", draws, "replay-stats draws per store");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against the target mixture");
  std::string checkpoint;
  int samples = 0;
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--samples", samples, "Generated samples per condition");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*pre) return cmd_pretrain(g);
    if (*sspo_cmd) return cmd_align(g, init_path, Method::kSspo);
    if (*sft_cmd) return cmd_align(g, init_path, Method::kSft);
    if (*study) return cmd_study(g, study_kind, seeds);
    if (*check) return cmd_check(which, cases, check_seed, ks, draws);
    if (*eval) return cmd_eval(g, checkpoint, samples);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kDivergedLoss ? kExitDiverged : kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
