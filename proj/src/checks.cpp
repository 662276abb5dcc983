#include "sspo/checks.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "sspo/error.hpp"
#include "sspo/theorem2.hpp"

namespace sspo {
namespace {

Policy random_policy(const PolicySpec& spec, SeededRng& rng, double half_width) {
  Policy p = Policy::zeros(spec);
  for (double& v : p.mutable_params().mutable_values()) v = (2.0 * rng.uniform() - 1.0) * half_width;
  return p;
}

// (1/d) J^T (eps - eps_theta(x_t)) for the policy at x_t.
ParamVector error_term(const Policy& theta, std::span<const double> x_t, int t, std::uint32_t c,
                       std::span<const double> eps) {
  std::vector<double> pred(eps.size());
  theta.predict_eps(x_t, t, c, pred);
  std::vector<double> residual(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) residual[i] = eps[i] - pred[i];
  const PolicySpec spec = theta.spec();
  return grad(
      [&](Tape& tape) {
        const Var out = predict_eps(tape, spec, x_t, t, c);
        return tape.mean(tape.mul(tape.constant(residual), out));
      },
      theta.params());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.cases < 1 || options.betas.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "gradcheck needs cases and betas");
  }
  const NoiseSchedule schedule(0.99, 50, WeightingMode::kConstant);
  const SsrMode modes[] = {SsrMode::kSign, SsrMode::kOff, SsrMode::kIndicator};
  const std::size_t d = options.spec.input_dim;
  SeededRng root(options.seed);
  GradcheckReport report;

  for (int i = 0; i < options.cases; ++i) {
    SeededRng rng = root.child({static_cast<std::uint64_t>(i)});
    const Policy theta = random_policy(options.spec, rng, 0.5);
    const Policy ref = random_policy(options.spec, rng, 0.5);
    auto uniform_vec = [&](double lo, double hi) {
      std::vector<double> v(d);
      for (double& x : v) x = lo + (hi - lo) * rng.uniform();
      return v;
    };
    const auto x0_w = uniform_vec(-2.0, 2.0);
    const auto x0_rand = uniform_vec(-2.0, 2.0);
    const auto eps_w = rng.normal_vector(d);
    const auto eps_ref = rng.normal_vector(d);
    const auto c = static_cast<std::uint32_t>(rng.uniform_int(options.spec.cond_cardinality));
    const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(schedule.steps())));
    const PairSample pair{x0_w, x0_rand, c, t, eps_w, eps_ref};
    const ScaleConfig scale_cfg{options.betas[static_cast<std::size_t>(i) % options.betas.size()]};
    const SsrMode mode = modes[static_cast<std::size_t>(i) % 3];

    const PairResult result = sspo_pair_loss(theta, ref, pair, schedule, scale_cfg, mode);
    const int sign = result.breakdown.sign;

    ParamVector probe = theta.params();
    auto values = probe.mutable_values();
    std::vector<double> fd(values.size());
    auto loss_at = [&](std::size_t j, double offset) {
      const double saved = values[j];
      values[j] = saved + offset;
      const double v = sspo_pair_loss_value(probe, ref, pair, schedule, scale_cfg, mode, sign);
      values[j] = saved;
      return v;
    };
    // Five-point central stencil: at beta = 2000 the logistic is sharp enough
    // that the three-point truncation error alone exceeds the tolerance.
    const double h = options.fd_step;
    for (std::size_t j = 0; j < values.size(); ++j) {
      fd[j] = (8.0 * (loss_at(j, h) - loss_at(j, -h)) - (loss_at(j, 2.0 * h) - loss_at(j, -2.0 * h))) /
              (12.0 * h);
    }
    const auto g = result.gradient.values();
    double g_max = 0.0;
    for (double v : g) g_max = std::max(g_max, std::abs(v));
    for (double v : fd) g_max = std::max(g_max, std::abs(v));

    GradcheckCase gc;
    gc.index = i;
    gc.mode = mode;
    gc.sign = sign;
    gc.beta = scale_cfg.beta;
    gc.max_rel_error = max_relative_error(g, fd, std::max(options.floor_fraction * g_max, 1e-300));

    if (sign == 1) {
      std::vector<double> x_t_w(d), x_t_r(d);
      schedule.forward_diffuse(x0_w, t, eps_w, x_t_w);
      schedule.forward_diffuse(x0_rand, t, eps_ref, x_t_r);
      const ParamVector e_w = error_term(theta, x_t_w, t, c, eps_w);
      const ParamVector e_r = error_term(theta, x_t_r, t, c, eps_ref);
      std::vector<double> e(e_w.size());
      for (std::size_t j = 0; j < e.size(); ++j) e[j] = e_w.values()[j] - e_r.values()[j];
      const double ee = dot(e, e);
      if (ee > 0.0) {
        const double w_hat = dot(g, e) / ee;
        const double w = analytic_gradient_weight(result.breakdown.quad, result.breakdown.scale);
        gc.weight_error = std::abs(w_hat - w) / std::max(1.0, std::abs(w));
        double resid = 0.0;
        for (std::size_t j = 0; j < e.size(); ++j) resid += (g[j] - w * e[j]) * (g[j] - w * e[j]);
        const double gn = std::sqrt(dot(g, g));
        gc.decomposition_residual = gn > 0.0 ? std::sqrt(resid) / gn : std::sqrt(resid);
        report.max_weight_error = std::max(report.max_weight_error, *gc.weight_error);
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, gc.max_rel_error);
    report.cases.push_back(gc);
  }
  return report;
}

Theorem2GridReport run_theorem2_grid(std::uint64_t seed) {
  const double alphas[] = {0.9, 0.95, 0.99, 0.999};
  const int ts[] = {1, 2, 5, 10, 25, 50};
  const double sigmas[] = {0.01, 0.25, 1.0, 4.0};
  const int bias_pairs = 12;
  SeededRng root(seed);
  Theorem2GridReport report;

  auto record = [&](const Theorem2Report& r, const std::string& label) {
    ++report.points;
    if (r.ordering_agrees) ++report.ordering_agreements;
    if (r.identity_residual > report.max_identity_residual || report.worst_case.empty()) {
      report.max_identity_residual = std::max(report.max_identity_residual, r.identity_residual);
      report.worst_case = label;
    }
  };

  for (double alpha : alphas) {
    const NoiseSchedule schedule(alpha, 50, WeightingMode::kConstant);
    for (int t : ts) {
      for (double s2 : sigmas) {
        const std::vector<double> zero(2, 0.0);
        const std::vector<double> unit = {0.1, 0.0};
        const Theorem2Report z = theorem2_bias_check(schedule, t, s2, zero, unit);
        report.zero_bias_kl = std::max(report.zero_bias_kl, std::max(z.kl1, z.kl1_from_means));
        record(z, "b1=0");
        SeededRng rng = root.child({static_cast<std::uint64_t>(alpha * 1000), static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(s2 * 100)});
        for (int p = 0; p < bias_pairs; ++p) {
          const std::size_t dim = 1 + rng.uniform_int(4);
          std::vector<double> b1(dim), b2(dim);
          for (double& v : b1) v = 2.0 * rng.uniform() - 1.0;
          for (double& v : b2) v = 2.0 * rng.uniform() - 1.0;
          record(theorem2_bias_check(schedule, t, s2, b1, b2),
                 "alpha=" + std::to_string(alpha) + " t=" + std::to_string(t) +
                     " sigma0^2=" + std::to_string(s2));
        }
      }
    }
  }
  return report;
}

double chi_square_sf(double statistic, double dof) {
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

std::vector<ReplayStatsRow> run_replay_stats(const std::vector<std::uint32_t>& ks,
                                             std::size_t draws, std::uint64_t seed,
                                             const std::filesystem::path& scratch) {
  const PolicySpec tiny{2, 1, {2}, 2};
  const Policy policy = Policy::zeros(tiny);
  std::vector<ReplayStatsRow> rows;
  for (std::uint32_t k : ks) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    const auto dir = scratch / ("replay-k" + std::to_string(k));
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    CheckpointStore uniform(dir, ErdStrategy::kUniform, seed);
    for (std::uint32_t i = 0; i < k; ++i) uniform.append(policy, i);
    CheckpointStore initial = CheckpointStore::open(dir, ErdStrategy::kInitial);
    CheckpointStore last = CheckpointStore::open(dir, ErdStrategy::kLast);

    ReplayStatsRow row;
    row.k = k;
    row.draws = draws;
    std::vector<std::size_t> counts(k, 0);
    SeededRng rng = SeededRng(seed).child({k});
    row.initial_constant = row.last_constant = true;
    for (std::size_t i = 0; i < draws; ++i) {
      ++counts[uniform.sample_index(rng)];
      if (initial.sample_index(rng) != 0) row.initial_constant = false;
      if (last.sample_index(rng) != k - 1) row.last_constant = false;
    }
    const double expected = static_cast<double>(draws) / k;
    for (std::size_t c : counts) {
      row.frequencies.push_back(static_cast<double>(c) / static_cast<double>(draws));
      row.chi_square += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
    }
    row.p_value = k > 1 ? chi_square_sf(row.chi_square, k - 1.0) : 1.0;
    rows.push_back(std::move(row));
    std::filesystem::remove_all(dir, ec);
  }
  return rows;
}

}  // namespace sspo
