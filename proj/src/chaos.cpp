#include "mckv/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mckv/kernels.hpp"
#include "mckv/parallel.hpp"
#include "mckv/picard.hpp"
#include "mckv/rng.hpp"

namespace mckv {

TheoreticalRate theoretical_exponent(int d, double beta_or_alpha, RateLaw law) {
  if (d < 1) throw ParameterError("chaos: dimension must be >= 1");
  const double p = beta_or_alpha;
  if (law == RateLaw::Thm2) {
    if (!(p >= 1.0) || p > 2.0) throw ParameterError("chaos: beta out of [1,2]");
  } else {
    if (!(p > 1.0) || !(p < 2.0)) throw ParameterError("chaos: alpha out of (1,2)");
  }

  bool first_regime;  // the N^{1/p - 1} branch
  if (d <= 2) {
    first_regime = true;
  } else {
    const double critical = static_cast<double>(d) / static_cast<double>(d - 1);
    if (p == critical) {
      throw UncoveredCaseError("chaos: critical ratio beta = d/(d-1) is not covered");
    }
    first_regime = p < critical;
  }

  TheoreticalRate rate;
  if (first_regime) {
    rate.exponent = 1.0 / p - 1.0;
    rate.log_correction = law == RateLaw::Thm3 ? 1.0 / p : 0.0;
  } else {
    rate.exponent = -1.0 / static_cast<double>(d);
    rate.log_correction = 0.0;
  }
  return rate;
}

void ExperimentPlan::validate() const {
  coeffs.validate();
  if (coeffs.dim != model.dim()) throw ParameterError("chaos: model/coefficient dim mismatch");
  if (n_grid.empty()) throw ParameterError("chaos: empty N grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) {
      throw ParameterError("chaos: N grid must be strictly increasing");
    }
  }
  if (n_grid.front() < 2) throw ParameterError("chaos: N must be >= 2");
  if (replications < 50) throw ParameterError("chaos: replications must be >= 50");
  if (!initial) throw ParameterError("chaos: initial sampler required");
  limit_flow.validate();
  if (limit_flow.dim != model.dim()) throw ParameterError("chaos: limit flow dim mismatch");
  if (limit_flow.grid->horizon() < base.horizon() - 1e-12) {
    throw GridError("chaos: limit flow horizon shorter than the base grid");
  }
  theoretical_exponent(model.dim(), rate_param, law);  // rejects bad parameters
}

std::string RateReport::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"n", p.n},
                   {"e1", p.e1},
                   {"e1_se", p.e1_se},
                   {"e2", p.e2},
                   {"e2_se", p.e2_se},
                   {"e2_tilde", p.e2_tilde},
                   {"e2_tilde_se", p.e2_tilde_se},
                   {"aborted", p.aborted}});
  }
  const nlohmann::json doc{
      {"name", name},
      {"points", std::move(pts)},
      {"fit",
       {{"slope", fit.slope},
        {"intercept", fit.intercept},
        {"slope_se", fit.slope_se},
        {"r2", fit.r2},
        {"n", fit.n}}},
      {"theory", {{"exponent", theory.exponent}, {"log_correction", theory.log_correction}}},
      {"log_corrected", log_corrected},
      {"zero_error", zero_error},
      {"coupling_checks", coupling_checks},
      {"coupling_violations", coupling_violations},
  };
  return doc.dump(2);
}

namespace {

// Keeps a particle cloud sorted across nodes.  Positions move little per
// step, so re-sorting the previous order by insertion is near linear.
class IncrementalSorter {
 public:
  void sort(const double* x, std::size_t n) {
    if (perm_.size() != n) {
      perm_.resize(n);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      std::sort(perm_.begin(), perm_.end(),
                [x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    } else {
      for (std::size_t i = 1; i < n; ++i) {
        const std::size_t p = perm_[i];
        const double v = x[p];
        std::size_t j = i;
        while (j > 0 && x[perm_[j - 1]] > v) {
          perm_[j] = perm_[j - 1];
          --j;
        }
        perm_[j] = p;
      }
    }
    vals_.resize(n);
    for (std::size_t i = 0; i < n; ++i) vals_[i] = x[perm_[i]];
  }
  std::span<const double> values() const { return vals_; }

 private:
  std::vector<std::size_t> perm_;
  std::vector<double> vals_;
};

// Reference marginal cloud at every base node: ref_size frozen-flow paths,
// each base node's sample sorted for the 1-d quantile distance.
std::vector<std::vector<double>> build_reference_cloud(const ExperimentPlan& plan,
                                                       std::size_t ref_size) {
  const std::size_t nodes = plan.base.num_nodes();
  const int d = plan.model.dim();
  if (d != 1) throw UncoveredCaseError("chaos: reference-cloud E2 is implemented for d == 1");
  std::vector<std::vector<double>> ref(nodes, std::vector<double>(ref_size));
  const PreparedFlow prepared = PreparedFlow::make(plan.limit_flow, plan.coeffs);
  parallel_for(ref_size, plan.threads, [&](std::size_t j) {
    const SeedLineage lineage{plan.master_seed, purpose::kRefCloud, 0, j};
    const FrozenPath path = simulate_frozen_path(plan.model, plan.coeffs, plan.limit_flow,
                                                 plan.base, lineage, plan.scheme,
                                                 plan.initial, &prepared);
    for (std::size_t k = 0; k < nodes; ++k) ref[k][j] = path.base_states[k];
  });
  for (auto& node_sample : ref) std::sort(node_sample.begin(), node_sample.end());
  return ref;
}

struct RepOutcome {
  bool aborted = false;
  double e1 = 0.0;                  // mean_i sup_t |X - Y|
  std::vector<double> w1_ref;       // per base node, interacting vs reference
  std::vector<double> w1_ref_tilde; // per base node, limit copies vs reference
  std::size_t checks = 0;
  std::size_t violations = 0;
};

// One replication of the coupled pair at a given N.  d == 1 fast paths all
// the way down; the reference cloud builder rejects d > 1 upfront.
RepOutcome run_coupled_replication(const ExperimentPlan& plan, std::size_t n,
                                   std::uint64_t rep,
                                   const std::vector<std::vector<double>>& ref) {
  RepOutcome out;
  const std::size_t nodes = plan.base.num_nodes();
  out.w1_ref.assign(nodes, 0.0);
  out.w1_ref_tilde.assign(nodes, 0.0);

  const EnsembleNoise noise = build_ensemble_noise(plan.model, plan.base, n,
                                                   plan.master_seed, rep, plan.scheme);
  // union node -> base node (or npos)
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> base_of(noise.grid->num_nodes(), npos);
  for (std::size_t kb = 0; kb < noise.base_node_index.size(); ++kb) {
    base_of[noise.base_node_index[kb]] = kb;
  }

  const SystemSpec systems[2] = {
      {&plan.coeffs, nullptr, kInf},
      {&plan.coeffs, &plan.limit_flow, kInf},
  };

  std::vector<double> sup_diff(n, 0.0);
  IncrementalSorter sort_x, sort_y;
  try {
    run_coupled_systems(
        plan.model, noise, systems, plan.initial, plan.master_seed, rep,
        [&](std::size_t node, std::span<const EnsembleState> states) {
          const double* x = states[0].comp(0);
          const double* y = states[1].comp(0);
          kernels::max_abs_diff_update(sup_diff.data(), x, y, n);

          // coupling bound at every union node
          const double bound = kernels::sum_abs_diff(x, y, n) / static_cast<double>(n);
          sort_x.sort(x, n);
          sort_y.sort(y, n);
          const double w1 = detail::w1_sorted_1d(sort_x.values(), sort_y.values());
          out.checks += 1;
          if (w1 > bound + 1e-12 * (1.0 + bound)) out.violations += 1;

          const std::size_t kb = base_of[node];
          if (kb != npos) {
            out.w1_ref[kb] = detail::w1_sorted_1d(sort_x.values(), ref[kb]);
            out.w1_ref_tilde[kb] = detail::w1_sorted_1d(sort_y.values(), ref[kb]);
          }
        });
  } catch (const BlowUpError&) {
    out.aborted = true;
    return out;
  }
  out.e1 = kernels::sum(sup_diff.data(), n) / static_cast<double>(n);
  return out;
}

struct Accumulated {
  RatePoint point;
  std::size_t checks = 0, violations = 0;
};

Accumulated fold_outcomes(std::size_t n, std::vector<RepOutcome>& outcomes,
                          std::size_t nodes) {
  Accumulated acc;
  acc.point.n = n;
  std::vector<double> e1s;
  std::vector<std::vector<double>> w1_cols(nodes), w1t_cols(nodes);
  for (const auto& o : outcomes) {
    acc.checks += o.checks;
    acc.violations += o.violations;
    if (o.aborted) {
      acc.point.aborted += 1;
      continue;
    }
    e1s.push_back(o.e1);
    for (std::size_t k = 0; k < nodes; ++k) {
      w1_cols[k].push_back(o.w1_ref[k]);
      w1t_cols[k].push_back(o.w1_ref_tilde[k]);
    }
  }
  if (e1s.empty()) throw AbortRateError("chaos: every replication aborted");
  acc.point.e1 = stats::mean(e1s);
  acc.point.e1_se = stats::standard_error(e1s);

  // sup over base nodes of the per-node means; SE taken at the arg max
  const auto sup_of = [&](const std::vector<std::vector<double>>& cols, double& value,
                          double& se) {
    value = -1.0;
    for (const auto& col : cols) {
      const double m = stats::mean(col);
      if (m > value) {
        value = m;
        se = stats::standard_error(col);
      }
    }
  };
  sup_of(w1_cols, acc.point.e2, acc.point.e2_se);
  sup_of(w1t_cols, acc.point.e2_tilde, acc.point.e2_tilde_se);
  return acc;
}

void fit_rate(RateReport& report, bool against_r, const std::vector<double>& levels) {
  std::vector<double> xs, ys;
  bool all_zero = true;
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const auto& p = report.points[i];
    if (p.e1 > 0.0) all_zero = false;
  }
  if (all_zero) {
    report.zero_error = true;
    return;
  }
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const auto& p = report.points[i];
    if (p.e1 <= 0.0) continue;  // a zero at one level cannot enter the log fit
    const double x = against_r ? std::log(levels[i]) : std::log(static_cast<double>(p.n));
    double y = std::log(p.e1);
    if (report.log_corrected) {
      y -= report.theory.log_correction * std::log(std::log(static_cast<double>(p.n)));
    }
    xs.push_back(x);
    ys.push_back(y);
  }
  if (xs.size() < 2) return;  // nothing to regress; fit stays empty (n = 0)
  report.fit = stats::fit_linear(xs, ys);
}

}  // namespace

RateReport run_poc_experiment(const ExperimentPlan& plan) {
  plan.validate();
  if (plan.n_grid.size() < 4) throw ParameterError("chaos: rate fit needs >= 4 N values");

  RateReport report;
  report.name = plan.name;
  report.theory = theoretical_exponent(plan.model.dim(), plan.rate_param, plan.law);
  report.log_corrected = plan.law == RateLaw::Thm3 && report.theory.log_correction > 0.0;

  const std::size_t ref_size =
      plan.ref_cloud_size ? plan.ref_cloud_size : 16 * plan.n_grid.back();
  const auto ref = build_reference_cloud(plan, ref_size);
  const std::size_t nodes = plan.base.num_nodes();

  for (const std::size_t n : plan.n_grid) {
    std::vector<RepOutcome> outcomes(plan.replications);
    parallel_for(plan.replications, plan.threads, [&](std::size_t rep) {
      outcomes[rep] = run_coupled_replication(plan, n, rep, ref);
    });
    Accumulated acc = fold_outcomes(n, outcomes, nodes);
    if (20 * acc.point.aborted > plan.replications) {
      std::ostringstream msg;
      msg << "chaos: " << acc.point.aborted << "/" << plan.replications
          << " replications aborted at N = " << n;
      throw AbortRateError(msg.str());
    }
    report.points.push_back(acc.point);
    report.coupling_checks += acc.checks;
    report.coupling_violations += acc.violations;
  }
  fit_rate(report, false, {});
  return report;
}

RateReport run_truncation_study(const ExperimentPlan& plan,
                                const std::vector<double>& r_grid) {
  // Reduced validation: the study runs interacting systems only, so the
  // limit flow and the rate case table are not consulted.
  plan.coeffs.validate();
  if (plan.coeffs.dim != plan.model.dim()) {
    throw ParameterError("chaos: model/coefficient dim mismatch");
  }
  if (plan.model.dim() != 1) {
    throw UncoveredCaseError("chaos: truncation study is implemented for d == 1");
  }
  if (plan.n_grid.empty()) throw ParameterError("chaos: empty N grid");
  if (plan.n_grid.back() < 2) throw ParameterError("chaos: N must be >= 2");
  if (plan.replications < 50) throw ParameterError("chaos: replications must be >= 50");
  if (!plan.initial) throw ParameterError("chaos: initial sampler required");
  if (r_grid.size() < 4) throw ParameterError("chaos: truncation fit needs >= 4 levels");
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    if (!(r_grid[i] > 1.0)) throw ParameterError("chaos: truncation levels must exceed 1");
    if (i > 0 && r_grid[i] <= r_grid[i - 1]) {
      throw ParameterError("chaos: truncation levels must be strictly increasing");
    }
  }
  const std::size_t n = plan.n_grid.back();
  const std::size_t levels = r_grid.size();

  RateReport report;
  report.name = plan.name;
  report.theory.exponent = 1.0 - plan.rate_param;  // CN^{1-alpha} against R
  report.log_corrected = false;

  // worker result: per level, mean_i sup_t |X_R - X|; slot per replication
  std::vector<std::vector<double>> e1s(plan.replications,
                                       std::vector<double>(levels, 0.0));
  std::vector<char> aborted(plan.replications, 0);

  parallel_for(plan.replications, plan.threads, [&](std::size_t rep) {
    const EnsembleNoise noise = build_ensemble_noise(plan.model, plan.base, n,
                                                     plan.master_seed, rep, plan.scheme);
    std::vector<SystemSpec> systems(1 + levels);
    systems[0] = {&plan.coeffs, nullptr, kInf};
    for (std::size_t l = 0; l < levels; ++l) {
      systems[1 + l] = {&plan.coeffs, nullptr, r_grid[l]};
    }
    std::vector<std::vector<double>> sup_diff(levels, std::vector<double>(n, 0.0));
    try {
      run_coupled_systems(plan.model, noise, systems, plan.initial, plan.master_seed, rep,
                          [&](std::size_t, std::span<const EnsembleState> states) {
                            const double* x = states[0].comp(0);
                            for (std::size_t l = 0; l < levels; ++l) {
                              kernels::max_abs_diff_update(sup_diff[l].data(), x,
                                                           states[1 + l].comp(0), n);
                            }
                          });
    } catch (const BlowUpError&) {
      aborted[rep] = 1;
      return;
    }
    for (std::size_t l = 0; l < levels; ++l) {
      e1s[rep][l] = kernels::sum(sup_diff[l].data(), n) / static_cast<double>(n);
    }
  });

  std::size_t n_aborted = 0;
  for (const char a : aborted) n_aborted += static_cast<std::size_t>(a);
  if (20 * n_aborted > plan.replications) {
    throw AbortRateError("chaos: truncation study aborted too many replications");
  }
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> col;
    for (std::size_t rep = 0; rep < plan.replications; ++rep) {
      if (!aborted[rep]) col.push_back(e1s[rep][l]);
    }
    RatePoint p;
    p.n = static_cast<std::size_t>(r_grid[l]);
    p.e1 = stats::mean(col);
    p.e1_se = stats::standard_error(col);
    p.aborted = n_aborted;
    report.points.push_back(p);
  }
  fit_rate(report, true, r_grid);
  return report;
}

MomentCurve truncated_moment_curve(double alpha, const std::vector<std::size_t>& n_grid,
                                   double horizon, std::size_t paths,
                                   std::uint64_t master, int threads) {
  if (!(alpha > 1.0) || !(alpha < 2.0)) throw ParameterError("chaos: alpha out of (1,2)");
  if (n_grid.size() < 2) throw ParameterError("chaos: moment curve needs >= 2 levels");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2) throw ParameterError("chaos: truncation level must be >= 2");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) {
      throw ParameterError("chaos: levels must be strictly increasing");
    }
  }
  if (paths < 100) throw ParameterError("chaos: moment curve needs >= 100 paths");

  const auto model = LevyModel::isotropic_stable(alpha, 1, 1.0);
  const TimeGrid grid = TimeGrid::uniform(horizon, 32);
  const std::size_t levels = n_grid.size();

  // |Z_{N,T}|^alpha per (path, level); one realization per path, truncated by
  // filtering events, so the curve is coupled across levels
  std::vector<double> acc(paths * levels, 0.0);
  parallel_for(paths, threads, [&](std::size_t j) {
    const SeedLineage lineage{master, purpose::kNoise, 0, j};
    const NoiseRealization noise =
        synthesize_realization(model, grid, lineage, SmallJumpScheme::InnerCutoff);
    double small_total = 0.0;
    for (std::size_t k = 0; k < noise.grid->num_steps(); ++k) {
      small_total += noise.step_increment(k)[0];
    }
    for (std::size_t l = 0; l < levels; ++l) {
      const double level = static_cast<double>(n_grid[l]);
      double total = small_total;
      for (const auto& ev : noise.events) {
        if (std::fabs(ev.size[0]) < level) total += ev.size[0];
      }
      // isotropic noise: the [1, level) compensator is zero by symmetry, but
      // keep the general form
      total -= horizon * model.mean_annulus(1.0, level)[0];
      acc[j * levels + l] = std::pow(std::fabs(total), alpha);
    }
  });

  MomentCurve curve;
  std::vector<double> xs, ys;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> col(paths);
    for (std::size_t j = 0; j < paths; ++j) col[j] = acc[j * levels + l];
    MomentCurvePoint p;
    p.n = n_grid[l];
    p.estimate = stats::mean(col);
    p.se = stats::standard_error(col);
    curve.points.push_back(p);
    xs.push_back(std::log(static_cast<double>(p.n)));
    ys.push_back(p.estimate);
  }
  curve.fit = stats::fit_linear(xs, ys);
  return curve;
}

NonUniquenessDemo nonuniqueness_demo(double beta, double horizon, std::size_t steps) {
  if (!(beta > 0.0) || !(beta < 1.0)) throw ParameterError("chaos: beta out of (0,1)");
  if (steps < 8) throw ParameterError("chaos: too few grid steps");
  const TimeGrid grid = TimeGrid::uniform(horizon, steps);

  NonUniquenessDemo demo;
  demo.times.assign(grid.nodes().begin(), grid.nodes().end());
  demo.residual_tolerance = horizon / static_cast<double>(steps);
  demo.endpoint_closed_form = std::pow((1.0 - beta) * horizon, 1.0 / (1.0 - beta));

  // branch (a): the Picard solver from xi = 0 stays on the zero solution
  {
    const auto model = LevyModel::compound_poisson({{{2.0}, 1e-12}}, 1, 1.0);
    const auto coeffs = moment_drift_coefficients(1, beta);
    PicardConfig config;
    config.particles_m = 64;
    config.max_iters = 4;
    config.min_iters = 1;
    config.tol = 1e-12;
    config.beta = 1.0;
    const auto solved = solve_fixed_point(model, coeffs, grid, config, 2026,
                                          point_mass_initial({0.0}));
    const MeasureFlow& flow = solved.first;
    demo.zero_branch.resize(grid.num_nodes());
    for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
      const auto cloud = flow.cloud_at_node(k);
      demo.zero_branch[k] = kernels::sum(cloud.pts.data(), cloud.pts.size()) /
                            static_cast<double>(cloud.size());
    }
  }

  // branch (b): y' = |y|^beta from a micro-perturbation, RK4 substeps
  {
    demo.grown_branch.resize(grid.num_nodes());
    double y = 1e-12;
    demo.grown_branch[0] = y;
    const auto rhs = [beta](double v) { return std::pow(std::fabs(v), beta); };
    for (std::size_t k = 0; k < grid.num_steps(); ++k) {
      const int sub = 20;
      const double h = grid.dt(k) / sub;
      for (int s = 0; s < sub; ++s) {
        const double k1 = rhs(y);
        const double k2 = rhs(y + 0.5 * h * k1);
        const double k3 = rhs(y + 0.5 * h * k2);
        const double k4 = rhs(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      demo.grown_branch[k + 1] = y;
    }
  }

  // residuals |dy/dt - |y|^beta| by central differences (one-sided at ends)
  const auto residual = [&](const std::vector<double>& ys) {
    double worst = 0.0;
    const std::size_t m = ys.size();
    for (std::size_t k = 0; k < m; ++k) {
      double deriv;
      if (k == 0) {
        deriv = (ys[1] - ys[0]) / (demo.times[1] - demo.times[0]);
      } else if (k == m - 1) {
        deriv = (ys[m - 1] - ys[m - 2]) / (demo.times[m - 1] - demo.times[m - 2]);
      } else {
        deriv = (ys[k + 1] - ys[k - 1]) / (demo.times[k + 1] - demo.times[k - 1]);
      }
      worst = std::max(worst, std::fabs(deriv - std::pow(std::fabs(ys[k]), beta)));
    }
    return worst;
  };
  demo.zero_residual = residual(demo.zero_branch);
  demo.grown_residual = residual(demo.grown_branch);
  return demo;
}

}  // namespace mckv
