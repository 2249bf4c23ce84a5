#include "mckv/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mckv/chaos.hpp"
#include "mckv/coefficients.hpp"
#include "mckv/engine.hpp"
#include "mckv/errors.hpp"
#include "mckv/io.hpp"
#include "mckv/levy.hpp"
#include "mckv/measure.hpp"
#include "mckv/parallel.hpp"
#include "mckv/picard.hpp"
#include "mckv/rng.hpp"
#include "mckv/stats.hpp"

namespace mckv {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Artifact registry: every file a run writes goes through path() so the
// manifest can list and hash all of them afterwards.
struct Artifacts {
  fs::path dir;
  std::vector<std::string> files;

  std::string path(const std::string& name) {
    files.push_back((dir / name).string());
    return files.back();
  }
};

LevyModel build_model(const RunConfig& c) {
  if (c.model_type == "stable") {
    return LevyModel::isotropic_stable(c.alpha, c.dim, c.declared_beta);
  }
  return LevyModel::compound_poisson(c.atoms, c.dim, c.declared_beta);
}

CoefficientSet build_coefficients(const RunConfig& c) {
  if (c.coeff_type == "stable_ou") {
    if (c.dim == 1) {
      return stable_ou_coefficients(c.coeff_a, c.coeff_a_prime, c.coeff_b);
    }
    const std::size_t d = static_cast<std::size_t>(c.dim);
    std::vector<double> a(d * d, 0.0), ap(d * d, 0.0), b(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      a[i * d + i] = c.coeff_a;
      ap[i * d + i] = c.coeff_a_prime;
      b[i * d + i] = c.coeff_b;
    }
    return stable_ou_coefficients(c.dim, a, ap, b);
  }
  if (c.coeff_type == "sin_mean") {
    return sin_mean_coefficients(c.dim, c.coeff_a, c.coeff_c, c.coeff_s);
  }
  return moment_drift_coefficients(c.dim, c.coeff_beta);
}

InitialSampler build_initial(const RunConfig& c) {
  if (c.initial_type == "point") {
    return point_mass_initial(std::vector<double>(c.dim, c.initial_value));
  }
  if (c.initial_type == "gaussian") {
    return gaussian_initial(std::vector<double>(c.dim, c.initial_value), c.initial_sd);
  }
  if (c.dim != 1) throw ParameterError("runner: pareto initial is one dimensional");
  return pareto_initial(c.pareto_exponent, c.pareto_scale);
}

std::vector<double> initial_mean(const RunConfig& c) {
  if (c.initial_type == "pareto") {
    if (!(c.pareto_exponent > 1.0)) {
      throw ParameterError("runner: pareto initial needs exponent > 1 for the mean flow");
    }
    return {c.pareto_scale * c.pareto_exponent / (c.pareto_exponent - 1.0)};
  }
  return std::vector<double>(c.dim, c.initial_value);
}

ExperimentPlan make_plan(const RunConfig& c) {
  ExperimentPlan plan;
  plan.name = c.name;
  plan.model = build_model(c);
  plan.coeffs = build_coefficients(c);
  plan.rate_param = c.rate_param;
  plan.law = c.law == "thm3" ? RateLaw::Thm3 : RateLaw::Thm2;
  plan.n_grid = c.n_grid;
  plan.replications = c.replications;
  plan.base = TimeGrid::uniform(c.horizon, c.steps);
  plan.master_seed = c.seed;
  plan.scheme = c.scheme == "inner_cutoff" ? SmallJumpScheme::InnerCutoff
                                           : SmallJumpScheme::ExactTotal;
  plan.initial = build_initial(c);
  plan.ref_cloud_size = c.ref_cloud_size;
  plan.threads = c.threads;
  return plan;
}

// The frozen limit law the interacting system is coupled against.  The
// linear model has it in closed form; anything with general measure
// dependence gets a fixed-point solve at reference-cloud resolution.
MeasureFlow build_limit_flow(const RunConfig& c, const ExperimentPlan& plan) {
  auto grid = std::make_shared<TimeGrid>(plan.base);
  if (c.coeff_type == "stable_ou") {
    const std::size_t d = static_cast<std::size_t>(c.dim);
    std::vector<double> a(d * d, 0.0), ap(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      a[i * d + i] = c.coeff_a;
      ap[i * d + i] = c.coeff_a_prime;
    }
    std::vector<double> m0 = initial_mean(c);
    if (m0.size() != d) m0.assign(d, m0[0]);
    return stable_ou_mean_flow(c.dim, a, ap, m0, grid);
  }
  PicardConfig pc;
  pc.particles_m = plan.ref_cloud_size ? plan.ref_cloud_size : 16 * plan.n_grid.back();
  pc.max_iters = 12;
  pc.min_iters = 3;
  pc.tol = 1e-3;
  pc.beta = std::min(1.0, plan.model.declared_beta());
  auto [flow, report] = solve_fixed_point(plan.model, plan.coeffs, plan.base, pc,
                                          c.seed, plan.initial);
  std::printf("  limit law solved in %zu iterations\n", report.iterations);
  return flow;
}

void write_rate_csv(const std::string& path, const RateReport& rep) {
  io::CsvFile csv(path);
  csv.cell("n").cell("e1").cell("e1_se").cell("e2").cell("e2_se");
  csv.cell("e2_tilde").cell("e2_tilde_se").cell("aborted");
  csv.end_row();
  for (const auto& p : rep.points) {
    csv.cell(p.n).cell(p.e1).cell(p.e1_se).cell(p.e2).cell(p.e2_se);
    csv.cell(p.e2_tilde).cell(p.e2_tilde_se).cell(p.aborted);
    csv.end_row();
  }
  csv.close();
}

void write_truncation_csv(const std::string& path, const RateReport& rep,
                          const std::vector<double>& levels) {
  io::CsvFile csv(path);
  csv.cell("r").cell("e1").cell("e1_se").cell("aborted");
  csv.end_row();
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    csv.cell(levels[i]).cell(rep.points[i].e1).cell(rep.points[i].e1_se);
    csv.cell(rep.points[i].aborted);
    csv.end_row();
  }
  csv.close();
}

// Log-log plot of the report: per-level errors with error bars, the fitted
// slope, and the theoretical slope anchored through the fit's midpoint.
// The log correction, when active, is divided out of the plotted values so
// the fitted line drawn in that space is the one actually regressed.
void write_rate_svg(const std::string& path, const RateReport& rep,
                    const std::string& x_label, const std::vector<double>* levels) {
  const double corr = rep.log_corrected ? rep.theory.log_correction : 0.0;
  const auto x_of = [&](std::size_t i) {
    return levels ? (*levels)[i] : static_cast<double>(rep.points[i].n);
  };
  io::PlotSeries e1;
  e1.label = corr > 0.0 ? "E1 / (ln N)^" + fmt("%.3g", corr) : "E1";
  io::PlotSeries e2;
  e2.label = corr > 0.0 ? "E2 / (ln N)^" + fmt("%.3g", corr) : "E2";
  e2.color = "#2a9d4e";
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    const auto& p = rep.points[i];
    const double x = x_of(i);
    const double scale = corr > 0.0 ? std::pow(std::log(x), corr) : 1.0;
    if (p.e1 > 0.0) {
      e1.x.push_back(x);
      e1.y.push_back(p.e1 / scale);
      e1.yerr.push_back(p.e1_se / scale);
    }
    if (p.e2 > 0.0) {
      e2.x.push_back(x);
      e2.y.push_back(p.e2 / scale);
      e2.yerr.push_back(p.e2_se / scale);
    }
  }
  if (e1.x.empty()) return;  // all-zero errors: nothing to plot
  std::vector<io::PlotSeries> series{e1};
  if (!e2.x.empty()) series.push_back(e2);

  std::vector<io::PlotLine> lines;
  if (!rep.zero_error && rep.fit.n >= 2) {
    lines.push_back({"fit slope " + fmt("%.3f", rep.fit.slope), rep.fit.slope,
                     rep.fit.intercept, "#b23a1f", false});
    const double x_mid = 0.5 * (std::log(e1.x.front()) + std::log(e1.x.back()));
    const double anchor = rep.fit.intercept + (rep.fit.slope - rep.theory.exponent) * x_mid;
    lines.push_back({"theory slope " + fmt("%.3f", rep.theory.exponent),
                     rep.theory.exponent, anchor, "#777777", true});
  }
  io::write_loglog_plot(path, rep.name, x_label, "strong error", series, lines);
}

int slope_gate(const RunConfig& c, const RateReport& rep) {
  if (c.slope_tolerance <= 0.0) return kExitSuccess;
  if (rep.zero_error || rep.fit.n < 2) return kExitThreshold;
  if (std::fabs(rep.fit.slope - rep.theory.exponent) > c.slope_tolerance) {
    return kExitThreshold;
  }
  return kExitSuccess;
}

int run_poc(const RunConfig& c, Artifacts& art) {
  ExperimentPlan plan = make_plan(c);
  std::printf("poc '%s': %zu levels x %zu replications\n", c.name.c_str(),
              plan.n_grid.size(), plan.replications);
  plan.limit_flow = build_limit_flow(c, plan);
  RateReport rep = run_poc_experiment(plan);
  write_rate_csv(art.path("rate.csv"), rep);
  io::write_text_file(art.path("report.json"), rep.to_json() + "\n");
  write_rate_svg(art.path("rate.svg"), rep, "N", nullptr);
  if (!rep.zero_error && rep.fit.n >= 2) {
    std::printf("  slope %.4f +- %.4f, theory %.4f, coupling %zu/%zu ok\n",
                rep.fit.slope, rep.fit.slope_se, rep.theory.exponent,
                rep.coupling_checks - rep.coupling_violations, rep.coupling_checks);
  }
  return slope_gate(c, rep);
}

int run_truncation(const RunConfig& c, Artifacts& art) {
  ExperimentPlan plan = make_plan(c);
  std::printf("truncation '%s': N = %zu, %zu levels x %zu replications\n",
              c.name.c_str(), plan.n_grid.back(), c.truncation_levels.size(),
              plan.replications);
  RateReport rep = run_truncation_study(plan, c.truncation_levels);
  write_truncation_csv(art.path("truncation.csv"), rep, c.truncation_levels);
  io::write_text_file(art.path("report.json"), rep.to_json() + "\n");
  write_rate_svg(art.path("truncation.svg"), rep, "R", &c.truncation_levels);
  if (!rep.zero_error && rep.fit.n >= 2) {
    std::printf("  slope %.4f, theory %.4f\n", rep.fit.slope, rep.theory.exponent);
  }

  if (!c.moment_grid.empty()) {
    MomentCurve mc = truncated_moment_curve(c.alpha, c.moment_grid, c.horizon,
                                            c.moment_paths, c.seed, c.threads);
    io::CsvFile csv(art.path("moment.csv"));
    csv.cell("n").cell("estimate").cell("se");
    csv.end_row();
    io::PlotSeries s;
    s.label = "E |Z_N|^a";
    for (const auto& p : mc.points) {
      csv.cell(p.n).cell(p.estimate).cell(p.se);
      csv.end_row();
      s.x.push_back(static_cast<double>(p.n));
      s.y.push_back(p.estimate);
      s.yerr.push_back(p.se);
    }
    csv.close();
    json doc;
    doc["fit"] = {{"slope", mc.fit.slope},
                  {"intercept", mc.fit.intercept},
                  {"r2", mc.fit.r2},
                  {"n", mc.fit.n}};
    io::write_text_file(art.path("moment.json"), doc.dump(2) + "\n");
    std::vector<io::PlotSeries> series{s};
    std::vector<io::PlotLine> lines{
        {"fit vs ln N, r2 " + fmt("%.3f", mc.fit.r2), mc.fit.slope, mc.fit.intercept,
         "#b23a1f", false}};
    io::write_semilogx_plot(art.path("moment.svg"), c.name + " truncated moments", "N",
                            "E |Z_N|^a", series, lines);
    std::printf("  moment growth %.4f per ln N, r2 %.4f\n", mc.fit.slope, mc.fit.r2);
  }
  return slope_gate(c, rep);
}

std::vector<double> node_mean(const MeasureFlow& flow, std::size_t k) {
  const EmpiricalMeasure cloud = flow.cloud_at_node(k);
  const std::size_t d = static_cast<std::size_t>(cloud.dim);
  std::vector<double> mean(d, 0.0);
  const std::size_t n = cloud.pts.size() / d;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += cloud.pts[i * d + j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

int run_picard(const RunConfig& c, Artifacts& art) {
  const LevyModel model = build_model(c);
  const CoefficientSet coeffs = build_coefficients(c);
  const InitialSampler initial = build_initial(c);
  const TimeGrid grid = TimeGrid::uniform(c.horizon, c.steps);
  PicardConfig pc;
  pc.particles_m = c.picard_particles;
  pc.max_iters = c.picard_max_iters;
  pc.min_iters = c.picard_min_iters;
  pc.tol = c.picard_tol;
  pc.beta = c.metric_beta;
  pc.common_noise = c.common_noise;
  std::printf("picard '%s': M = %zu, up to %zu iterations\n", c.name.c_str(),
              pc.particles_m, pc.max_iters);

  MeasureFlow flow;
  ContractionReport rep;
  bool converged = true;
  try {
    auto [f, r] = solve_fixed_point(model, coeffs, grid, pc, c.seed, initial);
    flow = std::move(f);
    rep = std::move(r);
  } catch (const NonConvergenceError& err) {
    rep = err.report;
    converged = false;
    std::fprintf(stderr, "%s\n", err.what());
  }

  {
    io::CsvFile csv(art.path("contraction.csv"));
    csv.cell("iteration").cell("delta").cell("noise_floor");
    csv.end_row();
    for (std::size_t k = 0; k < rep.delta.size(); ++k) {
      csv.cell(k).cell(rep.delta[k]).cell(rep.noise_floor[k]);
      csv.end_row();
    }
    csv.close();
  }

  double ratio = 0.0;
  if (rep.delta.size() >= 3) ratio = contraction_ratio(rep);
  double re_delta = 0.0, re_floor = 0.0;
  if (converged) {
    const MeasureFlow again = apply_phi(model, coeffs, flow, grid, pc, c.seed,
                                        rep.iterations, false, initial);
    const MeasureFlow twin = apply_phi(model, coeffs, flow, grid, pc, c.seed,
                                       rep.iterations, true, initial);
    re_delta = flow_distance(flow, again, pc.beta);
    re_floor = flow_distance(again, twin, pc.beta);

    io::CsvFile csv(art.path("flow.csv"));
    csv.cell("time");
    for (int j = 0; j < flow.dim; ++j) csv.cell("mean_" + std::to_string(j));
    csv.end_row();
    for (std::size_t k = 0; k < flow.grid->num_nodes(); ++k) {
      csv.cell(flow.grid->nodes()[k]);
      for (double m : node_mean(flow, k)) csv.cell(m);
      csv.end_row();
    }
    csv.close();
  }

  json doc = json::parse(rep.to_json());
  doc["converged"] = converged;
  doc["contraction_ratio"] = ratio;
  doc["reapplication_delta"] = re_delta;
  doc["reapplication_floor"] = re_floor;
  io::write_text_file(art.path("picard.json"), doc.dump(2) + "\n");
  if (converged) {
    std::printf("  converged in %zu iterations, ratio %.4f, re-application %.3g "
                "(floor %.3g)\n",
                rep.iterations, ratio, re_delta, re_floor);
  }
  return converged ? kExitSuccess : kExitThreshold;
}

int run_nonuniqueness(const RunConfig& c, Artifacts& art) {
  std::printf("nonuniqueness '%s': beta = %g over %zu steps\n", c.name.c_str(),
              c.nu_beta, c.nu_steps);
  const NonUniquenessDemo demo = nonuniqueness_demo(c.nu_beta, c.nu_horizon, c.nu_steps);

  io::CsvFile csv(art.path("branches.csv"));
  csv.cell("time").cell("zero_branch").cell("grown_branch");
  csv.end_row();
  for (std::size_t k = 0; k < demo.times.size(); ++k) {
    csv.cell(demo.times[k]).cell(demo.zero_branch[k]).cell(demo.grown_branch[k]);
    csv.end_row();
  }
  csv.close();

  json doc{{"beta", c.nu_beta},
           {"horizon", c.nu_horizon},
           {"steps", c.nu_steps},
           {"zero_residual", demo.zero_residual},
           {"grown_residual", demo.grown_residual},
           {"residual_tolerance", demo.residual_tolerance},
           {"endpoint_closed_form", demo.endpoint_closed_form},
           {"grown_endpoint", demo.grown_branch.back()}};
  io::write_text_file(art.path("nonuniqueness.json"), doc.dump(2) + "\n");

  io::PlotSeries zero{.label = "picard branch", .x = demo.times, .y = demo.zero_branch};
  io::PlotSeries grown{.label = "grown branch", .x = demo.times, .y = demo.grown_branch};
  grown.color = "#2a9d4e";
  std::vector<io::PlotSeries> series{zero, grown};
  io::write_semilogx_plot(art.path("branches.svg"), c.name, "t", "y(t)", series, {});

  const bool ok = demo.zero_residual <= demo.residual_tolerance &&
                  demo.grown_residual <= demo.residual_tolerance;
  std::printf("  residuals %.3g / %.3g vs tolerance %.3g, endpoint %.6f vs %.6f\n",
              demo.zero_residual, demo.grown_residual, demo.residual_tolerance,
              demo.grown_branch.back(), demo.endpoint_closed_form);
  return ok ? kExitSuccess : kExitThreshold;
}

// Expected E cos(u Z_T[0]) for the total increment over [0, T].  Stable
// totals are exact by normalization; compound Poisson follows from the
// exponent with small jumps compensated below |z| = 1.
double cf_cos_expected(const RunConfig& c, double u, double t) {
  if (c.model_type == "stable") return std::exp(-t * std::pow(u, c.alpha));
  double re = 0.0, im = 0.0;
  for (const auto& atom : c.atoms) {
    double norm2 = 0.0;
    for (double z : atom.z) norm2 += z * z;
    const double z0 = atom.z[0];
    re += atom.rate * (std::cos(u * z0) - 1.0);
    im += atom.rate * (std::sin(u * z0) - (norm2 < 1.0 ? u * z0 : 0.0));
  }
  return std::exp(t * re) * std::cos(t * im);
}

int run_noise_validate(const RunConfig& c, Artifacts& art) {
  const LevyModel model = build_model(c);
  const double horizon = c.validate_horizon;
  const TimeGrid grid = TimeGrid::uniform(horizon, 8);
  const std::size_t paths = c.validate_paths;
  std::printf("noise-validate '%s': %zu paths over [0, %g]\n", c.name.c_str(), paths,
              horizon);

  std::vector<long> counts(paths);
  std::vector<double> totals(paths);
  std::vector<std::vector<double>> times_per(paths);
  parallel_for(paths, c.threads, [&](std::size_t j) {
    const NoiseRealization nr = synthesize_realization(
        model, grid, {c.seed, purpose::kValidation, 0, j}, SmallJumpScheme::ExactTotal);
    counts[j] = static_cast<long>(nr.events.size());
    double total = 0.0;
    for (std::size_t k = 0; k < nr.grid->num_steps(); ++k) {
      total += nr.step_increment(k)[0];
    }
    for (const auto& ev : nr.events) {
      total += ev.size[0];
      times_per[j].push_back(ev.time);
    }
    totals[j] = total;
  });

  struct Row {
    std::string test, metric;
    double value = 0.0, threshold = 0.0;
    bool pass = false;
  };
  std::vector<Row> rows;

  const double lambda = model.rate_annulus(1.0, kInf) * horizon;
  const auto gof = stats::chi2_poisson_gof(counts, lambda);
  rows.push_back({"poisson_counts", "p_value", gof.p_value, c.significance,
                  gof.p_value >= c.significance});

  std::vector<double> times;
  for (const auto& per : times_per) times.insert(times.end(), per.begin(), per.end());
  if (times.size() >= 5) {
    const auto ks = stats::ks_test_uniform(times, 0.0, horizon);
    rows.push_back({"event_times_uniform", "p_value", ks.p_value, c.significance,
                    ks.p_value >= c.significance});
  }

  for (const double u : {0.5, 1.0, 2.0}) {
    const auto pt = stats::ecf_cos(totals, u);
    const double target = cf_cos_expected(c, u, horizon);
    const double dev = std::fabs(pt.value - target);
    const double score = pt.se > 0.0 ? dev / pt.se : (dev > 0.0 ? 1e300 : 0.0);
    rows.push_back({"cf_cos_u_" + fmt("%g", u), "deviation_over_se", score, 3.0,
                    score <= 3.0});
  }

  bool all_pass = true;
  {
    io::CsvFile csv(art.path("validation.csv"));
    csv.cell("test").cell("metric").cell("value").cell("threshold").cell("result");
    csv.end_row();
    for (const auto& row : rows) {
      csv.cell(row.test).cell(row.metric).cell(row.value).cell(row.threshold);
      csv.cell(row.pass ? "pass" : "fail");
      csv.end_row();
      all_pass = all_pass && row.pass;
      std::printf("  %-22s %-18s %10.4g  %s\n", row.test.c_str(), row.metric.c_str(),
                  row.value, row.pass ? "pass" : "fail");
    }
    csv.close();
  }

  json doc{{"paths", paths}, {"significance", c.significance}, {"pass", all_pass}};
  doc["tests"] = json::array();
  for (const auto& row : rows) {
    doc["tests"].push_back({{"test", row.test},
                            {"metric", row.metric},
                            {"value", row.value},
                            {"threshold", row.threshold},
                            {"pass", row.pass}});
  }
  io::write_text_file(art.path("validation.json"), doc.dump(2) + "\n");
  return all_pass ? kExitSuccess : kExitThreshold;
}

}  // namespace

int run_experiment(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Artifacts art;
  art.dir = config.out_dir;
  std::error_code ec;
  fs::create_directories(art.dir, ec);
  if (ec) throw IoError("runner: cannot create output directory " + art.dir.string());

  int code = kExitSuccess;
  try {
    switch (config.kind) {
      case RunKind::Poc: code = run_poc(config, art); break;
      case RunKind::Truncation: code = run_truncation(config, art); break;
      case RunKind::Picard: code = run_picard(config, art); break;
      case RunKind::NonUniqueness: code = run_nonuniqueness(config, art); break;
      case RunKind::NoiseValidate: code = run_noise_validate(config, art); break;
    }
  } catch (const AbortRateError& err) {
    std::fprintf(stderr, "%s\n", err.what());
    return kExitBlowUp;
  } catch (const BlowUpError& err) {
    std::fprintf(stderr, "%s\n", err.what());
    return kExitBlowUp;
  } catch (const NonConvergenceError& err) {
    // a limit-law solve that feeds another experiment did not converge
    std::fprintf(stderr, "%s\n", err.what());
    return kExitThreshold;
  } catch (const ConfigError& err) {
    for (const auto& problem : err.errors) std::fprintf(stderr, "%s\n", problem.c_str());
    return kExitValidation;
  } catch (const IoError&) {
    throw;  // environment problem, not a validation outcome
  } catch (const std::logic_error& err) {
    // ParameterError, GridError, SizeError, UncoveredCaseError: the plan
    // cannot be run as configured
    std::fprintf(stderr, "%s\n", err.what());
    return kExitValidation;
  } catch (const std::runtime_error& err) {
    std::fprintf(stderr, "%s\n", err.what());
    return kExitValidation;
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string manifest = (art.dir / "manifest.json").string();
  io::write_manifest(manifest, config.to_json(), elapsed, art.files);
  for (const auto& file : art.files) std::printf("wrote %s\n", file.c_str());
  std::printf("wrote %s\n", manifest.c_str());
  return code;
}

}  // namespace mckv
