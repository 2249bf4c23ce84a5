// Acceptance gate: ten end-to-end criteria, one [PASS]/[FAIL] line each.
// Tolerances are pinned here, not in configs, so the gate cannot drift.
// Exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mckv/chaos.hpp"
#include "mckv/coefficients.hpp"
#include "mckv/engine.hpp"
#include "mckv/io.hpp"
#include "mckv/levy.hpp"
#include "mckv/measure.hpp"
#include "mckv/picard.hpp"
#include "mckv/rng.hpp"
#include "mckv/stats.hpp"

using namespace mckv;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int idx, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", idx, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char* spec, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// ---- criteria 1, 2, 10 share the coupled-pair experiment ----

ExperimentPlan stable_ou_plan(int threads) {
  ExperimentPlan plan;
  plan.name = "acceptance stable-OU";
  plan.model = LevyModel::isotropic_stable(1.5, 1, 1.0);
  plan.coeffs = stable_ou_coefficients(0.0, 0.5, 1.0);
  plan.rate_param = 1.5;
  plan.law = RateLaw::Thm3;
  plan.n_grid = {64, 128, 256, 512, 1024, 2048, 4096};
  plan.replications = 200;
  plan.base = TimeGrid::uniform(1.0, 50);
  plan.master_seed = 20260815;
  plan.scheme = SmallJumpScheme::ExactTotal;
  plan.initial = point_mass_initial({0.0});
  plan.threads = threads;
  auto grid = std::make_shared<TimeGrid>(plan.base);
  const std::vector<double> a{0.0}, ap{0.5}, m0{0.0};
  plan.limit_flow = stable_ou_mean_flow(1, a, ap, m0, grid);
  return plan;
}

ExperimentPlan cp_plan() {
  ExperimentPlan plan;
  plan.name = "acceptance compound-Poisson";
  plan.model = LevyModel::compound_poisson(
      {{{0.6}, 1.0}, {{-0.6}, 1.0}, {{1.8}, 0.15}, {{-1.8}, 0.15}}, 1, 2.0);
  plan.coeffs = stable_ou_coefficients(-0.5, 0.5, 1.0);
  plan.rate_param = 2.0;
  plan.law = RateLaw::Thm2;
  plan.n_grid = {64, 128, 256, 512, 1024, 2048, 4096};
  plan.replications = 200;
  plan.base = TimeGrid::uniform(1.0, 50);
  plan.master_seed = 20260816;
  plan.scheme = SmallJumpScheme::ExactTotal;
  plan.initial = point_mass_initial({1.0});
  plan.threads = 1;
  auto grid = std::make_shared<TimeGrid>(plan.base);
  const std::vector<double> a{-0.5}, ap{0.5}, m0{1.0};
  plan.limit_flow = stable_ou_mean_flow(1, a, ap, m0, grid);
  return plan;
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

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- criterion 6 brute force ----

// Minimum matching cost by permutation enumeration, with the same ground
// cost, summation order, and outer exponent as the assignment route.
double brute_force_w(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                     double beta) {
  const std::size_t n = mu.size();
  const std::size_t d = static_cast<std::size_t>(mu.dim);
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = mu.pts[i * d + k] - nu.pts[j * d + k];
        s += diff * diff;
      }
      cost[i * n + j] = std::pow(s, 0.5 * beta);
    }
  }
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += cost[p[j] * n + j];
    best = std::min(best, total);
  } while (std::next_permutation(p.begin(), p.end()));
  const double mean_cost = best / static_cast<double>(n);
  return beta >= 1.0 ? std::pow(mean_cost, 1.0 / beta) : mean_cost;
}

}  // namespace

int main() {
  std::printf("acceptance gate, build %s\n", io::build_id().c_str());
  const fs::path tmp = fs::temp_directory_path() / "mckv_acceptance";
  fs::create_directories(tmp);

  std::size_t coupling_checks = 0, coupling_violations = 0;

  // criterion 1: heavy-tail rate with log correction
  RateReport rep_ou;
  {
    Stopwatch watch;
    rep_ou = run_poc_experiment(stable_ou_plan(1));
    const double elapsed = watch.seconds();
    coupling_checks += rep_ou.coupling_checks;
    coupling_violations += rep_ou.coupling_violations;
    const bool pass = rep_ou.log_corrected && rep_ou.fit.n >= 2 &&
                      std::fabs(rep_ou.fit.slope - (-1.0 / 3.0)) <= 0.15 &&
                      elapsed <= 600.0;
    report(1, pass,
           "stable-OU log-corrected slope " + fmt("%.4f", rep_ou.fit.slope) +
               " vs -1/3 (tol 0.15), " + fmt("%.1f", elapsed) + "s");
  }

  // criterion 2: bounded-jump CLT-type rate
  RateReport rep_cp;
  {
    Stopwatch watch;
    rep_cp = run_poc_experiment(cp_plan());
    const double elapsed = watch.seconds();
    coupling_checks += rep_cp.coupling_checks;
    coupling_violations += rep_cp.coupling_violations;
    const bool pass = rep_cp.fit.n >= 2 &&
                      std::fabs(rep_cp.fit.slope - (-0.5)) <= 0.15 && elapsed <= 600.0;
    report(2, pass,
           "compound-Poisson slope " + fmt("%.4f", rep_cp.fit.slope) +
               " vs -0.5 (tol 0.15), " + fmt("%.1f", elapsed) + "s");
  }

  // criterion 3: truncation error decay in the cutoff radius
  {
    Stopwatch watch;
    ExperimentPlan plan;
    plan.name = "acceptance truncation";
    plan.model = LevyModel::isotropic_stable(1.5, 1, 1.0);
    plan.coeffs = stable_ou_coefficients(-0.5, 0.4, 1.0);
    plan.rate_param = 1.5;
    plan.law = RateLaw::Thm3;
    plan.n_grid = {2048};
    plan.replications = 200;
    plan.base = TimeGrid::uniform(1.0, 50);
    plan.master_seed = 20260817;
    plan.initial = point_mass_initial({0.0});
    plan.threads = 1;
    const std::vector<double> r_grid{4, 8, 16, 32, 64, 128, 256};
    const RateReport rep = run_truncation_study(plan, r_grid);
    const double elapsed = watch.seconds();
    const bool pass = rep.fit.n >= 2 && std::fabs(rep.fit.slope - (-0.5)) <= 0.2 &&
                      elapsed <= 300.0;
    report(3, pass,
           "truncation slope " + fmt("%.4f", rep.fit.slope) + " vs -0.5 (tol 0.2), " +
               fmt("%.1f", elapsed) + "s");
  }

  // criterion 4: truncated moments grow like ln N
  {
    Stopwatch watch;
    const MomentCurve curve =
        truncated_moment_curve(1.5, {16, 64, 256, 1024, 4096}, 1.0, 200000, 20260817, 1);
    const double elapsed = watch.seconds();
    const bool pass =
        curve.fit.r2 >= 0.9 && curve.fit.slope > 0.0 && elapsed <= 120.0;
    report(4, pass,
           "moment curve r2 " + fmt("%.4f", curve.fit.r2) + " (needs 0.9), " +
               fmt("%.1f", elapsed) + "s");
  }

  // criterion 5: the fixed-point map contracts down to Monte Carlo resolution
  {
    Stopwatch watch;
    const LevyModel model = LevyModel::isotropic_stable(1.5, 1, 1.0);
    const CoefficientSet coeffs = sin_mean_coefficients(1, -0.5, 0.8, 1.0);
    const InitialSampler initial = gaussian_initial({0.0}, 1.0);
    const TimeGrid grid = TimeGrid::uniform(0.5, 25);
    PicardConfig pc;
    pc.particles_m = 10000;
    pc.max_iters = 10;
    pc.min_iters = 5;
    pc.tol = 1e-3;
    pc.beta = 1.0;
    bool pass = true;
    std::string detail;
    try {
      const auto [flow, rep] = solve_fixed_point(model, coeffs, grid, pc, 20260818, initial);
      std::size_t above_floor = 0;
      for (std::size_t k = 0; k + 1 < rep.delta.size(); ++k) {
        if (rep.delta[k] > rep.noise_floor[k] && rep.delta[k + 1] > rep.noise_floor[k + 1]) {
          ++above_floor;
          if (!(rep.delta[k + 1] / rep.delta[k] < 1.0)) pass = false;
        }
      }
      if (above_floor == 0) pass = false;
      const MeasureFlow again =
          apply_phi(model, coeffs, flow, grid, pc, 20260818, rep.iterations, false, initial);
      const MeasureFlow twin =
          apply_phi(model, coeffs, flow, grid, pc, 20260818, rep.iterations, true, initial);
      const double re_delta = flow_distance(flow, again, pc.beta);
      const double re_floor = flow_distance(again, twin, pc.beta);
      if (!(re_delta < 3.0 * re_floor)) pass = false;
      detail = fmt("%.0f", static_cast<double>(above_floor)) +
               " above-floor ratios < 1, re-application " + fmt("%.4f", re_delta) +
               " vs 3x floor " + fmt("%.4f", 3.0 * re_floor);
    } catch (const NonConvergenceError&) {
      pass = false;
      detail = "iteration did not converge";
    }
    const double elapsed = watch.seconds();
    pass = pass && elapsed <= 180.0;
    report(5, pass, detail + ", " + fmt("%.1f", elapsed) + "s");
  }

  // criterion 6: assignment distance equals brute-force permutation minimum
  {
    Stopwatch watch;
    std::size_t mismatches = 0;
    for (std::size_t inst = 0; inst < 200; ++inst) {
      const std::size_t n = 1 + inst % 7;
      const int d = 1 + static_cast<int>((inst / 7) % 3);
      const double beta = (inst % 3 == 0) ? 0.5 : (inst % 3 == 1 ? 1.0 : 2.0);
      const bool integer = beta == 1.0;
      RandomStream stream({9000 + inst, 1, 0, 0});
      const std::size_t len = n * static_cast<std::size_t>(d);
      std::vector<double> xs(len), ys(len);
      for (double* arr : {xs.data(), ys.data()}) {
        for (std::size_t i = 0; i < len; ++i) {
          arr[i] = integer ? static_cast<double>(stream.uniform_below(21)) - 10.0
                           : stream.uniform(-3.0, 3.0);
        }
      }
      const EmpiricalMeasure mu(d, xs), nu(d, ys);
      const double got = w_beta_exact_matching(mu, nu, beta);
      const double want = brute_force_w(mu, nu, beta);
      if (integer) {
        if (got != want) ++mismatches;
      } else if (std::fabs(got - want) > 1e-9 * std::fabs(want)) {
        ++mismatches;
      }
    }
    const double elapsed = watch.seconds();
    const bool pass = mismatches == 0 && elapsed <= 60.0;
    report(6, pass,
           "200 assignment instances, " + fmt("%.0f", double(mismatches)) +
               " mismatches, " + fmt("%.1f", elapsed) + "s");
  }

  // criterion 8 runs before 7 so the noise battery cannot disturb the
  // coupling totals reported there (it does not touch them anyway)
  {
    Stopwatch watch;
    const LevyModel model = LevyModel::isotropic_stable(1.5, 1, 1.0);
    const double horizon = 1.0;
    const TimeGrid grid = TimeGrid::uniform(horizon, 8);
    const std::size_t paths = 10000;
    std::vector<long> counts(paths);
    std::vector<double> totals(paths);
    std::vector<double> times;
    for (std::size_t j = 0; j < paths; ++j) {
      const NoiseRealization nr = synthesize_realization(
          model, grid, {20260819, purpose::kValidation, 0, j}, SmallJumpScheme::ExactTotal);
      counts[j] = static_cast<long>(nr.events.size());
      double total = 0.0;
      for (std::size_t k = 0; k < nr.grid->num_steps(); ++k) total += nr.step_increment(k)[0];
      for (const auto& ev : nr.events) {
        total += ev.size[0];
        times.push_back(ev.time);
      }
      totals[j] = total;
    }
    const auto gof = stats::chi2_poisson_gof(counts, model.rate_annulus(1.0, kInf) * horizon);
    const auto ks = stats::ks_test_uniform(times, 0.0, horizon);
    bool cf_ok = true;
    double worst_score = 0.0;
    for (const double u : {0.5, 1.0, 2.0}) {
      const auto pt = stats::ecf_cos(totals, u);
      const double target = std::exp(-horizon * std::pow(u, 1.5));
      const double score = std::fabs(pt.value - target) / pt.se;
      worst_score = std::max(worst_score, score);
      cf_ok = cf_ok && score <= 3.0;
    }
    const double elapsed = watch.seconds();
    const bool pass =
        gof.p_value >= 0.01 && ks.p_value >= 0.01 && cf_ok && elapsed <= 120.0;
    report(8, pass,
           "chi2 p " + fmt("%.3f", gof.p_value) + ", KS p " + fmt("%.3f", ks.p_value) +
               ", worst CF deviation " + fmt("%.2f", worst_score) + " SE (cap 3), " +
               fmt("%.1f", elapsed) + "s");
  }

  // criterion 9: two genuine solutions of the degenerate equation
  {
    Stopwatch watch;
    const NonUniquenessDemo demo = nonuniqueness_demo(0.5, 1.0, 256);
    const double endpoint_gap = std::fabs(demo.grown_branch.back() - 0.25);
    const double elapsed = watch.seconds();
    const bool pass = demo.zero_residual <= demo.residual_tolerance &&
                      demo.grown_residual <= demo.residual_tolerance &&
                      endpoint_gap <= 1e-3 && elapsed <= 10.0;
    report(9, pass,
           "residuals " + fmt("%.2e", demo.zero_residual) + " / " +
               fmt("%.2e", demo.grown_residual) + " vs tol " +
               fmt("%.2e", demo.residual_tolerance) + ", endpoint gap " +
               fmt("%.2e", endpoint_gap) + ", " + fmt("%.1f", elapsed) + "s");
  }

  // criterion 10: same seed, different thread count, identical CSV bytes
  {
    Stopwatch watch;
    const RateReport rerun = run_poc_experiment(stable_ou_plan(2));
    coupling_checks += rerun.coupling_checks;
    coupling_violations += rerun.coupling_violations;
    const fs::path a = tmp / "rate_run1.csv";
    const fs::path b = tmp / "rate_run2.csv";
    write_rate_csv(a.string(), rep_ou);
    write_rate_csv(b.string(), rerun);
    const std::string bytes_a = slurp(a), bytes_b = slurp(b);
    const double elapsed = watch.seconds();
    const bool pass = !bytes_a.empty() && bytes_a == bytes_b;
    report(10, pass,
           std::string("rate CSVs ") + (pass ? "byte-identical" : "DIFFER") +
               " across thread counts, " + fmt("%.1f", elapsed) + "s");
  }

  // criterion 7: aggregated over every coupled run above
  {
    const bool pass = coupling_checks > 0 && coupling_violations == 0;
    report(7, pass,
           fmt("%.0f", double(coupling_violations)) + " coupling violations in " +
               fmt("%.0f", double(coupling_checks)) + " node checks");
  }

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures;
}
