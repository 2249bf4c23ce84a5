#include "doctest.h"

#include <cmath>
#include <memory>
#include <vector>

#include "mckv/chaos.hpp"
#include "mckv/coefficients.hpp"
#include "mckv/engine.hpp"
#include "mckv/errors.hpp"

using namespace mckv;

namespace {

// small symmetric compound-Poisson plan with linear mean interaction; the
// limit flow is the closed-form exponential mean flow
ExperimentPlan small_cp_plan() {
  ExperimentPlan plan;
  plan.name = "smoke";
  plan.model = LevyModel::compound_poisson({{{0.4}, 1.0}, {{-0.4}, 1.0}}, 1, 2.0);
  plan.coeffs = stable_ou_coefficients(-0.5, 0.4, 1.0);
  plan.rate_param = 2.0;
  plan.law = RateLaw::Thm2;
  plan.n_grid = {8, 16, 32, 64};
  plan.replications = 60;
  plan.base = TimeGrid::uniform(1.0, 10);
  plan.master_seed = 404;
  plan.initial = gaussian_initial({0.5}, 0.3);
  plan.ref_cloud_size = 512;

  const auto grid = std::make_shared<const TimeGrid>(plan.base);
  const double a[1] = {-0.5}, ap[1] = {0.4}, m0[1] = {0.5};
  plan.limit_flow = stable_ou_mean_flow(1, a, ap, m0, grid);
  return plan;
}

}  // namespace

TEST_SUITE("chaos") {
  TEST_CASE("theoretical exponent case table") {
    // low dimension: always the 1/beta - 1 branch
    CHECK(theoretical_exponent(1, 2.0, RateLaw::Thm2).exponent == doctest::Approx(-0.5));
    CHECK(theoretical_exponent(2, 2.0, RateLaw::Thm2).exponent == doctest::Approx(-0.5));
    CHECK(theoretical_exponent(1, 1.0, RateLaw::Thm2).exponent == doctest::Approx(0.0));
    CHECK(theoretical_exponent(2, 1.25, RateLaw::Thm2).exponent ==
          doctest::Approx(1.0 / 1.25 - 1.0));

    // d >= 3 splits at beta = d/(d-1); d = 3 -> 1.5
    CHECK(theoretical_exponent(3, 1.2, RateLaw::Thm2).exponent ==
          doctest::Approx(1.0 / 1.2 - 1.0));
    CHECK(theoretical_exponent(3, 2.0, RateLaw::Thm2).exponent ==
          doctest::Approx(-1.0 / 3.0));
    CHECK(theoretical_exponent(4, 2.0, RateLaw::Thm2).exponent == doctest::Approx(-0.25));
    CHECK_THROWS_AS(theoretical_exponent(3, 1.5, RateLaw::Thm2), UncoveredCaseError);
    CHECK_THROWS_AS(theoretical_exponent(4, 4.0 / 3.0, RateLaw::Thm2), UncoveredCaseError);

    // the log correction only attaches to the first branch under Thm3
    const auto stable_low = theoretical_exponent(1, 1.5, RateLaw::Thm3);
    CHECK(stable_low.exponent == doctest::Approx(1.0 / 1.5 - 1.0));
    CHECK(stable_low.log_correction == doctest::Approx(1.0 / 1.5));
    const auto stable_high = theoretical_exponent(3, 1.8, RateLaw::Thm3);
    CHECK(stable_high.exponent == doctest::Approx(-1.0 / 3.0));
    CHECK(stable_high.log_correction == 0.0);
    CHECK(theoretical_exponent(3, 2.0, RateLaw::Thm2).log_correction == 0.0);

    // parameter ranges
    CHECK_THROWS_AS(theoretical_exponent(1, 0.9, RateLaw::Thm2), ParameterError);
    CHECK_THROWS_AS(theoretical_exponent(1, 2.1, RateLaw::Thm2), ParameterError);
    CHECK_THROWS_AS(theoretical_exponent(1, 1.0, RateLaw::Thm3), ParameterError);
    CHECK_THROWS_AS(theoretical_exponent(1, 2.0, RateLaw::Thm3), ParameterError);
    CHECK_THROWS_AS(theoretical_exponent(0, 1.5, RateLaw::Thm2), ParameterError);
  }

  TEST_CASE("plan validation") {
    ExperimentPlan plan = small_cp_plan();
    CHECK_NOTHROW(plan.validate());

    plan.n_grid = {8, 8, 16, 32};
    CHECK_THROWS_AS(plan.validate(), ParameterError);
    plan = small_cp_plan();
    plan.replications = 10;
    CHECK_THROWS_AS(plan.validate(), ParameterError);
    plan = small_cp_plan();
    plan.initial = nullptr;
    CHECK_THROWS_AS(plan.validate(), ParameterError);
    plan = small_cp_plan();
    const auto short_grid = std::make_shared<const TimeGrid>(TimeGrid::uniform(0.5, 4));
    const std::vector<double> m{0.0};
    plan.limit_flow = MeasureFlow::constant_mean(short_grid, m);
    CHECK_THROWS_AS(plan.validate(), GridError);
    // the fit needs at least four N values
    plan = small_cp_plan();
    plan.n_grid = {8, 16, 32};
    CHECK_THROWS_AS(run_poc_experiment(plan), ParameterError);
  }

  TEST_CASE("coupled smoke run: errors shrink and the bound decomposes") {
    const ExperimentPlan plan = small_cp_plan();
    const RateReport report = run_poc_experiment(plan);

    REQUIRE(report.points.size() == 4);
    CHECK_FALSE(report.zero_error);
    CHECK(report.coupling_checks > 0);
    CHECK(report.coupling_violations == 0);

    // E1 decreases along the N grid and every point is positive
    for (std::size_t i = 0; i < report.points.size(); ++i) {
      CHECK(report.points[i].e1 > 0.0);
      CHECK(report.points[i].aborted == 0);
      if (i > 0) CHECK(report.points[i].e1 < report.points[i - 1].e1);
    }
    CHECK(report.fit.slope < -0.2);  // decay is visible even at smoke scale

    // per replication and node, W1(emp, ref) <= mean_i |X - Y| + W1(tilde, ref);
    // averaging and taking sups preserves it, so the decomposition bound is
    // deterministic up to rounding
    for (const auto& p : report.points) {
      CHECK(p.e2 <= p.e1 + p.e2_tilde + 1e-9);
    }

    // determinism: a second run reproduces the report bitwise
    const RateReport again = run_poc_experiment(plan);
    REQUIRE(again.points.size() == report.points.size());
    for (std::size_t i = 0; i < report.points.size(); ++i) {
      CHECK(again.points[i].e1 == report.points[i].e1);
      CHECK(again.points[i].e2 == report.points[i].e2);
    }
    CHECK(again.fit.slope == report.fit.slope);
  }

  TEST_CASE("measure-independent coefficients give zero coupling error") {
    ExperimentPlan plan = small_cp_plan();
    plan.coeffs = stable_ou_coefficients(-0.5, 0.0, 1.0);  // a' = 0
    const double a[1] = {-0.5}, ap[1] = {0.0}, m0[1] = {0.5};
    const auto grid = std::make_shared<const TimeGrid>(plan.base);
    plan.limit_flow = stable_ou_mean_flow(1, a, ap, m0, grid);

    const RateReport report = run_poc_experiment(plan);
    CHECK(report.zero_error);
    for (const auto& p : report.points) CHECK(p.e1 == 0.0);
    CHECK(report.fit.n == 0);  // fit skipped
    CHECK(report.coupling_violations == 0);
  }

  TEST_CASE("truncation study: no events above the lowest level means zero error") {
    // jumps of size 1.5 only: truncating at R > 1.5 drops nothing
    ExperimentPlan plan = small_cp_plan();
    plan.model = LevyModel::compound_poisson({{{1.5}, 0.8}, {{-1.5}, 0.8}}, 1, 2.0);
    plan.n_grid = {64};
    const RateReport report =
        run_truncation_study(plan, {2.0, 4.0, 8.0, 16.0});
    REQUIRE(report.points.size() == 4);
    for (const auto& p : report.points) CHECK(p.e1 == 0.0);
    CHECK(report.zero_error);
    CHECK(report.theory.exponent == doctest::Approx(1.0 - plan.rate_param));
  }

  TEST_CASE("truncation study: dropping real jumps hurts less at higher levels") {
    ExperimentPlan plan = small_cp_plan();
    // symmetric tail atoms (zero annulus mean); levels interleave them
    plan.model = LevyModel::compound_poisson(
        {{{0.5}, 1.0}, {{-0.5}, 1.0}, {{3.0}, 0.35}, {{-3.0}, 0.35}, {{6.0}, 0.18},
         {{-6.0}, 0.18}},
        1, 2.0);
    plan.n_grid = {64};
    const RateReport report = run_truncation_study(plan, {2.0, 4.0, 7.0, 10.0});
    REQUIRE(report.points.size() == 4);
    // R = 2 drops both tail atoms, R = 4 only the 6-atom, R = 7 and 10 none
    CHECK(report.points[0].e1 > report.points[1].e1);
    CHECK(report.points[1].e1 > 0.0);
    CHECK(report.points[2].e1 == 0.0);
    CHECK(report.points[3].e1 == 0.0);
    // zero points cannot enter the log fit
    CHECK(report.fit.n == 2);
    CHECK_FALSE(report.zero_error);
  }

  TEST_CASE("truncated moment curve grows along the level grid") {
    const MomentCurve curve =
        truncated_moment_curve(1.5, {4, 16, 64, 256, 1024}, 1.0, 4000, 11, 1);
    REQUIRE(curve.points.size() == 5);
    for (const auto& p : curve.points) CHECK(p.estimate > 0.0);
    // estimates are coupled across levels, so monotonicity is exact
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].estimate >= curve.points[i - 1].estimate);
    }
    CHECK(curve.fit.slope > 0.0);
    CHECK(curve.fit.r2 > 0.5);
  }

  TEST_CASE("nonuniqueness demo separates the two branches") {
    const auto demo = nonuniqueness_demo(0.5, 1.0, 64);
    REQUIRE(demo.times.size() == 65);
    REQUIRE(demo.zero_branch.size() == 65);
    REQUIRE(demo.grown_branch.size() == 65);

    CHECK(demo.endpoint_closed_form == doctest::Approx(0.25).epsilon(1e-12));
    for (double v : demo.zero_branch) CHECK(v == 0.0);
    CHECK(demo.grown_branch.back() == doctest::Approx(0.25).epsilon(1e-3));
    // both branches satisfy the same equation to grid accuracy
    CHECK(demo.zero_residual <= demo.residual_tolerance);
    CHECK(demo.grown_residual <= demo.residual_tolerance);
    // the grown branch is genuinely separated from zero
    CHECK(demo.grown_branch.back() > 0.2);

    // an exponent closer to Lipschitz grows more slowly out of the origin
    const auto demo2 = nonuniqueness_demo(0.75, 1.0, 64);
    CHECK(demo2.endpoint_closed_form ==
          doctest::Approx(std::pow(0.25, 4.0)).epsilon(1e-12));
    CHECK(demo2.grown_branch.back() < demo.grown_branch.back());

    CHECK_THROWS_AS(nonuniqueness_demo(1.0, 1.0, 64), ParameterError);
    CHECK_THROWS_AS(nonuniqueness_demo(0.5, 1.0, 4), ParameterError);
  }
}
