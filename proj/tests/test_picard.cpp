#include "doctest.h"

#include <cmath>
#include <vector>

#include "mckv/coefficients.hpp"
#include "mckv/engine.hpp"
#include "mckv/errors.hpp"
#include "mckv/picard.hpp"

using namespace mckv;

namespace {

LevyModel cp_symmetric() {
  return LevyModel::compound_poisson({{{0.5}, 1.0}, {{-0.5}, 1.0}}, 1, 2.0);
}

ContractionReport synthetic_report(std::vector<double> deltas, std::vector<double> floors) {
  ContractionReport rep;
  rep.delta = std::move(deltas);
  rep.noise_floor = std::move(floors);
  rep.iterations = rep.delta.size();
  for (std::size_t k = 0; k + 1 < rep.delta.size(); ++k) {
    rep.ratio.push_back(rep.delta[k + 1] / rep.delta[k]);
  }
  return rep;
}

}  // namespace

TEST_SUITE("picard") {
  TEST_CASE("contraction ratio is the geometric mean of clean ratios") {
    const auto rep = synthetic_report({1.0, 0.5, 0.25}, {1e-9, 1e-9, 1e-9});
    CHECK(contraction_ratio(rep) == doctest::Approx(0.5).epsilon(1e-12));

    const auto rep2 = synthetic_report({1.0, 0.4, 0.2}, {1e-9, 1e-9, 1e-9});
    CHECK(contraction_ratio(rep2) == doctest::Approx(std::sqrt(0.2)).epsilon(1e-12));
  }

  TEST_CASE("contraction ratio needs three deltas and skips floor-bound pairs") {
    CHECK_THROWS_AS(contraction_ratio(synthetic_report({1.0, 0.5}, {0.0, 0.0})),
                    ParameterError);
    // every delta sits at its floor: no ratio is trustworthy, report 0
    const auto bound = synthetic_report({1e-3, 1.1e-3, 0.9e-3}, {2e-3, 2e-3, 2e-3});
    CHECK(contraction_ratio(bound) == 0.0);
    // mixed: only the (delta0, delta1) pair is clean
    const auto mixed = synthetic_report({1.0, 0.25, 1e-6}, {1e-3, 1e-3, 1e-3});
    CHECK(contraction_ratio(mixed) == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("zero initial condition with moment drift stays on the zero flow") {
    // b = E|y|^beta with xi = 0: phi maps the zero flow to itself exactly, so
    // the first delta is 0 and the solver stops at min_iters
    const auto model = LevyModel::compound_poisson({{{2.0}, 1e-12}}, 1, 1.0);
    const auto coeffs = moment_drift_coefficients(1, 0.5);
    PicardConfig config;
    config.particles_m = 32;
    config.max_iters = 4;
    config.min_iters = 1;
    config.tol = 1e-10;
    const TimeGrid grid = TimeGrid::uniform(1.0, 16);

    const auto solved = solve_fixed_point(model, coeffs, grid, config, 99,
                                          point_mass_initial({0.0}));
    CHECK(solved.second.converged);
    CHECK(solved.second.iterations == 1);
    CHECK(solved.second.delta[0] == 0.0);
    for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
      const auto cloud = solved.first.cloud_at_node(k);
      for (double v : cloud.pts) CHECK(v == 0.0);
    }
  }

  TEST_CASE("linear mean interaction converges to the exponential mean flow") {
    // dX = E[X] dt + dZ, xi = 1, Z compensated CP with mean zero: the
    // fixed-point mean is e^t.  MC resolution with M = 4000 paths is ~1e-2.
    const auto model = cp_symmetric();
    const auto coeffs = stable_ou_coefficients(0.0, 1.0, 1.0);
    PicardConfig config;
    config.particles_m = 4000;
    config.max_iters = 10;
    config.min_iters = 3;
    config.tol = 1e-4;
    const TimeGrid grid = TimeGrid::uniform(0.5, 25);

    const auto solved = solve_fixed_point(model, coeffs, grid, config, 2211,
                                          point_mass_initial({1.0}));
    const ContractionReport& report = solved.second;
    CHECK(report.converged);
    CHECK(report.iterations >= 3);

    const auto& flow = solved.first;
    for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
      const double t = grid.node(k);
      const auto cloud = flow.cloud_at_node(k);
      double m = 0.0;
      for (double v : cloud.pts) m += v;
      m /= static_cast<double>(cloud.size());
      CHECK(m == doctest::Approx(std::exp(t)).epsilon(0.05));
    }
    // deltas above the floor must shrink
    for (std::size_t k = 0; k + 1 < report.delta.size(); ++k) {
      if (report.delta[k] > 2.0 * report.noise_floor[k] &&
          report.delta[k + 1] > 2.0 * report.noise_floor[k + 1]) {
        CHECK(report.delta[k + 1] < report.delta[k]);
      }
    }
  }

  TEST_CASE("measure-independent dynamics hit the noise floor immediately") {
    // a' = 0: phi ignores its argument, so consecutive iterates differ only
    // by Monte Carlo resampling and every delta is floor-bound
    const auto model = cp_symmetric();
    const auto coeffs = stable_ou_coefficients(-0.5, 0.0, 1.0);
    PicardConfig config;
    config.particles_m = 600;
    config.max_iters = 8;
    config.min_iters = 3;
    config.tol = 1e-12;  // unreachable: convergence must come from the floor rule
    const TimeGrid grid = TimeGrid::uniform(1.0, 20);

    const auto solved = solve_fixed_point(model, coeffs, grid, config, 5150,
                                          point_mass_initial({0.3}));
    const ContractionReport& report = solved.second;
    CHECK(report.converged);
    CHECK(report.iterations == 3);  // floor rule fires at the first opportunity
    // delta[0] is the genuine step from the seed flow to phi(seed); every
    // later delta only resamples the same law and must sit at the floor
    for (std::size_t k = 1; k < report.delta.size(); ++k) {
      CHECK(report.delta[k] <= 2.0 * report.noise_floor[k]);
    }
  }

  TEST_CASE("non-convergence carries the report") {
    // strong pull toward 0 from a seed at 3: the first delta is O(1), far
    // above the floor, and one application cannot be enough
    const auto model = cp_symmetric();
    const auto coeffs = stable_ou_coefficients(-1.5, 0.3, 0.5);
    PicardConfig config;
    config.particles_m = 200;
    config.max_iters = 1;
    config.min_iters = 1;
    config.tol = 1e-14;
    const TimeGrid grid = TimeGrid::uniform(1.0, 10);

    try {
      solve_fixed_point(model, coeffs, grid, config, 7, point_mass_initial({3.0}));
      FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& err) {
      CHECK(err.report.iterations == 1);
      CHECK(err.report.delta.size() == 1);
      CHECK(err.report.delta[0] > 0.1);
      CHECK_FALSE(err.report.converged);
    }
  }

  TEST_CASE("apply_phi is deterministic and respects the twin split") {
    const auto model = cp_symmetric();
    const auto coeffs = sin_mean_coefficients(1, -0.3, 0.5, 0.4);
    PicardConfig config;
    config.particles_m = 150;
    const TimeGrid grid = TimeGrid::uniform(0.5, 8);
    const auto grid_ptr = std::make_shared<const TimeGrid>(grid);
    const EmpiricalMeasure seed_cloud(1, {-0.5, 0.0, 0.5});
    const MeasureFlow input = MeasureFlow::constant_cloud(grid_ptr, seed_cloud);
    const auto initial = gaussian_initial({0.0}, 1.0);

    const MeasureFlow a = apply_phi(model, coeffs, input, grid, config, 31, 2, false, initial);
    const MeasureFlow b = apply_phi(model, coeffs, input, grid, config, 31, 2, false, initial);
    REQUIRE(a.clouds.size() == b.clouds.size());
    CHECK(a.clouds == b.clouds);  // bitwise

    // the twin consumes a disjoint lineage block: same law, different draws
    const MeasureFlow tw = apply_phi(model, coeffs, input, grid, config, 31, 2, true, initial);
    CHECK(a.clouds != tw.clouds);
  }

  TEST_CASE("apply_phi rejects a flow that stops short of the horizon") {
    const auto model = cp_symmetric();
    const auto coeffs = sin_mean_coefficients(1, -0.3, 0.5, 0.4);
    PicardConfig config;
    config.particles_m = 16;
    const TimeGrid base = TimeGrid::uniform(1.0, 8);
    const auto short_grid = std::make_shared<const TimeGrid>(TimeGrid::uniform(0.5, 4));
    const EmpiricalMeasure seed_cloud(1, {0.0});
    const MeasureFlow input = MeasureFlow::constant_cloud(short_grid, seed_cloud);
    CHECK_THROWS_AS(apply_phi(model, coeffs, input, base, config, 1, 0, false,
                              gaussian_initial({0.0}, 1.0)),
                    GridError);

    // a mean-only flow cannot feed general measure dependence
    const auto full_grid = std::make_shared<const TimeGrid>(base);
    const std::vector<double> zero{0.0};
    const MeasureFlow mean_only = MeasureFlow::constant_mean(full_grid, zero);
    CHECK_THROWS_AS(apply_phi(model, coeffs, mean_only, base, config, 1, 0, false,
                              gaussian_initial({0.0}, 1.0)),
                    GridError);
  }

  TEST_CASE("config validation") {
    PicardConfig config;
    config.particles_m = 1;
    CHECK_THROWS_AS(config.validate(), ParameterError);
    config.particles_m = 10;
    config.tol = 0.0;
    CHECK_THROWS_AS(config.validate(), ParameterError);
    config.tol = 1e-3;
    config.min_iters = 9;
    config.max_iters = 8;
    CHECK_THROWS_AS(config.validate(), ParameterError);
    config.min_iters = 2;
    config.beta = 2.5;
    CHECK_THROWS_AS(config.validate(), ParameterError);
    config.beta = 1.0;
    CHECK_NOTHROW(config.validate());
  }
}
