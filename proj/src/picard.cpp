#include "mckv/picard.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "mckv/parallel.hpp"
#include "mckv/rng.hpp"

namespace mckv {

void PicardConfig::validate() const {
  if (particles_m < 2) throw ParameterError("picard: particles_m must be >= 2");
  if (!(tol > 0.0)) throw ParameterError("picard: tol must be > 0");
  if (max_iters == 0) throw ParameterError("picard: max_iters must be >= 1");
  if (min_iters > max_iters) throw ParameterError("picard: min_iters > max_iters");
  if (!(beta > 0.0) || beta > 2.0) throw ParameterError("picard: beta out of (0,2]");
}

std::string ContractionReport::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t k = 0; k < delta.size(); ++k) {
    nlohmann::json row{
        {"iteration", k + 1},
        {"delta", delta[k]},
        {"noise_floor", noise_floor[k]},
    };
    if (k < ratio.size()) row["ratio"] = ratio[k];
    entries.push_back(std::move(row));
  }
  const nlohmann::json doc{
      {"iterations", iterations},
      {"converged", converged},
      {"entries", std::move(entries)},
  };
  return doc.dump(2);
}

namespace {

// Constant-in-time cloud flow of M initial draws under the given replication.
MeasureFlow initial_cloud_flow(const CoefficientSet& coeffs, const TimeGrid& base_grid,
                               std::size_t m, std::uint64_t master,
                               std::uint64_t replication, const InitialSampler& initial) {
  const int d = coeffs.dim;
  std::vector<double> pts(m * static_cast<std::size_t>(d));
  std::vector<double> x(static_cast<std::size_t>(d));
  for (std::size_t j = 0; j < m; ++j) {
    RandomStream stream(SeedLineage{master, purpose::kInitial, replication, j});
    initial(stream, x);
    for (int c = 0; c < d; ++c) {
      pts[j * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] =
          x[static_cast<std::size_t>(c)];
    }
  }
  return MeasureFlow::constant_cloud(std::make_shared<TimeGrid>(base_grid),
                                     EmpiricalMeasure(d, std::move(pts)));
}

}  // namespace

MeasureFlow apply_phi(const LevyModel& model, const CoefficientSet& coeffs,
                      const MeasureFlow& flow, const TimeGrid& base_grid,
                      const PicardConfig& config, std::uint64_t master,
                      std::size_t application, bool twin, const InitialSampler& initial) {
  config.validate();
  coeffs.validate();
  flow.validate();
  if (flow.grid->horizon() < base_grid.horizon() - 1e-12) {
    throw GridError("picard: flow horizon shorter than the solver grid");
  }

  const std::uint64_t noise_purpose =
      twin ? purpose::kPicardTwin + application
           : (config.common_noise ? purpose::kPicard : purpose::kPicard + application);
  const std::uint64_t replication =
      twin ? 2 * application + 3
           : (config.common_noise ? 2 : 2 * application + 2);

  const int d = coeffs.dim;
  const std::size_t m = config.particles_m;
  MeasureFlow out;
  out.rep = MeasureFlow::Rep::Cloud;
  out.dim = d;
  out.grid = std::make_shared<TimeGrid>(base_grid);
  out.cloud_size = m;
  out.clouds.assign(base_grid.num_nodes() * m * static_cast<std::size_t>(d), 0.0);

  const PreparedFlow prepared = PreparedFlow::make(flow, coeffs);
  parallel_for(m, config.threads, [&](std::size_t j) {
    const SeedLineage lineage{master, noise_purpose, replication, j};
    const FrozenPath path = simulate_frozen_path(model, coeffs, flow, base_grid, lineage,
                                                 config.scheme, initial, &prepared);
    for (std::size_t k = 0; k < base_grid.num_nodes(); ++k) {
      for (int c = 0; c < d; ++c) {
        out.clouds[(k * m + j) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] =
            path.base_states[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
      }
    }
  });
  out.validate();
  return out;
}

std::pair<MeasureFlow, ContractionReport> solve_fixed_point(
    const LevyModel& model, const CoefficientSet& coeffs, const TimeGrid& base_grid,
    const PicardConfig& config, std::uint64_t master, const InitialSampler& initial) {
  config.validate();
  coeffs.validate();

  MeasureFlow current =
      initial_cloud_flow(coeffs, base_grid, config.particles_m, master, 1, initial);
  ContractionReport report;

  for (std::size_t k = 0; k < config.max_iters; ++k) {
    MeasureFlow next =
        apply_phi(model, coeffs, current, base_grid, config, master, k, false, initial);
    MeasureFlow twin =
        apply_phi(model, coeffs, current, base_grid, config, master, k, true, initial);

    const double delta = flow_distance(next, current, config.beta);
    const double floor = flow_distance(next, twin, config.beta);
    report.delta.push_back(delta);
    report.noise_floor.push_back(floor);
    if (report.delta.size() >= 2) {
      const double prev = report.delta[report.delta.size() - 2];
      report.ratio.push_back(prev > 0.0 ? delta / prev
                                        : std::numeric_limits<double>::infinity());
    }
    report.iterations = k + 1;
    current = std::move(next);

    if (k + 1 >= config.min_iters && (delta < config.tol || delta <= 2.0 * floor)) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged) {
    std::ostringstream msg;
    msg << "picard: no convergence in " << config.max_iters
        << " iterations (last delta " << report.delta.back() << ", floor "
        << report.noise_floor.back() << ")";
    throw NonConvergenceError(std::move(report), msg.str());
  }
  return {std::move(current), std::move(report)};
}

double contraction_ratio(const ContractionReport& report) {
  if (report.delta.size() < 3) {
    throw ParameterError("picard: contraction ratio needs >= 3 recorded iterations");
  }
  double log_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k + 1 < report.delta.size(); ++k) {
    const bool above = report.delta[k] > report.noise_floor[k] &&
                       report.delta[k + 1] > report.noise_floor[k + 1];
    if (!above || report.delta[k] <= 0.0 || report.delta[k + 1] <= 0.0) continue;
    log_sum += std::log(report.delta[k + 1] / report.delta[k]);
    ++used;
  }
  if (used == 0) return 0.0;  // floor-bound everywhere: contracted to MC resolution
  return std::exp(log_sum / static_cast<double>(used));
}

}  // namespace mckv
