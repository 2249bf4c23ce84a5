#include "mckv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mckv {

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("TimeGrid: horizon must be finite and positive");
  }
  if (steps == 0) throw std::invalid_argument("TimeGrid: need at least one step");
  std::vector<double> nodes(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    nodes[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  nodes.front() = 0.0;
  nodes.back() = horizon;
  return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
  if (nodes.size() < 2) throw std::invalid_argument("TimeGrid: need at least two nodes");
  if (nodes.front() != 0.0) throw std::invalid_argument("TimeGrid: first node must be 0");
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    if (!(nodes[k] < nodes[k + 1])) {
      throw std::invalid_argument("TimeGrid: nodes must be strictly increasing");
    }
  }
  if (!std::isfinite(nodes.back())) throw std::invalid_argument("TimeGrid: non-finite node");
  return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::refined_with(std::span<const double> times) const {
  if (times.empty()) return *this;
  std::vector<double> extra(times.begin(), times.end());
  for (double t : extra) {
    if (!(t >= 0.0) || !(t <= horizon())) {
      throw std::invalid_argument("TimeGrid: refinement time outside [0, horizon]");
    }
  }
  std::sort(extra.begin(), extra.end());
  std::vector<double> merged;
  merged.reserve(nodes_.size() + extra.size());
  std::merge(nodes_.begin(), nodes_.end(), extra.begin(), extra.end(),
             std::back_inserter(merged));
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  return TimeGrid(std::move(merged));
}

std::size_t TimeGrid::floor_index(double t) const {
  if (t <= nodes_.front()) return 0;
  if (t >= nodes_.back()) return nodes_.size() - 1;
  const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  return static_cast<std::size_t>(it - nodes_.begin()) - 1;
}

}  // namespace mckv
