#pragma once
// Time discretization.  A TimeGrid is a strictly increasing node vector
// starting at 0 and ending at the horizon.  Jump-adapted grids are built by
// refining a base grid with the big-jump times of the noise realizations it
// will be paired with, so every jump lands exactly on a node.

#include <cstddef>
#include <span>
#include <vector>

namespace mckv {

class TimeGrid {
 public:
  static TimeGrid uniform(double horizon, std::size_t steps);
  static TimeGrid from_nodes(std::vector<double> nodes);

  // Union with `times` (each must lie in [0, horizon]); exact duplicates
  // collapse.  The result keeps the same horizon.
  TimeGrid refined_with(std::span<const double> times) const;

  double horizon() const { return nodes_.back(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_steps() const { return nodes_.size() - 1; }
  double node(std::size_t k) const { return nodes_[k]; }
  double dt(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }
  const std::vector<double>& nodes() const { return nodes_; }

  // Index of the last node <= t (t clamped to [0, horizon]).  Used for
  // left-continuous piecewise-constant flow evaluation.
  std::size_t floor_index(double t) const;

  bool operator==(const TimeGrid& other) const { return nodes_ == other.nodes_; }

 private:
  explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {}
  std::vector<double> nodes_;
};

}  // namespace mckv
