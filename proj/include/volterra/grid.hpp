#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "volterra/common.hpp"

namespace volterra {

// Partition 0 = t_0 < t_1 < ... < t_N = T. Cell j is [t_j, t_{j+1}).
class TimeGrid {
 public:
  TimeGrid() = default;

  explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw InvalidArgument("TimeGrid: need at least two nodes");
    if (nodes_.front() != 0.0) throw InvalidArgument("TimeGrid: first node must be 0");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
      if (!(nodes_[i + 1] > nodes_[i]))
        throw InvalidArgument("TimeGrid: nodes must be strictly increasing");
    }
  }

  std::size_t cells() const { return nodes_.size() - 1; }
  std::size_t nodes() const { return nodes_.size(); }
  double node(std::size_t i) const { return nodes_[i]; }
  double dt(std::size_t j) const { return nodes_[j + 1] - nodes_[j]; }
  double horizon() const { return nodes_.back(); }
  const std::vector<double>& node_values() const { return nodes_; }

 private:
  std::vector<double> nodes_;
};

inline TimeGrid build_grid(double horizon, std::size_t cells) {
  if (!(horizon > 0.0)) throw InvalidArgument("build_grid: horizon must be positive");
  if (cells == 0) throw InvalidArgument("build_grid: need at least one cell");
  std::vector<double> nodes(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i)
    nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(cells);
  nodes.back() = horizon;
  return TimeGrid(std::move(nodes));
}

// Jump marks z_1..z_M with point masses nu_k, plus the implicit Brownian
// mark at z = 0. Mark index 0 always refers to the Brownian component;
// jump mark k lives at index k (1-based) in per-mark tables of size M.
class MarkSet {
 public:
  MarkSet() = default;

  MarkSet(std::vector<double> points, std::vector<double> masses)
      : points_(std::move(points)), masses_(std::move(masses)) {
    if (points_.size() != masses_.size())
      throw InvalidArgument("MarkSet: points/masses size mismatch");
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (points_[k] == 0.0) throw InvalidArgument("MarkSet: jump mark at 0 is reserved");
      if (!(masses_[k] >= 0.0) || !std::isfinite(masses_[k]))
        throw InvalidArgument("MarkSet: masses must be nonnegative and finite");
    }
  }

  std::size_t size() const { return points_.size(); }
  double point(std::size_t k) const { return points_[k]; }
  double mass(std::size_t k) const { return masses_[k]; }
  const std::vector<double>& points() const { return points_; }
  const std::vector<double>& masses() const { return masses_; }

 private:
  std::vector<double> points_;
  std::vector<double> masses_;
};

}  // namespace volterra
