#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/grid.hpp"
#include "volterra/parallel.hpp"
#include "volterra/rng.hpp"
#include "volterra/time_change.hpp"

namespace volterra {

// One realized noise path. dB[j] is the conditionally Gaussian increment of
// cell j: N(0, lambda_b[j] * dt_j) given the intensity path. dH[j][k] is the
// compensated jump count of mark k: N_{j,k} - lambda_h[j] * nu_k * dt_j with
// N_{j,k} Poisson with that same mean given the intensity path.
struct NoisePath {
  std::vector<double> dB;               // per cell
  std::vector<std::vector<double>> dH;  // per cell, per jump mark
};

inline NoisePath sample_noise(const TimeChangePath& tc, const TimeGrid& grid,
                              const MarkSet& marks, RngStream& gauss, RngStream& pois) {
  const std::size_t n = grid.cells();
  NoisePath out;
  out.dB.resize(n);
  out.dH.assign(n, std::vector<double>(marks.size()));
  for (std::size_t j = 0; j < n; ++j) {
    const double dt = grid.dt(j);
    out.dB[j] = std::sqrt(tc.lambda_b[j] * dt) * gauss.normal();
    for (std::size_t k = 0; k < marks.size(); ++k) {
      const double w = tc.lambda_h[j] * marks.mass(k) * dt;
      out.dH[j][k] = static_cast<double>(pois.poisson(w)) - w;
    }
  }
  return out;
}

// A simulated ensemble: shared grid/marks plus per-path intensity and noise
// realizations. Solvers attach their state tables separately.
struct PathEnsemble {
  TimeGrid grid;
  MarkSet marks;
  std::uint64_t seed = 0;
  std::vector<TimeChangePath> tc;
  std::vector<NoisePath> noise;

  std::size_t paths() const { return noise.size(); }

  // Increment of the noise measure for (cell, mark); mark 0 is Brownian.
  double increment(std::size_t path, std::size_t cell, std::size_t mark) const {
    if (mark == 0) return noise[path].dB[cell];
    return noise[path].dH[cell][mark - 1];
  }

  // Matching control-measure weight (the conditional variance of increment).
  double weight(std::size_t path, std::size_t cell, std::size_t mark) const {
    return lambda_weight(tc[path], grid, marks, cell, mark);
  }

  // Cumulative Brownian component up to node i.
  double cum_brownian(std::size_t path, std::size_t node) const {
    double s = 0.0;
    for (std::size_t j = 0; j < node; ++j) s += noise[path].dB[j];
    return s;
  }

  // Cumulative compensated jump component of mark k up to node i.
  double cum_jump(std::size_t path, std::size_t node, std::size_t k) const {
    double s = 0.0;
    for (std::size_t j = 0; j < node; ++j) s += noise[path].dH[j][k];
    return s;
  }

  // Realized total mass of the control measure over [0, T] x {0} resp. jumps.
  double total_weight_brownian(std::size_t path) const {
    double s = 0.0;
    for (std::size_t j = 0; j < grid.cells(); ++j) s += tc[path].lambda_b[j] * grid.dt(j);
    return s;
  }
  double total_weight_jump(std::size_t path) const {
    double s = 0.0, mass = 0.0;
    for (std::size_t k = 0; k < marks.size(); ++k) mass += marks.mass(k);
    for (std::size_t j = 0; j < grid.cells(); ++j) s += tc[path].lambda_h[j] * mass * grid.dt(j);
    return s;
  }
};

inline PathEnsemble sample_ensemble(const TimeChangeModel& model, const TimeGrid& grid,
                                    const MarkSet& marks, std::size_t paths,
                                    std::uint64_t seed, std::size_t workers = 1) {
  if (paths == 0) throw InvalidArgument("sample_ensemble: need at least one path");
  PathEnsemble ens;
  ens.grid = grid;
  ens.marks = marks;
  ens.seed = seed;
  ens.tc.resize(paths);
  ens.noise.resize(paths);
  parallel_for(paths, workers, [&](std::size_t p) {
    RngStream tc_rng(seed, StreamPurpose::kTimeChange, p);
    RngStream gauss(seed, StreamPurpose::kBrownian, p);
    RngStream pois(seed, StreamPurpose::kPoisson, p);
    ens.tc[p] = sample_time_change(model, grid, tc_rng);
    ens.noise[p] = sample_noise(ens.tc[p], grid, marks, gauss, pois);
  });
  return ens;
}

}  // namespace volterra
