#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/features.hpp"
#include "volterra/regression.hpp"

namespace volterra {

struct ControlBox {
  double lo = -1e300;
  double hi = 1e300;
  double clip(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
  double width() const { return hi - lo; }
};

// Feedback rule for one cell: a fitted basis expansion over the player's
// information features. An empty expansion is a constant rule.
struct CellRule {
  BasisExpansion expansion;
  std::vector<double> beta{0.0};

  double eval(const std::vector<double>& raw) const {
    if (expansion.dim() != beta.size() || beta.size() == 1) return beta.empty() ? 0.0 : beta[0];
    std::vector<double> row(expansion.dim());
    expansion.expand_row(raw, row.data());
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) s += beta[c] * row[c];
    return s;
  }
};

// Bump applied on a cell window [lo_cell, hi_cell): a bounded rule evaluated
// on the window-start features, so the bump is admissible information-wise.
struct ControlPerturbation {
  std::size_t lo_cell = 0;
  std::size_t hi_cell = 0;
  CellRule alpha;
  double scale = 0.0;  // signed epsilon
};

// A player's control: per-cell feedback rules, clipped to the admissible
// box on evaluation. Values depend only on the player's features at the
// same cell.
class ControlProcess {
 public:
  std::size_t player = 0;
  ControlBox box;
  InformationLevel level;
  std::vector<CellRule> rules;
  std::optional<ControlPerturbation> pert;

  static ControlProcess constant(std::size_t player, double value, std::size_t cells,
                                 ControlBox box = {}, InformationLevel level = level_trivial()) {
    ControlProcess c;
    c.player = player;
    c.box = box;
    c.level = std::move(level);
    c.rules.assign(cells, CellRule{BasisExpansion{}, {value}});
    return c;
  }

  double value(const FeatureContext& ctx, std::size_t path, std::size_t cell) const {
    if (cell >= rules.size()) throw InvalidArgument("ControlProcess: cell out of range");
    std::vector<double> raw(level.features.size());
    for (std::size_t f = 0; f < raw.size(); ++f) raw[f] = level.features[f].fn(ctx, path, cell);
    double v = rules[cell].eval(raw);
    if (pert && cell >= pert->lo_cell && cell < pert->hi_cell) {
      std::vector<double> raw0(level.features.size());
      for (std::size_t f = 0; f < raw0.size(); ++f)
        raw0[f] = level.features[f].fn(ctx, path, pert->lo_cell);
      v += pert->scale * pert->alpha.eval(raw0);
    }
    const double clipped = box.clip(v);
    if (!std::isfinite(clipped)) throw NumericalBlowup("control value not finite", cell);
    return clipped;
  }
};

}  // namespace volterra
