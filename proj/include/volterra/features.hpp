#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/noise.hpp"

namespace volterra {

// Tables a feature extractor may read. The state pointer (per path, per
// node) is optional; extractors that need it throw if it is missing.
struct FeatureContext {
  const PathEnsemble* ens = nullptr;
  const std::vector<std::vector<double>>* state = nullptr;
};

struct Feature {
  std::string name;
  std::function<double(const FeatureContext&, std::size_t path, std::size_t cell)> fn;
};

enum class Flow { kNoise, kNoiseAndTimeChange };  // F vs G = F or F^Lambda

// An information level: which flow conditioning lives in, realized as the
// list of observables a regression may use at a given cell. A player's
// sub-filtration is a subset of the parent flow's features.
struct InformationLevel {
  Flow flow = Flow::kNoise;
  std::vector<Feature> features;

  InformationLevel subset(const std::vector<std::size_t>& idx) const {
    InformationLevel out;
    out.flow = flow;
    for (std::size_t i : idx) {
      if (i >= features.size()) throw InvalidArgument("InformationLevel::subset: index out of range");
      out.features.push_back(features[i]);
    }
    return out;
  }

  InformationLevel with(Feature f) const {
    InformationLevel out = *this;
    out.features.push_back(std::move(f));
    return out;
  }
};

namespace feat {

inline Feature brownian_sum() {
  return {"B", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
            return c.ens->cum_brownian(p, cell);
          }};
}

inline Feature jump_sum(std::size_t mark_k) {
  return {"H" + std::to_string(mark_k),
          [mark_k](const FeatureContext& c, std::size_t p, std::size_t cell) {
            return c.ens->cum_jump(p, cell, mark_k);
          }};
}

inline Feature state() {
  return {"X", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
            if (c.state == nullptr) throw InvalidArgument("feature X: no state table attached");
            return (*c.state)[p][cell];
          }};
}

inline Feature lambda_b_here() {
  return {"lb", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
            const auto& tc = c.ens->tc[p];
            return tc.lambda_b[cell < tc.lambda_b.size() ? cell : tc.lambda_b.size() - 1];
          }};
}

inline Feature lambda_h_here() {
  return {"lh", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
            const auto& tc = c.ens->tc[p];
            return tc.lambda_h[cell < tc.lambda_h.size() ? cell : tc.lambda_h.size() - 1];
          }};
}

inline Feature total_weight_brownian() {
  return {"LB_T", [](const FeatureContext& c, std::size_t p, std::size_t) {
            return c.ens->total_weight_brownian(p);
          }};
}

inline Feature total_weight_jump() {
  return {"LH_T", [](const FeatureContext& c, std::size_t p, std::size_t) {
            return c.ens->total_weight_jump(p);
          }};
}

}  // namespace feat

// Noise-history level: cumulative Brownian part and per-mark compensated
// jump sums up to the cell.
inline InformationLevel level_noise(std::size_t jump_marks) {
  InformationLevel lv;
  lv.flow = Flow::kNoise;
  lv.features.push_back(feat::brownian_sum());
  for (std::size_t k = 0; k < jump_marks; ++k) lv.features.push_back(feat::jump_sum(k));
  return lv;
}

inline InformationLevel level_noise_state(std::size_t jump_marks) {
  return level_noise(jump_marks).with(feat::state());
}

// Full level: noise history plus the time-change observables (local
// intensities and total realized weights).
inline InformationLevel level_full(std::size_t jump_marks, bool with_state = false) {
  InformationLevel lv = with_state ? level_noise_state(jump_marks) : level_noise(jump_marks);
  lv.flow = Flow::kNoiseAndTimeChange;
  lv.features.push_back(feat::lambda_b_here());
  lv.features.push_back(feat::lambda_h_here());
  lv.features.push_back(feat::total_weight_brownian());
  lv.features.push_back(feat::total_weight_jump());
  return lv;
}

// Conditioning on the time-change history only (whole-path summaries).
inline InformationLevel level_time_change() {
  InformationLevel lv;
  lv.flow = Flow::kNoiseAndTimeChange;
  lv.features.push_back(feat::total_weight_brownian());
  lv.features.push_back(feat::total_weight_jump());
  return lv;
}

// No observables: regressions reduce to plain means (deterministic info).
inline InformationLevel level_trivial() { return InformationLevel{}; }

// Raw feature matrix at one cell, row per path.
inline std::vector<std::vector<double>> extract_features(const InformationLevel& lv,
                                                         const FeatureContext& ctx,
                                                         std::size_t cell) {
  if (ctx.ens == nullptr) throw InvalidArgument("extract_features: no ensemble in context");
  const std::size_t n = ctx.ens->paths();
  std::vector<std::vector<double>> rows(n, std::vector<double>(lv.features.size()));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t f = 0; f < lv.features.size(); ++f)
      rows[p][f] = lv.features[f].fn(ctx, p, cell);
  return rows;
}

}  // namespace volterra
