#pragma once

// Reference implementations used only by tests. Each is deliberately
// naive and shares no code with the routine it checks.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "revsys/miner.hpp"

namespace revsys::testing {

/// First band (in listed order) whose inclusive upper edge covers the
/// profit; non-positive profit is Exempt.
inline Tier linear_scan_tier(Money profit, const miner::TierRateGuide& guide) {
  if (profit.kobo() <= 0) return Tier::Exempt;
  for (const auto& band : guide.bands) {
    if (!band.upper || profit.kobo() <= band.upper->kobo()) return band.tier;
  }
  return guide.bands.back().tier;
}

}  // namespace revsys::testing

namespace revsys::testing {

/// Naive forward pass over the raw parameter arrays, returning the output
/// logit (pre-sigmoid).
inline double reference_logit(const std::vector<std::size_t>& layers, const std::vector<std::vector<double>>& w,
                              const std::vector<std::vector<double>>& b, const std::vector<double>& x) {
  std::vector<double> a = x;
  double logit = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    std::vector<double> next(layers[l + 1]);
    for (std::size_t j = 0; j < layers[l + 1]; ++j) {
      double z = b[l][j];
      for (std::size_t i = 0; i < layers[l]; ++i) z += w[l][j * layers[l] + i] * a[i];
      logit = z;
      next[j] = 1.0 / (1.0 + std::exp(-z));
    }
    a = next;
  }
  return logit;
}

/// Mean binary cross-entropy -[y log p + (1-y) log(1-p)] with p = sigmoid(logit).
inline double reference_loss(const std::vector<std::size_t>& layers, const std::vector<std::vector<double>>& w,
                             const std::vector<std::vector<double>>& b,
                             const std::vector<std::pair<std::vector<double>, int>>& data) {
  double total = 0;
  for (const auto& [x, y] : data) {
    double z = reference_logit(layers, w, b, x);
    // log(sigmoid(z)) = -log1p(exp(-z)); log(1 - sigmoid(z)) = -log1p(exp(z))
    double log_p = z > 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
    double log_q = z > 0 ? -z - std::log1p(std::exp(-z)) : -std::log1p(std::exp(z));
    total -= y ? log_p : log_q;
  }
  return total / static_cast<double>(data.size());
}

}  // namespace revsys::testing

#include "revsys/ann.hpp"

namespace revsys::testing {

inline std::vector<std::pair<std::vector<double>, int>> as_reference_data(
    const std::vector<ann::LabeledExample>& data) {
  std::vector<std::pair<std::vector<double>, int>> out;
  for (const auto& ex : data) out.emplace_back(std::vector<double>(ex.features.begin(), ex.features.end()), ex.label);
  return out;
}

/// Largest relative error between the model's analytic gradient and
/// central differences of the reference loss, over every parameter.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline double max_gradient_relative_error(const ann::AnnModel& model, const std::vector<ann::LabeledExample>& data,
                                          double h = 1e-5, double floor = 1e-6) {
  auto analytic = ann::loss_gradient(model, data);
  auto ref = as_reference_data(data);
  auto w = model.weights;
  auto b = model.biases;
  double worst = 0;
  auto check = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    double up = reference_loss(model.layers, w, b, ref);
    param = saved - h;
    double down = reference_loss(model.layers, w, b, ref);
    param = saved;
    double numeric = (up - down) / (2 * h);
    double denom = std::max({std::abs(grad), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(grad - numeric) / denom);
  };
  for (std::size_t l = 0; l < w.size(); ++l) {
    for (std::size_t k = 0; k < w[l].size(); ++k) check(w[l][k], analytic.weights[l][k]);
    for (std::size_t k = 0; k < b[l].size(); ++k) check(b[l][k], analytic.biases[l][k]);
  }
  return worst;
}

/// Two Gaussian clusters in the unit cube, clamped; label 1 around `hi`,
/// label 0 around `lo`.
inline std::vector<ann::LabeledExample> two_clusters(std::size_t n, std::uint64_t seed, double lo = 0.25,
                                                     double hi = 0.75, double spread = 0.08) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<ann::LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    ann::LabeledExample ex;
    ex.label = static_cast<int>(i % 2);
    for (auto& f : ex.features) f = std::clamp((ex.label ? hi : lo) + noise(rng), 0.0, 1.0);
    out.push_back(ex);
  }
  return out;
}

}  // namespace revsys::testing
