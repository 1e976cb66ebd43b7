#pragma once

// Small fully-connected sigmoid network used by the agent as its soft
// anomaly scorer. Default shape is 6 -> 8 -> 1; trained by full-batch
// gradient descent on mean binary cross-entropy.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "revsys/error.hpp"

namespace revsys::ann {

inline constexpr std::size_t kFeatureCount = 6;
inline constexpr std::size_t kHiddenUnits = 8;

using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "amount_deviation",        "code_age_norm",          "prior_lookup_count_norm",
    "tier_ordinal_norm",       "failed_login_rate_norm", "channel_mismatch",
};

struct LabeledExample {
  FeatureVector features{};
  int label = 0;  // 1 = fraudulent
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct AnnModel {
  std::vector<std::size_t> layers{kFeatureCount, kHiddenUnits, 1};
  std::vector<std::vector<double>> weights;  // [l]: layers[l+1] x layers[l], row-major
  std::vector<std::vector<double>> biases;   // [l]: layers[l+1]
  int version = 0;

  /// All parameters zero: scores exactly 0.5 everywhere.
  static AnnModel zeros(std::vector<std::size_t> layers = {kFeatureCount, kHiddenUnits, 1}) {
    AnnModel m;
    m.layers = std::move(layers);
    for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
      m.weights.emplace_back(m.layers[l] * m.layers[l + 1], 0.0);
      m.biases.emplace_back(m.layers[l + 1], 0.0);
    }
    return m;
  }

  /// Glorot-uniform weights, zero biases.
  static AnnModel random(std::uint64_t seed, std::vector<std::size_t> layers = {kFeatureCount, kHiddenUnits, 1}) {
    AnnModel m = zeros(std::move(layers));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      double r = std::sqrt(6.0 / static_cast<double>(m.layers[l] + m.layers[l + 1]));
      std::uniform_real_distribution<double> dist(-r, r);
      for (auto& w : m.weights[l]) w = dist(rng);
    }
    return m;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// DimensionMismatch on inconsistent shapes; NonFiniteLoss on NaN/inf
  /// parameters.
  void check() const {
    if (layers.size() < 2 || layers.back() != 1) {
      throw Error(Errc::DimensionMismatch, "network must end in a single output unit");
    }
    if (weights.size() != layers.size() - 1 || biases.size() != layers.size() - 1) {
      throw Error(Errc::DimensionMismatch, "layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].size() != layers[l] * layers[l + 1] || biases[l].size() != layers[l + 1]) {
        throw Error(Errc::DimensionMismatch, "parameter shape mismatch in layer " + std::to_string(l));
      }
      for (double w : weights[l]) {
        if (!std::isfinite(w)) throw Error(Errc::NonFiniteLoss, "non-finite weight");
      }
      for (double b : biases[l]) {
        if (!std::isfinite(b)) throw Error(Errc::NonFiniteLoss, "non-finite bias");
      }
    }
  }

  bool operator==(const AnnModel&) const = default;
};

namespace detail {

/// Activations per layer (index 0 = input) and the output pre-activation.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;
  double output_logit = 0;
};

inline ForwardTrace forward_trace(const AnnModel& m, std::span<const double> x) {
  if (x.size() != m.layers.front()) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(m.layers.front()) + " features, got " +
                                             std::to_string(x.size()));
  }
  ForwardTrace t;
  t.activations.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const auto& in = t.activations.back();
    const std::size_t n_in = m.layers[l];
    const std::size_t n_out = m.layers[l + 1];
    std::vector<double> out(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      double z = m.biases[l][j];
      for (std::size_t i = 0; i < n_in; ++i) z += m.weights[l][j * n_in + i] * in[i];
      if (l + 1 == m.weights.size()) t.output_logit = z;
      out[j] = sigmoid(z);
    }
    t.activations.push_back(std::move(out));
  }
  return t;
}

}  // namespace detail

/// sigmoid(W_L ... sigmoid(W_1 x + b_1) ... + b_L)
inline double ann_forward(const AnnModel& m, std::span<const double> x) {
  return detail::forward_trace(m, x).activations.back()[0];
}

inline double ann_forward(const AnnModel& m, const FeatureVector& x) {
  return ann_forward(m, std::span<const double>(x));
}

/// Same shape as the model's parameters.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

/// Mean binary cross-entropy, computed from the output logit.
inline double mean_loss(const AnnModel& m, std::span<const LabeledExample> data) {
  double total = 0;
  for (const auto& ex : data) {
    double z = detail::forward_trace(m, ex.features).output_logit;
    total += softplus(z) - ex.label * z;
  }
  return total / static_cast<double>(data.size());
}

/// Analytic gradient of `mean_loss` by backpropagation.
inline Gradients loss_gradient(const AnnModel& m, std::span<const LabeledExample> data) {
  Gradients g;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    g.weights.emplace_back(m.weights[l].size(), 0.0);
    g.biases.emplace_back(m.biases[l].size(), 0.0);
  }
  const double scale = 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    auto t = detail::forward_trace(m, ex.features);
    // dL/dz at the output for BCE-with-sigmoid
    std::vector<double> delta{t.activations.back()[0] - ex.label};
    for (std::size_t l = m.weights.size(); l-- > 0;) {
      const auto& in = t.activations[l];
      const std::size_t n_in = m.layers[l];
      const std::size_t n_out = m.layers[l + 1];
      for (std::size_t j = 0; j < n_out; ++j) {
        g.biases[l][j] += scale * delta[j];
        for (std::size_t i = 0; i < n_in; ++i) g.weights[l][j * n_in + i] += scale * delta[j] * in[i];
      }
      if (l == 0) break;
      std::vector<double> prev(n_in, 0.0);
      for (std::size_t i = 0; i < n_in; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < n_out; ++j) s += m.weights[l][j * n_in + i] * delta[j];
        prev[i] = s * in[i] * (1.0 - in[i]);
      }
      delta = std::move(prev);
    }
  }
  return g;
}

struct TrainOptions {
  int epochs = 3000;
  double learning_rate = 1.0;
  std::uint64_t seed = 1;
  int base_version = 0;
  std::vector<std::size_t> layers{kFeatureCount, kHiddenUnits, 1};
};

/// Deterministic in (data, options). `loss_curve`, when given, receives the
/// loss before each epoch's update plus the final loss.
inline AnnModel ann_train(std::span<const LabeledExample> data, const TrainOptions& opt,
                          std::vector<double>* loss_curve = nullptr) {
  if (data.empty()) throw Error(Errc::DegenerateData, "no training examples");
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& ex : data) {
    if (ex.label != 0 && ex.label != 1) throw Error(Errc::DegenerateData, "labels must be 0 or 1");
    (ex.label ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error(Errc::DegenerateData, "training data must contain both labels");

  AnnModel m = AnnModel::random(opt.seed, opt.layers);
  m.version = opt.base_version;
  for (int epoch = 0; epoch <= opt.epochs; ++epoch) {
    if (loss_curve) {
      double loss = mean_loss(m, data);
      if (!std::isfinite(loss)) throw Error(Errc::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
      loss_curve->push_back(loss);
    }
    if (epoch == opt.epochs) break;
    auto g = loss_gradient(m, data);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      for (std::size_t k = 0; k < m.weights[l].size(); ++k) m.weights[l][k] -= opt.learning_rate * g.weights[l][k];
      for (std::size_t k = 0; k < m.biases[l].size(); ++k) m.biases[l][k] -= opt.learning_rate * g.biases[l][k];
    }
  }
  if (!std::isfinite(mean_loss(m, data))) throw Error(Errc::NonFiniteLoss, "training produced a non-finite loss");
  m.check();
  m.version = opt.base_version + 1;
  return m;
}

// ---------------------------------------------------------------------------
// Model file:
//   revsys-ann 1
//   version <int>
//   layers <n0> <n1> ... <nL>
//   weights <l>        followed by n_{l+1} rows of n_l values
//   biases <l>         followed by one row of n_{l+1} values

inline std::string to_text(const AnnModel& m) {
  std::ostringstream out;
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  out << "revsys-ann 1\nversion " << m.version << "\nlayers";
  for (auto n : m.layers) out << ' ' << n;
  out << '\n';
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    out << "weights " << l << '\n';
    for (std::size_t j = 0; j < m.layers[l + 1]; ++j) {
      for (std::size_t i = 0; i < m.layers[l]; ++i) {
        if (i) out << ' ';
        put(m.weights[l][j * m.layers[l] + i]);
      }
      out << '\n';
    }
    out << "biases " << l << '\n';
    for (std::size_t j = 0; j < m.layers[l + 1]; ++j) {
      if (j) out << ' ';
      put(m.biases[l][j]);
    }
    out << '\n';
  }
  return out.str();
}

inline AnnModel model_from_text(const std::string& text) {
  std::istringstream in(text);
  auto fail = [](const std::string& why) { throw Error(Errc::ParseError, "bad model file: " + why); };
  std::string word;
  int format = 0;
  if (!(in >> word >> format) || word != "revsys-ann" || format != 1) fail("missing header");
  AnnModel m;
  if (!(in >> word >> m.version) || word != "version") fail("missing version");
  std::string line;
  std::getline(in, line);
  if (!std::getline(in, line)) fail("missing layers");
  std::istringstream ls(line);
  if (!(ls >> word) || word != "layers") fail("missing layers");
  m.layers.clear();
  for (std::size_t n; ls >> n;) m.layers.push_back(n);
  if (m.layers.size() < 2) fail("need at least two layers");
  m.weights.clear();
  m.biases.clear();
  for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
    std::size_t idx = 0;
    if (!(in >> word >> idx) || word != "weights" || idx != l) fail("expected weights " + std::to_string(l));
    std::vector<double> w(m.layers[l] * m.layers[l + 1]);
    for (auto& v : w) {
      if (!(in >> v)) fail("truncated weights");
    }
    if (!(in >> word >> idx) || word != "biases" || idx != l) fail("expected biases " + std::to_string(l));
    std::vector<double> b(m.layers[l + 1]);
    for (auto& v : b) {
      if (!(in >> v)) fail("truncated biases");
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  m.check();
  return m;
}

inline void save_model(const AnnModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << to_text(m);
  if (!out) throw Error(Errc::IoError, "cannot write model " + path.string());
}

inline AnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read model " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_text(ss.str());
}

// ---------------------------------------------------------------------------
// Labeled example files: CSV with the six feature names then `label`.

inline std::string examples_header() {
  std::string h;
  for (auto* n : kFeatureNames) {
    h += n;
    h += ',';
  }
  return h + "label";
}

inline std::string to_csv_line(const LabeledExample& ex) {
  std::string line;
  char buf[32];
  for (double f : ex.features) {
    std::snprintf(buf, sizeof buf, "%.17g", f);
    line += buf;
    line += ',';
  }
  return line + std::to_string(ex.label);
}

inline std::vector<LabeledExample> load_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read examples " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != examples_header()) {
    throw Error(Errc::ParseError, "examples file must start with header: " + examples_header());
  }
  std::vector<LabeledExample> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    LabeledExample ex;
    std::istringstream ls(line);
    std::string cell;
    try {
      for (auto& f : ex.features) {
        if (!std::getline(ls, cell, ',')) throw std::invalid_argument("short row");
        f = std::stod(cell);
      }
      if (!std::getline(ls, cell, ',')) throw std::invalid_argument("missing label");
      ex.label = std::stoi(cell);
    } catch (const std::exception&) {
      throw Error(Errc::ParseError, "bad example at line " + std::to_string(lineno));
    }
    out.push_back(ex);
  }
  return out;
}

}  // namespace revsys::ann
