#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "custvec/common.hpp"
#include "custvec/dataset.hpp"
#include "custvec/matrix.hpp"
#include "custvec/rng.hpp"

namespace custvec {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

struct ActivationKind {
  enum Kind { kSigmoid, kTanh, kRelu, kLeakyRelu } kind = kLeakyRelu;
  double alpha = 0.01;  // leaky slope

  static ActivationKind sigmoid() { return {kSigmoid, 0.0}; }
  static ActivationKind tanh() { return {kTanh, 0.0}; }
  static ActivationKind relu() { return {kRelu, 0.0}; }
  static ActivationKind leaky_relu(double alpha = 0.01) {
    if (alpha <= 0.0 || alpha >= 1.0) throw ValidationError("leaky_relu alpha must be in (0, 1)");
    return {kLeakyRelu, alpha};
  }

  std::string name() const {
    switch (kind) {
      case kSigmoid: return "sigmoid";
      case kTanh: return "tanh";
      case kRelu: return "relu";
      case kLeakyRelu: return "leaky_relu";
    }
    return "?";
  }

  static ActivationKind from_name(const std::string& name, double alpha = 0.01) {
    if (name == "sigmoid") return sigmoid();
    if (name == "tanh") return tanh();
    if (name == "relu") return relu();
    if (name == "leaky_relu") return leaky_relu(alpha);
    throw ValidationError("unknown activation: " + name);
  }
};

inline double sigmoid_scalar(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

inline double activate_scalar(const ActivationKind& kind, double a) {
  switch (kind.kind) {
    case ActivationKind::kSigmoid: return sigmoid_scalar(a);
    case ActivationKind::kTanh: return std::tanh(a);
    case ActivationKind::kRelu: return a > 0.0 ? a : 0.0;
    case ActivationKind::kLeakyRelu: return a > 0.0 ? a : kind.alpha * a;
  }
  return 0.0;
}

// Derivative in terms of the pre-activation a and its output w; for sigmoid
// this is the w*(1-w) identity, for tanh 1-w^2.
inline double activation_derivative(const ActivationKind& kind, double a, double w) {
  switch (kind.kind) {
    case ActivationKind::kSigmoid: return w * (1.0 - w);
    case ActivationKind::kTanh: return 1.0 - w * w;
    case ActivationKind::kRelu: return a > 0.0 ? 1.0 : 0.0;
    case ActivationKind::kLeakyRelu: return a > 0.0 ? 1.0 : kind.alpha;
  }
  return 0.0;
}

inline std::vector<double> activate(const ActivationKind& kind, std::span<const double> a) {
  std::vector<double> w(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) w[i] = activate_scalar(kind, a[i]);
  return w;
}

// ---------------------------------------------------------------------------
// Network definition
// ---------------------------------------------------------------------------

/// Geometry of the classifier: input -> hidden1 (the embedding layer) ->
/// hidden2 -> single sigmoid output unit.
struct LayerSpec {
  std::size_t input_dim = 63;
  std::size_t hidden1_dim = 3;   // embedding width
  std::size_t hidden2_dim = 10;
  ActivationKind hidden_activation = ActivationKind::leaky_relu();
  bool use_bias = true;  // biases can be disabled for a pure weight-matrix network

  void validate() const {
    if (input_dim < 1 || hidden1_dim < 1 || hidden2_dim < 1) {
      throw ValidationError("all layer dimensions must be >= 1");
    }
  }
};

struct NetworkParams {
  Matrix theta1;               // hidden1_dim x input_dim
  std::vector<double> bias1;
  Matrix theta2;               // hidden2_dim x hidden1_dim
  std::vector<double> bias2;
  Matrix theta3;               // 1 x hidden2_dim
  double bias3 = 0.0;

  bool shapes_match(const LayerSpec& spec) const {
    return theta1.rows == spec.hidden1_dim && theta1.cols == spec.input_dim &&
           bias1.size() == spec.hidden1_dim && theta2.rows == spec.hidden2_dim &&
           theta2.cols == spec.hidden1_dim && bias2.size() == spec.hidden2_dim &&
           theta3.rows == 1 && theta3.cols == spec.hidden2_dim;
  }

  bool all_finite() const {
    auto ok = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(theta1.data) && ok(bias1) && ok(theta2.data) && ok(bias2) && ok(theta3.data) &&
           std::isfinite(bias3);
  }
};

struct ForwardTrace {
  std::vector<double> a1, w1;  // embedding layer pre/post activation
  std::vector<double> a2, w2;
  double a3 = 0.0;
  double w3 = 0.0;  // classifier output probability
};

struct GradientSet {
  Matrix d_theta1;
  std::vector<double> d_bias1;
  Matrix d_theta2;
  std::vector<double> d_bias2;
  Matrix d_theta3;
  double d_bias3 = 0.0;

  static GradientSet zeros(const LayerSpec& spec) {
    GradientSet g;
    g.d_theta1 = Matrix(spec.hidden1_dim, spec.input_dim);
    g.d_bias1.assign(spec.hidden1_dim, 0.0);
    g.d_theta2 = Matrix(spec.hidden2_dim, spec.hidden1_dim);
    g.d_bias2.assign(spec.hidden2_dim, 0.0);
    g.d_theta3 = Matrix(1, spec.hidden2_dim);
    return g;
  }

  void scale(double s) {
    for (double& v : d_theta1.data) v *= s;
    for (double& v : d_bias1) v *= s;
    for (double& v : d_theta2.data) v *= s;
    for (double& v : d_bias2) v *= s;
    for (double& v : d_theta3.data) v *= s;
    d_bias3 *= s;
  }
};

/// Weights drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer,
/// biases zero.
inline NetworkParams init_params(const LayerSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  auto fill = [&rng](Matrix& m) {
    double bound = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (double& v : m.data) v = rng.uniform(-bound, bound);
  };
  NetworkParams p;
  p.theta1 = Matrix(spec.hidden1_dim, spec.input_dim);
  p.theta2 = Matrix(spec.hidden2_dim, spec.hidden1_dim);
  p.theta3 = Matrix(1, spec.hidden2_dim);
  fill(p.theta1);
  fill(p.theta2);
  fill(p.theta3);
  p.bias1.assign(spec.hidden1_dim, 0.0);
  p.bias2.assign(spec.hidden2_dim, 0.0);
  p.bias3 = 0.0;
  return p;
}

inline ForwardTrace forward(const NetworkParams& params, const LayerSpec& spec,
                            std::span<const double> x) {
  if (x.size() != spec.input_dim) {
    throw ValidationError("forward: input has " + std::to_string(x.size()) + " features, spec " +
                          std::to_string(spec.input_dim));
  }
  if (!params.shapes_match(spec)) throw ValidationError("forward: params do not match spec");

  ForwardTrace t;
  t.a1 = matvec(params.theta1, x);
  if (spec.use_bias) {
    for (std::size_t i = 0; i < t.a1.size(); ++i) t.a1[i] += params.bias1[i];
  }
  t.w1 = activate(spec.hidden_activation, t.a1);

  t.a2 = matvec(params.theta2, t.w1);
  if (spec.use_bias) {
    for (std::size_t i = 0; i < t.a2.size(); ++i) t.a2[i] += params.bias2[i];
  }
  t.w2 = activate(spec.hidden_activation, t.a2);

  t.a3 = dot(params.theta3.row(0), t.w2) + (spec.use_bias ? params.bias3 : 0.0);
  t.w3 = sigmoid_scalar(t.a3);
  return t;
}

inline double clamp_probability(double p) {
  return std::min(1.0 - 1e-12, std::max(1e-12, p));
}

/// Mean binary cross-entropy over a batch of predicted probabilities.
/// Probabilities are clamped to [1e-12, 1-1e-12] so a saturated output never
/// produces log(0).
inline double loss(std::span<const double> probs, std::span<const double> ys) {
  if (probs.size() != ys.size()) throw ValidationError("loss: length mismatch");
  if (probs.empty()) throw ValidationError("loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = clamp_probability(probs[i]);
    acc -= ys[i] * std::log(p) + (1.0 - ys[i]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(probs.size());
}

inline double loss(double prob, double y) {
  double arr_p[1] = {prob};
  double arr_y[1] = {y};
  return loss(std::span<const double>(arr_p, 1), std::span<const double>(arr_y, 1));
}

/// Backpropagation for one sample. The output delta is w3 - y; hidden deltas
/// flow through the transposed weights times each layer's own activation
/// derivative; gradients are outer products with the previous layer's output.
inline GradientSet backward(const ForwardTrace& trace, const NetworkParams& params,
                            const LayerSpec& spec, std::span<const double> x, double y) {
  if (x.size() != spec.input_dim) throw ValidationError("backward: input dimension mismatch");
  if (trace.w2.size() != spec.hidden2_dim || trace.w1.size() != spec.hidden1_dim) {
    throw ValidationError("backward: trace does not match spec");
  }

  GradientSet g = GradientSet::zeros(spec);
  const double delta_out = trace.w3 - y;

  for (std::size_t j = 0; j < spec.hidden2_dim; ++j) g.d_theta3(0, j) = delta_out * trace.w2[j];
  if (spec.use_bias) g.d_bias3 = delta_out;

  std::vector<double> delta2(spec.hidden2_dim);
  for (std::size_t j = 0; j < spec.hidden2_dim; ++j) {
    delta2[j] = params.theta3(0, j) * delta_out *
                activation_derivative(spec.hidden_activation, trace.a2[j], trace.w2[j]);
  }
  add_outer(g.d_theta2, delta2, trace.w1);
  if (spec.use_bias) g.d_bias2 = delta2;

  std::vector<double> back1 = matvec_transposed(params.theta2, delta2);
  std::vector<double> delta1(spec.hidden1_dim);
  for (std::size_t j = 0; j < spec.hidden1_dim; ++j) {
    delta1[j] =
        back1[j] * activation_derivative(spec.hidden_activation, trace.a1[j], trace.w1[j]);
  }
  add_outer(g.d_theta1, delta1, x);
  if (spec.use_bias) g.d_bias1 = delta1;
  return g;
}

namespace detail {

inline void accumulate(GradientSet& acc, const GradientSet& g) {
  for (std::size_t i = 0; i < acc.d_theta1.data.size(); ++i) acc.d_theta1.data[i] += g.d_theta1.data[i];
  for (std::size_t i = 0; i < acc.d_bias1.size(); ++i) acc.d_bias1[i] += g.d_bias1[i];
  for (std::size_t i = 0; i < acc.d_theta2.data.size(); ++i) acc.d_theta2.data[i] += g.d_theta2.data[i];
  for (std::size_t i = 0; i < acc.d_bias2.size(); ++i) acc.d_bias2[i] += g.d_bias2[i];
  for (std::size_t i = 0; i < acc.d_theta3.data.size(); ++i) acc.d_theta3.data[i] += g.d_theta3.data[i];
  acc.d_bias3 += g.d_bias3;
}

}  // namespace detail

/// Averaged gradient and mean loss over a batch of rows.
inline std::pair<GradientSet, double> batch_gradient(
    const NetworkParams& params, const LayerSpec& spec,
    const std::vector<const CustomerRecord*>& batch) {
  if (batch.empty()) throw ValidationError("batch_gradient: empty batch");
  GradientSet acc = GradientSet::zeros(spec);
  double loss_acc = 0.0;
  for (const CustomerRecord* rec : batch) {
    if (!rec->label) throw ValidationError("batch_gradient: unlabeled row '" + rec->id + "'");
    double y = static_cast<double>(*rec->label);
    ForwardTrace t = forward(params, spec, rec->features);
    detail::accumulate(acc, backward(t, params, spec, rec->features, y));
    loss_acc += loss(t.w3, y);
  }
  acc.scale(1.0 / static_cast<double>(batch.size()));
  return {std::move(acc), loss_acc / static_cast<double>(batch.size())};
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  GradientSet m;
  GradientSet v;
  long t = 0;

  static AdamState zeros(const LayerSpec& spec) {
    return {GradientSet::zeros(spec), GradientSet::zeros(spec), 0};
  }
};

namespace detail {

inline void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                        std::span<double> v, long t, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace detail

/// One Adam update with bias-corrected moments; state carries between calls.
inline void adam_step(NetworkParams& params, const GradientSet& grads, AdamState& state,
                      const AdamConfig& cfg) {
  ++state.t;
  const long t = state.t;
  detail::adam_update(params.theta1.data, grads.d_theta1.data, state.m.d_theta1.data,
                      state.v.d_theta1.data, t, cfg);
  detail::adam_update(params.bias1, grads.d_bias1, state.m.d_bias1, state.v.d_bias1, t, cfg);
  detail::adam_update(params.theta2.data, grads.d_theta2.data, state.m.d_theta2.data,
                      state.v.d_theta2.data, t, cfg);
  detail::adam_update(params.bias2, grads.d_bias2, state.m.d_bias2, state.v.d_bias2, t, cfg);
  detail::adam_update(params.theta3.data, grads.d_theta3.data, state.m.d_theta3.data,
                      state.v.d_theta3.data, t, cfg);
  double b3[1] = {params.bias3};
  double g3[1] = {grads.d_bias3};
  double m3[1] = {state.m.d_bias3};
  double v3[1] = {state.v.d_bias3};
  detail::adam_update(b3, g3, m3, v3, t, cfg);
  params.bias3 = b3[0];
  state.m.d_bias3 = m3[0];
  state.v.d_bias3 = v3[0];
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 50;
  int batch_size = 50;
  AdamConfig adam;
  int early_stop_patience = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (early_stop_patience < 0) throw ValidationError("patience must be >= 0");
    if (adam.lr <= 0.0) throw ValidationError("learning rate must be positive");
  }
};

// An improvement smaller than this does not reset the early-stop counter.
inline constexpr double kEarlyStopMinDelta = 1e-6;

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> val_loss;
  std::vector<double> val_acc;
  int stopped_epoch = 0;  // number of epochs actually run
  int best_epoch = 0;     // 1-based epoch of the lowest validation loss
  NetworkParams best_params;
};

inline double predict_proba(const NetworkParams& params, const LayerSpec& spec,
                            std::span<const double> x) {
  return forward(params, spec, x).w3;
}

inline int classify(const NetworkParams& params, const LayerSpec& spec, std::span<const double> x,
                    double threshold = 0.5) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw ValidationError("classification threshold must lie in (0, 1)");
  }
  return predict_proba(params, spec, x) >= threshold ? 1 : 0;
}

namespace detail {

inline std::pair<double, double> dataset_loss_acc(const NetworkParams& params,
                                                  const LayerSpec& spec, const Dataset& data) {
  double loss_acc = 0.0;
  std::size_t correct = 0;
  for (const auto& rec : data.records) {
    double y = static_cast<double>(*rec.label);
    double p = forward(params, spec, rec.features).w3;
    loss_acc += loss(p, y);
    if ((p >= 0.5 ? 1.0 : 0.0) == y) ++correct;
  }
  double n = static_cast<double>(data.size());
  return {loss_acc / n, static_cast<double>(correct) / n};
}

inline void require_trainable(const Dataset& d, const char* which) {
  if (d.records.empty()) throw ValidationError(std::string(which) + " split is empty");
  if (!d.standardized) throw ValidationError(std::string(which) + " split is not standardized");
  for (const auto& r : d.records) {
    if (!r.label) throw ValidationError(std::string(which) + " split has unlabeled row '" + r.id + "'");
  }
}

}  // namespace detail

/// Per-epoch row orders used by train(); exposed so tests can feed an explicit
/// presentation sequence through train_with_orders.
inline std::vector<std::vector<std::size_t>> make_epoch_orders(std::uint64_t seed, std::size_t n,
                                                               int epochs) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> orders(static_cast<std::size_t>(epochs));
  for (auto& o : orders) o = rng.permutation(n);
  return orders;
}

/// Mini-batch training with the supplied per-epoch row orders. Training stops
/// once the validation loss has gone `patience` consecutive epochs without
/// improving by at least kEarlyStopMinDelta; the returned best_params are the
/// exact argmin of the recorded validation-loss sequence.
inline TrainReport train_with_orders(const SplitSet& data, const LayerSpec& spec,
                                     const TrainConfig& config,
                                     const std::vector<std::vector<std::size_t>>& orders) {
  spec.validate();
  config.validate();
  detail::require_trainable(data.train, "train");
  detail::require_trainable(data.validation, "validation");

  NetworkParams params = init_params(spec, config.seed);
  AdamState state = AdamState::zeros(spec);

  TrainReport report;
  report.best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  double last_significant = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  const int stop_after = std::max(config.early_stop_patience, 1);
  const std::size_t n = data.train.size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t>& order = orders.at(static_cast<std::size_t>(epoch));
    std::vector<const CustomerRecord*> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      batch.clear();
      std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.train.records[order[i]]);
      auto [grads, batch_loss] = batch_gradient(params, spec, batch);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch + 1));
      }
      adam_step(params, grads, state, config.adam);
    }

    auto [tr_loss, tr_acc] = detail::dataset_loss_acc(params, spec, data.train);
    auto [va_loss, va_acc] = detail::dataset_loss_acc(params, spec, data.validation);
    report.train_loss.push_back(tr_loss);
    report.train_acc.push_back(tr_acc);
    report.val_loss.push_back(va_loss);
    report.val_acc.push_back(va_acc);
    report.stopped_epoch = epoch + 1;

    if (va_loss < best_val) {
      best_val = va_loss;
      report.best_params = params;
      report.best_epoch = epoch + 1;
    }
    if (va_loss < last_significant - kEarlyStopMinDelta) {
      last_significant = va_loss;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= stop_after) break;
    }
  }
  return report;
}

inline TrainReport train(const SplitSet& data, const LayerSpec& spec, const TrainConfig& config) {
  return train_with_orders(data, spec, config,
                           make_epoch_orders(config.seed, data.train.size(), config.epochs));
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::json params_to_json(const NetworkParams& params, const LayerSpec& spec,
                                     const std::string& scaler_hash = "") {
  nlohmann::json j;
  j["spec"] = {{"input_dim", spec.input_dim},
               {"hidden1_dim", spec.hidden1_dim},
               {"hidden2_dim", spec.hidden2_dim},
               {"hidden_activation", spec.hidden_activation.name()},
               {"alpha", spec.hidden_activation.alpha},
               {"output_activation", "sigmoid"},
               {"use_bias", spec.use_bias}};
  j["theta1"] = params.theta1.data;  // row-major
  j["bias1"] = params.bias1;
  j["theta2"] = params.theta2.data;
  j["bias2"] = params.bias2;
  j["theta3"] = params.theta3.data;
  j["bias3"] = params.bias3;
  if (!scaler_hash.empty()) j["scaler_hash"] = scaler_hash;
  return j;
}

inline std::pair<NetworkParams, LayerSpec> params_from_json(const nlohmann::json& j) {
  LayerSpec spec;
  const auto& js = j.at("spec");
  spec.input_dim = js.at("input_dim").get<std::size_t>();
  spec.hidden1_dim = js.at("hidden1_dim").get<std::size_t>();
  spec.hidden2_dim = js.at("hidden2_dim").get<std::size_t>();
  spec.hidden_activation = ActivationKind::from_name(js.at("hidden_activation").get<std::string>(),
                                                     js.value("alpha", 0.01));
  spec.use_bias = js.value("use_bias", true);
  spec.validate();

  NetworkParams p;
  p.theta1 = Matrix(spec.hidden1_dim, spec.input_dim);
  p.theta1.data = j.at("theta1").get<std::vector<double>>();
  p.bias1 = j.at("bias1").get<std::vector<double>>();
  p.theta2 = Matrix(spec.hidden2_dim, spec.hidden1_dim);
  p.theta2.data = j.at("theta2").get<std::vector<double>>();
  p.bias2 = j.at("bias2").get<std::vector<double>>();
  p.theta3 = Matrix(1, spec.hidden2_dim);
  p.theta3.data = j.at("theta3").get<std::vector<double>>();
  p.bias3 = j.at("bias3").get<double>();
  if (!p.shapes_match(spec) || p.bias1.size() != spec.hidden1_dim) {
    throw ValidationError("params JSON shapes do not match its spec");
  }
  if (!p.all_finite()) throw ValidationError("params JSON contains non-finite entries");
  return {std::move(p), spec};
}

inline void write_history_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    out << (e + 1) << ',' << format_double(report.train_loss[e]) << ','
        << format_double(report.train_acc[e]) << ',' << format_double(report.val_loss[e]) << ','
        << format_double(report.val_acc[e]) << '\n';
  }
}

}  // namespace custvec
