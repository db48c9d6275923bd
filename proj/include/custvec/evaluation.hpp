#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "custvec/clustering.hpp"
#include "custvec/common.hpp"
#include "custvec/dataset.hpp"
#include "custvec/matrix.hpp"
#include "custvec/network.hpp"

namespace custvec {

// Returned for degenerate index values (zero within-cluster scatter, coincident
// centroids) instead of infinity.
inline constexpr double kIndexSentinel = 1e12;

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

inline ConfusionCounts confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size()) throw ValidationError("confusion: length mismatch");
  if (y_true.empty()) throw ValidationError("confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if ((y_true[i] != 0 && y_true[i] != 1) || (y_pred[i] != 0 && y_pred[i] != 1)) {
      throw ValidationError("confusion: labels must be 0 or 1");
    }
    if (y_true[i] == 1) {
      y_pred[i] == 1 ? ++c.tp : ++c.fn;
    } else {
      y_pred[i] == 1 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

inline double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("accuracy: empty counts");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// Zero denominators yield 0 and raise the degenerate flag when provided.
inline double precision(const ConfusionCounts& c, bool* degenerate = nullptr) {
  if (c.tp + c.fp == 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

inline double recall(const ConfusionCounts& c, bool* degenerate = nullptr) {
  if (c.tp + c.fn == 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline double f1(const ConfusionCounts& c, bool* degenerate = nullptr) {
  double p = precision(c, degenerate);
  double r = recall(c, degenerate);
  if (p + r == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return 2.0 * p * r / (p + r);
}

inline double mse(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size()) throw ValidationError("mse: length mismatch");
  if (y_true.empty()) throw ValidationError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    double d = y_true[i] - y_pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(y_true.size());
}

struct ClassificationReport {
  double accuracy = 0.0;
  double mse = 0.0;
  double loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some ratio had a zero denominator

  nlohmann::json to_json() const {
    return {{"accuracy", accuracy}, {"mse", mse},       {"loss", loss},
            {"precision", precision}, {"recall", recall}, {"f1", f1},
            {"degenerate", degenerate}};
  }
};

inline ClassificationReport evaluate_classifier(const NetworkParams& params, const LayerSpec& spec,
                                                const Dataset& data, double threshold = 0.5) {
  if (!data.standardized) throw ValidationError("evaluate_classifier: data is not standardized");
  if (data.records.empty()) throw ValidationError("evaluate_classifier: empty dataset");
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw ValidationError("classification threshold must lie in (0, 1)");
  }
  std::vector<double> probs, labels;
  std::vector<int> y_true, y_pred;
  probs.reserve(data.size());
  for (const auto& rec : data.records) {
    if (!rec.label) throw ValidationError("evaluate_classifier: unlabeled row '" + rec.id + "'");
    double p = predict_proba(params, spec, rec.features);
    probs.push_back(p);
    labels.push_back(static_cast<double>(*rec.label));
    y_true.push_back(*rec.label);
    y_pred.push_back(p >= threshold ? 1 : 0);
  }
  ConfusionCounts c = confusion(y_true, y_pred);
  ClassificationReport r;
  r.accuracy = accuracy(c);
  r.precision = precision(c, &r.degenerate);
  r.recall = recall(c, &r.degenerate);
  r.f1 = f1(c, &r.degenerate);
  r.mse = mse(labels, probs);
  r.loss = loss(probs, labels);
  return r;
}

// ---------------------------------------------------------------------------
// Cluster validity indices
// ---------------------------------------------------------------------------

namespace detail {

/// Compact arbitrary cluster labels to 0..k-1 (sorted by original label) and
/// return per-cluster member lists.
inline std::vector<std::vector<std::size_t>> cluster_members(
    const PointSet& points, const std::vector<std::size_t>& assignments) {
  if (points.size() != assignments.size()) {
    throw ValidationError("validity index: points and assignments differ in length");
  }
  if (points.empty()) throw ValidationError("validity index: empty input");
  std::map<std::size_t, std::size_t> relabel;
  for (std::size_t a : assignments) relabel.emplace(a, 0);
  std::size_t next = 0;
  for (auto& [orig, compact] : relabel) compact = next++;
  std::vector<std::vector<std::size_t>> members(next);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    members[relabel.at(assignments[i])].push_back(i);
  }
  return members;
}

inline Point centroid_of(const PointSet& points, const std::vector<std::size_t>& idx) {
  Point c(points.front().size(), 0.0);
  for (std::size_t i : idx) {
    for (std::size_t d = 0; d < c.size(); ++d) c[d] += points[i][d];
  }
  for (double& v : c) v /= static_cast<double>(idx.size());
  return c;
}

}  // namespace detail

/// Mean of (b - a) / max(a, b) over all points, with a the mean distance to
/// the point's own cluster (excluding itself) and b the smallest mean distance
/// to any other cluster. Singleton clusters contribute 0.
inline double silhouette(const PointSet& points, const std::vector<std::size_t>& assignments) {
  detail::check_points(points);
  auto members = detail::cluster_members(points, assignments);
  const std::size_t k = members.size();
  if (k < 2) throw ValidationError("silhouette requires at least 2 clusters");

  std::vector<std::size_t> cluster_of(points.size());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i : members[c]) cluster_of[i] = c;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t own = cluster_of[i];
    if (members[own].size() == 1) continue;  // singleton: s = 0
    std::vector<double> mean_dist(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j : members[c]) {
        if (j == i) continue;
        mean_dist[c] += std::sqrt(squared_distance(points[i], points[j]));
      }
      std::size_t denom = members[c].size() - (c == own ? 1 : 0);
      mean_dist[c] /= static_cast<double>(denom);
    }
    double a = mean_dist[own];
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, mean_dist[c]);
    }
    double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(points.size());
}

/// Between-cluster dispersion over within-cluster dispersion, each normalized
/// by its degrees of freedom. Zero within-cluster scatter returns the sentinel.
inline double calinski_harabasz(const PointSet& points, const std::vector<std::size_t>& assignments) {
  detail::check_points(points);
  auto members = detail::cluster_members(points, assignments);
  const std::size_t k = members.size();
  const std::size_t n = points.size();
  if (k < 2 || k >= n) throw ValidationError("calinski_harabasz requires 2 <= k < n");

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  Point global = detail::centroid_of(points, all);

  double ssb = 0.0, ssw = 0.0;
  for (const auto& idx : members) {
    Point c = detail::centroid_of(points, idx);
    ssb += static_cast<double>(idx.size()) * squared_distance(c, global);
    for (std::size_t i : idx) ssw += squared_distance(points[i], c);
  }
  if (ssw == 0.0) return kIndexSentinel;
  return (ssb / static_cast<double>(k - 1)) / (ssw / static_cast<double>(n - k));
}

/// Mean over clusters of the worst (s_i + s_j) / d_ij ratio, with s the mean
/// member distance to the centroid and d the centroid separation. Coincident
/// centroids return the sentinel.
inline double davies_bouldin(const PointSet& points, const std::vector<std::size_t>& assignments) {
  detail::check_points(points);
  auto members = detail::cluster_members(points, assignments);
  const std::size_t k = members.size();
  if (k < 2) throw ValidationError("davies_bouldin requires at least 2 clusters");

  PointSet centroids(k);
  std::vector<double> scatter(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    centroids[c] = detail::centroid_of(points, members[c]);
    for (std::size_t i : members[c]) {
      scatter[c] += std::sqrt(squared_distance(points[i], centroids[c]));
    }
    scatter[c] /= static_cast<double>(members[c].size());
  }

  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      double d = std::sqrt(squared_distance(centroids[i], centroids[j]));
      if (d == 0.0) return kIndexSentinel;
      worst = std::max(worst, (scatter[i] + scatter[j]) / d);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

struct ClusterValidityReport {
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
  std::size_t k = 0;
  double sse = 0.0;

  nlohmann::json to_json() const {
    return {{"silhouette", silhouette},
            {"calinski_harabasz", calinski_harabasz},
            {"davies_bouldin", davies_bouldin},
            {"k", k},
            {"sse", sse}};
  }
};

inline ClusterValidityReport evaluate_clustering(const PointSet& points, const ClusterModel& model) {
  if (model.k() < 2) throw ValidationError("evaluate_clustering requires at least 2 clusters");
  ClusterValidityReport r;
  r.silhouette = silhouette(points, model.assignments);
  r.calinski_harabasz = calinski_harabasz(points, model.assignments);
  r.davies_bouldin = davies_bouldin(points, model.assignments);
  r.k = model.k();
  r.sse = model.sse;
  return r;
}

// ---------------------------------------------------------------------------
// Knee selection
// ---------------------------------------------------------------------------

struct KneeResult {
  std::vector<std::size_t> candidate_ks;
  std::vector<double> sse_curve;
  std::size_t chosen_k = 0;
  bool non_monotonic = false;  // SSE rose somewhere along the curve

  nlohmann::json to_json() const {
    return {{"candidate_ks", candidate_ks},
            {"sse_curve", sse_curve},
            {"chosen_k", chosen_k},
            {"non_monotonic", non_monotonic}};
  }
};

/// Pick the k whose (k, SSE) point lies farthest from the chord joining the
/// curve's endpoints, after min-max normalizing both axes so scale cannot
/// change the answer. Endpoints are not eligible; ties go to the smaller k.
inline KneeResult knee_select_k(const std::vector<std::size_t>& candidate_ks,
                                const std::vector<double>& sse_curve) {
  if (candidate_ks.size() != sse_curve.size()) {
    throw ValidationError("knee_select_k: ks and curve differ in length");
  }
  const std::size_t n = candidate_ks.size();
  if (n < 3) throw ValidationError("knee_select_k: need at least 3 curve points");
  for (std::size_t i = 1; i < n; ++i) {
    if (candidate_ks[i] <= candidate_ks[i - 1]) {
      throw ValidationError("knee_select_k: candidate ks must be strictly increasing");
    }
  }

  KneeResult result;
  result.candidate_ks = candidate_ks;
  result.sse_curve = sse_curve;
  for (std::size_t i = 1; i < n; ++i) {
    if (sse_curve[i] > sse_curve[i - 1]) result.non_monotonic = true;
  }

  const double x0 = static_cast<double>(candidate_ks.front());
  const double x1 = static_cast<double>(candidate_ks.back());
  double ymin = *std::min_element(sse_curve.begin(), sse_curve.end());
  double ymax = *std::max_element(sse_curve.begin(), sse_curve.end());
  double yspan = ymax > ymin ? ymax - ymin : 1.0;

  auto norm_x = [&](std::size_t kval) { return (static_cast<double>(kval) - x0) / (x1 - x0); };
  auto norm_y = [&](double s) { return (s - ymin) / yspan; };
  const double ax = norm_x(candidate_ks.front()), ay = norm_y(sse_curve.front());
  const double bx = norm_x(candidate_ks.back()), by = norm_y(sse_curve.back());
  const double chord = std::hypot(bx - ax, by - ay);

  double best_d = -1.0;
  std::size_t best_i = 1;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double px = norm_x(candidate_ks[i]), py = norm_y(sse_curve[i]);
    double d = std::abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / chord;
    if (d > best_d) {
      best_d = d;
      best_i = i;
    }
  }
  result.chosen_k = candidate_ks[best_i];
  return result;
}

}  // namespace custvec
