#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "custvec/common.hpp"
#include "custvec/matrix.hpp"
#include "custvec/rng.hpp"

namespace custvec {

using Point = std::vector<double>;
using PointSet = std::vector<Point>;

enum class ClusterMethod { kKMeansModified, kSom, kGmm, kMeanShift };

inline std::string method_name(ClusterMethod m) {
  switch (m) {
    case ClusterMethod::kKMeansModified: return "kmeans_modified";
    case ClusterMethod::kSom: return "som";
    case ClusterMethod::kGmm: return "gmm";
    case ClusterMethod::kMeanShift: return "mean_shift";
  }
  return "?";
}

inline ClusterMethod method_from_name(const std::string& name) {
  if (name == "kmeans_modified") return ClusterMethod::kKMeansModified;
  if (name == "som") return ClusterMethod::kSom;
  if (name == "gmm") return ClusterMethod::kGmm;
  if (name == "mean_shift") return ClusterMethod::kMeanShift;
  throw ValidationError("unknown clustering method: " + name);
}

struct ClusterConfig {
  ClusterMethod method = ClusterMethod::kKMeansModified;
  std::size_t k = 2;          // ignored by mean_shift
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-6;
  double bandwidth = 0.0;     // mean_shift only; 0 selects the automatic estimate
  int max_restarts = 20;      // kmeans_modified only

  void validate() const {
    if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
    if (tol <= 0.0) throw ValidationError("tol must be positive");
    if (method == ClusterMethod::kMeanShift) {
      if (bandwidth < 0.0) throw ValidationError("bandwidth must be positive (or 0 for auto)");
    } else {
      if (k < 1) throw ValidationError("k must be >= 1");
    }
    if (method == ClusterMethod::kKMeansModified && max_restarts < 1) {
      throw ValidationError("max_restarts must be >= 1");
    }
  }
};

struct ClusterModel {
  std::string method;
  PointSet centers;                   // centroids, SOM nodes, GMM means, or modes
  std::vector<Matrix> covariances;    // GMM only
  std::vector<double> weights;        // GMM only
  std::vector<std::size_t> assignments;
  double sse = 0.0;
  int iterations_used = 0;
  int restarts_used = 0;              // kmeans_modified only
  std::vector<double> loglik_trace;   // GMM only

  std::size_t k() const { return centers.size(); }
};

inline double sse(const PointSet& points, const PointSet& centers,
                  const std::vector<std::size_t>& assignments) {
  if (points.size() != assignments.size()) {
    throw ValidationError("sse: points and assignments differ in length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (assignments[i] >= centers.size()) {
      throw ValidationError("sse: assignment index " + std::to_string(assignments[i]) +
                            " out of range");
    }
    acc += squared_distance(points[i], centers[assignments[i]]);
  }
  return acc;
}

namespace detail {

inline std::size_t check_points(const PointSet& points) {
  if (points.empty()) throw ValidationError("clustering requires at least one point");
  std::size_t dims = points.front().size();
  if (dims == 0) throw ValidationError("points must have at least one dimension");
  for (const auto& p : points) {
    if (p.size() != dims) throw ValidationError("all points must share one dimension");
  }
  return dims;
}

inline std::size_t distinct_count(const PointSet& points) {
  std::set<Point> uniq(points.begin(), points.end());
  return uniq.size();
}

inline std::size_t nearest_center(const Point& x, const PointSet& centers) {
  std::size_t best = 0;
  double best_d = squared_distance(x, centers[0]);
  for (std::size_t j = 1; j < centers.size(); ++j) {
    double d = squared_distance(x, centers[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

inline std::vector<std::size_t> assign_all(const PointSet& points, const PointSet& centers) {
  std::vector<std::size_t> a(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) a[i] = nearest_center(points[i], centers);
  return a;
}

/// k initial centers drawn without replacement from the data points.
inline PointSet sample_centers(const PointSet& points, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  PointSet centers;
  centers.reserve(k);
  for (std::size_t pick = 0; pick < k; ++pick) {
    std::size_t j = pick + rng.index(idx.size() - pick);
    std::swap(idx[pick], idx[j]);
    centers.push_back(points[idx[pick]]);
  }
  return centers;
}

/// Mean update; clusters left empty are re-seeded at the point farthest from
/// its currently assigned center.
inline PointSet update_means(const PointSet& points, std::vector<std::size_t>& assignments,
                             const PointSet& old_centers) {
  const std::size_t k = old_centers.size();
  const std::size_t dims = points.front().size();
  PointSet centers(k, Point(dims, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::size_t c = assignments[i];
    for (std::size_t d = 0; d < dims; ++d) centers[c][d] += points[i][d];
    ++counts[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : centers[c]) v /= static_cast<double>(counts[c]);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::size_t far_i = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (counts[assignments[i]] <= 1) continue;  // do not orphan another cluster
      double d = squared_distance(points[i], old_centers[assignments[i]]);
      if (d > far_d) {
        far_d = d;
        far_i = i;
      }
    }
    if (far_d < 0.0) {
      centers[c] = old_centers[c];  // nothing movable; keep the stale center
      continue;
    }
    --counts[assignments[far_i]];
    centers[c] = points[far_i];
    assignments[far_i] = c;
    counts[c] = 1;
  }
  return centers;
}

/// Plain alternating assignment/mean updates until centers stop moving.
/// Returns the number of iterations spent.
inline int lloyd_refine(const PointSet& points, PointSet& centers,
                        std::vector<std::size_t>& assignments, int max_iter) {
  int iters = 0;
  for (; iters < max_iter; ++iters) {
    assignments = assign_all(points, centers);
    PointSet next = update_means(points, assignments, centers);
    if (next == centers) {
      ++iters;
      break;
    }
    centers = std::move(next);
  }
  return iters;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Modified k-means
// ---------------------------------------------------------------------------

/// K-means with the restart rule: after each assignment step, if some point
/// sits farther from its own center than that center's closest other center,
/// the run is marked for a restart with freshly drawn centers. Each attempt
/// still iterates to its fixed point; the first attempt that never trips the
/// rule is returned, and once max_restarts re-draws are exhausted the
/// lowest-SSE completed attempt wins.
inline ClusterModel kmeans_modified(const PointSet& points, const ClusterConfig& config) {
  config.validate();
  std::size_t dims = detail::check_points(points);
  (void)dims;
  const std::size_t k = config.k;
  if (k > points.size() || k > detail::distinct_count(points)) {
    throw ValidationError("kmeans_modified: k exceeds the number of distinct points");
  }

  Rng rng(config.seed);
  ClusterModel best;
  double best_sse = std::numeric_limits<double>::infinity();
  const int attempts = config.max_restarts + 1;

  for (int attempt = 0; attempt < attempts; ++attempt) {
    PointSet centers = detail::sample_centers(points, k, rng);
    std::vector<std::size_t> assignments;
    bool fired = false;
    int iters = 0;
    for (; iters < config.max_iter; ++iters) {
      assignments = detail::assign_all(points, centers);

      if (!fired && k >= 2) {
        std::vector<double> max_member(k, -1.0);
        for (std::size_t i = 0; i < points.size(); ++i) {
          double d = squared_distance(points[i], centers[assignments[i]]);
          max_member[assignments[i]] = std::max(max_member[assignments[i]], d);
        }
        for (std::size_t c = 0; c < k && !fired; ++c) {
          if (max_member[c] < 0.0) continue;
          double min_gap = std::numeric_limits<double>::infinity();
          for (std::size_t o = 0; o < k; ++o) {
            if (o != c) min_gap = std::min(min_gap, squared_distance(centers[c], centers[o]));
          }
          if (max_member[c] > min_gap) fired = true;
        }
      }

      PointSet next = detail::update_means(points, assignments, centers);
      if (next == centers) {
        ++iters;
        break;
      }
      centers = std::move(next);
    }

    ClusterModel model;
    model.method = method_name(ClusterMethod::kKMeansModified);
    model.centers = std::move(centers);
    model.assignments = std::move(assignments);
    model.sse = sse(points, model.centers, model.assignments);
    model.iterations_used = iters;
    model.restarts_used = attempt;
    if (!fired) return model;
    if (model.sse < best_sse) {
      best_sse = model.sse;
      best = std::move(model);
    }
  }
  best.restarts_used = config.max_restarts;
  return best;
}

// ---------------------------------------------------------------------------
// 1-D self-organizing map
// ---------------------------------------------------------------------------

/// A 1 x k node chain. Online phase: for every sample the best-matching node
/// and its chain neighbors move toward the sample, with learning rate 0.5 and
/// neighborhood radius k/2 both decaying as exp(-t/T) over T = max_iter * n
/// presentations. A final nearest-mean refinement pass pins the nodes to their
/// assignment means so the fixed point is exact.
inline ClusterModel som_cluster(const PointSet& points, const ClusterConfig& config) {
  config.validate();
  detail::check_points(points);
  const std::size_t k = config.k;
  if (k > points.size()) throw ValidationError("som_cluster: k exceeds the number of points");

  Rng rng(config.seed);
  PointSet nodes = detail::sample_centers(points, k, rng);
  const std::size_t n = points.size();
  const double total = static_cast<double>(config.max_iter) * static_cast<double>(n);

  for (int epoch = 0; epoch < config.max_iter; ++epoch) {
    std::vector<std::size_t> order = rng.permutation(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const Point& x = points[order[pos]];
      double decay = std::exp(-(static_cast<double>(epoch) * static_cast<double>(n) +
                                static_cast<double>(pos)) /
                              total);
      double lr = 0.5 * decay;
      double sigma = std::max(0.5 * static_cast<double>(k) * decay, 1e-9);
      std::size_t bmu = detail::nearest_center(x, nodes);
      for (std::size_t j = 0; j < k; ++j) {
        double grid = static_cast<double>(j) - static_cast<double>(bmu);
        double g = std::exp(-(grid * grid) / (2.0 * sigma * sigma));
        double step = lr * g;
        if (step < 1e-15) continue;
        for (std::size_t d = 0; d < x.size(); ++d) nodes[j][d] += step * (x[d] - nodes[j][d]);
      }
    }
  }

  ClusterModel model;
  model.method = method_name(ClusterMethod::kSom);
  std::vector<std::size_t> assignments;
  int refine_iters = detail::lloyd_refine(points, nodes, assignments, config.max_iter);
  model.centers = std::move(nodes);
  model.assignments = std::move(assignments);
  model.sse = sse(points, model.centers, model.assignments);
  model.iterations_used = config.max_iter + refine_iters;
  return model;
}

// ---------------------------------------------------------------------------
// Gaussian mixture via EM
// ---------------------------------------------------------------------------

struct GmmInit {
  PointSet means;
  std::vector<Matrix> covariances;
  std::vector<double> weights;
};

namespace detail {

/// Cholesky factor of a symmetric matrix; false when not positive definite.
inline bool cholesky(const Matrix& a, Matrix& l) {
  const std::size_t d = a.rows;
  l = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t m = 0; m < j; ++m) s -= l(i, m) * l(j, m);
      if (i == j) {
        if (s <= 0.0) return false;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return true;
}

/// Factor the covariance, escalating a diagonal ridge only when plain
/// factorization fails.
inline Matrix factor_covariance(Matrix& cov) {
  Matrix l;
  if (cholesky(cov, l)) return l;
  for (double reg = 1e-6; reg <= 1e-2 + 1e-15; reg *= 10.0) {
    Matrix bumped = cov;
    for (std::size_t i = 0; i < cov.rows; ++i) bumped(i, i) += reg;
    if (cholesky(bumped, l)) {
      cov = bumped;
      return l;
    }
  }
  throw std::runtime_error("gmm_em: singular covariance beyond regularization");
}

inline double log_gaussian(const Point& x, const Point& mean, const Matrix& chol) {
  const std::size_t d = x.size();
  std::vector<double> z(d);
  double logdet = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = x[i] - mean[i];
    for (std::size_t j = 0; j < i; ++j) s -= chol(i, j) * z[j];
    z[i] = s / chol(i, i);
    logdet += std::log(chol(i, i));
  }
  double quad = 0.0;
  for (double v : z) quad += v * v;
  constexpr double kLog2Pi = 1.8378770664093453;
  return -0.5 * (static_cast<double>(d) * kLog2Pi + quad) - logdet;
}

}  // namespace detail

/// EM iterations from an explicit starting mixture. Exposed so callers (and
/// tests) can control the initialization exactly.
inline ClusterModel gmm_em_with_init(const PointSet& points, const GmmInit& init,
                                     const ClusterConfig& config) {
  config.validate();
  const std::size_t dims = detail::check_points(points);
  const std::size_t k = init.means.size();
  if (k < 1 || init.covariances.size() != k || init.weights.size() != k) {
    throw ValidationError("gmm_em: init shapes are inconsistent");
  }
  for (const auto& m : init.means) {
    if (m.size() != dims) throw ValidationError("gmm_em: init mean dimension mismatch");
  }

  const std::size_t n = points.size();
  PointSet means = init.means;
  std::vector<Matrix> covs = init.covariances;
  std::vector<double> weights = init.weights;
  std::vector<Matrix> chols(k);
  for (std::size_t j = 0; j < k; ++j) chols[j] = detail::factor_covariance(covs[j]);

  ClusterModel model;
  model.method = method_name(ClusterMethod::kGmm);
  std::vector<std::vector<double>> resp(n, std::vector<double>(k));
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double>& r = resp[i];
      double lse_max = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        r[j] = weights[j] > 0.0
                   ? std::log(weights[j]) + detail::log_gaussian(points[i], means[j], chols[j])
                   : -std::numeric_limits<double>::infinity();
        lse_max = std::max(lse_max, r[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += std::exp(r[j] - lse_max);
      double lse = lse_max + std::log(sum);
      ll += lse;
      for (std::size_t j = 0; j < k; ++j) r[j] = std::exp(r[j] - lse);
    }
    model.loglik_trace.push_back(ll);
    model.iterations_used = iter;
    if (iter > 1 && ll - prev_ll < config.tol) break;
    prev_ll = ll;
    if (iter == config.max_iter) break;

    for (std::size_t j = 0; j < k; ++j) {
      double nj = 0.0;
      for (std::size_t i = 0; i < n; ++i) nj += resp[i][j];
      weights[j] = nj / static_cast<double>(n);
      if (nj < 1e-12) continue;  // starved component keeps its parameters
      Point mu(dims, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dims; ++d) mu[d] += resp[i][j] * points[i][d];
      }
      for (double& v : mu) v /= nj;
      Matrix cov(dims, dims);
      for (std::size_t i = 0; i < n; ++i) {
        double w = resp[i][j];
        for (std::size_t a = 0; a < dims; ++a) {
          double da = points[i][a] - mu[a];
          for (std::size_t b = 0; b <= a; ++b) {
            cov(a, b) += w * da * (points[i][b] - mu[b]);
          }
        }
      }
      for (std::size_t a = 0; a < dims; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
          cov(a, b) /= nj;
          cov(b, a) = cov(a, b);
        }
      }
      means[j] = std::move(mu);
      covs[j] = std::move(cov);
      chols[j] = detail::factor_covariance(covs[j]);
    }
  }

  model.centers = std::move(means);
  model.covariances = std::move(covs);
  model.weights = std::move(weights);
  model.assignments.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (resp[i][j] > resp[i][best]) best = j;
    }
    model.assignments[i] = best;
  }
  model.sse = sse(points, model.centers, model.assignments);
  return model;
}

/// Full-covariance Gaussian mixture fitted by EM, initialized from a modified
/// k-means run with the same seed.
inline ClusterModel gmm_em(const PointSet& points, const ClusterConfig& config) {
  config.validate();
  const std::size_t dims = detail::check_points(points);
  if (config.k > detail::distinct_count(points)) {
    throw ValidationError("gmm_em: k exceeds the number of distinct points");
  }

  ClusterConfig km = config;
  km.method = ClusterMethod::kKMeansModified;
  ClusterModel seed_model = kmeans_modified(points, km);

  const std::size_t k = config.k;
  const std::size_t n = points.size();
  GmmInit init;
  init.means = seed_model.centers;
  init.weights.assign(k, 0.0);
  init.covariances.assign(k, Matrix(dims, dims));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[seed_model.assignments[i]];
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = seed_model.assignments[i];
    for (std::size_t a = 0; a < dims; ++a) {
      double da = points[i][a] - init.means[c][a];
      for (std::size_t b = 0; b <= a; ++b) {
        init.covariances[c](a, b) += da * (points[i][b] - init.means[c][b]);
      }
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    init.weights[c] = static_cast<double>(counts[c]) / static_cast<double>(n);
    for (std::size_t a = 0; a < dims; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        init.covariances[c](a, b) /= std::max<double>(1.0, static_cast<double>(counts[c]));
        init.covariances[c](b, a) = init.covariances[c](a, b);
      }
    }
  }
  ClusterModel model = gmm_em_with_init(points, init, config);
  model.restarts_used = seed_model.restarts_used;
  return model;
}

// ---------------------------------------------------------------------------
// Mean shift
// ---------------------------------------------------------------------------

/// Half the median pairwise distance of a seeded subsample of at most 500
/// points; the estimate the fitter uses when no bandwidth is given.
inline double auto_bandwidth(const PointSet& points, std::uint64_t seed) {
  detail::check_points(points);
  const std::size_t n = points.size();
  std::vector<std::size_t> idx;
  if (n <= 500) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  } else {
    Rng rng(seed);
    idx = rng.permutation(n);
    idx.resize(500);
  }
  std::vector<double> dists;
  dists.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      dists.push_back(std::sqrt(squared_distance(points[idx[a]], points[idx[b]])));
    }
  }
  if (dists.empty()) throw ValidationError("auto_bandwidth: need at least 2 points");
  std::sort(dists.begin(), dists.end());
  std::size_t m = dists.size();
  double median = m % 2 == 1 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  if (median <= 0.0) {
    throw ValidationError("auto_bandwidth: degenerate data (all sampled points coincide)");
  }
  return median / 2.0;
}

/// Flat-kernel mean shift: every point climbs to the mean of its bandwidth
/// window until the move falls below tol; converged positions closer than the
/// bandwidth merge into one mode; k is discovered, not supplied.
inline ClusterModel mean_shift(const PointSet& points, const ClusterConfig& config) {
  config.validate();
  const std::size_t dims = detail::check_points(points);
  const std::size_t n = points.size();
  const double bw = config.bandwidth > 0.0 ? config.bandwidth : auto_bandwidth(points, config.seed);
  const double bw2 = bw * bw;

  PointSet converged(n);
  int max_sweeps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Point pos = points[i];
    int sweeps = 0;
    for (; sweeps < config.max_iter; ++sweeps) {
      Point mean(dims, 0.0);
      std::size_t count = 0;
      for (const auto& q : points) {
        if (squared_distance(pos, q) <= bw2) {
          for (std::size_t d = 0; d < dims; ++d) mean[d] += q[d];
          ++count;
        }
      }
      for (double& v : mean) v /= static_cast<double>(count);
      double moved = std::sqrt(squared_distance(mean, pos));
      pos = std::move(mean);
      if (moved < config.tol) {
        ++sweeps;
        break;
      }
    }
    max_sweeps = std::max(max_sweeps, sweeps);
    converged[i] = std::move(pos);
  }

  // Greedy grouping of converged positions, then pairwise merging until every
  // surviving mode pair is at least a bandwidth apart.
  PointSet sums;
  std::vector<std::size_t> counts;
  for (const auto& pos : converged) {
    bool joined = false;
    for (std::size_t g = 0; g < sums.size(); ++g) {
      Point mean(dims);
      for (std::size_t d = 0; d < dims; ++d) mean[d] = sums[g][d] / static_cast<double>(counts[g]);
      if (squared_distance(pos, mean) < bw2) {
        for (std::size_t d = 0; d < dims; ++d) sums[g][d] += pos[d];
        ++counts[g];
        joined = true;
        break;
      }
    }
    if (!joined) {
      sums.push_back(pos);
      counts.push_back(1);
    }
  }
  PointSet modes(sums.size(), Point(dims));
  for (std::size_t g = 0; g < sums.size(); ++g) {
    for (std::size_t d = 0; d < dims; ++d) modes[g][d] = sums[g][d] / static_cast<double>(counts[g]);
  }
  bool merged = true;
  while (merged && modes.size() > 1) {
    merged = false;
    double best_d = bw2;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < modes.size(); ++a) {
      for (std::size_t b = a + 1; b < modes.size(); ++b) {
        double d = squared_distance(modes[a], modes[b]);
        if (d < best_d) {
          best_d = d;
          ba = a;
          bb = b;
          merged = true;
        }
      }
    }
    if (merged) {
      double wa = static_cast<double>(counts[ba]);
      double wb = static_cast<double>(counts[bb]);
      for (std::size_t d = 0; d < dims; ++d) {
        modes[ba][d] = (modes[ba][d] * wa + modes[bb][d] * wb) / (wa + wb);
      }
      counts[ba] += counts[bb];
      modes.erase(modes.begin() + static_cast<std::ptrdiff_t>(bb));
      counts.erase(counts.begin() + static_cast<std::ptrdiff_t>(bb));
    }
  }
  std::sort(modes.begin(), modes.end());

  ClusterModel model;
  model.method = method_name(ClusterMethod::kMeanShift);
  model.centers = std::move(modes);
  model.assignments = detail::assign_all(points, model.centers);
  model.sse = sse(points, model.centers, model.assignments);
  model.iterations_used = max_sweeps;
  return model;
}

/// Dispatch on config.method.
inline ClusterModel fit_clusters(const PointSet& points, const ClusterConfig& config) {
  switch (config.method) {
    case ClusterMethod::kKMeansModified: return kmeans_modified(points, config);
    case ClusterMethod::kSom: return som_cluster(points, config);
    case ClusterMethod::kGmm: return gmm_em(points, config);
    case ClusterMethod::kMeanShift: return mean_shift(points, config);
  }
  throw ValidationError("unknown clustering method");
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void write_cluster_csv(const std::vector<std::string>& ids, const PointSet& points,
                              const std::vector<std::size_t>& assignments, const std::string& path) {
  if (ids.size() != points.size() || ids.size() != assignments.size()) {
    throw ValidationError("write_cluster_csv: length mismatch");
  }
  std::size_t dims = points.empty() ? 0 : points.front().size();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "id";
  for (std::size_t d = 0; d < dims; ++d) out << ",v" << (d + 1);
  out << ",cluster\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (double v : points[i]) out << ',' << format_double(v);
    out << ',' << assignments[i] << '\n';
  }
}

inline nlohmann::json cluster_model_to_json(const ClusterModel& model,
                                            const std::vector<std::string>& ids) {
  if (ids.size() != model.assignments.size()) {
    throw ValidationError("cluster_model_to_json: ids and assignments differ in length");
  }
  nlohmann::json j;
  j["method"] = model.method;
  j["k"] = model.k();
  j["centers"] = model.centers;
  j["sse"] = model.sse;
  j["iterations_used"] = model.iterations_used;
  if (model.method == "kmeans_modified") j["restarts_used"] = model.restarts_used;
  if (!model.weights.empty()) {
    j["weights"] = model.weights;
    nlohmann::json covs = nlohmann::json::array();
    for (const auto& c : model.covariances) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t r = 0; r < c.rows; ++r) {
        rows.push_back(std::vector<double>(c.row(r).begin(), c.row(r).end()));
      }
      covs.push_back(rows);
    }
    j["covariances"] = covs;
  }
  if (!model.loglik_trace.empty()) j["loglik_trace"] = model.loglik_trace;
  nlohmann::json assigns = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    assigns.push_back({{"id", ids[i]}, {"cluster", model.assignments[i]}});
  }
  j["assignments"] = assigns;
  return j;
}

}  // namespace custvec
