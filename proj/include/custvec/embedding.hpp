#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "custvec/common.hpp"
#include "custvec/dataset.hpp"
#include "custvec/matrix.hpp"
#include "custvec/network.hpp"
#include "custvec/rng.hpp"

namespace custvec {

/// One customer's embedding: the activations of the first hidden layer.
struct CustomerVector {
  std::string id;
  std::vector<double> values;
  std::optional<int> label;
};

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<CustomerVector> vectors;

  std::size_t size() const { return vectors.size(); }

  void check_consistent() const {
    for (const auto& v : vectors) {
      if (v.values.size() != dim) {
        throw ValidationError("embedding '" + v.id + "' has dimension " +
                              std::to_string(v.values.size()) + ", expected " +
                              std::to_string(dim));
      }
    }
  }

  void check_unique_ids() const {
    std::set<std::string> seen;
    for (const auto& v : vectors) {
      if (!seen.insert(v.id).second) throw ValidationError("duplicate embedding id '" + v.id + "'");
    }
  }
};

/// Map one feature row to its embedding. By default the embedding is the
/// post-activation output of the first hidden layer; `pre_activation` exposes
/// the raw affine values instead.
inline std::vector<double> embed(const NetworkParams& params, const LayerSpec& spec,
                                 std::span<const double> x, bool pre_activation = false) {
  ForwardTrace t = forward(params, spec, x);
  return pre_activation ? t.a1 : t.w1;
}

inline EmbeddingSet embed_all(const NetworkParams& params, const LayerSpec& spec,
                              const Dataset& data, bool pre_activation = false) {
  if (!data.standardized) throw ValidationError("embed_all: dataset is not standardized");
  EmbeddingSet set;
  set.dim = spec.hidden1_dim;
  set.vectors.reserve(data.size());
  for (const auto& rec : data.records) {
    set.vectors.push_back({rec.id, embed(params, spec, rec.features, pre_activation), rec.label});
  }
  set.check_unique_ids();
  return set;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_similarity: dimension mismatch");
  double na = norm(a);
  double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw ValidationError("cosine similarity is undefined for a zero vector");
  }
  return dot(a, b) / (na * nb);
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

struct SimilarityHit {
  std::string id;
  double score = 0.0;  // cosine similarity or Euclidean distance
};

enum class SimilarityMetric { kCosine, kEuclidean };

inline SimilarityMetric metric_from_name(const std::string& name) {
  if (name == "cosine") return SimilarityMetric::kCosine;
  if (name == "euclidean") return SimilarityMetric::kEuclidean;
  throw ValidationError("unknown similarity metric: " + name);
}

inline std::string metric_name(SimilarityMetric m) {
  return m == SimilarityMetric::kCosine ? "cosine" : "euclidean";
}

/// The k vectors most similar to the query id: highest cosine similarity or
/// lowest Euclidean distance, ties broken by ascending id. The query itself is
/// excluded; k larger than the candidate pool returns everything ranked.
inline std::vector<SimilarityHit> top_k_similar(const EmbeddingSet& set, const std::string& query_id,
                                                std::size_t k,
                                                SimilarityMetric metric = SimilarityMetric::kCosine) {
  if (k < 1) throw ValidationError("top_k_similar: k must be >= 1");
  const CustomerVector* query = nullptr;
  for (const auto& v : set.vectors) {
    if (v.id == query_id) {
      query = &v;
      break;
    }
  }
  if (!query) throw ValidationError("top_k_similar: unknown id '" + query_id + "'");

  std::vector<SimilarityHit> hits;
  hits.reserve(set.size());
  for (const auto& v : set.vectors) {
    if (v.id == query_id) continue;
    double score = metric == SimilarityMetric::kCosine
                       ? cosine_similarity(query->values, v.values)
                       : euclidean_distance(query->values, v.values);
    hits.push_back({v.id, score});
  }
  const bool higher_better = metric == SimilarityMetric::kCosine;
  std::sort(hits.begin(), hits.end(), [higher_better](const SimilarityHit& a, const SimilarityHit& b) {
    if (a.score != b.score) return higher_better ? a.score > b.score : a.score < b.score;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

struct DefaulterScreenResult {
  std::string id;
  double score = 0.0;        // best score against any defaulter
  std::string witness_id;    // the defaulter that produced that score
};

/// Screen every non-defaulter against the defaulter cohort and return the ones
/// that clear the threshold: best cosine similarity >= threshold, or smallest
/// Euclidean distance <= threshold. Each hit names the defaulter responsible.
inline std::vector<DefaulterScreenResult> similar_to_defaulters(
    const EmbeddingSet& set, double threshold, SimilarityMetric metric = SimilarityMetric::kCosine) {
  if (metric == SimilarityMetric::kCosine && (threshold < -1.0 || threshold > 1.0)) {
    throw ValidationError("cosine threshold must lie in [-1, 1]");
  }
  if (metric == SimilarityMetric::kEuclidean && threshold < 0.0) {
    throw ValidationError("euclidean threshold must be non-negative");
  }
  std::vector<const CustomerVector*> defaulters;
  for (const auto& v : set.vectors) {
    if (!v.label) throw ValidationError("similar_to_defaulters: unlabeled embedding '" + v.id + "'");
    if (*v.label == 1) defaulters.push_back(&v);
  }
  if (defaulters.empty()) throw ValidationError("similar_to_defaulters: no defaulters in the set");

  std::vector<DefaulterScreenResult> results;
  const bool higher_better = metric == SimilarityMetric::kCosine;
  for (const auto& v : set.vectors) {
    if (*v.label == 1) continue;
    DefaulterScreenResult r;
    r.id = v.id;
    r.score = higher_better ? -std::numeric_limits<double>::infinity()
                            : std::numeric_limits<double>::infinity();
    for (const CustomerVector* d : defaulters) {
      double s = higher_better ? cosine_similarity(v.values, d->values)
                               : euclidean_distance(v.values, d->values);
      if ((higher_better ? s > r.score : s < r.score) ||
          (s == r.score && d->id < r.witness_id)) {
        r.score = s;
        r.witness_id = d->id;
      }
    }
    if (higher_better ? r.score >= threshold : r.score <= threshold) {
      results.push_back(std::move(r));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// Linear autoencoder compression
// ---------------------------------------------------------------------------

struct CompressionResult {
  EmbeddingSet codes;
  double reconstruction_mse = 0.0;
  int epochs_run = 0;
};

namespace detail {

struct AutoencoderParams {
  Matrix enc;  // code_dim x input_dim
  std::vector<double> enc_bias;
  Matrix dec;  // input_dim x code_dim
  std::vector<double> dec_bias;
};

}  // namespace detail

/// Reduce wide embeddings to `code_dim` values with a linear autoencoder
/// (input -> code -> input, identity activations, per-element MSE, Adam).
/// Inputs are centered on the set mean before training. Early stopping follows
/// the classifier's protocol on the training loss itself.
inline CompressionResult compress(const EmbeddingSet& set, std::size_t code_dim,
                                  const TrainConfig& config) {
  config.validate();
  set.check_consistent();
  if (set.size() < 2) throw ValidationError("compress: need at least 2 vectors");
  if (code_dim < 1 || code_dim >= set.dim) {
    throw ValidationError("compress: code_dim must be in [1, dim)");
  }

  const std::size_t d = set.dim;
  const std::size_t n = set.size();
  std::vector<double> mean(d, 0.0);
  for (const auto& v : set.vectors) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += v.values[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<std::vector<double>> centered(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[i][j] = set.vectors[i].values[j] - mean[j];
  }

  Rng init_rng(config.seed);
  detail::AutoencoderParams p;
  p.enc = Matrix(code_dim, d);
  p.dec = Matrix(d, code_dim);
  double be = 1.0 / std::sqrt(static_cast<double>(d));
  double bd = 1.0 / std::sqrt(static_cast<double>(code_dim));
  for (double& w : p.enc.data) w = init_rng.uniform(-be, be);
  for (double& w : p.dec.data) w = init_rng.uniform(-bd, bd);
  p.enc_bias.assign(code_dim, 0.0);
  p.dec_bias.assign(d, 0.0);

  detail::AutoencoderParams m{Matrix(code_dim, d), std::vector<double>(code_dim, 0.0),
                              Matrix(d, code_dim), std::vector<double>(d, 0.0)};
  detail::AutoencoderParams v = m;
  long t = 0;

  auto epoch_mse = [&]() {
    double acc = 0.0;
    for (const auto& x : centered) {
      std::vector<double> code = matvec(p.enc, x);
      for (std::size_t j = 0; j < code_dim; ++j) code[j] += p.enc_bias[j];
      std::vector<double> rec = matvec(p.dec, code);
      for (std::size_t j = 0; j < d; ++j) rec[j] += p.dec_bias[j];
      for (std::size_t j = 0; j < d; ++j) {
        double e = rec[j] - x[j];
        acc += e * e;
      }
    }
    return acc / static_cast<double>(n * d);
  };

  Rng order_rng(stage_seed(config.seed, "autoencoder_orders"));
  detail::AutoencoderParams best = p;
  double best_loss = std::numeric_limits<double>::infinity();
  double last_significant = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  const int stop_after = std::max(config.early_stop_patience, 1);
  int epochs_run = 0;

  Matrix g_enc(code_dim, d);
  Matrix g_dec(d, code_dim);
  std::vector<double> g_enc_b(code_dim), g_dec_b(d);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = order_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      double inv = 1.0 / static_cast<double>(end - start);
      std::fill(g_enc.data.begin(), g_enc.data.end(), 0.0);
      std::fill(g_dec.data.begin(), g_dec.data.end(), 0.0);
      std::fill(g_enc_b.begin(), g_enc_b.end(), 0.0);
      std::fill(g_dec_b.begin(), g_dec_b.end(), 0.0);

      for (std::size_t bi = start; bi < end; ++bi) {
        const std::vector<double>& x = centered[order[bi]];
        std::vector<double> code = matvec(p.enc, x);
        for (std::size_t j = 0; j < code_dim; ++j) code[j] += p.enc_bias[j];
        std::vector<double> rec = matvec(p.dec, code);
        for (std::size_t j = 0; j < d; ++j) rec[j] += p.dec_bias[j];

        // d(MSE)/d(rec), with MSE averaged over the d output elements
        std::vector<double> delta_out(d);
        for (std::size_t j = 0; j < d; ++j) {
          delta_out[j] = 2.0 * (rec[j] - x[j]) / static_cast<double>(d);
        }
        add_outer(g_dec, delta_out, code, inv);
        for (std::size_t j = 0; j < d; ++j) g_dec_b[j] += inv * delta_out[j];

        std::vector<double> delta_code = matvec_transposed(p.dec, delta_out);
        add_outer(g_enc, delta_code, x, inv);
        for (std::size_t j = 0; j < code_dim; ++j) g_enc_b[j] += inv * delta_code[j];
      }

      ++t;
      detail::adam_update(p.enc.data, g_enc.data, m.enc.data, v.enc.data, t, config.adam);
      detail::adam_update(p.enc_bias, g_enc_b, m.enc_bias, v.enc_bias, t, config.adam);
      detail::adam_update(p.dec.data, g_dec.data, m.dec.data, v.dec.data, t, config.adam);
      detail::adam_update(p.dec_bias, g_dec_b, m.dec_bias, v.dec_bias, t, config.adam);
    }

    double mse = epoch_mse();
    if (!std::isfinite(mse)) {
      throw std::runtime_error("autoencoder diverged: non-finite loss at epoch " +
                               std::to_string(epoch + 1));
    }
    epochs_run = epoch + 1;
    if (mse < best_loss) {
      best_loss = mse;
      best = p;
    }
    if (mse < last_significant - kEarlyStopMinDelta) {
      last_significant = mse;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= stop_after) break;
    }
  }

  CompressionResult result;
  result.reconstruction_mse = best_loss;
  result.epochs_run = epochs_run;
  result.codes.dim = code_dim;
  result.codes.vectors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> code = matvec(best.enc, centered[i]);
    for (std::size_t j = 0; j < code_dim; ++j) code[j] += best.enc_bias[j];
    result.codes.vectors.push_back({set.vectors[i].id, std::move(code), set.vectors[i].label});
  }
  return result;
}

/// The wide-embedding path: squeeze 30-dimensional hidden activations down to
/// the standard 3-dimensional customer vector.
inline CompressionResult compress_30_to_3(const EmbeddingSet& activations, std::uint64_t seed) {
  if (activations.dim != 30) {
    throw ValidationError("compress_30_to_3: expected 30-dimensional activations, got " +
                          std::to_string(activations.dim));
  }
  if (activations.size() < 10) {
    throw ValidationError("compress_30_to_3: need at least 10 vectors");
  }
  TrainConfig config;
  config.seed = seed;
  return compress(activations, 3, config);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// CSV layout: id,v1,...,vD,label. Unlabeled rows leave the label cell empty.
inline void write_vectors_csv(const EmbeddingSet& set, const std::string& path) {
  set.check_consistent();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "id";
  for (std::size_t j = 0; j < set.dim; ++j) out << ",v" << (j + 1);
  out << ",label\n";
  for (const auto& v : set.vectors) {
    out << v.id;
    for (double x : v.values) out << ',' << format_double(x);
    out << ',';
    if (v.label) out << *v.label;
    out << '\n';
  }
}

inline EmbeddingSet read_vectors_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("vectors CSV is empty: " + path);
  std::vector<std::string> header = detail::split_line(line);
  if (header.size() < 3 || header.front() != "id" || header.back() != "label") {
    throw ValidationError("vectors CSV header must be id,v1,...,label");
  }
  EmbeddingSet set;
  set.dim = header.size() - 2;
  for (std::size_t j = 0; j < set.dim; ++j) {
    if (header[j + 1] != "v" + std::to_string(j + 1)) {
      throw ValidationError("vectors CSV header must be id,v1,...,label");
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("vectors CSV line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
    }
    CustomerVector v;
    v.id = cells[0];
    v.values.reserve(set.dim);
    for (std::size_t j = 0; j < set.dim; ++j) v.values.push_back(parse_double(cells[j + 1]));
    const std::string& lab = cells.back();
    if (!lab.empty()) {
      if (lab != "0" && lab != "1") {
        throw ValidationError("vectors CSV line " + std::to_string(line_no) +
                              ": label must be 0 or 1, got '" + lab + "'");
      }
      v.label = lab == "1" ? 1 : 0;
    }
    set.vectors.push_back(std::move(v));
  }
  set.check_unique_ids();
  return set;
}

}  // namespace custvec
