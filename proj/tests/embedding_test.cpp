#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "custvec/custvec.hpp"
#include "support/oracles.hpp"

using namespace custvec;

namespace {

EmbeddingSet random_set(std::size_t n, std::size_t dim, std::uint64_t seed, bool labeled = false) {
  Rng rng(seed);
  EmbeddingSet set;
  set.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    CustomerVector v;
    v.id = "c" + std::to_string(i);
    v.values.resize(dim);
    for (double& x : v.values) x = rng.normal();
    if (labeled) v.label = static_cast<int>(rng.index(2));
    set.vectors.push_back(std::move(v));
  }
  return set;
}

}  // namespace

TEST(Embed, IsTheFirstHiddenLayerOutput) {
  LayerSpec spec;
  spec.input_dim = 5;
  spec.hidden1_dim = 3;
  spec.hidden2_dim = 4;
  NetworkParams p = init_params(spec, 3);
  Rng rng(4);
  std::vector<double> x(5);
  for (double& v : x) v = rng.normal();

  ForwardTrace t = forward(p, spec, x);
  EXPECT_EQ(embed(p, spec, x), t.w1);
  EXPECT_EQ(embed(p, spec, x, true), t.a1);
  EXPECT_EQ(embed(p, spec, x).size(), 3u);
}

TEST(Embed, AllRowsKeepIdsLabelsAndOrder) {
  Dataset ds = standardize(make_synthetic(30, 5, 0.3, 2.0, 6));
  LayerSpec spec;
  spec.input_dim = 5;
  NetworkParams p = init_params(spec, 1);
  EmbeddingSet set = embed_all(p, spec, ds);
  ASSERT_EQ(set.size(), 30u);
  EXPECT_EQ(set.dim, spec.hidden1_dim);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(set.vectors[i].id, ds.records[i].id);
    EXPECT_EQ(set.vectors[i].label, ds.records[i].label);
    EXPECT_EQ(set.vectors[i].values, embed(p, spec, ds.records[i].features));
  }

  Dataset raw = make_synthetic(30, 5, 0.3, 2.0, 6);
  EXPECT_THROW(embed_all(p, spec, raw), ValidationError);

  Dataset dup = ds;
  dup.records[1].id = dup.records[0].id;
  EXPECT_THROW(embed_all(p, spec, dup), ValidationError);
}

TEST(Cosine, HandValues) {
  std::vector<double> a{1.0, 0.0};
  std::vector<double> b{0.0, 1.0};
  std::vector<double> c{1.0, 1.0};
  std::vector<double> d{-2.0, 0.0};
  EXPECT_NEAR(cosine_similarity(a, b), 0.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, c), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cosine_similarity(a, d), -1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);

  std::vector<double> zero{0.0, 0.0};
  EXPECT_THROW(cosine_similarity(a, zero), ValidationError);
  std::vector<double> shorter{1.0};
  EXPECT_THROW(cosine_similarity(a, shorter), ValidationError);
}

TEST(Cosine, SymmetryRangeAndScaleInvariance) {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t d = 1 + rng.index(6);
    std::vector<double> a(d), b(d);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    double na = 0.0, nb = 0.0;
    for (double v : a) na += v * v;
    for (double v : b) nb += v * v;
    if (na == 0.0 || nb == 0.0) continue;

    double s = cosine_similarity(a, b);
    EXPECT_EQ(s, cosine_similarity(b, a));
    EXPECT_GE(s, -1.0 - 1e-12);
    EXPECT_LE(s, 1.0 + 1e-12);

    std::vector<double> a_scaled = a;
    for (double& v : a_scaled) v *= 37.5;
    EXPECT_NEAR(cosine_similarity(a_scaled, b), s, 1e-12);
  }
}

TEST(Euclidean, HandValues) {
  std::vector<double> a{0.0, 0.0};
  std::vector<double> b{3.0, 4.0};
  EXPECT_DOUBLE_EQ(euclidean_distance(a, b), 5.0);
  EXPECT_DOUBLE_EQ(euclidean_distance(a, a), 0.0);
}

TEST(TopK, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    EmbeddingSet set = random_set(3 + seed % 40, 3, seed * 13 + 1);
    Rng rng(seed + 100);
    const std::string query = set.vectors[rng.index(set.size())].id;
    const std::size_t k = 1 + rng.index(set.size());
    for (auto metric : {SimilarityMetric::kCosine, SimilarityMetric::kEuclidean}) {
      auto hits = top_k_similar(set, query, k, metric);

      // oracle: score every other vector, full sort, cut at k
      const CustomerVector* q = nullptr;
      for (const auto& v : set.vectors) {
        if (v.id == query) q = &v;
      }
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& v : set.vectors) {
        if (v.id == query) continue;
        double s = metric == SimilarityMetric::kCosine
                       ? cosine_similarity(q->values, v.values)
                       : euclidean_distance(q->values, v.values);
        scored.emplace_back(s, v.id);
      }
      std::sort(scored.begin(), scored.end(), [&](const auto& x, const auto& y) {
        if (x.first != y.first) {
          return metric == SimilarityMetric::kCosine ? x.first > y.first : x.first < y.first;
        }
        return x.second < y.second;
      });
      scored.resize(std::min(k, scored.size()));

      ASSERT_EQ(hits.size(), scored.size());
      for (std::size_t i = 0; i < hits.size(); ++i) {
        EXPECT_EQ(hits[i].id, scored[i].second);
        EXPECT_EQ(hits[i].score, scored[i].first);
      }
    }
  }
}

TEST(TopK, ExcludesQueryBreaksTiesByIdAndCapsAtPoolSize) {
  EmbeddingSet set;
  set.dim = 2;
  set.vectors = {{"b", {1.0, 0.0}, std::nullopt},
                 {"a", {2.0, 0.0}, std::nullopt},
                 {"q", {1.0, 0.0}, std::nullopt},
                 {"c", {0.0, 1.0}, std::nullopt}};
  auto hits = top_k_similar(set, "q", 10, SimilarityMetric::kCosine);
  ASSERT_EQ(hits.size(), 3u);  // query excluded, k capped
  EXPECT_EQ(hits[0].id, "a");  // cosine 1 tie broken by id
  EXPECT_EQ(hits[1].id, "b");
  EXPECT_EQ(hits[2].id, "c");

  EXPECT_THROW(top_k_similar(set, "missing", 2, SimilarityMetric::kCosine), ValidationError);
  EXPECT_THROW(top_k_similar(set, "q", 0, SimilarityMetric::kCosine), ValidationError);
}

TEST(MetricNames, RoundTrip) {
  EXPECT_EQ(metric_name(metric_from_name("cosine")), "cosine");
  EXPECT_EQ(metric_name(metric_from_name("euclidean")), "euclidean");
  EXPECT_THROW(metric_from_name("manhattan"), ValidationError);
}

TEST(DefaulterScreen, ReturnsOnlyFlaggedNonDefaultersWithWitness) {
  EmbeddingSet set;
  set.dim = 2;
  set.vectors = {{"d1", {1.0, 0.0}, 1},
                 {"d2", {0.0, 1.0}, 1},
                 {"near_d1", {5.0, 0.1}, 0},
                 {"between", {1.0, 1.0}, 0},
                 {"far", {-1.0, -1.0}, 0}};
  auto hits = similar_to_defaulters(set, 0.99, SimilarityMetric::kCosine);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, "near_d1");
  EXPECT_EQ(hits[0].witness_id, "d1");
  EXPECT_GE(hits[0].score, 0.99);

  // euclidean: smaller is closer, threshold is an upper bound
  auto ehits = similar_to_defaulters(set, 1.5, SimilarityMetric::kEuclidean);
  std::vector<std::string> ids;
  for (const auto& h : ehits) ids.push_back(h.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"between"}));

  EmbeddingSet no_def = set;
  for (auto& v : no_def.vectors) v.label = 0;
  EXPECT_THROW(similar_to_defaulters(no_def, 0.9), ValidationError);

  EmbeddingSet unlabeled = set;
  unlabeled.vectors[0].label.reset();
  EXPECT_THROW(similar_to_defaulters(unlabeled, 0.9), ValidationError);

  EXPECT_THROW(similar_to_defaulters(set, 1.5, SimilarityMetric::kCosine), ValidationError);
  EXPECT_THROW(similar_to_defaulters(set, -0.5, SimilarityMetric::kEuclidean), ValidationError);
}

TEST(DefaulterScreen, LooseningTheThresholdOnlyAddsHits) {
  EmbeddingSet set = random_set(60, 3, 5, true);
  if (std::none_of(set.vectors.begin(), set.vectors.end(),
                   [](const auto& v) { return v.label == 1; })) {
    set.vectors[0].label = 1;
  }
  std::vector<std::string> prev;
  for (double t : {0.95, 0.8, 0.5, 0.0, -1.0}) {
    auto hits = similar_to_defaulters(set, t, SimilarityMetric::kCosine);
    std::vector<std::string> ids;
    for (const auto& h : hits) ids.push_back(h.id);
    for (const auto& id : prev) {
      EXPECT_NE(std::find(ids.begin(), ids.end(), id), ids.end())
          << "threshold " << t << " lost id " << id;
    }
    prev = ids;
  }
}

TEST(Compress, RecoversRankLimitedDataAlmostExactly) {
  // vectors that live on a 3-dimensional linear subspace of R^10
  Rng rng(19);
  Matrix basis(10, 3);
  for (double& v : basis.data) v = rng.normal();
  EmbeddingSet set;
  set.dim = 10;
  for (std::size_t i = 0; i < 60; ++i) {
    std::vector<double> code(3);
    for (double& c : code) c = rng.normal();
    CustomerVector v;
    v.id = "r" + std::to_string(i);
    v.values = matvec(basis, code);
    set.vectors.push_back(std::move(v));
  }

  TrainConfig cfg;
  cfg.epochs = 800;
  cfg.batch_size = 60;
  cfg.adam.lr = 0.02;
  cfg.early_stop_patience = 800;
  cfg.seed = 7;
  CompressionResult res = compress(set, 3, cfg);
  EXPECT_EQ(res.codes.dim, 3u);
  ASSERT_EQ(res.codes.size(), set.size());
  EXPECT_LT(res.reconstruction_mse, 1e-3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(res.codes.vectors[i].id, set.vectors[i].id);
  }
}

TEST(Compress, ConstantVectorsCompressToZeroError) {
  EmbeddingSet set;
  set.dim = 4;
  for (std::size_t i = 0; i < 12; ++i) {
    set.vectors.push_back({"k" + std::to_string(i), {2.0, -1.0, 0.5, 3.0}, std::nullopt});
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  CompressionResult res = compress(set, 2, cfg);
  EXPECT_NEAR(res.reconstruction_mse, 0.0, 1e-20);
}

TEST(Compress, DeterministicPerSeedAndValidates) {
  EmbeddingSet set = random_set(25, 6, 44);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 10;
  cfg.seed = 5;
  CompressionResult a = compress(set, 2, cfg);
  CompressionResult b = compress(set, 2, cfg);
  EXPECT_EQ(a.reconstruction_mse, b.reconstruction_mse);
  for (std::size_t i = 0; i < a.codes.size(); ++i) {
    EXPECT_EQ(a.codes.vectors[i].values, b.codes.vectors[i].values);
  }

  EXPECT_THROW(compress(set, 0, cfg), ValidationError);
  EXPECT_THROW(compress(set, 6, cfg), ValidationError);
  EmbeddingSet tiny = random_set(1, 6, 1);
  EXPECT_THROW(compress(tiny, 2, cfg), ValidationError);
}

TEST(Compress, ThirtyToThreeWrapperChecksItsContract) {
  EmbeddingSet set30 = random_set(15, 30, 8);
  CompressionResult res = compress_30_to_3(set30, 3);
  EXPECT_EQ(res.codes.dim, 3u);
  EXPECT_EQ(res.codes.size(), 15u);

  EmbeddingSet wrong_dim = random_set(15, 10, 8);
  EXPECT_THROW(compress_30_to_3(wrong_dim, 3), ValidationError);
  EmbeddingSet too_few = random_set(9, 30, 8);
  EXPECT_THROW(compress_30_to_3(too_few, 3), ValidationError);
}

TEST(VectorsCsv, RoundTripsBitExactIncludingMissingLabels) {
  EmbeddingSet set = random_set(20, 3, 3, true);
  set.vectors[4].label.reset();
  testsupport::TempDir tmp("vec_csv");
  write_vectors_csv(set, tmp.str("v.csv"));
  EmbeddingSet back = read_vectors_csv(tmp.str("v.csv"));
  ASSERT_EQ(back.size(), set.size());
  EXPECT_EQ(back.dim, set.dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(back.vectors[i].id, set.vectors[i].id);
    EXPECT_EQ(back.vectors[i].values, set.vectors[i].values);
    EXPECT_EQ(back.vectors[i].label, set.vectors[i].label);
  }
  write_vectors_csv(back, tmp.str("v2.csv"));
  EXPECT_EQ(testsupport::read_text(tmp.str("v.csv")), testsupport::read_text(tmp.str("v2.csv")));
}

TEST(VectorsCsv, RejectsMalformedFiles) {
  testsupport::TempDir tmp("vec_bad");
  testsupport::write_text(tmp.str("bad_header.csv"), "id,x1,label\na,1,0\n");
  EXPECT_THROW(read_vectors_csv(tmp.str("bad_header.csv")), ValidationError);

  testsupport::write_text(tmp.str("bad_label.csv"), "id,v1,label\na,1,2\n");
  EXPECT_THROW(read_vectors_csv(tmp.str("bad_label.csv")), ValidationError);

  testsupport::write_text(tmp.str("dup.csv"), "id,v1,label\na,1,0\na,2,1\n");
  EXPECT_THROW(read_vectors_csv(tmp.str("dup.csv")), ValidationError);

  EXPECT_THROW(read_vectors_csv(tmp.str("nope.csv")), ValidationError);
}
