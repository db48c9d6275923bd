#include <gtest/gtest.h>

#include <cmath>

#include "custvec/custvec.hpp"
#include "support/oracles.hpp"

using namespace custvec;

namespace {

const PointSet kTwoPairs{{0.0}, {1.0}, {10.0}, {11.0}};
const std::vector<std::size_t> kTwoPairsAsg{0, 0, 1, 1};

// sign classifier: relu(x) through two unit layers, output sigmoid(20 a2 - 5)
struct SignNet {
  LayerSpec spec;
  NetworkParams params;

  SignNet() {
    spec.input_dim = 1;
    spec.hidden1_dim = 1;
    spec.hidden2_dim = 1;
    spec.hidden_activation = ActivationKind::relu();
    spec.use_bias = true;
    params.theta1 = Matrix(1, 1);
    params.theta1(0, 0) = 1.0;
    params.bias1 = {0.0};
    params.theta2 = Matrix(1, 1);
    params.theta2(0, 0) = 1.0;
    params.bias2 = {0.0};
    params.theta3 = Matrix(1, 1);
    params.theta3(0, 0) = 20.0;
    params.bias3 = -5.0;
  }
};

Dataset tiny_labeled(const std::vector<double>& xs, const std::vector<int>& ys) {
  Dataset d;
  d.schema.names = {"f0"};
  d.schema.label_name = "label";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CustomerRecord r;
    r.id = "r" + std::to_string(i);
    r.features = {xs[i]};
    r.label = ys[i];
    d.records.push_back(std::move(r));
  }
  d.standardized = true;
  return d;
}

}  // namespace

TEST(Confusion, CountsAndValidation) {
  std::vector<int> t{1, 1, 0, 0, 1, 0};
  std::vector<int> p{1, 0, 1, 0, 1, 0};
  ConfusionCounts c = confusion(t, p);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.tn, 2u);
  EXPECT_EQ(c.total(), 6u);

  std::vector<int> short_p{1};
  EXPECT_THROW(confusion(t, short_p), ValidationError);
  EXPECT_THROW(confusion({}, {}), ValidationError);
  std::vector<int> bad{1, 1, 0, 0, 1, 2};
  EXPECT_THROW(confusion(t, bad), ValidationError);
}

TEST(Metrics, HandValues) {
  ConfusionCounts c;
  c.tp = 4;
  c.fp = 1;
  c.fn = 4;
  c.tn = 1;
  EXPECT_DOUBLE_EQ(accuracy(c), 0.5);
  EXPECT_DOUBLE_EQ(precision(c), 0.8);
  EXPECT_DOUBLE_EQ(recall(c), 0.5);
  EXPECT_DOUBLE_EQ(f1(c), 0.6153846153846154);
}

TEST(Metrics, ZeroDenominatorsReturnZeroAndFlag) {
  ConfusionCounts none;
  none.tn = 5;
  bool degenerate = false;
  EXPECT_DOUBLE_EQ(precision(none, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  degenerate = false;
  EXPECT_DOUBLE_EQ(recall(none, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  degenerate = false;
  EXPECT_DOUBLE_EQ(f1(none, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  EXPECT_THROW(accuracy(ConfusionCounts{}), ValidationError);
}

TEST(Metrics, MseHandValueAndValidation) {
  EXPECT_DOUBLE_EQ(mse({0.0, 1.0}, {0.5, 0.5}), 0.25);
  EXPECT_THROW(mse({0.0}, {0.5, 0.5}), ValidationError);
  EXPECT_THROW(mse({}, {}), ValidationError);
}

TEST(EvaluateClassifier, PerfectSignClassifier) {
  SignNet net;
  Dataset d = tiny_labeled({1.0, 2.0, -1.0, -2.0}, {1, 1, 0, 0});
  ClassificationReport r = evaluate_classifier(net.params, net.spec, d);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
  EXPECT_FALSE(r.degenerate);
  EXPECT_LT(r.mse, 0.01);
  EXPECT_GT(r.loss, 0.0);

  nlohmann::json j = r.to_json();
  for (const char* key : {"accuracy", "mse", "loss", "precision", "recall", "f1", "degenerate"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(EvaluateClassifier, ConstantNegativePredictorIsDegenerate) {
  SignNet net;
  net.params.theta3(0, 0) = 0.0;  // output stuck at sigmoid(-5)
  Dataset d = tiny_labeled({1.0, 2.0, -1.0, -2.0}, {1, 1, 0, 0});
  ClassificationReport r = evaluate_classifier(net.params, net.spec, d);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
  EXPECT_DOUBLE_EQ(r.f1, 0.0);
  EXPECT_TRUE(r.degenerate);
}

TEST(EvaluateClassifier, Validation) {
  SignNet net;
  Dataset d = tiny_labeled({1.0}, {1});
  EXPECT_THROW(evaluate_classifier(net.params, net.spec, d, 0.0), ValidationError);
  EXPECT_THROW(evaluate_classifier(net.params, net.spec, d, 1.0), ValidationError);

  Dataset raw = d;
  raw.standardized = false;
  EXPECT_THROW(evaluate_classifier(net.params, net.spec, raw), ValidationError);

  Dataset unlabeled = d;
  unlabeled.records[0].label.reset();
  EXPECT_THROW(evaluate_classifier(net.params, net.spec, unlabeled), ValidationError);

  Dataset empty = d;
  empty.records.clear();
  EXPECT_THROW(evaluate_classifier(net.params, net.spec, empty), ValidationError);
}

TEST(Silhouette, TwoPairFixture) {
  // per point: (10.5-1)/10.5, (9.5-1)/9.5, mirrored; mean of the four
  EXPECT_NEAR(silhouette(kTwoPairs, kTwoPairsAsg), 0.899749373433584, 1e-12);
}

TEST(Silhouette, SingletonClusterContributesZero) {
  PointSet pts{{0.0}, {1.0}, {50.0}};
  std::vector<std::size_t> asg{0, 0, 1};
  double expected = (49.0 / 50.0 + 48.0 / 49.0 + 0.0) / 3.0;
  EXPECT_NEAR(silhouette(pts, asg), expected, 1e-12);
}

TEST(Silhouette, RelabelInvariantAndValidation) {
  std::vector<std::size_t> wild{7, 7, 2, 2};
  EXPECT_DOUBLE_EQ(silhouette(kTwoPairs, wild), silhouette(kTwoPairs, kTwoPairsAsg));

  std::vector<std::size_t> one{0, 0, 0, 0};
  EXPECT_THROW(silhouette(kTwoPairs, one), ValidationError);
  std::vector<std::size_t> short_asg{0, 1};
  EXPECT_THROW(silhouette(kTwoPairs, short_asg), ValidationError);
  EXPECT_THROW(silhouette({}, {}), ValidationError);
}

TEST(CalinskiHarabasz, TwoPairFixtureAndSentinel) {
  // ssb = 100, ssw = 1, (100/1)/(1/2) = 200
  EXPECT_NEAR(calinski_harabasz(kTwoPairs, kTwoPairsAsg), 200.0, 1e-12);

  PointSet degenerate{{0.0}, {0.0}, {10.0}};
  std::vector<std::size_t> asg{0, 0, 1};
  EXPECT_DOUBLE_EQ(calinski_harabasz(degenerate, asg), kIndexSentinel);

  std::vector<std::size_t> all_own{0, 1, 2, 3};
  EXPECT_THROW(calinski_harabasz(kTwoPairs, all_own), ValidationError);  // k == n
}

TEST(DaviesBouldin, TwoPairFixtureAndSentinel) {
  // scatter 0.5 each, centroid gap 10
  EXPECT_NEAR(davies_bouldin(kTwoPairs, kTwoPairsAsg), 0.1, 1e-12);

  PointSet coincident{{0.0}, {2.0}, {1.0}, {1.0}};
  std::vector<std::size_t> asg{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(davies_bouldin(coincident, asg), kIndexSentinel);

  std::vector<std::size_t> one{0, 0, 0, 0};
  EXPECT_THROW(davies_bouldin(kTwoPairs, one), ValidationError);
}

TEST(ValidityIndices, MatchNaiveImplementationsOnRandomInstances) {
  for (std::uint64_t s = 0; s < 300; ++s) {
    Rng rng(s + 1000);
    std::size_t n = 4 + rng.index(4);
    std::size_t k = 2 + rng.index(2);
    if (k >= n) k = n - 1;
    PointSet pts;
    std::vector<std::size_t> asg;
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)});
      asg.push_back(i < k ? i : rng.index(k));
    }
    EXPECT_NEAR(silhouette(pts, asg), testsupport::naive_silhouette(pts, asg), 1e-9);
    EXPECT_NEAR(calinski_harabasz(pts, asg), testsupport::naive_calinski_harabasz(pts, asg), 1e-9);
    EXPECT_NEAR(davies_bouldin(pts, asg), testsupport::naive_davies_bouldin(pts, asg), 1e-9);
  }
}

TEST(ValidityIndices, CleanSplitScoresBetterThanACrossedOne) {
  Rng rng(3);
  PointSet pts;
  std::vector<std::size_t> clean;
  for (int i = 0; i < 20; ++i) {
    pts.push_back({rng.normal(), rng.normal()});
    clean.push_back(0);
  }
  for (int i = 0; i < 20; ++i) {
    pts.push_back({9.0 + rng.normal(), 9.0 + rng.normal()});
    clean.push_back(1);
  }
  std::vector<std::size_t> crossed = clean;
  std::swap(crossed[0], crossed[20]);

  EXPECT_GT(silhouette(pts, clean), silhouette(pts, crossed));
  EXPECT_GT(calinski_harabasz(pts, clean), calinski_harabasz(pts, crossed));
  EXPECT_LT(davies_bouldin(pts, clean), davies_bouldin(pts, crossed));
}

TEST(EvaluateClustering, ReportMirrorsTheIndices) {
  ClusterConfig cfg;
  cfg.k = 2;
  cfg.seed = 1;
  ClusterModel m = kmeans_modified(kTwoPairs, cfg);
  ClusterValidityReport r = evaluate_clustering(kTwoPairs, m);
  EXPECT_DOUBLE_EQ(r.silhouette, silhouette(kTwoPairs, m.assignments));
  EXPECT_DOUBLE_EQ(r.calinski_harabasz, calinski_harabasz(kTwoPairs, m.assignments));
  EXPECT_DOUBLE_EQ(r.davies_bouldin, davies_bouldin(kTwoPairs, m.assignments));
  EXPECT_EQ(r.k, 2u);
  EXPECT_DOUBLE_EQ(r.sse, m.sse);

  cfg.k = 1;
  ClusterModel single = kmeans_modified(kTwoPairs, cfg);
  EXPECT_THROW(evaluate_clustering(kTwoPairs, single), ValidationError);
}

TEST(Knee, PicksTheSharpBendAndBreaksTiesLow) {
  KneeResult a = knee_select_k({1, 2, 3, 4, 5}, {100.0, 70.0, 30.0, 28.0, 27.0});
  EXPECT_EQ(a.chosen_k, 3u);
  EXPECT_FALSE(a.non_monotonic);

  KneeResult b = knee_select_k({1, 2, 3, 4, 5}, {100.0, 40.0, 20.0, 18.0, 17.0});
  EXPECT_EQ(b.chosen_k, 2u);

  // dyadic values keep the chord distances exactly 0 for every interior
  // point, so this exercises the tie-break instead of rounding noise
  KneeResult tie = knee_select_k({1, 2, 3, 4, 5}, {1.0, 0.75, 0.5, 0.25, 0.0});
  EXPECT_EQ(tie.chosen_k, 2u);
}

TEST(Knee, ScaleInvariantOnBothAxes) {
  std::vector<std::size_t> ks{1, 2, 3, 4, 5};
  std::vector<double> curve{100.0, 70.0, 30.0, 28.0, 27.0};
  std::vector<double> scaled;
  for (double v : curve) scaled.push_back(v * 1e6);
  EXPECT_EQ(knee_select_k(ks, scaled).chosen_k, 3u);
  for (double& v : scaled) v *= 1e-12;
  EXPECT_EQ(knee_select_k(ks, scaled).chosen_k, 3u);

  std::vector<std::size_t> wide_ks{10, 20, 30, 40, 50};
  EXPECT_EQ(knee_select_k(wide_ks, curve).chosen_k, 30u);
}

TEST(Knee, FlagsARisingCurveAndValidates) {
  KneeResult r = knee_select_k({1, 2, 3, 4, 5}, {100.0, 40.0, 45.0, 20.0, 18.0});
  EXPECT_TRUE(r.non_monotonic);
  EXPECT_EQ(r.chosen_k, 2u);

  EXPECT_THROW(knee_select_k({1, 2}, {2.0, 1.0}), ValidationError);
  EXPECT_THROW(knee_select_k({1, 2, 2}, {3.0, 2.0, 1.0}), ValidationError);
  EXPECT_THROW(knee_select_k({1, 2, 3}, {3.0, 2.0}), ValidationError);
}
