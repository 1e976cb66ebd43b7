#include <gtest/gtest.h>

#include <random>

#include "revsys/ann.hpp"
#include "revsys/metrics.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace revsys;
using namespace revsys::ann;

namespace {

AnnModel random_model(std::mt19937_64& rng, double scale = 1.0) {
  AnnModel m = AnnModel::zeros();
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& layer : m.weights)
    for (auto& w : layer) w = dist(rng);
  for (auto& layer : m.biases)
    for (auto& b : layer) b = dist(rng);
  return m;
}

FeatureVector random_features(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureVector x;
  for (auto& f : x) f = u(rng);
  return x;
}

double accuracy(const AnnModel& m, const std::vector<LabeledExample>& data) {
  std::size_t hits = 0;
  for (const auto& ex : data) hits += (ann_forward(m, ex.features) >= 0.5) == (ex.label == 1);
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

TEST(AnnForward, ZeroModelScoresOneHalf) {
  auto m = AnnModel::zeros();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ann_forward(m, random_features(rng)), 0.5);
}

TEST(AnnForward, OutputStaysInOpenUnitInterval) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10'000; ++i) {
    auto m = random_model(rng, 3.0);
    double s = ann_forward(m, random_features(rng));
    ASSERT_GT(s, 0.0);
    ASSERT_LT(s, 1.0);
  }
}

TEST(AnnForward, MatchesReferenceForwardPass) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto m = random_model(rng);
    auto x = random_features(rng);
    double z = revsys::testing::reference_logit(m.layers, m.weights, m.biases, {x.begin(), x.end()});
    EXPECT_NEAR(ann_forward(m, x), 1.0 / (1.0 + std::exp(-z)), 1e-15);
  }
}

TEST(AnnForward, DimensionMismatch) {
  auto m = AnnModel::zeros();
  std::vector<double> x(5, 0.0);
  try {
    ann_forward(m, std::span<const double>(x));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
  m.weights[0].pop_back();
  EXPECT_THROW(m.check(), Error);
}

TEST(AnnGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_model(rng);
    std::vector<LabeledExample> batch;
    for (int i = 0; i < 16; ++i) batch.push_back({random_features(rng), static_cast<int>(rng() % 2)});
    EXPECT_LE(revsys::testing::max_gradient_relative_error(m, batch), 1e-4) << "trial " << trial;
  }
}

TEST(AnnGradient, DeeperNetworksToo) {
  std::mt19937_64 rng(5);
  auto m = AnnModel::random(6, {6, 5, 4, 1});
  for (auto& l : m.biases)
    for (auto& b : l) b = std::normal_distribution<double>(0, 1)(rng);
  std::vector<LabeledExample> batch;
  for (int i = 0; i < 8; ++i) batch.push_back({random_features(rng), i % 2});
  EXPECT_LE(revsys::testing::max_gradient_relative_error(m, batch), 1e-4);
}

TEST(AnnTrain, SeparableClustersReachHighAccuracy) {
  auto data = revsys::testing::two_clusters(400, 10);
  auto m = ann_train(data, {.epochs = 500, .learning_rate = 0.1, .seed = 1});
  EXPECT_GE(accuracy(m, data), 0.95);
}

TEST(AnnTrain, LossNonIncreasingAtSmallStep) {
  auto data = revsys::testing::two_clusters(400, 10);
  std::vector<double> curve;
  ann_train(data, {.epochs = 500, .learning_rate = 0.1, .seed = 1}, &curve);
  ASSERT_EQ(curve.size(), 501u);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i], curve[i - 1] + 1e-12) << "epoch " << i;
  EXPECT_LT(curve.back(), curve.front());
}

TEST(AnnTrain, DeterministicGivenSeed) {
  auto data = revsys::testing::two_clusters(100, 12);
  TrainOptions opt{.epochs = 50, .learning_rate = 0.3, .seed = 99, .base_version = 4};
  auto a = ann_train(data, opt);
  auto b = ann_train(data, opt);
  EXPECT_EQ(a, b);
  EXPECT_EQ(to_text(a), to_text(b));
  EXPECT_EQ(a.version, 5);
  opt.seed = 100;
  EXPECT_NE(ann_train(data, opt), a);
}

TEST(AnnTrain, DegenerateData) {
  std::vector<LabeledExample> none;
  std::vector<LabeledExample> one_class(10, LabeledExample{{}, 1});
  for (const auto& d : {none, one_class}) {
    try {
      ann_train(d, {});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::DegenerateData);
    }
  }
}

TEST(AnnTrain, DivergenceIsReported) {
  auto data = revsys::testing::two_clusters(50, 1);
  try {
    ann_train(data, {.epochs = 20, .learning_rate = std::numeric_limits<double>::infinity(), .seed = 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteLoss);
  }
}

TEST(ModelFile, TextRoundTripIsExact) {
  std::mt19937_64 rng(6);
  auto m = random_model(rng);
  m.version = 7;
  EXPECT_EQ(model_from_text(to_text(m)), m);
  revsys::testing::TempDir dir;
  save_model(m, dir.path() / "model.txt");
  EXPECT_EQ(load_model(dir.path() / "model.txt"), m);
}

TEST(ModelFile, RejectsGarbage) {
  EXPECT_THROW(model_from_text("nonsense"), Error);
  auto text = to_text(AnnModel::zeros());
  EXPECT_THROW(model_from_text(text.substr(0, text.size() / 2)), Error);
}

TEST(Metrics, ConstantScorerHasChanceAuc) {
  std::vector<double> scores(100, 0.5);
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[i] = i % 3 == 0;
  auto m = evaluate_scores(scores, labels, 0.8);
  EXPECT_DOUBLE_EQ(m.auc, 0.5);
  EXPECT_EQ(m.recall, 0.0);
}

TEST(Metrics, AucMatchesPairCounting) {
  std::mt19937_64 rng(8);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) {
    labels.push_back(static_cast<int>(rng() % 2));
    scores.push_back(static_cast<double>(rng() % 20) / 20.0 + 0.1 * labels.back());
  }
  double pairs = 0;
  double wins = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (labels[i] == 1 && labels[j] == 0) {
        pairs += 1;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
  EXPECT_NEAR(roc_auc(scores, labels), wins / pairs, 1e-12);
}

TEST(Metrics, PrecisionRecall) {
  std::vector<double> scores{0.9, 0.85, 0.2, 0.95, 0.1};
  std::vector<int> labels{1, 0, 1, 1, 0};
  auto m = evaluate_scores(scores, labels, 0.8);
  EXPECT_EQ(m.true_positives, 2u);
  EXPECT_EQ(m.false_positives, 1u);
  EXPECT_EQ(m.false_negatives, 1u);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
}

TEST(ExamplesFile, RoundTrip) {
  revsys::testing::TempDir dir;
  auto data = revsys::testing::two_clusters(20, 3);
  {
    std::ofstream out(dir.path() / "ex.csv");
    out << examples_header() << '\n';
    for (const auto& ex : data) out << to_csv_line(ex) << '\n';
  }
  auto loaded = load_examples(dir.path() / "ex.csv");
  ASSERT_EQ(loaded.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(loaded[i].features, data[i].features);
    EXPECT_EQ(loaded[i].label, data[i].label);
  }
}
