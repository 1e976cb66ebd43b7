#include <gtest/gtest.h>

#include "revsys/messages.hpp"
#include "revsys/simulate.hpp"
#include "support/temp_dir.hpp"

using namespace revsys;
using sim::Behavior;
using sim::SimulationSpec;

namespace {

SimulationSpec small(int n, sim::FraudMix mix, std::uint64_t seed = 7) {
  SimulationSpec s;
  s.n_taxpayers = n;
  s.mix = mix;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Simulate, MixValidation) {
  EXPECT_THROW(sim::FraudMix({0.5, 0.1, 0.1, 0.1, 0.1}).validate(), Error);
  EXPECT_THROW(sim::FraudMix({1.2, -0.2, 0, 0, 0}).validate(), Error);
  auto m = sim::FraudMix::parse("honest=0.7,replay=0.3");
  EXPECT_DOUBLE_EQ(m.honest, 0.7);
  EXPECT_DOUBLE_EQ(m.replay, 0.3);
  EXPECT_DOUBLE_EQ(m.stolen_code, 0.0);
  EXPECT_THROW(sim::FraudMix::parse("honest=0.7"), Error);
  EXPECT_THROW(sim::FraudMix::parse("honest=1,bribery=0"), Error);
  EXPECT_THROW(sim::FraudMix::parse("honest=1x"), Error);
  auto spec = small(0, {});
  EXPECT_THROW(spec.validate(), Error);
}

TEST(Simulate, HonestOnlyMixRaisesNoAlerts) {
  auto r = sim::run_embedded(small(40, {1, 0, 0, 0, 0}));
  ASSERT_EQ(r.transactions.size(), 40u);
  EXPECT_EQ(r.summary.alerts, 0u);
  for (const auto& t : r.transactions) {
    EXPECT_EQ(t.http_status, 200);
    EXPECT_EQ(t.message, messages::kTransactionSuccessful);
    EXPECT_EQ(t.cash_kobo, t.assessed_kobo);
    EXPECT_TRUE(t.rule_hits.empty());
  }
}

TEST(Simulate, FabricatedOnlyMixIsAlwaysRejected) {
  auto r = sim::run_embedded(small(30, {0, 0, 0, 0, 1}));
  ASSERT_EQ(r.transactions.size(), 30u);
  for (const auto& t : r.transactions) {
    EXPECT_EQ(t.http_status, 409);
    EXPECT_EQ(t.message, messages::kFraudAlert);
    EXPECT_EQ(t.verdict, "FraudAlert");
    EXPECT_EQ(t.label, 1);
  }
}

TEST(Simulate, FixedSeedReproducesGroundTruth) {
  auto spec = small(60, {0.6, 0.1, 0.1, 0.1, 0.1}, 11);
  spec.months = 2;
  auto a = sim::ground_truth_csv(sim::run_embedded(spec).transactions);
  auto b = sim::ground_truth_csv(sim::run_embedded(spec).transactions);
  EXPECT_EQ(a, b);
  spec.seed = 12;
  EXPECT_NE(a, sim::ground_truth_csv(sim::run_embedded(spec).transactions));
}

TEST(Simulate, PlantedFraudIsRuleFlaggedAndHonestIsNot) {
  auto spec = small(200, {0.6, 0.1, 0.1, 0.1, 0.1}, 5);
  spec.months = 2;
  auto r = sim::run_embedded(spec);
  std::map<Behavior, int> planted;
  for (const auto& t : r.transactions) {
    // labels come only from planted behaviour
    if (t.label) {
      EXPECT_NE(t.behavior, Behavior::Honest);
      EXPECT_FALSE(t.behavior == Behavior::Replay && t.attempt == 0);
      ++planted[t.behavior];
      EXPECT_EQ(t.verdict, "FraudAlert");
      EXPECT_EQ(t.rule_hits.count(std::string(sim::expected_rule(t.behavior))), 1u)
          << sim::to_string(t.behavior) << " taxpayer " << t.taxpayer;
    } else {
      EXPECT_EQ(t.cash_kobo, t.assessed_kobo);
      EXPECT_TRUE(t.rule_hits.empty()) << "honest taxpayer " << t.taxpayer;
      EXPECT_EQ(t.http_status, 200);
    }
  }
  for (auto b : {Behavior::Suppression, Behavior::StolenCode, Behavior::Replay, Behavior::FabricatedCode}) {
    EXPECT_EQ(planted[b], 40) << sim::to_string(b);
  }
  EXPECT_DOUBLE_EQ(r.summary.rule_recall(), 1.0);
  EXPECT_EQ(r.summary.honest_rule_flagged, 0u);
}

TEST(Simulate, SuppressionFeatureTracksTheShortfall) {
  auto r = sim::run_embedded(small(50, {0, 1, 0, 0, 0}));
  for (const auto& t : r.transactions) {
    double shortfall = 1.0 - static_cast<double>(t.cash_kobo) / static_cast<double>(t.assessed_kobo);
    EXPECT_GE(shortfall, 0.2 - 1e-6);
    EXPECT_LE(shortfall, 0.9 + 1e-6);
    EXPECT_NEAR(t.features[0], shortfall, 1e-9);
  }
}

TEST(Simulate, DrivesAnExternalServiceThroughTheSpool) {
  revsys::testing::TempDir dir;
  AppOptions o;
  o.pool_path = dir.path() / "pool";
  o.pool.snapshot_interval = 0;
  o.agent.secret = crypto::Bytes(32, 9);
  o.service.pbkdf2_iterations = 10;
  o.notifier = std::make_shared<workflow::FileSpoolNotifier>(dir.path() / "spool");
  o.admin_password = "root-pass";
  App app(o);
  app.start();

  sim::DriverOptions d;
  d.base_url = app.url();
  d.admin_password = "root-pass";
  d.password_for = sim::spool_password_source(dir.path() / "spool" / "outbox.ndjson");
  auto r = sim::run_simulation(small(12, {0.5, 0.25, 0, 0.25, 0}), d);
  EXPECT_EQ(r.transactions.size(), 15u);  // replays pay twice
  EXPECT_EQ(r.summary.fraudulent, 6u);
  EXPECT_EQ(r.summary.fraud_rule_flagged, 6u);
}

TEST(Simulate, TrainedAlarmIsMonotoneInAmountDeviation) {
  auto data = sim::run_embedded(SimulationSpec::standard()).examples();
  ann::TrainOptions opt;
  auto model = ann::ann_train(data, opt);

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0, 1);
  int held = 0;
  const int probes = 2000;
  for (int i = 0; i < probes; ++i) {
    auto x = data[rng() % data.size()].features;
    double a = unit(rng), b = unit(rng);
    if (a > b) std::swap(a, b);
    auto lo = x, hi = x;
    lo[0] = a;
    hi[0] = b;
    held += ann::ann_forward(model, hi) >= ann::ann_forward(model, lo);
  }
  EXPECT_GE(held, probes * 95 / 100) << held << " of " << probes;
}
