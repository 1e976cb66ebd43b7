#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <thread>
#include <unordered_set>

#include "revsys/agent.hpp"

using namespace revsys;
using namespace revsys::agent;

namespace {

struct Fixture {
  std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>();
  DataPool pool{PoolOptions{.snapshot_interval = 0, .fsync = false, .clock = clock}};

  std::pair<std::string, Tin> taxpayer(const std::string& name, const std::string& shop = "Mama Put Ventures") {
    TaxpayerRecord t;
    t.full_name = name;
    t.email = name + "@example.ng";
    auto id = pool.put(t, "bir_ada");
    BusinessRecord b;
    b.owner = id;
    b.business_name = shop;
    b.location = "Benin City";
    b.sector = "Food";
    pool.put(b, "bir_ada");
    auto e = pool.commit("admin", EventKind::TinIssued, [&](const PoolState& s) {
      return Payload{{"taxpayer_id", id},
                     {"tin", mint_tin(s.next_tin_counter()).str()},
                     {"password_hash", "pbkdf2-sha256$1$00$00"}};
    });
    return {id, Tin::parse(e.payload.at("tin"))};
  }
};

AgentConfig config() {
  AgentConfig c;
  c.secret = crypto::Bytes(32, 7);
  return c;
}

std::size_t count_kind(const DataPool& pool, EventKind k) {
  std::size_t n = 0;
  for (const auto& e : pool.events()) n += e.kind == k;
  return n;
}

}  // namespace

TEST(IssueCode, RoundTripAndFormat) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  EXPECT_TRUE(std::regex_match(c.code, std::regex("^[0-9A-HJKMNP-TV-Z]{4}(-[0-9A-HJKMNP-TV-Z]{4}){3}$")));
  EXPECT_EQ(c.expires_at - c.issued_at, std::chrono::hours(72));
  EXPECT_EQ(c.status, CodeStatus::Issued);

  auto v = agent.verify_reference_code(c.code, tin, "teller");
  ASSERT_EQ(v.kind, VerificationResult::Kind::Valid);
  EXPECT_EQ(v.owner->assessed, Money(300'000));
  EXPECT_EQ(v.owner->taxpayer_name, "Ada Obi");
  EXPECT_EQ(v.owner->business_name, "Mama Put Ventures");
  EXPECT_EQ(v.owner->tin, tin);
  EXPECT_EQ(count_kind(f.pool, EventKind::CodeIssued), 1u);
  EXPECT_EQ(count_kind(f.pool, EventKind::CodeLookup), 1u);
}

TEST(IssueCode, Preconditions) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  try {
    agent.issue_reference_code(mint_tin(99'999'999), Money(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownTin);
  }
  try {
    agent.issue_reference_code(tin, Money(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonPositiveAmount);
  }
}

TEST(IssueCode, NoCollisionsOverManyIssues) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  std::unordered_set<std::string> seen;
  const std::regex shape("^[0-9A-HJKMNP-TV-Z]{4}(-[0-9A-HJKMNP-TV-Z]{4}){3}$");
  for (int i = 0; i < 100'000; ++i) {
    auto c = agent.issue_reference_code(tin, Money(1000 + i));
    ASSERT_TRUE(seen.insert(c.code).second) << c.code;
    if (i % 997 == 0) ASSERT_TRUE(std::regex_match(c.code, shape));
  }
  EXPECT_EQ(count_kind(f.pool, EventKind::CodeIssued), 100'000u);
}

TEST(VerifyCode, TypedVariantsResolve) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  std::string lower;
  for (char ch : c.code) {
    if (ch != '-') lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  EXPECT_EQ(agent.verify_reference_code(lower, std::nullopt, "teller").kind, VerificationResult::Kind::Valid);
}

TEST(VerifyCode, StolenRevealsOnlyOwnerName) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [a, tin_a] = f.taxpayer("Ada Obi");
  auto [b, tin_b] = f.taxpayer("Bola Ige", "Ige Motors");
  auto c = agent.issue_reference_code(tin_a, Money(300'000));
  auto v = agent.verify_reference_code(c.code, tin_b, "teller");
  EXPECT_EQ(v.kind, VerificationResult::Kind::Stolen);
  EXPECT_EQ(v.owner_name, "Ada Obi");
  EXPECT_FALSE(v.owner.has_value());
}

TEST(VerifyCode, NearMissProbesRevealNothing) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  auto reference = agent.verify_reference_code("ZZZZ-ZZZZ-ZZZZ-ZZZZ", std::nullopt, "teller");
  ASSERT_EQ(reference.kind, VerificationResult::Kind::NotFound);

  std::mt19937_64 rng(42);
  std::vector<std::string> probes;
  for (std::size_t pos = 0; pos < c.code.size(); ++pos) {
    if (c.code[pos] == '-') continue;
    for (char alt : crypto::kCrockfordAlphabet) {
      if (alt == c.code[pos]) continue;
      auto p = c.code;
      p[pos] = alt;
      probes.push_back(p);
    }
  }
  probes.push_back(c.code.substr(0, 18));
  probes.push_back(c.code + "0");
  probes.push_back("");
  probes.push_back("not a code at all");
  for (const auto& p : probes) {
    auto v = agent.verify_reference_code(p, std::nullopt, "teller");
    ASSERT_EQ(v, reference) << p;
    for (auto presenter : {std::optional<Tin>(tin), std::optional<Tin>()}) {
      ASSERT_EQ(agent.verify_reference_code(p, presenter, "teller"), reference) << p;
    }
  }
}

TEST(VerifyCode, ReplayedAndExpired) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  f.pool.redeem_code(c.code, "teller");
  EXPECT_EQ(agent.verify_reference_code(c.code, tin, "teller").kind, VerificationResult::Kind::Replayed);

  auto d = agent.issue_reference_code(tin, Money(300'000));
  f.clock->advance(std::chrono::hours(72));
  EXPECT_EQ(agent.verify_reference_code(d.code, tin, "teller").kind, VerificationResult::Kind::Valid);
  f.clock->advance(std::chrono::milliseconds(1));
  EXPECT_EQ(agent.verify_reference_code(d.code, tin, "teller").kind, VerificationResult::Kind::Expired);
  EXPECT_EQ(f.pool.code(d.code)->status, CodeStatus::Expired);
  EXPECT_EQ(agent.verify_reference_code(d.code, tin, "teller").kind, VerificationResult::Kind::Expired);
}

TEST(VerifyCode, StolenTakesPrecedenceOverReplay) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [a, tin_a] = f.taxpayer("Ada Obi");
  auto [b, tin_b] = f.taxpayer("Bola Ige");
  auto c = agent.issue_reference_code(tin_a, Money(300'000));
  f.pool.redeem_code(c.code, "teller");
  EXPECT_EQ(agent.verify_reference_code(c.code, tin_b, "teller").kind, VerificationResult::Kind::Stolen);
}

TEST(Assess, ExactPaymentIsClear) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  auto a = agent.assess_transaction(c.code, tin, Money(300'000), "teller");
  EXPECT_TRUE(a.rule_hits.empty());
  EXPECT_EQ(a.verdict, Verdict::Clear);
  EXPECT_EQ(a.display_message, "Transaction ... successful!");
  EXPECT_DOUBLE_EQ(a.ann_score, 0.5);
  EXPECT_EQ(count_kind(f.pool, EventKind::FraudAlert), 0u);
  EXPECT_EQ(a.features[0], 0.0);
}

TEST(Assess, FabricatedCodeAlerts) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto a = agent.assess_transaction("ABCD-EFGH-JKMN-PQRS", tin, Money(300'000), "teller");
  EXPECT_EQ(a.rule_hits, std::set<RuleHit>{RuleHit::CodeNotFound});
  EXPECT_EQ(a.verdict, Verdict::FraudAlert);
  EXPECT_EQ(a.display_message, "Fraud Attempt Alert!!!");
  EXPECT_EQ(count_kind(f.pool, EventKind::FraudAlert), 1u);
  auto txns = f.pool.read([](const PoolState& s) { return s.transactions; });
  ASSERT_EQ(txns.size(), 1u);
  EXPECT_EQ(txns.begin()->second.outcome, TxnOutcome::Rejected);
}

TEST(Assess, UnderAndOverPaymentAreMismatches) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money::from_naira(3000));
  for (auto cash : {Money::from_naira(2000), Money::from_naira(4000)}) {
    auto a = agent.assess_transaction(c.code, tin, cash, "teller");
    EXPECT_EQ(a.rule_hits, std::set<RuleHit>{RuleHit::AmountMismatch});
    EXPECT_EQ(a.verdict, Verdict::FraudAlert);
  }
  EXPECT_EQ(f.pool.code(c.code)->status, CodeStatus::Issued);
}

TEST(Assess, StolenCodeIsVoided) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [a, tin_a] = f.taxpayer("Ada Obi");
  auto [b, tin_b] = f.taxpayer("Bola Ige");
  auto c = agent.issue_reference_code(tin_a, Money(300'000));
  auto r = agent.assess_transaction(c.code, tin_b, Money(300'000), "teller");
  EXPECT_TRUE(r.rule_hits.count(RuleHit::StolenCode));
  EXPECT_EQ(r.features[5], 1.0);
  EXPECT_EQ(f.pool.code(c.code)->status, CodeStatus::Voided);
  auto again = agent.assess_transaction(c.code, tin_a, Money(300'000), "teller");
  EXPECT_TRUE(again.rule_hits.count(RuleHit::Replay));
}

TEST(Assess, ReplayAfterRedemption) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  f.pool.redeem_code(c.code, "teller");
  auto a = agent.assess_transaction(c.code, tin, Money(300'000), "teller");
  EXPECT_EQ(a.rule_hits, std::set<RuleHit>{RuleHit::Replay});
}

TEST(Assess, AlterationAttemptFlagsLaterPayment) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  auto biz = f.pool.read([&](const PoolState& s) { return s.businesses_of(id).front()->business_id; });
  auto g = agent.guard_amount_write(Role::Taxpayer, tin.str(), biz, "assessed_amount", Money(1));
  EXPECT_EQ(g.decision, WriteDecision::Blocked);
  auto a = agent.assess_transaction(c.code, tin, Money(300'000), "teller");
  EXPECT_EQ(a.rule_hits, std::set<RuleHit>{RuleHit::AlterationAttempt});
}

TEST(Assess, AlterationBeforeIssueIsNotHeldAgainstTheCode) {
  Fixture f;  // manual clock: the attempt and the issue share a millisecond
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto biz = f.pool.read([&](const PoolState& s) { return s.businesses_of(id).front()->business_id; });
  agent.guard_amount_write(Role::Taxpayer, tin.str(), biz, "assessed_amount", Money(1));
  auto c = agent.issue_reference_code(tin, Money(300'000));
  EXPECT_EQ(c.issued_at, f.pool.events().back().at);
  auto a = agent.assess_transaction(c.code, tin, Money(300'000), "teller");
  EXPECT_TRUE(a.rule_hits.empty());
}

TEST(Assess, RuleHitsAlertWhateverTheScore) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> bias(0.0, 6.0);
  for (int i = 0; i < 50; ++i) {
    auto m = ann::AnnModel::zeros();
    m.biases.back()[0] = bias(rng);
    agent.replace_model(m);
    auto c = agent.issue_reference_code(tin, Money(300'000));
    auto a = agent.assess_transaction(c.code, tin, Money(299'999), "teller");
    ASSERT_FALSE(a.rule_hits.empty());
    ASSERT_EQ(a.verdict, Verdict::FraudAlert) << a.ann_score;
    auto clean = agent.assess_transaction(c.code, tin, Money(300'000), "teller");
    ASSERT_EQ(clean.verdict == Verdict::FraudAlert, clean.ann_score >= 0.8) << clean.ann_score;
    f.pool.redeem_code(c.code, "teller");
  }
}

TEST(Assess, HighScoreAloneAlertsButKeepsCodeIssued) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto m = ann::AnnModel::zeros();
  m.biases.back()[0] = 5.0;
  agent.replace_model(m);
  auto c = agent.issue_reference_code(tin, Money(300'000));
  auto a = agent.assess_transaction(c.code, tin, Money(300'000), "teller");
  EXPECT_TRUE(a.rule_hits.empty());
  EXPECT_EQ(a.verdict, Verdict::FraudAlert);
  EXPECT_EQ(f.pool.code(c.code)->status, CodeStatus::Issued);
}

TEST(Assess, ModelUnloaded) {
  Fixture f;
  Birgent agent(f.pool, config(), std::nullopt);
  auto [id, tin] = f.taxpayer("Ada Obi");
  try {
    agent.assess_transaction("ABCD-EFGH-JKMN-PQRS", tin, Money(1), "teller");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ModelUnloaded);
  }
}

TEST(Assess, ModelSwapIsAtomic) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto a = ann::AnnModel::zeros();
  a.version = 1;
  auto b = ann::AnnModel::random(3);
  b.version = 2;
  agent.replace_model(a);
  std::atomic<bool> stop{false};
  std::thread swapper([&] {
    for (int i = 0; i < 2000; ++i) agent.replace_model(i % 2 ? a : b);
    stop = true;
  });
  while (!stop) {
    auto m = agent.model();
    ASSERT_TRUE(*m == a || *m == b);
  }
  swapper.join();
}

TEST(Guard, OnlyBirStaffMayWriteAmount) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto biz = f.pool.read([&](const PoolState& s) { return s.businesses_of(id).front()->business_id; });
  for (auto role : {Role::Taxpayer, Role::BankStaff, Role::Admin}) {
    auto g = agent.guard_amount_write(role, "someone", biz, "assessed_amount", Money(5));
    EXPECT_EQ(g.decision, WriteDecision::Blocked);
    EXPECT_EQ(g.message, "Amount cannot be altered by taxpayers.");
  }
  EXPECT_EQ(count_kind(f.pool, EventKind::AlterationBlocked), 3u);
  EXPECT_FALSE(f.pool.business(biz)->assessed_tax.has_value());

  auto ok = agent.guard_amount_write(Role::BirStaff, "bir_ada", biz, "assessed_amount", Money(777));
  EXPECT_EQ(ok.decision, WriteDecision::Allowed);
  EXPECT_EQ(f.pool.business(biz)->assessed_tax, Money(777));
  EXPECT_EQ(f.pool.events().back().kind, EventKind::TierAssigned);
  EXPECT_EQ(f.pool.events().back().actor, "bir_ada");
}

TEST(Featurize, Components) {
  TransactionContext ctx;
  ReferenceCode c;
  c.owner = mint_tin(1);
  c.assessed_amount = Money(1000);
  c.issued_at = from_millis(0);
  ctx.code = c;
  ctx.now = from_millis(0) + std::chrono::hours(360);
  ctx.cash = Money(1000);
  ctx.presenter = mint_tin(1);
  ctx.prior_lookups = 2;
  ctx.owner_tier = Tier::T5;
  ctx.presenter_logins = 4;
  ctx.presenter_login_failures = 1;
  auto x = featurize(ctx);
  EXPECT_EQ(x, (ann::FeatureVector{0.0, 0.5, 0.5, 1.0, 0.25, 0.0}));
  EXPECT_EQ(featurize(ctx), x);

  ctx.cash = Money(0);
  ctx.now = from_millis(0) + std::chrono::hours(10'000);
  ctx.prior_lookups = 40;
  ctx.presenter = mint_tin(2);
  x = featurize(ctx);
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], 1.0);
  EXPECT_EQ(x[2], 1.0);
  EXPECT_EQ(x[5], 1.0);

  ctx.cash = Money(5000);
  EXPECT_EQ(featurize(ctx)[0], 1.0);

  ctx.cash.reset();
  try {
    featurize(ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingContext);
  }
}

TEST(Featurize, CountsPriorTouchesFromTheTap) {
  Fixture f;
  Birgent agent(f.pool, config());
  auto [id, tin] = f.taxpayer("Ada Obi");
  auto c = agent.issue_reference_code(tin, Money(300'000));
  EXPECT_EQ(agent.build_context(c.code, tin, Money(1)).prior_lookups, 0u);
  agent.verify_reference_code(c.code, tin, "teller");
  agent.verify_reference_code(c.code, tin, "teller");
  EXPECT_EQ(agent.build_context(c.code, tin, Money(1)).prior_lookups, 2u);
  f.pool.append_event(tin.str(), EventKind::LoginFail, {{"principal", tin.str()}});
  f.pool.append_event(tin.str(), EventKind::LoginOk, {{"principal", tin.str()}});
  auto ctx = agent.build_context(c.code, tin, Money(1));
  EXPECT_EQ(ctx.presenter_logins, 2u);
  EXPECT_EQ(ctx.presenter_login_failures, 1u);
}

TEST(Featurize, AgentStartedLateSeesHistory) {
  Fixture f;
  auto [id, tin] = f.taxpayer("Ada Obi");
  std::string code;
  {
    Birgent first(f.pool, config());
    code = first.issue_reference_code(tin, Money(300'000)).code;
    first.verify_reference_code(code, tin, "teller");
  }
  Birgent second(f.pool, config());
  EXPECT_EQ(second.build_context(code, tin, Money(1)).prior_lookups, 1u);
}
