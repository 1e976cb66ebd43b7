#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>
#include <type_traits>

#include "revsys/data_pool.hpp"
#include "support/temp_dir.hpp"
#include "support/workload.hpp"

using namespace revsys;
using revsys::testing::TempDir;

namespace {

std::string add_taxpayer(DataPool& pool, const std::string& name = "Ada Obi") {
  TaxpayerRecord t;
  t.full_name = name;
  t.email = "ada@example.ng";
  return pool.put(t, "bir_ada");
}

Tin issue_tin(DataPool& pool, const std::string& taxpayer_id) {
  auto e = pool.commit("admin", EventKind::TinIssued, [&](const PoolState& s) {
    return Payload{{"taxpayer_id", taxpayer_id},
                   {"tin", mint_tin(s.next_tin_counter()).str()},
                   {"password_hash", "pbkdf2-sha256$1$00$00"}};
  });
  return Tin::parse(e.payload.at("tin"));
}

ReferenceCode add_code(DataPool& pool, const Tin& owner, std::string code, Money amount = Money(300'000)) {
  ReferenceCode c;
  c.code = std::move(code);
  c.owner = owner;
  c.assessed_amount = amount;
  c.issued_at = pool.now();
  c.expires_at = c.issued_at + std::chrono::hours(72);
  pool.put(c);
  return c;
}

std::string code_for(int i) {
  auto s = std::to_string(i);
  s.insert(0, 16 - s.size(), '0');
  return *normalize_code(s);
}

template <class F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::IoError;
}

}  // namespace

TEST(AppendEvent, FirstAppendIsSeqOne) {
  DataPool pool;
  EXPECT_EQ(pool.append_event("SYSTEM", EventKind::LoginOk, {{"principal", "x"}}), 1u);
  EXPECT_EQ(pool.append_event("SYSTEM", EventKind::LoginOk, {{"principal", "x"}}), 2u);
}

TEST(AppendEvent, InterleavedWritersGetGapFreeSeqs) {
  DataPool pool;
  constexpr int kThreads = 4;
  constexpr int kEach = 500;
  std::vector<std::thread> writers;
  for (int t = 0; t < kThreads; ++t) {
    writers.emplace_back([&, t] {
      for (int i = 0; i < kEach; ++i) {
        pool.append_event("w" + std::to_string(t), EventKind::LoginOk, {{"principal", "p"}});
      }
    });
  }
  for (auto& w : writers) w.join();
  auto events = pool.events();
  ASSERT_EQ(events.size(), static_cast<std::size_t>(kThreads * kEach));
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, i + 1);
}

TEST(AppendEvent, ClosedPoolRejects) {
  DataPool pool;
  pool.close();
  EXPECT_EQ(error_of([&] { pool.append_event("x", EventKind::LoginOk, {}); }), Errc::PoolClosed);
  EXPECT_EQ(error_of([&] { pool.subscribe_tap(); }), Errc::PoolClosed);
}

TEST(AppendEvent, LogIsAppendOnlyByApiShape) {
  // The only access to the log is a copy; there is no mutable accessor.
  static_assert(std::is_same_v<decltype(std::declval<const DataPool&>().events()), std::vector<AuditEvent>>);
  DataPool pool;
  pool.append_event("x", EventKind::LoginOk, {{"principal", "a"}});
  auto copy = pool.events();
  copy[0].actor = "tampered";
  EXPECT_EQ(pool.events()[0].actor, "x");
}

TEST(PutRecord, TaxpayerRoundTrip) {
  DataPool pool;
  TaxpayerRecord t;
  t.full_name = "Ada Obi";
  t.email = "ada@example.ng";
  t.tin = mint_tin(5);
  t.password_hash = "pbkdf2-sha256$1$00$00";
  auto id = pool.put(t);
  t.taxpayer_id = id;
  EXPECT_EQ(pool.taxpayer_by_tin(t.tin.str()), t);
  EXPECT_EQ(pool.taxpayer(id), t);
  EXPECT_EQ(pool.events().back().kind, EventKind::TaxpayerCaptured);
}

TEST(PutRecord, BusinessRoundTripIncludesFinancials) {
  DataPool pool;
  auto owner = add_taxpayer(pool);
  BusinessRecord b;
  b.owner = owner;
  b.business_name = "Mama Peace Stores";
  b.location = "Ring Road";
  b.sector = "Retail";
  b.financials.push_back({Period{2024, 1}, Money(50'000'000), Money(35'000'000), pool.now()});
  auto id = pool.put(b);
  b.business_id = id;
  EXPECT_EQ(pool.business(id), b);
}

TEST(PutRecord, UnknownOwnerIsIntegrityViolation) {
  DataPool pool;
  BusinessRecord b;
  b.owner = "TP999999";
  b.business_name = "Ghost Ventures";
  EXPECT_EQ(error_of([&] { pool.put(b); }), Errc::IntegrityViolation);
  EXPECT_TRUE(pool.events().empty());
}

TEST(PutRecord, DuplicateTinRejected) {
  DataPool pool;
  TaxpayerRecord t;
  t.full_name = "A";
  t.phone = "0800";
  t.tin = mint_tin(9);
  pool.put(t);
  t.full_name = "B";
  EXPECT_EQ(error_of([&] { pool.put(t); }), Errc::DuplicateTin);
}

TEST(PutRecord, CodeWithUnknownOwnerRejected) {
  DataPool pool;
  EXPECT_EQ(error_of([&] { add_code(pool, mint_tin(3), code_for(1)); }), Errc::IntegrityViolation);
}

TEST(RedeemCode, SingleUse) {
  DataPool pool;
  auto tin = issue_tin(pool, add_taxpayer(pool));
  auto c = add_code(pool, tin, code_for(1));
  EXPECT_EQ(pool.redeem_code(c.code).status, CodeStatus::Redeemed);
  EXPECT_EQ(error_of([&] { pool.redeem_code(c.code); }), Errc::AlreadyRedeemed);
  EXPECT_EQ(error_of([&] { pool.redeem_code(code_for(2)); }), Errc::NotFound);
}

TEST(RedeemCode, ExpiredCodeCannotBeRedeemed) {
  auto clock = std::make_shared<ManualClock>();
  DataPool pool(PoolOptions{.clock = clock});
  auto tin = issue_tin(pool, add_taxpayer(pool));
  auto c = add_code(pool, tin, code_for(1));
  clock->advance(std::chrono::hours(73));
  EXPECT_EQ(error_of([&] { pool.redeem_code(c.code); }), Errc::ExpiredOrVoided);
}

TEST(RedeemCode, HundredConcurrentAttemptsOneWinner) {
  DataPool pool;
  auto tin = issue_tin(pool, add_taxpayer(pool));
  auto c = add_code(pool, tin, code_for(1));
  std::atomic<int> ok{0};
  std::atomic<int> already{0};
  std::atomic<bool> go{false};
  std::vector<std::thread> threads;
  for (int i = 0; i < 100; ++i) {
    threads.emplace_back([&] {
      while (!go.load()) std::this_thread::yield();
      try {
        pool.redeem_code(c.code);
        ++ok;
      } catch (const Error& e) {
        if (e.code() == Errc::AlreadyRedeemed) ++already;
      }
    });
  }
  go = true;
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 1);
  EXPECT_EQ(already.load(), 99);
}

TEST(RedeemCode, SettlementRecordsTransactionAndReceipt) {
  DataPool pool;
  auto tin = issue_tin(pool, add_taxpayer(pool));
  auto c = add_code(pool, tin, code_for(1));
  auto s = pool.settle_payment(c.code, tin, c.assessed_amount, "bank_bola", "Mama Peace Stores");
  EXPECT_EQ(s.code.status, CodeStatus::Redeemed);
  EXPECT_EQ(s.transaction.amount_paid, c.assessed_amount);
  EXPECT_EQ(s.transaction.outcome, TxnOutcome::Success);
  EXPECT_EQ(s.receipt.reference_code, c.code);
  EXPECT_EQ(s.receipt.business_name, "Mama Peace Stores");
  EXPECT_EQ(pool.receipt_for_code(c.code), s.receipt);
}

TEST(RedeemCode, SettlementRefusesWrongAmount) {
  DataPool pool;
  auto tin = issue_tin(pool, add_taxpayer(pool));
  auto c = add_code(pool, tin, code_for(1));
  EXPECT_EQ(error_of([&] { pool.settle_payment(c.code, tin, Money(1), "bank", "X"); }),
            Errc::IntegrityViolation);
  EXPECT_EQ(pool.code(c.code)->status, CodeStatus::Issued);
}

TEST(Tap, ReceivesEventsAfterSubscriptionInOrder) {
  DataPool pool;
  pool.append_event("x", EventKind::LoginOk, {{"principal", "a"}});
  auto tap = pool.subscribe_tap();
  const auto n = tap.start_seq();
  for (int i = 0; i < 3; ++i) pool.append_event("x", EventKind::LoginOk, {{"principal", "a"}});
  for (std::uint64_t i = 1; i <= 3; ++i) {
    auto e = tap.try_next();
    ASSERT_TRUE(e);
    EXPECT_EQ(e->seq, n + i);
  }
  EXPECT_FALSE(tap.try_next());
}

TEST(Tap, BroadcastIdenticalSequences) {
  DataPool pool;
  auto a = pool.subscribe_tap();
  auto b = pool.subscribe_tap();
  for (int i = 0; i < 10; ++i) pool.append_event("x", EventKind::LoginFail, {{"principal", std::to_string(i)}});
  for (int i = 0; i < 10; ++i) {
    auto ea = a.try_next();
    auto eb = b.try_next();
    ASSERT_TRUE(ea && eb);
    EXPECT_EQ(*ea, *eb);
  }
}

TEST(Tap, SlowSubscriberLosesNothing) {
  DataPool pool;
  auto tap = pool.subscribe_tap();
  constexpr std::uint64_t kEvents = 10'000;
  std::uint64_t received = 0;
  std::uint64_t checksum = 0;
  std::uint64_t last = 0;
  bool ordered = true;
  std::thread consumer([&] {
    while (received < kEvents) {
      auto e = tap.next(std::chrono::seconds(10));
      if (!e) break;
      if (e->seq != last + 1) ordered = false;
      last = e->seq;
      checksum += e->seq;
      ++received;
      if (received % 1000 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });
  for (std::uint64_t i = 0; i < kEvents; ++i) pool.append_event("x", EventKind::LoginOk, {{"principal", "p"}});
  consumer.join();
  EXPECT_EQ(received, kEvents);
  EXPECT_TRUE(ordered);
  EXPECT_EQ(checksum, kEvents * (kEvents + 1) / 2);
}

TEST(Tap, CloseWakesSubscriber) {
  DataPool pool;
  auto tap = pool.subscribe_tap();
  std::thread closer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    pool.close();
  });
  EXPECT_FALSE(tap.next(std::chrono::seconds(5)));
  closer.join();
}

TEST(Replay, ReconstructsLiveStateAfterRandomOperations) {
  DataPool pool;
  int committed = revsys::testing::run_random_workload(pool, 1000, 42);
  EXPECT_GT(committed, 500);
  auto replayed = DataPool::replay(pool.events());
  EXPECT_EQ(state_digest(replayed), pool.digest());
  EXPECT_EQ(to_json(replayed), to_json(pool.snapshot()));
}

TEST(Replay, GapIsDetected) {
  DataPool pool;
  for (int i = 0; i < 3; ++i) pool.append_event("x", EventKind::LoginOk, {});
  auto events = pool.events();
  events.erase(events.begin() + 1);
  EXPECT_EQ(error_of([&] { DataPool::replay(events); }), Errc::IntegrityViolation);
}

TEST(LogFormat, FixedFieldOrder) {
  AuditEvent e{7, from_millis(1000), "bir_ada", EventKind::CodeLookup, {{"code", "X"}, {"result", "NotFound"}}};
  EXPECT_EQ(to_log_line(e),
            R"({"seq":7,"at":1000,"actor":"bir_ada","kind":"CodeLookup","payload":{"code":"X","result":"NotFound"}})");
  EXPECT_EQ(parse_log_line(to_log_line(e)), e);
}

TEST(Persistence, ReopenRestoresState) {
  TempDir dir;
  std::string digest;
  {
    DataPool pool(dir.path());
    revsys::testing::run_random_workload(pool, 300, 5);
    digest = pool.digest();
  }
  DataPool reopened(dir.path());
  EXPECT_EQ(reopened.digest(), digest);
}

TEST(Persistence, SnapshotPlusTailMatchesFullReplay) {
  TempDir dir;
  std::string digest;
  {
    DataPool pool(dir.path(), PoolOptions{.snapshot_interval = 64});
    revsys::testing::run_random_workload(pool, 500, 9);
    digest = pool.digest();
    EXPECT_TRUE(std::filesystem::exists(pool.snapshot_path()));
  }
  DataPool reopened(dir.path());
  EXPECT_EQ(reopened.digest(), digest);
  EXPECT_EQ(state_digest(DataPool::replay(reopened.events())), digest);
}

TEST(Persistence, TornTrailingLineIsDiscarded) {
  TempDir dir;
  std::string digest;
  {
    DataPool pool(dir.path());
    revsys::testing::run_random_workload(pool, 100, 3);
    digest = pool.digest();
  }
  {
    std::ofstream out(dir.path() / "events.log", std::ios::app);
    out << R"({"seq":99999,"at":1,"actor":"x","ki)";
  }
  DataPool reopened(dir.path());
  EXPECT_EQ(reopened.digest(), digest);
  reopened.append_event("x", EventKind::LoginOk, {});
}

TEST(Persistence, SecondOpenerIsLockedOut) {
  TempDir dir;
  DataPool pool(dir.path());
  EXPECT_EQ(error_of([&] { DataPool other(dir.path()); }), Errc::PoolLocked);
}
