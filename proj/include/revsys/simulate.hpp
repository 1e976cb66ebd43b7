#pragma once

// Drives the HTTP API with a seeded population of honest and fraudulent
// payers and records what happened. The output is both the agent's
// training data (features + planted label) and a ground-truth file.
//
// Each simulated month:
//   capture (CSV) -> mine -> every payer logs in and requests a code ->
//   phase 1: honest / suppression / first replay payments ->
//   phase 2: replays, stolen codes, fabricated codes.
// Thefts and repeats happen after the honest traffic so a victim's own
// payment is never disturbed by them.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "revsys/ann.hpp"
#include "revsys/app.hpp"
#include "revsys/client.hpp"
#include "revsys/metrics.hpp"

namespace revsys::sim {

enum class Behavior { Honest, Suppression, StolenCode, Replay, FabricatedCode };

inline constexpr std::string_view to_string(Behavior b) {
  switch (b) {
    case Behavior::Honest: return "honest";
    case Behavior::Suppression: return "suppression";
    case Behavior::StolenCode: return "stolen_code";
    case Behavior::Replay: return "replay";
    case Behavior::FabricatedCode: return "fabricated_code";
  }
  return "?";
}

struct FraudMix {
  double honest = 0.8;
  double suppression = 0.05;
  double stolen_code = 0.05;
  double replay = 0.05;
  double fabricated_code = 0.05;

  void validate() const {
    for (double f : {honest, suppression, stolen_code, replay, fabricated_code}) {
      if (!(f >= 0 && f <= 1)) throw Error(Errc::ValidationFailed, "fraud mix fractions must lie in [0, 1]");
    }
    double sum = honest + suppression + stolen_code + replay + fabricated_code;
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::ValidationFailed, "fraud mix fractions must sum to 1");
  }

  /// "honest=0.8,suppression=0.05,..."; omitted classes are 0.
  static FraudMix parse(const std::string& text) {
    FraudMix m{0, 0, 0, 0, 0};
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw Error(Errc::ValidationFailed, "bad mix item '" + item + "'");
      auto key = item.substr(0, eq);
      double v = 0;
      try {
        std::size_t used = 0;
        v = std::stod(item.substr(eq + 1), &used);
        if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(Errc::ValidationFailed, "bad mix value in '" + item + "'");
      }
      if (key == "honest") m.honest = v;
      else if (key == "suppression") m.suppression = v;
      else if (key == "stolen_code") m.stolen_code = v;
      else if (key == "replay") m.replay = v;
      else if (key == "fabricated_code") m.fabricated_code = v;
      else throw Error(Errc::ValidationFailed, "unknown mix class '" + key + "'");
    }
    m.validate();
    return m;
  }
};

struct SimulationSpec {
  int n_taxpayers = 100;
  int months = 1;
  FraudMix mix;
  std::uint64_t seed = 1;
  int parallelism = 4;
  double lookup_rate = 0.5;          // honest payers whose code the teller checks first
  double failed_login_rate = 0.1;    // payers who mistype their password once
  Period first_period{2024, 1};

  /// The reference training population: 500 payers, one month, 20% fraud
  /// split evenly over the four planted classes.
  static SimulationSpec standard(std::uint64_t seed = 2024) {
    SimulationSpec s;
    s.n_taxpayers = 500;
    s.mix = {0.8, 0.05, 0.05, 0.05, 0.05};
    s.seed = seed;
    return s;
  }

  void validate() const {
    if (n_taxpayers < 1) throw Error(Errc::ValidationFailed, "n_taxpayers must be positive");
    if (months < 1) throw Error(Errc::ValidationFailed, "months must be positive");
    if (parallelism < 1) throw Error(Errc::ValidationFailed, "parallelism must be positive");
    mix.validate();
  }
};

/// One payment attempt as submitted to the bank endpoint.
struct Transaction {
  int month = 0;
  int taxpayer = 0;
  Behavior behavior = Behavior::Honest;
  int attempt = 0;  // replays: 0 = the genuine payment, 1 = the repeat
  int label = 0;
  std::int64_t assessed_kobo = 0;
  std::int64_t cash_kobo = 0;
  int http_status = 0;
  std::string message;
  std::string verdict;  // Clear | FraudAlert | "" when no assessment came back
  std::set<std::string> rule_hits;
  ann::FeatureVector features{};
  double ann_score = 0;
  bool has_assessment = false;
};

/// Rule each planted class must trigger.
inline std::string_view expected_rule(Behavior b) {
  switch (b) {
    case Behavior::Suppression: return "AmountMismatch";
    case Behavior::StolenCode: return "StolenCode";
    case Behavior::Replay: return "Replay";
    case Behavior::FabricatedCode: return "CodeNotFound";
    case Behavior::Honest: break;
  }
  return "";
}

struct SimulationSummary {
  std::size_t transactions = 0;
  std::size_t fraudulent = 0;
  std::size_t fraud_rule_flagged = 0;   // planted fraud carrying its class's rule hit
  std::size_t fraud_alerted = 0;        // planted fraud with verdict FraudAlert
  std::size_t honest = 0;
  std::size_t honest_rule_flagged = 0;  // honest payments with any rule hit
  std::size_t honest_alerted = 0;
  std::size_t alerts = 0;

  double rule_recall() const {
    return fraudulent ? static_cast<double>(fraud_rule_flagged) / static_cast<double>(fraudulent) : 1.0;
  }
};

inline SimulationSummary summarize(const std::vector<Transaction>& txns) {
  SimulationSummary s;
  for (const auto& t : txns) {
    ++s.transactions;
    bool alert = t.verdict == "FraudAlert";
    s.alerts += alert;
    if (t.label) {
      ++s.fraudulent;
      s.fraud_rule_flagged += t.rule_hits.count(std::string(expected_rule(t.behavior))) > 0;
      s.fraud_alerted += alert;
    } else {
      ++s.honest;
      s.honest_rule_flagged += !t.rule_hits.empty();
      s.honest_alerted += alert;
    }
  }
  return s;
}

inline nlohmann::json to_json(const SimulationSummary& s) {
  return {{"transactions", s.transactions},       {"fraudulent", s.fraudulent},
          {"fraud_rule_flagged", s.fraud_rule_flagged}, {"fraud_alerted", s.fraud_alerted},
          {"rule_recall", s.rule_recall()},       {"honest", s.honest},
          {"honest_rule_flagged", s.honest_rule_flagged}, {"honest_alerted", s.honest_alerted},
          {"alerts", s.alerts}};
}

struct SimulationResult {
  std::vector<Transaction> transactions;  // sorted by (month, taxpayer, attempt)
  SimulationSummary summary;

  std::vector<ann::LabeledExample> examples() const {
    std::vector<ann::LabeledExample> out;
    for (const auto& t : transactions) {
      if (t.has_assessment) out.push_back({t.features, t.label});
    }
    return out;
  }
};

/// `month,taxpayer,behavior,attempt,label,assessed_kobo,cash_kobo,http_status,verdict,rule_hits`
/// No codes, tokens or timestamps, so a fixed seed reproduces it byte for byte.
inline std::string ground_truth_csv(const std::vector<Transaction>& txns) {
  std::ostringstream out;
  out << "month,taxpayer,behavior,attempt,label,assessed_kobo,cash_kobo,http_status,verdict,rule_hits\n";
  for (const auto& t : txns) {
    std::string hits;
    for (const auto& h : t.rule_hits) hits += (hits.empty() ? "" : "|") + h;
    out << t.month << ',' << t.taxpayer << ',' << to_string(t.behavior) << ',' << t.attempt << ',' << t.label << ','
        << t.assessed_kobo << ',' << t.cash_kobo << ',' << t.http_status << ',' << t.verdict << ',' << hits << '\n';
  }
  return out.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
  out << text;
}

inline std::string examples_csv(const std::vector<ann::LabeledExample>& examples) {
  std::string out = ann::examples_header() + "\n";
  for (const auto& ex : examples) out += ann::to_csv_line(ex) + "\n";
  return out;
}

/// Where the simulator reads a freshly issued default password from.
using PasswordSource = std::function<std::string(const Tin&)>;

struct DriverOptions {
  std::string base_url;
  std::string admin_user = "admin";
  std::string admin_password;
  PasswordSource password_for;
  // Moves the service clock when the simulator owns it; null against a
  // live service.
  std::function<void(std::chrono::hours)> advance_clock;
};

namespace detail {

struct Payer {
  std::string taxpayer_id;
  std::string tin;
  std::string password;
  std::string email;
  std::string business;
};

// Everything random about one payer in one month, drawn up front so that
// thread scheduling cannot change the outcome.
struct Plan {
  Behavior behavior = Behavior::Honest;
  bool lookup_first = false;
  bool mistype = false;
  double suppression = 0;
  int victim = -1;
  std::string fabricated;
};

inline void check(const api::ApiResponse& r, const std::string& what) {
  if (!r.ok()) throw Error(Errc::IoError, what + " failed with " + std::to_string(r.status) + ": " + r.message());
}

inline void parallel_for(int n, int workers, const std::string& base_url,
                         const std::function<void(int, api::ApiClient&)>& body) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    api::ApiClient client(base_url);
    for (int i = next++; i < n; i = next++) {
      try {
        body(i, client);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::min(workers, n); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::string random_code(std::mt19937_64& rng) {
  std::string c;
  for (int i = 0; i < 16; ++i) {
    if (i && i % 4 == 0) c += '-';
    c += crypto::kCrockfordAlphabet[rng() % 32];
  }
  return c;
}

}  // namespace detail

/// Runs the whole scenario against `opt.base_url`. The service must have
/// an admin account; staff and taxpayers are created on the fly.
inline SimulationResult run_simulation(const SimulationSpec& spec, const DriverOptions& opt) {
  spec.validate();
  if (!opt.password_for) throw Error(Errc::ValidationFailed, "simulator needs a password source");
  using detail::check;
  std::mt19937_64 rng(spec.seed);
  const std::string tag = std::to_string(spec.seed);
  api::ApiClient client(opt.base_url);

  auto staff_login = [&](api::ApiClient& c, const std::string& user, const std::string& pass) {
    auto r = c.post("/api/auth/staff-login", {{"username", user}, {"password", pass}});
    check(r, "login of " + user);
    return r.body.at("token").get<std::string>();
  };
  auto admin = staff_login(client, opt.admin_user, opt.admin_password);
  const std::string bir_user = "sim_bir_" + tag, bank_user = "sim_bank_" + tag, staff_pass = "sim-staff-" + tag;
  for (auto [user, role] : {std::pair{bir_user, "BirStaff"}, std::pair{bank_user, "BankStaff"}}) {
    auto r = client.post("/api/admin/staff", {{"username", user}, {"role", role}, {"password", staff_pass}}, admin);
    if (!r.ok() && r.status != 409) check(r, "staff creation");
  }

  // Population: log-uniform monthly profit between N5,000 and N8,000,000.
  std::vector<detail::Payer> payers(static_cast<std::size_t>(spec.n_taxpayers));
  std::uniform_real_distribution<double> log_profit(std::log(5'000.0 * 100), std::log(8'000'000.0 * 100));
  std::uniform_int_distribution<std::int64_t> expenses_dist(1'000'000, 200'000'000);
  for (int i = 0; i < spec.n_taxpayers; ++i) {
    auto& p = payers[static_cast<std::size_t>(i)];
    p.email = "sim" + tag + "." + std::to_string(i) + "@example.ng";
    p.business = "Sim Shop " + tag + "-" + std::to_string(i);
  }

  std::vector<Transaction> txns;
  std::mutex txn_mutex;

  for (int month = 0; month < spec.months; ++month) {
    if (month > 0 && opt.advance_clock) opt.advance_clock(std::chrono::hours(24 * 30));
    auto bir = staff_login(client, bir_user, staff_pass);
    admin = staff_login(client, opt.admin_user, opt.admin_password);

    int total = spec.first_period.year * 12 + spec.first_period.month - 1 + month;
    Period period{total / 12, total % 12 + 1};
    std::string csv = std::string(workflow::kCaptureHeader) + "\n";
    for (int i = 0; i < spec.n_taxpayers; ++i) {
      auto profit = static_cast<std::int64_t>(std::exp(log_profit(rng)));
      auto expenses = expenses_dist(rng);
      workflow::CaptureForm f;
      f.full_name = "Sim Payer " + std::to_string(i);
      f.email = payers[static_cast<std::size_t>(i)].email;
      f.business_name = payers[static_cast<std::size_t>(i)].business;
      f.location = "Benin City";
      f.sector = "Retail";
      f.financials.push_back({period, Money(profit + expenses), Money(expenses), {}});
      csv += workflow::to_capture_csv_line(f) + "\n";
    }
    auto captured = client.post_csv("/api/bir/taxpayers", csv, bir);
    check(captured, "capture");
    for (const auto& row : captured.body.at("stored")) {
      auto idx = row.at("row").get<int>() - 1;
      payers.at(static_cast<std::size_t>(idx)).taxpayer_id = row.at("taxpayer_id").get<std::string>();
    }
    if (!captured.body.at("errors").empty()) throw Error(Errc::IoError, "capture rejected rows: " + captured.body.dump());
    check(client.post("/api/bir/mine", {}, bir), "mining");

    if (month == 0) {
      for (auto& p : payers) {
        auto r = client.post("/api/admin/tin/" + p.taxpayer_id, {}, admin);
        check(r, "TIN issue");
        p.tin = r.body.at("tin").get<std::string>();
        auto first = opt.password_for(Tin::parse(p.tin));
        p.password = "sim-pass-" + tag + "-" + p.taxpayer_id;
        auto login = client.post("/api/auth/taxpayer-login", {{"tin", p.tin}, {"password", first}});
        check(login, "first login");
        check(client.post("/api/taxpayer/password",
                          {{"old_password", first}, {"new_password", p.password}, {"confirm_password", p.password}},
                          login.body.at("token").get<std::string>()),
              "password change");
      }
    }

    // Behaviour assignment: exact class counts, shuffled over payers.
    std::vector<Behavior> behaviors;
    auto add = [&](Behavior b, double frac) {
      auto k = static_cast<int>(std::lround(frac * spec.n_taxpayers));
      for (int j = 0; j < k && static_cast<int>(behaviors.size()) < spec.n_taxpayers; ++j) behaviors.push_back(b);
    };
    add(Behavior::Suppression, spec.mix.suppression);
    add(Behavior::StolenCode, spec.mix.stolen_code);
    add(Behavior::Replay, spec.mix.replay);
    add(Behavior::FabricatedCode, spec.mix.fabricated_code);
    while (static_cast<int>(behaviors.size()) < spec.n_taxpayers) behaviors.push_back(Behavior::Honest);
    std::shuffle(behaviors.begin(), behaviors.end(), rng);

    std::vector<detail::Plan> plans(payers.size());
    std::uniform_real_distribution<double> unit(0, 1);
    for (std::size_t i = 0; i < plans.size(); ++i) {
      auto& pl = plans[i];
      pl.behavior = behaviors[i];
      pl.lookup_first = unit(rng) < spec.lookup_rate;
      pl.mistype = unit(rng) < spec.failed_login_rate;
      pl.suppression = 0.2 + 0.7 * unit(rng);
      pl.fabricated = detail::random_code(rng);
    }
    // Victims: payers who never use their own code this month come first.
    std::vector<int> spare, others;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      auto b = plans[i].behavior;
      (b == Behavior::StolenCode || b == Behavior::FabricatedCode ? spare : others).push_back(static_cast<int>(i));
    }
    std::shuffle(spare.begin(), spare.end(), rng);
    std::shuffle(others.begin(), others.end(), rng);
    std::set<int> taken;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      if (plans[i].behavior != Behavior::StolenCode) continue;
      for (auto* pool : {&spare, &others}) {
        for (int v : *pool) {
          if (v != static_cast<int>(i) && !taken.count(v)) {
            plans[i].victim = v;
            taken.insert(v);
            break;
          }
        }
        if (plans[i].victim >= 0) break;
      }
      if (plans[i].victim < 0) throw Error(Errc::ValidationFailed, "stolen-code payer needs a second taxpayer");
    }

    struct Slip {
      std::string code;
      std::int64_t amount = 0;
    };
    std::vector<Slip> slips(payers.size());
    std::vector<std::string> tokens(payers.size());
    auto bank_token = staff_login(client, bank_user, staff_pass);

    auto pay = [&](api::ApiClient& c, int i, const std::string& code, std::int64_t assessed, std::int64_t cash,
                   int attempt, int label) {
      const auto& p = payers[static_cast<std::size_t>(i)];
      auto r = c.post("/api/bank/payment", {{"code", code}, {"cash_kobo", cash}, {"tin", p.tin}}, bank_token);
      Transaction t;
      t.month = month;
      t.taxpayer = i;
      t.behavior = plans[static_cast<std::size_t>(i)].behavior;
      t.attempt = attempt;
      t.label = label;
      t.assessed_kobo = assessed;
      t.cash_kobo = cash;
      t.http_status = r.status;
      t.message = r.message();
      const nlohmann::json* a = nullptr;
      if (r.body.contains("assessment") && r.body.at("assessment").is_object()) a = &r.body.at("assessment");
      if (a) {
        t.has_assessment = true;
        t.verdict = a->at("verdict").get<std::string>();
        t.ann_score = a->at("ann_score").get<double>();
        for (const auto& h : a->at("rule_hits")) t.rule_hits.insert(h.get<std::string>());
        for (std::size_t k = 0; k < ann::kFeatureCount; ++k) {
          t.features[k] = a->at("features").at(ann::kFeatureNames[k]).get<double>();
        }
      } else if (r.status >= 500 || r.status == 0 || r.status == 401) {
        throw Error(Errc::IoError, "payment call failed with " + std::to_string(r.status) + ": " + r.message());
      }
      std::lock_guard lock(txn_mutex);
      txns.push_back(std::move(t));
    };

    // Login (sometimes after a mistyped password) and code request.
    detail::parallel_for(spec.n_taxpayers, spec.parallelism, opt.base_url, [&](int i, api::ApiClient& c) {
      auto idx = static_cast<std::size_t>(i);
      const auto& p = payers[idx];
      if (plans[idx].mistype) c.post("/api/auth/taxpayer-login", {{"tin", p.tin}, {"password", p.password + "x"}});
      auto login = c.post("/api/auth/taxpayer-login", {{"tin", p.tin}, {"password", p.password}});
      check(login, "taxpayer login");
      tokens[idx] = login.body.at("token").get<std::string>();
      auto slip = c.post("/api/taxpayer/reference-code", {}, tokens[idx]);
      check(slip, "reference code request");
      slips[idx] = {slip.body.at("reference_code").get<std::string>(), slip.body.at("tax_amount_kobo").get<std::int64_t>()};
    });

    // Phase 1: payments made by the code's owner.
    detail::parallel_for(spec.n_taxpayers, spec.parallelism, opt.base_url, [&](int i, api::ApiClient& c) {
      auto idx = static_cast<std::size_t>(i);
      const auto& pl = plans[idx];
      const auto& s = slips[idx];
      if (pl.behavior == Behavior::StolenCode || pl.behavior == Behavior::FabricatedCode) return;
      if (pl.lookup_first) c.get("/api/bank/lookup/" + s.code + "?tin=" + payers[idx].tin, bank_token);
      if (pl.behavior == Behavior::Suppression) {
        auto cash = std::max<std::int64_t>(1, std::llround(static_cast<double>(s.amount) * (1.0 - pl.suppression)));
        pay(c, i, s.code, s.amount, cash, 0, 1);
      } else {
        pay(c, i, s.code, s.amount, s.amount, 0, 0);
      }
    });

    if (opt.advance_clock) {
      opt.advance_clock(std::chrono::hours(24));
      bank_token = staff_login(client, bank_user, staff_pass);  // a day idle ends the teller's session
    }

    // Phase 2: repeats, thefts and invented codes.
    detail::parallel_for(spec.n_taxpayers, spec.parallelism, opt.base_url, [&](int i, api::ApiClient& c) {
      auto idx = static_cast<std::size_t>(i);
      const auto& pl = plans[idx];
      const auto& s = slips[idx];
      switch (pl.behavior) {
        case Behavior::Replay:
          pay(c, i, s.code, s.amount, s.amount, 1, 1);
          break;
        case Behavior::StolenCode: {
          const auto& v = slips[static_cast<std::size_t>(pl.victim)];
          if (pl.lookup_first) c.get("/api/bank/lookup/" + v.code + "?tin=" + payers[idx].tin, bank_token);
          pay(c, i, v.code, v.amount, v.amount, 0, 1);
          break;
        }
        case Behavior::FabricatedCode:
          pay(c, i, pl.fabricated, s.amount, s.amount, 0, 1);
          break;
        default:
          break;
      }
    });
  }

  std::sort(txns.begin(), txns.end(), [](const Transaction& a, const Transaction& b) {
    return std::tie(a.month, a.taxpayer, a.attempt) < std::tie(b.month, b.taxpayer, b.attempt);
  });
  SimulationResult out;
  out.summary = summarize(txns);
  out.transactions = std::move(txns);
  return out;
}

/// Spins up a private in-memory service on an ephemeral port, with a
/// manual clock the simulator advances, and runs the scenario against it.
inline SimulationResult run_embedded(const SimulationSpec& spec,
                                     std::optional<ann::AnnModel> model = ann::AnnModel::zeros(),
                                     double alert_threshold = 0.8) {
  auto clock = std::make_shared<ManualClock>();
  auto outbox = std::make_shared<workflow::InMemoryNotifier>();
  AppOptions o;
  o.pool.clock = clock;
  o.pool.snapshot_interval = 0;
  o.agent.secret = crypto::random_bytes(32);
  o.agent.alert_threshold = alert_threshold;
  o.model = std::move(model);
  o.service.pbkdf2_iterations = 10;
  o.notifier = outbox;
  o.admin_password = crypto::to_hex(crypto::random_bytes(12));
  App app(o);
  app.start();

  DriverOptions d;
  d.base_url = app.url();
  d.admin_password = o.admin_password;
  d.password_for = [outbox](const Tin& tin) {
    for (const auto& n : outbox->sent()) {
      if (Tin::parse(n.tin) == tin) return n.password;  // one TIN, one notice
    }
    throw Error(Errc::NotFound, "no notification for " + tin.str());
  };
  d.advance_clock = [clock](std::chrono::hours h) { clock->advance(h); };
  auto result = run_simulation(spec, d);
  app.stop();
  return result;
}

/// Password source reading the file notifier's outbox.
inline PasswordSource spool_password_source(std::filesystem::path outbox) {
  return [outbox = std::move(outbox)](const Tin& tin) {
    auto sent = workflow::FileSpoolNotifier::read(outbox);
    for (auto it = sent.rbegin(); it != sent.rend(); ++it) {
      if (Tin::parse(it->tin) == tin) return it->password;
    }
    throw Error(Errc::NotFound, "no notification for " + tin.str() + " in " + outbox.string());
  };
}

}  // namespace revsys::sim
