#pragma once

// Entity state of the data pool as a fold over audit events.
//
// Every state-changing event carries enough payload to rebuild the entity
// it touches, so `apply` over the full log reproduces the live state.
// Payload keys by kind:
//
//   StaffCreated      username, role, password_hash
//   TaxpayerCaptured  entity=taxpayer: taxpayer_id, full_name, email, phone
//                       [tin, password_hash, must_change, status]
//                     entity=business: business_id, owner, business_name,
//                       location, sector
//                     entity=financials: business_id, period, revenue_kobo,
//                       expenses_kobo, captured_at
//   TinIssued         taxpayer_id, tin, password_hash
//   PasswordChanged   principal_kind (taxpayer|staff), principal, password_hash
//   MiningRun         run_id, status, ...            (no entity change)
//   TierAssigned      business_id, tier, tax_kobo, [period], source
//   CodeIssued        code, owner, assessed_kobo, issued_at, expires_at
//   CodeLookup        code, result, [presenter], [expire=1]
//   PaymentRecorded   code, [txn_id, payer, amount_kobo, teller,
//                       receipt_no, business_name]
//   FraudAlert        code, rule_hits, ann_score, [presenter], [void=1],
//                       [txn_id, amount_kobo, teller]
//   LoginOk/LoginFail/AlterationBlocked              (no entity change)

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "revsys/audit.hpp"
#include "revsys/crypto.hpp"
#include "revsys/domain.hpp"
#include "revsys/error.hpp"

namespace revsys {

namespace detail {

inline std::int64_t parse_i64(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::ParseError, std::string("non-integer ") + what + ": '" + s + "'");
  }
}

/// Numeric suffix of ids like "TP000042"; 0 when absent.
inline std::uint64_t id_number(const std::string& id) {
  std::uint64_t n = 0;
  for (char c : id) {
    if (c >= '0' && c <= '9') n = n * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return n;
}

inline std::string make_id(std::string_view prefix, std::uint64_t n, int width) {
  std::string digits = std::to_string(n);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return std::string(prefix) + digits;
}

}  // namespace detail

struct PoolState {
  std::map<std::string, TaxpayerRecord> taxpayers;  // by taxpayer_id
  std::map<std::string, std::string> tin_index;     // tin -> taxpayer_id
  std::map<std::string, BusinessRecord> businesses;
  std::map<std::string, UserAccount> users;
  std::map<std::string, ReferenceCode> codes;
  std::map<std::string, TransactionRecord> transactions;
  std::map<std::string, Receipt> receipts;          // by receipt_no
  std::map<std::string, std::string> receipt_by_code;
  std::uint64_t last_seq = 0;
  std::uint64_t max_taxpayer_no = 0;
  std::uint64_t max_business_no = 0;
  std::uint64_t max_tin_counter = 0;
  std::uint64_t max_txn_no = 0;
  std::uint64_t max_receipt_no = 0;
  std::uint64_t mining_runs = 0;

  std::string next_taxpayer_id() const { return detail::make_id("TP", max_taxpayer_no + 1, 6); }
  std::string next_business_id() const { return detail::make_id("BZ", max_business_no + 1, 6); }
  std::string next_txn_id() const { return detail::make_id("TX", max_txn_no + 1, 8); }
  std::string next_receipt_no() const { return detail::make_id("RC", max_receipt_no + 1, 8); }
  std::string next_run_id() const { return detail::make_id("RUN", mining_runs + 1, 5); }
  std::uint64_t next_tin_counter() const { return max_tin_counter + 1; }

  const TaxpayerRecord* find_taxpayer(const std::string& id) const {
    auto it = taxpayers.find(id);
    return it == taxpayers.end() ? nullptr : &it->second;
  }
  const TaxpayerRecord* find_taxpayer_by_tin(const std::string& tin) const {
    auto it = tin_index.find(tin);
    return it == tin_index.end() ? nullptr : find_taxpayer(it->second);
  }
  const BusinessRecord* find_business(const std::string& id) const {
    auto it = businesses.find(id);
    return it == businesses.end() ? nullptr : &it->second;
  }
  const ReferenceCode* find_code(const std::string& code) const {
    auto it = codes.find(code);
    return it == codes.end() ? nullptr : &it->second;
  }

  std::vector<const BusinessRecord*> businesses_of(const std::string& taxpayer_id) const {
    std::vector<const BusinessRecord*> out;
    for (const auto& [id, b] : businesses) {
      if (b.owner == taxpayer_id) out.push_back(&b);
    }
    return out;
  }

  /// Throws if `e` would break an invariant of the current state.
  void validate(const AuditEvent& e) const;

  /// Fold one event into the state. Assumes `validate(e)` passed.
  void apply(const AuditEvent& e);
};

// ---------------------------------------------------------------------------

inline void PoolState::validate(const AuditEvent& e) const {
  auto integrity = [](const std::string& msg) { throw Error(Errc::IntegrityViolation, msg); };
  switch (e.kind) {
    case EventKind::StaffCreated: {
      const auto& name = e.field("username");
      if (name.empty()) throw Error(Errc::ValidationFailed, "username must not be empty");
      if (users.count(name)) throw Error(Errc::DuplicateUsername, "username already exists: " + name);
      parse_role(e.field("role"));
      break;
    }
    case EventKind::TaxpayerCaptured: {
      const auto& entity = e.field("entity");
      if (entity == "taxpayer") {
        const auto& id = e.field("taxpayer_id");
        if (taxpayers.count(id)) integrity("duplicate taxpayer id " + id);
        if (e.field("email").empty() && e.field("phone").empty()) {
          throw Error(Errc::ValidationFailed, "email or phone is required");
        }
        auto tin = e.field_or("tin");
        if (!tin.empty()) {
          if (!validate_tin(tin)) throw Error(Errc::ValidationFailed, "malformed TIN " + tin);
          if (tin_index.count(tin)) throw Error(Errc::DuplicateTin, "TIN already registered: " + tin);
        }
      } else if (entity == "business") {
        const auto& id = e.field("business_id");
        if (businesses.count(id)) integrity("duplicate business id " + id);
        if (!taxpayers.count(e.field("owner"))) integrity("unknown owner " + e.field("owner"));
        if (e.field("business_name").empty()) {
          throw Error(Errc::ValidationFailed, "business name must not be empty");
        }
      } else if (entity == "financials") {
        auto b = businesses.find(e.field("business_id"));
        if (b == businesses.end()) integrity("unknown business " + e.field("business_id"));
        if (!Period::parse(e.field("period"))) throw Error(Errc::ValidationFailed, "malformed period");
        if (detail::parse_i64(e.field("revenue_kobo"), "revenue") < 0 ||
            detail::parse_i64(e.field("expenses_kobo"), "expenses") < 0) {
          throw Error(Errc::NegativeInput, "revenue and expenses must be non-negative");
        }
        auto at = detail::parse_i64(e.field("captured_at"), "captured_at");
        for (const auto& f : b->second.financials) {
          if (to_millis(f.captured_at) > at) integrity("captured_at must be non-decreasing per business");
        }
      } else {
        integrity("unknown capture entity " + entity);
      }
      break;
    }
    case EventKind::TinIssued: {
      auto t = taxpayers.find(e.field("taxpayer_id"));
      if (t == taxpayers.end()) throw Error(Errc::NotFound, "unknown taxpayer " + e.field("taxpayer_id"));
      if (!t->second.tin.empty()) throw Error(Errc::AlreadyIssued, "TIN already issued");
      const auto& tin = e.field("tin");
      if (!validate_tin(tin)) integrity("malformed TIN " + tin);
      if (tin_index.count(tin)) throw Error(Errc::DuplicateTin, "TIN already registered: " + tin);
      break;
    }
    case EventKind::PasswordChanged: {
      const auto& kind = e.field("principal_kind");
      const auto& who = e.field("principal");
      if (kind == "taxpayer" ? !taxpayers.count(who) : !users.count(who)) {
        throw Error(Errc::NotFound, "unknown principal " + who);
      }
      break;
    }
    case EventKind::TierAssigned: {
      if (!businesses.count(e.field("business_id"))) integrity("unknown business " + e.field("business_id"));
      parse_tier(e.field("tier"));
      if (detail::parse_i64(e.field("tax_kobo"), "tax") < 0) throw Error(Errc::NegativeInput, "negative tax");
      break;
    }
    case EventKind::CodeIssued: {
      if (codes.count(e.field("code"))) throw Error(Errc::AlreadyIssued, "reference code collision");
      if (!tin_index.count(e.field("owner"))) integrity("unknown code owner " + e.field("owner"));
      if (detail::parse_i64(e.field("assessed_kobo"), "assessed") <= 0) {
        throw Error(Errc::NonPositiveAmount, "assessed amount must be positive");
      }
      break;
    }
    case EventKind::CodeLookup: {
      if (e.field_or("expire") == "1") {
        auto c = codes.find(e.field("code"));
        if (c == codes.end() || c->second.status != CodeStatus::Issued) integrity("cannot expire code");
      }
      break;
    }
    case EventKind::PaymentRecorded: {
      auto c = codes.find(e.field("code"));
      if (c == codes.end()) throw Error(Errc::NotFound, "unknown reference code");
      if (c->second.status == CodeStatus::Redeemed) throw Error(Errc::AlreadyRedeemed, "code already redeemed");
      if (c->second.status != CodeStatus::Issued || e.at > c->second.expires_at) {
        throw Error(Errc::ExpiredOrVoided, "code expired or voided");
      }
      auto txn = e.field_or("txn_id");
      if (!txn.empty() && transactions.count(txn)) integrity("duplicate txn id");
      break;
    }
    case EventKind::FraudAlert: {
      if (e.field_or("void") == "1") {
        auto c = codes.find(e.field("code"));
        if (c == codes.end() || c->second.status != CodeStatus::Issued) integrity("cannot void code");
      }
      auto txn = e.field_or("txn_id");
      if (!txn.empty() && transactions.count(txn)) integrity("duplicate txn id");
      break;
    }
    case EventKind::MiningRun:
    case EventKind::LoginOk:
    case EventKind::LoginFail:
    case EventKind::AlterationBlocked:
      break;
  }
}

inline void PoolState::apply(const AuditEvent& e) {
  using detail::parse_i64;
  last_seq = e.seq;
  switch (e.kind) {
    case EventKind::StaffCreated: {
      users[e.field("username")] =
          UserAccount{e.field("username"), e.field("password_hash"), parse_role(e.field("role"))};
      break;
    }
    case EventKind::TaxpayerCaptured: {
      const auto& entity = e.field("entity");
      if (entity == "taxpayer") {
        TaxpayerRecord t;
        t.taxpayer_id = e.field("taxpayer_id");
        t.full_name = e.field("full_name");
        t.email = e.field("email");
        t.phone = e.field("phone");
        auto tin = e.field_or("tin");
        if (!tin.empty()) {
          t.tin = Tin::parse(tin);
          tin_index[tin] = t.taxpayer_id;
          max_tin_counter = std::max(max_tin_counter, detail::id_number(tin.substr(2, 8)));
        }
        t.password_hash = e.field_or("password_hash");
        t.must_change_password = e.field_or("must_change", "1") == "1";
        t.status = e.field_or("status") == "Active" ? TaxpayerStatus::Active : TaxpayerStatus::Provisional;
        max_taxpayer_no = std::max(max_taxpayer_no, detail::id_number(t.taxpayer_id));
        taxpayers[t.taxpayer_id] = std::move(t);
      } else if (entity == "business") {
        BusinessRecord b;
        b.business_id = e.field("business_id");
        b.owner = e.field("owner");
        b.business_name = e.field("business_name");
        b.location = e.field("location");
        b.sector = e.field("sector");
        max_business_no = std::max(max_business_no, detail::id_number(b.business_id));
        businesses[b.business_id] = std::move(b);
      } else {
        auto& b = businesses.at(e.field("business_id"));
        MonthlyFinancials f{*Period::parse(e.field("period")), Money(parse_i64(e.field("revenue_kobo"), "revenue")),
                            Money(parse_i64(e.field("expenses_kobo"), "expenses")),
                            from_millis(parse_i64(e.field("captured_at"), "captured_at"))};
        auto it = std::find_if(b.financials.begin(), b.financials.end(),
                               [&](const MonthlyFinancials& x) { return x.period == f.period; });
        if (it != b.financials.end()) {
          *it = f;
        } else {
          b.financials.push_back(f);
          std::sort(b.financials.begin(), b.financials.end(),
                    [](const auto& x, const auto& y) { return x.period < y.period; });
        }
      }
      break;
    }
    case EventKind::TinIssued: {
      auto& t = taxpayers.at(e.field("taxpayer_id"));
      const auto& tin = e.field("tin");
      t.tin = Tin::parse(tin);
      t.password_hash = e.field("password_hash");
      t.must_change_password = true;
      t.status = TaxpayerStatus::Provisional;
      tin_index[tin] = t.taxpayer_id;
      max_tin_counter = std::max(max_tin_counter, detail::id_number(tin.substr(2, 8)));
      break;
    }
    case EventKind::PasswordChanged: {
      if (e.field("principal_kind") == "taxpayer") {
        auto& t = taxpayers.at(e.field("principal"));
        t.password_hash = e.field("password_hash");
        t.must_change_password = false;
        t.status = TaxpayerStatus::Active;
      } else {
        users.at(e.field("principal")).password_hash = e.field("password_hash");
      }
      break;
    }
    case EventKind::MiningRun:
      ++mining_runs;
      break;
    case EventKind::TierAssigned: {
      auto& b = businesses.at(e.field("business_id"));
      b.tier = parse_tier(e.field("tier"));
      b.assessed_tax = Money(parse_i64(e.field("tax_kobo"), "tax"));
      auto period = e.field_or("period");
      if (!period.empty()) b.assessed_period = Period::parse(period);
      break;
    }
    case EventKind::CodeIssued: {
      ReferenceCode c;
      c.code = e.field("code");
      c.owner = Tin::parse(e.field("owner"));
      c.assessed_amount = Money(parse_i64(e.field("assessed_kobo"), "assessed"));
      c.issued_at = from_millis(parse_i64(e.field("issued_at"), "issued_at"));
      c.expires_at = from_millis(parse_i64(e.field("expires_at"), "expires_at"));
      c.status = CodeStatus::Issued;
      codes[c.code] = std::move(c);
      break;
    }
    case EventKind::CodeLookup:
      if (e.field_or("expire") == "1") codes.at(e.field("code")).status = CodeStatus::Expired;
      break;
    case EventKind::PaymentRecorded: {
      auto& c = codes.at(e.field("code"));
      c.status = CodeStatus::Redeemed;
      auto txn_id = e.field_or("txn_id");
      if (txn_id.empty()) break;
      TransactionRecord t{txn_id,
                          c.code,
                          Tin::parse(e.field("payer")),
                          Money(parse_i64(e.field("amount_kobo"), "amount")),
                          e.field("teller"),
                          e.at,
                          TxnOutcome::Success};
      max_txn_no = std::max(max_txn_no, detail::id_number(txn_id));
      Receipt r{e.field("receipt_no"), e.field("business_name"), t.amount_paid, e.at, c.code, t.payer};
      max_receipt_no = std::max(max_receipt_no, detail::id_number(r.receipt_no));
      receipt_by_code[c.code] = r.receipt_no;
      receipts[r.receipt_no] = std::move(r);
      transactions[txn_id] = std::move(t);
      break;
    }
    case EventKind::FraudAlert: {
      if (e.field_or("void") == "1") codes.at(e.field("code")).status = CodeStatus::Voided;
      auto txn_id = e.field_or("txn_id");
      if (txn_id.empty()) break;
      auto presenter = e.field_or("presenter");
      TransactionRecord t{txn_id,
                          e.field("code"),
                          validate_tin(presenter) ? Tin::parse(presenter) : Tin{},
                          Money(parse_i64(e.field("amount_kobo"), "amount")),
                          e.field("teller"),
                          e.at,
                          TxnOutcome::Rejected};
      max_txn_no = std::max(max_txn_no, detail::id_number(txn_id));
      transactions[txn_id] = std::move(t);
      break;
    }
    case EventKind::LoginOk:
    case EventKind::LoginFail:
    case EventKind::AlterationBlocked:
      break;
  }
}

// ---------------------------------------------------------------------------
// Canonical JSON, used for snapshots and state digests.

inline nlohmann::json to_json(const PoolState& s) {
  using nlohmann::json;
  json j;
  json& tps = j["taxpayers"] = json::object();
  for (const auto& [id, t] : s.taxpayers) {
    tps[id] = {{"tin", t.tin.str()},           {"full_name", t.full_name},
               {"email", t.email},             {"phone", t.phone},
               {"password_hash", t.password_hash}, {"must_change", t.must_change_password},
               {"status", t.status == TaxpayerStatus::Active ? "Active" : "Provisional"}};
  }
  json& bzs = j["businesses"] = json::object();
  for (const auto& [id, b] : s.businesses) {
    json fin = json::array();
    for (const auto& f : b.financials) {
      fin.push_back({{"period", f.period.str()},
                     {"revenue_kobo", f.revenue.kobo()},
                     {"expenses_kobo", f.expenses.kobo()},
                     {"captured_at", to_millis(f.captured_at)}});
    }
    bzs[id] = {{"owner", b.owner},
               {"business_name", b.business_name},
               {"location", b.location},
               {"sector", b.sector},
               {"financials", fin},
               {"tier", b.tier ? json(std::string(to_string(*b.tier))) : json()},
               {"assessed_tax_kobo", b.assessed_tax ? json(b.assessed_tax->kobo()) : json()},
               {"assessed_period", b.assessed_period ? json(b.assessed_period->str()) : json()}};
  }
  json& us = j["users"] = json::object();
  for (const auto& [name, u] : s.users) {
    us[name] = {{"password_hash", u.password_hash}, {"role", std::string(to_string(u.role))}};
  }
  json& cs = j["codes"] = json::object();
  for (const auto& [code, c] : s.codes) {
    cs[code] = {{"owner", c.owner.str()},
                {"assessed_kobo", c.assessed_amount.kobo()},
                {"issued_at", to_millis(c.issued_at)},
                {"expires_at", to_millis(c.expires_at)},
                {"status", std::string(to_string(c.status))}};
  }
  json& ts = j["transactions"] = json::object();
  for (const auto& [id, t] : s.transactions) {
    ts[id] = {{"code", t.code},
              {"payer", t.payer.str()},
              {"amount_kobo", t.amount_paid.kobo()},
              {"teller", t.teller},
              {"at", to_millis(t.at)},
              {"outcome", t.outcome == TxnOutcome::Success ? "Success" : "Rejected"}};
  }
  json& rs = j["receipts"] = json::object();
  for (const auto& [no, r] : s.receipts) {
    rs[no] = {{"business_name", r.business_name},
              {"amount_kobo", r.amount_paid.kobo()},
              {"date", to_millis(r.date)},
              {"reference_code", r.reference_code},
              {"tin", r.tin.str()}};
  }
  j["last_seq"] = s.last_seq;
  j["mining_runs"] = s.mining_runs;
  return j;
}

inline PoolState pool_state_from_json(const nlohmann::json& j) {
  PoolState s;
  try {
    for (const auto& [id, t] : j.at("taxpayers").items()) {
      TaxpayerRecord r;
      r.taxpayer_id = id;
      auto tin = t.at("tin").get<std::string>();
      if (!tin.empty()) {
        r.tin = Tin::parse(tin);
        s.tin_index[tin] = id;
        s.max_tin_counter = std::max(s.max_tin_counter, detail::id_number(tin.substr(2, 8)));
      }
      r.full_name = t.at("full_name");
      r.email = t.at("email");
      r.phone = t.at("phone");
      r.password_hash = t.at("password_hash");
      r.must_change_password = t.at("must_change");
      r.status = t.at("status") == "Active" ? TaxpayerStatus::Active : TaxpayerStatus::Provisional;
      s.max_taxpayer_no = std::max(s.max_taxpayer_no, detail::id_number(id));
      s.taxpayers[id] = std::move(r);
    }
    for (const auto& [id, b] : j.at("businesses").items()) {
      BusinessRecord r;
      r.business_id = id;
      r.owner = b.at("owner");
      r.business_name = b.at("business_name");
      r.location = b.at("location");
      r.sector = b.at("sector");
      for (const auto& f : b.at("financials")) {
        r.financials.push_back({*Period::parse(f.at("period").get<std::string>()),
                                Money(f.at("revenue_kobo").get<std::int64_t>()),
                                Money(f.at("expenses_kobo").get<std::int64_t>()),
                                from_millis(f.at("captured_at").get<std::int64_t>())});
      }
      if (!b.at("tier").is_null()) r.tier = parse_tier(b.at("tier").get<std::string>());
      if (!b.at("assessed_tax_kobo").is_null()) r.assessed_tax = Money(b.at("assessed_tax_kobo").get<std::int64_t>());
      if (!b.at("assessed_period").is_null()) {
        r.assessed_period = Period::parse(b.at("assessed_period").get<std::string>());
      }
      s.max_business_no = std::max(s.max_business_no, detail::id_number(id));
      s.businesses[id] = std::move(r);
    }
    for (const auto& [name, u] : j.at("users").items()) {
      s.users[name] = UserAccount{name, u.at("password_hash"), parse_role(u.at("role").get<std::string>())};
    }
    for (const auto& [code, c] : j.at("codes").items()) {
      s.codes[code] = ReferenceCode{code,
                                    Tin::parse(c.at("owner").get<std::string>()),
                                    Money(c.at("assessed_kobo").get<std::int64_t>()),
                                    from_millis(c.at("issued_at").get<std::int64_t>()),
                                    from_millis(c.at("expires_at").get<std::int64_t>()),
                                    parse_code_status(c.at("status").get<std::string>())};
    }
    for (const auto& [id, t] : j.at("transactions").items()) {
      auto payer = t.at("payer").get<std::string>();
      s.transactions[id] = TransactionRecord{id,
                                             t.at("code"),
                                             payer.empty() ? Tin{} : Tin::parse(payer),
                                             Money(t.at("amount_kobo").get<std::int64_t>()),
                                             t.at("teller"),
                                             from_millis(t.at("at").get<std::int64_t>()),
                                             t.at("outcome") == "Success" ? TxnOutcome::Success
                                                                          : TxnOutcome::Rejected};
      s.max_txn_no = std::max(s.max_txn_no, detail::id_number(id));
    }
    for (const auto& [no, r] : j.at("receipts").items()) {
      Receipt rec{no,
                  r.at("business_name"),
                  Money(r.at("amount_kobo").get<std::int64_t>()),
                  from_millis(r.at("date").get<std::int64_t>()),
                  r.at("reference_code"),
                  Tin::parse(r.at("tin").get<std::string>())};
      s.receipt_by_code[rec.reference_code] = no;
      s.max_receipt_no = std::max(s.max_receipt_no, detail::id_number(no));
      s.receipts[no] = std::move(rec);
    }
    s.last_seq = j.at("last_seq");
    s.mining_runs = j.at("mining_runs");
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, std::string("bad snapshot: ") + ex.what());
  }
  return s;
}

/// SHA-256 over the canonical JSON dump; equal states hash equal.
inline std::string state_digest(const PoolState& s) { return crypto::sha256_hex(to_json(s).dump()); }

}  // namespace revsys
