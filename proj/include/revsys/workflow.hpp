#pragma once

// Role-scoped operations of the revenue workflow: staff administration,
// taxpayer capture and TIN issuance, assessment, reference codes, bank
// lookup and payment, receipts. Sessions are bearer tokens with a sliding
// idle expiry.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "revsys/agent.hpp"
#include "revsys/crypto.hpp"
#include "revsys/data_pool.hpp"
#include "revsys/messages.hpp"
#include "revsys/miner.hpp"

namespace revsys::workflow {

// ---------------------------------------------------------------------------
// Notification delivery

struct Notification {
  std::string recipient;  // email address or phone number
  std::string channel;    // "email" | "sms"
  std::string body;
  std::string tin;
  std::string password;
};

class Notifier {
 public:
  virtual ~Notifier() = default;
  virtual void send(const Notification& n) = 0;
};

/// Keeps every message in memory.
class InMemoryNotifier final : public Notifier {
 public:
  void send(const Notification& n) override {
    std::lock_guard lock(mutex_);
    sent_.push_back(n);
  }

  std::vector<Notification> sent() const {
    std::lock_guard lock(mutex_);
    return sent_;
  }

  std::optional<Notification> last_for(const std::string& recipient) const {
    std::lock_guard lock(mutex_);
    for (auto it = sent_.rbegin(); it != sent_.rend(); ++it) {
      if (it->recipient == recipient) return *it;
    }
    return std::nullopt;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<Notification> sent_;
};

inline nlohmann::json to_json(const Notification& n) {
  return {{"recipient", n.recipient}, {"channel", n.channel}, {"body", n.body}, {"tin", n.tin},
          {"password", n.password}};
}

inline Notification notification_from_json(const nlohmann::json& j) {
  return {j.value("recipient", ""), j.value("channel", ""), j.value("body", ""), j.value("tin", ""),
          j.value("password", "")};
}

/// Appends one JSON line per message to `<dir>/outbox.ndjson` for an
/// external gateway to pick up.
class FileSpoolNotifier final : public Notifier {
 public:
  explicit FileSpoolNotifier(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path outbox() const { return dir_ / "outbox.ndjson"; }

  void send(const Notification& n) override {
    std::lock_guard lock(mutex_);
    std::ofstream out(outbox(), std::ios::app);
    if (!out) throw Error(Errc::IoError, "cannot write notification spool " + outbox().string());
    out << to_json(n).dump() << '\n';
  }

  static std::vector<Notification> read(const std::filesystem::path& outbox) {
    std::vector<Notification> out;
    std::ifstream in(outbox);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        out.push_back(notification_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception&) {
        // partially written tail
      }
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Views

struct Session {
  std::string token;
  std::string principal;  // username, or TIN for taxpayers
  Role role = Role::Taxpayer;
  std::string taxpayer_id;
  bool must_change_password = false;
  Timestamp issued_at;
  Timestamp expires_at;
};

struct LoginResult {
  Session session;
  std::string message;
};

struct CaptureForm {
  std::string full_name;
  std::string email;
  std::string phone;
  std::string business_name;
  std::string location;
  std::string sector;
  std::vector<MonthlyFinancials> financials;
};

struct CapturedEntry {
  std::size_t row = 0;
  std::string taxpayer_id;
  std::string business_id;
};

struct RowError {
  std::size_t row = 0;
  std::string reason;
};

struct CaptureResult {
  std::vector<CapturedEntry> stored;
  std::vector<RowError> errors;
};

struct BusinessAssessment {
  std::string business_id;
  std::string business_name;
  Tier tier = Tier::Exempt;
  Money tax;
  std::optional<Period> period;
};

struct AssessmentView {
  std::string taxpayer_id;
  std::string taxpayer_name;
  Tin tin;
  std::vector<BusinessAssessment> businesses;
  Money total_tax;
  bool amount_editable = false;
};

struct PaymentSlip {
  std::string reference_code;
  Money tax_amount;
  std::string taxpayer_name;
  std::string business_name;
  Timestamp date;
  Timestamp expires_at;
  bool outstanding = false;  // an earlier live code was returned
};

struct PaymentResult {
  Receipt receipt;
  agent::FraudAssessment assessment;
  std::string message;
};

struct MiningResult {
  std::string message;
  miner::MiningReport report;
};

/// A payment the agent refused. `code()` is FraudDetected or
/// AlreadyRedeemed; `what()` is the screen message.
class PaymentRejected : public Error {
 public:
  PaymentRejected(Errc code, agent::FraudAssessment assessment)
      : Error(code, assessment.display_message), assessment_(std::move(assessment)) {}
  const agent::FraudAssessment& assessment() const { return assessment_; }

 private:
  agent::FraudAssessment assessment_;
};

struct ServiceConfig {
  miner::TierRateGuide guide = miner::TierRateGuide::standard();
  std::chrono::minutes session_idle{30};
  int pbkdf2_iterations = crypto::kDefaultPbkdf2Iterations;
  std::size_t default_password_length = 10;
};

// ---------------------------------------------------------------------------
// CSV capture format

inline constexpr std::string_view kCaptureHeader =
    "full_name,email,phone,business_name,location,sector,period,revenue_kobo,expenses_kobo";

/// RFC 4180 fields: quoted fields may contain commas and doubled quotes.
inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"' && fields.back().empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) return std::nullopt;
  return fields;
}

inline std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string to_capture_csv_line(const CaptureForm& f) {
  std::string base = csv_field(f.full_name) + ',' + csv_field(f.email) + ',' + csv_field(f.phone) + ',' +
                     csv_field(f.business_name) + ',' + csv_field(f.location) + ',' + csv_field(f.sector) + ',';
  if (f.financials.empty()) return base + ",,";
  std::string out;
  for (const auto& m : f.financials) {
    if (!out.empty()) out += '\n';
    out += base + m.period.str() + ',' + std::to_string(m.revenue.kobo()) + ',' + std::to_string(m.expenses.kobo());
  }
  return out;
}

// ---------------------------------------------------------------------------

class Service {
 public:
  Service(DataPool& pool, agent::Birgent& agent, std::shared_ptr<Notifier> notifier, ServiceConfig config = {})
      : pool_(pool), agent_(agent), notifier_(std::move(notifier)), config_(std::move(config)) {
    config_.guide.validate();
  }

  DataPool& pool() { return pool_; }
  agent::Birgent& agent() { return agent_; }
  const ServiceConfig& config() const { return config_; }

  /// Creates the administrator account if it does not exist yet.
  void bootstrap_admin(const std::string& username, const std::string& password) {
    if (pool_.user(username)) return;
    if (password.empty()) throw Error(Errc::EmptyPassword, "administrator password must not be empty");
    pool_.put(UserAccount{username, crypto::hash_password(password, config_.pbkdf2_iterations), Role::Admin},
              std::string(kActorSystem));
  }

  // -- sessions -----------------------------------------------------------------

  LoginResult login_staff(const std::string& username, const std::string& password) {
    auto user = pool_.user(username);
    const bool ok = user && crypto::verify_password(password, user->password_hash);
    audit_login(ok, username, "staff");
    if (!ok) throw Error(Errc::InvalidCredentials, std::string(messages::kInvalidStaffLogin));
    Session s;
    s.principal = username;
    s.role = user->role;
    return {open_session(std::move(s)), std::string(messages::kWelcome)};
  }

  LoginResult login_taxpayer(const std::string& tin_text, const std::string& password) {
    std::optional<TaxpayerRecord> t;
    std::string principal = tin_text;
    try {
      principal = Tin::parse(tin_text).str();
      t = pool_.taxpayer_by_tin(principal);
    } catch (const Error&) {
    }
    const bool ok = t && !t->password_hash.empty() && crypto::verify_password(password, t->password_hash);
    audit_login(ok, principal, "taxpayer");
    if (!ok) throw Error(Errc::InvalidCredentials, std::string(messages::kInvalidTaxpayerLogin));
    Session s;
    s.principal = principal;
    s.role = Role::Taxpayer;
    s.taxpayer_id = t->taxpayer_id;
    s.must_change_password = t->must_change_password;
    return {open_session(std::move(s)), std::string(messages::kWelcome)};
  }

  /// Idempotent; unknown tokens are ignored.
  void logout(const std::string& token) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(token);
  }

  /// Validates the token, slides its expiry and checks the role. A
  /// provisional taxpayer may only change the password.
  Session authorize(const std::string& token, std::initializer_list<Role> roles, bool allow_provisional = false) {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(token);
    const auto now = pool_.now();
    if (it == sessions_.end()) throw Error(Errc::Unauthorized, "not logged in");
    if (now > it->second.expires_at) {
      sessions_.erase(it);
      throw Error(Errc::Unauthorized, "session expired");
    }
    it->second.expires_at = now + config_.session_idle;
    const Session& s = it->second;
    if (std::find(roles.begin(), roles.end(), s.role) == roles.end()) {
      throw Error(Errc::Forbidden, "operation not permitted for role " + std::string(to_string(s.role)));
    }
    if (s.must_change_password && !allow_provisional) {
      throw Error(Errc::MustChangePassword, "default password must be changed first");
    }
    return s;
  }

  // -- administration -------------------------------------------------------------

  UserAccount create_staff(const std::string& token, const std::string& username, Role role,
                           const std::string& password) {
    auto s = authorize(token, {Role::Admin});
    if (role != Role::BirStaff && role != Role::BankStaff) {
      throw Error(Errc::ValidationFailed, "staff role must be BirStaff or BankStaff");
    }
    if (username.empty()) throw Error(Errc::ValidationFailed, "username must not be empty");
    if (password.empty()) throw Error(Errc::EmptyPassword, "password must not be empty");
    UserAccount u{username, crypto::hash_password(password, config_.pbkdf2_iterations), role};
    pool_.put(u, s.principal);
    return u;
  }

  /// Mints a TIN and a random default password, and sends both to the
  /// taxpayer's email (else phone).
  Tin issue_tin(const std::string& token, const std::string& taxpayer_id) {
    auto s = authorize(token, {Role::Admin});
    auto password = crypto::random_alphanumeric(config_.default_password_length);
    auto digest = crypto::hash_password(password, config_.pbkdf2_iterations);
    auto e = pool_.commit(s.principal, EventKind::TinIssued, [&](const PoolState& st) {
      return Payload{{"taxpayer_id", taxpayer_id},
                     {"tin", mint_tin(st.next_tin_counter()).str()},
                     {"password_hash", digest}};
    });
    auto tin = Tin::parse(e.payload.at("tin"));
    auto t = pool_.taxpayer(taxpayer_id);
    Notification n;
    n.recipient = t->email.empty() ? t->phone : t->email;
    n.channel = t->email.empty() ? "sms" : "email";
    n.tin = tin.display();
    n.password = password;
    n.body = "Dear " + t->full_name + ", your Tax Identification Number is " + tin.display() +
             " and your default password is " + password + ". You will be asked to change it at first login.";
    notifier_->send(n);
    return tin;
  }

  // -- capture --------------------------------------------------------------------

  CaptureResult register_taxpayer(const std::string& token, const CaptureForm& form) {
    auto s = authorize(token, {Role::BirStaff});
    return capture({form}, s.principal);
  }

  CaptureResult register_taxpayers_csv(const std::string& token, std::string_view csv) {
    auto s = authorize(token, {Role::BirStaff});
    return capture_csv(csv, s.principal);
  }

  /// Stores each form, matching an existing taxpayer by email (else phone)
  /// and an existing business by normalized name. Rows are numbered from 1.
  CaptureResult capture(const std::vector<CaptureForm>& forms, const std::string& actor) {
    CaptureResult result;
    std::lock_guard lock(capture_mutex_);
    for (std::size_t i = 0; i < forms.size(); ++i) {
      try {
        result.stored.push_back(capture_one(forms[i], i + 1, actor));
      } catch (const Error& e) {
        result.errors.push_back({i + 1, e.what()});
      }
    }
    return result;
  }

  /// The header row is required. Blank lines are skipped; data rows are
  /// numbered from 1.
  CaptureResult capture_csv(std::string_view csv, const std::string& actor) {
    std::istringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::ValidationFailed, "empty capture file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line != kCaptureHeader) throw Error(Errc::ValidationFailed, "capture header must be: " + std::string(kCaptureHeader));

    std::vector<CaptureForm> forms;
    std::vector<std::size_t> rows;
    CaptureResult result;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      ++row;
      auto fields = split_csv_line(line);
      if (!fields || fields->size() != 9) {
        result.errors.push_back({row, "expected 9 fields"});
        continue;
      }
      auto& f = *fields;
      for (auto& v : f) v = miner::trim(v);
      CaptureForm form{f[0], f[1], f[2], f[3], f[4], f[5], {}};
      if (!f[6].empty() || !f[7].empty() || !f[8].empty()) {
        auto period = Period::parse(f[6]);
        auto revenue = parse_kobo(f[7]);
        auto expenses = parse_kobo(f[8]);
        if (!period || !revenue || !expenses) {
          result.errors.push_back({row, "malformed period or earnings"});
          continue;
        }
        form.financials.push_back({*period, *revenue, *expenses, pool_.now()});
      }
      forms.push_back(std::move(form));
      rows.push_back(row);
    }
    auto stored = capture(forms, actor);
    for (auto& s : stored.stored) {
      s.row = rows[s.row - 1];
      result.stored.push_back(s);
    }
    for (auto& e : stored.errors) result.errors.push_back({rows[e.row - 1], e.reason});
    std::sort(result.errors.begin(), result.errors.end(), [](auto& a, auto& b) { return a.row < b.row; });
    return result;
  }

  // -- taxpayer -------------------------------------------------------------------

  std::string change_password(const std::string& token, const std::string& old_password,
                              const std::string& new_password, const std::string& confirm) {
    auto s = authorize(token, {Role::Admin, Role::BirStaff, Role::BankStaff, Role::Taxpayer}, true);
    const bool taxpayer = s.role == Role::Taxpayer;
    std::string digest;
    if (taxpayer) {
      digest = pool_.taxpayer(s.taxpayer_id)->password_hash;
    } else {
      digest = pool_.user(s.principal)->password_hash;
    }
    if (!crypto::verify_password(old_password, digest)) {
      throw Error(Errc::OldPasswordWrong, "current password is incorrect");
    }
    if (new_password.empty()) throw Error(Errc::EmptyPassword, "new password must not be empty");
    if (new_password != confirm) throw Error(Errc::ConfirmMismatch, "new password and confirmation differ");
    if (new_password == old_password) throw Error(Errc::SameAsOld, "new password must differ from the old one");
    pool_.append_event(s.principal, EventKind::PasswordChanged,
                       {{"principal_kind", taxpayer ? "taxpayer" : "staff"},
                        {"principal", taxpayer ? s.taxpayer_id : s.principal},
                        {"password_hash", crypto::hash_password(new_password, config_.pbkdf2_iterations)}});
    {
      std::lock_guard lock(sessions_mutex_);
      for (auto& [tok, other] : sessions_) {
        if (other.principal == s.principal) other.must_change_password = false;
      }
    }
    return std::string(messages::kPasswordChanged);
  }

  AssessmentView view_assessment(const std::string& token) {
    auto s = authorize(token, {Role::Taxpayer});
    return assessment_of(s.taxpayer_id);
  }

  /// Routes any write of an assessed amount through the agent's guard.
  /// Taxpayers may omit the business id (their first business is used).
  agent::GuardResult write_assessed_amount(const std::string& token, std::string business_id, Money value) {
    auto s = authorize(token, {Role::Admin, Role::BirStaff, Role::BankStaff, Role::Taxpayer}, true);
    if (business_id.empty() && s.role == Role::Taxpayer) {
      business_id = pool_.read([&](const PoolState& st) {
        auto owned = st.businesses_of(s.taxpayer_id);
        return owned.empty() ? std::string{} : owned.front()->business_id;
      });
    }
    auto r = agent_.guard_amount_write(s.role, s.principal, business_id, "assessed_amount", value);
    if (r.decision == agent::WriteDecision::Blocked) throw Error(Errc::AmountLocked, r.message);
    return r;
  }

  /// One live code per taxpayer: while an unexpired Issued code exists it
  /// is returned again.
  PaymentSlip request_reference_code(const std::string& token) {
    auto s = authorize(token, {Role::Taxpayer});
    auto view = assessment_of(s.taxpayer_id);
    if (view.total_tax.kobo() <= 0) throw Error(Errc::NonPositiveAmount, "no tax is due for this assessment");
    std::lock_guard lock(code_mutex_);
    auto now = pool_.now();
    auto live = pool_.read([&](const PoolState& st) -> std::optional<ReferenceCode> {
      std::optional<ReferenceCode> best;
      for (const auto& [code, c] : st.codes) {
        if (c.owner == view.tin && c.status == CodeStatus::Issued && now <= c.expires_at &&
            (!best || c.issued_at > best->issued_at)) {
          best = c;
        }
      }
      return best;
    });
    PaymentSlip slip;
    slip.taxpayer_name = view.taxpayer_name;
    slip.business_name = business_names(view);
    if (live) {
      slip.outstanding = true;
    } else {
      live = agent_.issue_reference_code(view.tin, view.total_tax);
    }
    slip.reference_code = live->code;
    slip.tax_amount = live->assessed_amount;
    slip.date = live->issued_at;
    slip.expires_at = live->expires_at;
    return slip;
  }

  Receipt reprint_receipt(const std::string& token, std::string_view typed_code) {
    auto s = authorize(token, {Role::Taxpayer});
    auto canonical = normalize_code(typed_code);
    std::optional<ReferenceCode> code;
    if (canonical) code = pool_.code(*canonical);
    if (!code || code->owner.str() != s.principal) throw Error(Errc::NotYourCode, "reference code is not yours");
    auto receipt = pool_.receipt_for_code(*canonical);
    if (code->status != CodeStatus::Redeemed || !receipt) throw Error(Errc::NotPaid, "reference code has not been paid");
    return *receipt;
  }

  // -- bank -----------------------------------------------------------------------

  agent::VerificationResult bank_lookup(const std::string& token, std::string_view code,
                                        const std::optional<Tin>& presenter = std::nullopt) {
    auto s = authorize(token, {Role::BankStaff});
    return agent_.verify_reference_code(code, presenter, s.principal);
  }

  /// Scores the attempt first; only a Clear verdict reaches the atomic
  /// redemption. Losing a redemption race is reported as a replay.
  PaymentResult record_payment(const std::string& token, std::string_view typed_code, Money cash,
                               const std::optional<Tin>& presenter = std::nullopt) {
    auto s = authorize(token, {Role::BankStaff});
    auto a = agent_.assess_transaction(typed_code, presenter, cash, s.principal);
    if (a.verdict == agent::Verdict::FraudAlert) {
      auto canonical = normalize_code(typed_code);
      auto code = canonical ? pool_.code(*canonical) : std::nullopt;
      bool redeemed = code && code->status == CodeStatus::Redeemed && a.rule_hits.count(agent::RuleHit::Replay);
      throw PaymentRejected(redeemed ? Errc::AlreadyRedeemed : Errc::FraudDetected, std::move(a));
    }
    auto canonical = *normalize_code(typed_code);
    auto code = *pool_.code(canonical);
    try {
      auto view_names = pool_.read([&](const PoolState& st) {
        std::string names;
        if (const auto* t = st.find_taxpayer_by_tin(code.owner.str())) {
          for (const auto* b : st.businesses_of(t->taxpayer_id)) {
            if (!names.empty()) names += "; ";
            names += b->business_name;
          }
        }
        return names;
      });
      auto settled = pool_.settle_payment(canonical, code.owner, cash, s.principal, view_names);
      return {settled.receipt, std::move(a), std::string(messages::kTransactionSuccessful)};
    } catch (const Error& e) {
      if (e.code() != Errc::AlreadyRedeemed && e.code() != Errc::ExpiredOrVoided) throw;
      a.rule_hits.insert(e.code() == Errc::AlreadyRedeemed ? agent::RuleHit::Replay : agent::RuleHit::ExpiredCode);
      a.verdict = agent::Verdict::FraudAlert;
      a.display_message = std::string(messages::kFraudAlert);
      agent_.record_alert(a, canonical, presenter, cash, s.principal);
      throw PaymentRejected(e.code() == Errc::AlreadyRedeemed ? Errc::AlreadyRedeemed : Errc::FraudDetected,
                            std::move(a));
    }
  }

  // -- mining ---------------------------------------------------------------------

  MiningResult mine(const std::string& token) {
    auto s = authorize(token, {Role::BirStaff});
    auto report = miner::run_extraction(pool_, config_.guide, s.principal);
    return {report.status, std::move(report)};
  }

  /// Digest of the committed pool state, for restart checks.
  std::string state_digest(const std::string& token) {
    authorize(token, {Role::Admin});
    return pool_.digest();
  }

  /// What an extraction would assess right now; records nothing.
  miner::MiningReport mining_report(const std::string& token) {
    authorize(token, {Role::BirStaff});
    auto report = miner::plan_extraction(pool_.snapshot(), config_.guide);
    report.started_at = pool_.now();
    return report;
  }

  /// Assessment of one taxpayer from the latest mining run (or review).
  AssessmentView assessment_of(const std::string& taxpayer_id) const {
    return pool_.read([&](const PoolState& st) {
      const auto* t = st.find_taxpayer(taxpayer_id);
      if (!t) throw Error(Errc::NotFound, "unknown taxpayer");
      AssessmentView v;
      v.taxpayer_id = t->taxpayer_id;
      v.taxpayer_name = t->full_name;
      v.tin = t->tin;
      for (const auto* b : st.businesses_of(taxpayer_id)) {
        if (!b->tier || !b->assessed_tax) continue;
        v.businesses.push_back({b->business_id, b->business_name, *b->tier, *b->assessed_tax, b->assessed_period});
        v.total_tax += *b->assessed_tax;
      }
      if (v.businesses.empty()) throw Error(Errc::NoAssessment, "no assessment yet; mining has not classified this taxpayer");
      return v;
    });
  }

  std::size_t session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
  }

 private:
  static std::optional<Money> parse_kobo(const std::string& s) {
    if (s.empty() || s.size() > 18) return std::nullopt;
    std::int64_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + (c - '0');
    }
    return Money(v);
  }

  static std::string business_names(const AssessmentView& v) {
    std::string names;
    for (const auto& b : v.businesses) {
      if (!names.empty()) names += "; ";
      names += b.business_name;
    }
    return names;
  }

  void audit_login(bool ok, const std::string& principal, const char* kind) {
    pool_.append_event(principal, ok ? EventKind::LoginOk : EventKind::LoginFail,
                       {{"principal", principal}, {"principal_kind", kind}});
  }

  Session open_session(Session s) {
    s.token = crypto::to_hex(crypto::random_bytes(24));
    s.issued_at = pool_.now();
    s.expires_at = s.issued_at + config_.session_idle;
    std::lock_guard lock(sessions_mutex_);
    // opportunistic sweep of idle sessions
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      it = s.issued_at > it->second.expires_at ? sessions_.erase(it) : std::next(it);
    }
    sessions_[s.token] = s;
    return s;
  }

  CapturedEntry capture_one(const CaptureForm& f, std::size_t row, const std::string& actor) {
    auto full_name = miner::trim(f.full_name);
    auto email = miner::trim(f.email);
    auto phone = miner::trim(f.phone);
    auto business_name = miner::normalize_name(f.business_name);
    if (full_name.empty()) throw Error(Errc::ValidationFailed, "full name is required");
    if (email.empty() && phone.empty()) throw Error(Errc::ValidationFailed, "email or phone is required");
    if (!email.empty() && (email.find('@') == std::string::npos || email.find(' ') != std::string::npos)) {
      throw Error(Errc::ValidationFailed, "malformed email address");
    }
    if (!phone.empty() && phone.find_first_not_of("+0123456789 -") != std::string::npos) {
      throw Error(Errc::ValidationFailed, "malformed phone number");
    }
    if (business_name.empty()) throw Error(Errc::ValidationFailed, "business name is required");
    for (const auto& m : f.financials) {
      if (m.revenue.kobo() < 0 || m.expenses.kobo() < 0) {
        throw Error(Errc::NegativeInput, "revenue and expenses must be non-negative");
      }
    }

    auto [taxpayer_id, business_id] = pool_.read([&](const PoolState& st) {
      std::string tid;
      for (const auto& [id, t] : st.taxpayers) {
        if ((!email.empty() && t.email == email) || (email.empty() && !phone.empty() && t.phone == phone)) {
          tid = id;
          break;
        }
      }
      std::string bid;
      if (!tid.empty()) {
        for (const auto* b : st.businesses_of(tid)) {
          if (miner::normalize_name(b->business_name) == business_name) bid = b->business_id;
        }
      }
      return std::make_pair(tid, bid);
    });

    if (taxpayer_id.empty()) {
      TaxpayerRecord t;
      t.full_name = full_name;
      t.email = email;
      t.phone = phone;
      taxpayer_id = pool_.put(t, actor);
    }
    if (business_id.empty()) {
      BusinessRecord b;
      b.owner = taxpayer_id;
      b.business_name = business_name;
      b.location = miner::trim(f.location);
      b.sector = miner::trim(f.sector);
      business_id = pool_.put(b, actor);
    }
    for (const auto& m : f.financials) {
      auto stamped = m;
      stamped.captured_at = pool_.now();
      pool_.put_financials(business_id, stamped, actor);
    }
    return {row, taxpayer_id, business_id};
  }

  DataPool& pool_;
  agent::Birgent& agent_;
  std::shared_ptr<Notifier> notifier_;
  ServiceConfig config_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, Session> sessions_;
  std::mutex capture_mutex_;
  std::mutex code_mutex_;
};

}  // namespace revsys::workflow
