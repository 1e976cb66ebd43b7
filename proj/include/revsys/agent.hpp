#pragma once

// BIRGENT: issues single-use payment reference codes, verifies them at the
// bank, guards the assessed amount against alteration, and scores payment
// attempts with deterministic rules plus the neural scorer. It observes the
// pool exclusively through its audit tap.

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "revsys/ann.hpp"
#include "revsys/crypto.hpp"
#include "revsys/data_pool.hpp"
#include "revsys/messages.hpp"

namespace revsys::agent {

enum class RuleHit { CodeNotFound, StolenCode, Replay, AmountMismatch, AlterationAttempt, ExpiredCode };

inline std::string_view to_string(RuleHit r) {
  switch (r) {
    case RuleHit::CodeNotFound: return "CodeNotFound";
    case RuleHit::StolenCode: return "StolenCode";
    case RuleHit::Replay: return "Replay";
    case RuleHit::AmountMismatch: return "AmountMismatch";
    case RuleHit::AlterationAttempt: return "AlterationAttempt";
    case RuleHit::ExpiredCode: return "ExpiredCode";
  }
  return "?";
}

enum class Verdict { Clear, FraudAlert };

struct FraudAssessment {
  std::set<RuleHit> rule_hits;
  double ann_score = 0;
  Verdict verdict = Verdict::Clear;
  std::string display_message;
  ann::FeatureVector features{};
  int model_version = 0;
};

/// What the teller's screen may show for a looked-up code. NotFound
/// carries nothing at all.
struct VerificationResult {
  enum class Kind { Valid, NotFound, Stolen, Replayed, Expired };

  struct OwnerDetails {
    std::string taxpayer_name;
    std::string business_name;
    Tin tin;
    Money assessed;
  };

  Kind kind = Kind::NotFound;
  std::optional<OwnerDetails> owner;     // Valid only
  std::optional<std::string> owner_name;  // Stolen only

  bool operator==(const VerificationResult& o) const {
    auto same_owner = owner.has_value() == o.owner.has_value() &&
                      (!owner || (owner->taxpayer_name == o.owner->taxpayer_name &&
                                  owner->business_name == o.owner->business_name && owner->tin == o.owner->tin &&
                                  owner->assessed == o.owner->assessed));
    return kind == o.kind && same_owner && owner_name == o.owner_name;
  }
};

inline std::string_view to_string(VerificationResult::Kind k) {
  switch (k) {
    case VerificationResult::Kind::Valid: return "Valid";
    case VerificationResult::Kind::NotFound: return "NotFound";
    case VerificationResult::Kind::Stolen: return "Stolen";
    case VerificationResult::Kind::Replayed: return "Replayed";
    case VerificationResult::Kind::Expired: return "Expired";
  }
  return "?";
}

/// Everything the scorer needs to know about one payment attempt.
struct TransactionContext {
  std::optional<ReferenceCode> code;  // nullopt when the presented code does not exist
  std::optional<Money> cash;
  Timestamp now;
  std::size_t prior_lookups = 0;      // lookups and payment attempts on this code so far
  Tier owner_tier = Tier::Exempt;
  std::size_t presenter_logins = 0;
  std::size_t presenter_login_failures = 0;
  std::optional<Tin> presenter;
};

inline constexpr double kCodeAgeHorizonHours = 720.0;
inline constexpr double kLookupSaturation = 4.0;

/// Components are clamped into [0, 1]. Unknown codes score as maximally
/// deviant, old and mismatched.
inline ann::FeatureVector featurize(const TransactionContext& ctx) {
  if (!ctx.cash) throw Error(Errc::MissingContext, "payment amount missing from transaction context");
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  ann::FeatureVector x{};
  if (ctx.code) {
    const double assessed = static_cast<double>(ctx.code->assessed_amount.kobo());
    const double diff = std::abs(static_cast<double>(ctx.cash->kobo()) - assessed);
    x[0] = assessed > 0 ? clamp01(diff / assessed) : 1.0;
    const double hours =
        std::chrono::duration<double, std::ratio<3600>>(ctx.now - ctx.code->issued_at).count();
    x[1] = clamp01(hours / kCodeAgeHorizonHours);
  } else {
    x[0] = 1.0;
    x[1] = 1.0;
  }
  x[2] = clamp01(static_cast<double>(ctx.prior_lookups) / kLookupSaturation);
  x[3] = clamp01(tier_ordinal(ctx.owner_tier) / 5.0);
  x[4] = ctx.presenter_logins == 0
             ? 0.0
             : clamp01(static_cast<double>(ctx.presenter_login_failures) / static_cast<double>(ctx.presenter_logins));
  x[5] = (!ctx.code || (ctx.presenter && *ctx.presenter != ctx.code->owner)) ? 1.0 : 0.0;
  return x;
}

struct AgentConfig {
  double alert_threshold = 0.8;
  std::chrono::hours code_lifetime{72};
  crypto::Bytes secret = crypto::random_bytes(32);
};

enum class WriteDecision { Blocked, Allowed };

struct GuardResult {
  WriteDecision decision = WriteDecision::Blocked;
  std::string message;
};

class Birgent {
 public:
  Birgent(DataPool& pool, AgentConfig config, std::optional<ann::AnnModel> model = ann::AnnModel::zeros())
      : pool_(pool), config_(std::move(config)), tap_(pool.subscribe_tap()) {
    if (model) replace_model(std::move(*model));
    for (const auto& e : pool_.events()) {
      if (e.seq > tap_.start_seq()) break;
      observe(e);
    }
  }

  Birgent(const Birgent&) = delete;
  Birgent& operator=(const Birgent&) = delete;

  const AgentConfig& config() const { return config_; }

  // -- model ------------------------------------------------------------------

  /// Atomic swap: concurrent scorers see the old or the new model whole.
  void replace_model(ann::AnnModel model) {
    model.check();
    auto next = std::make_shared<const ann::AnnModel>(std::move(model));
    std::lock_guard lock(model_mutex_);
    model_ = std::move(next);
  }

  void unload_model() {
    std::lock_guard lock(model_mutex_);
    model_.reset();
  }

  std::shared_ptr<const ann::AnnModel> model() const {
    std::lock_guard lock(model_mutex_);
    return model_;
  }

  // -- reference codes --------------------------------------------------------

  /// Code text is Crockford base32 of the first 10 bytes of
  /// HMAC-SHA256(secret, owner|assessed|now|nonce).
  ReferenceCode issue_reference_code(const Tin& owner, Money assessed) {
    if (!pool_.taxpayer_by_tin(owner.str())) throw Error(Errc::UnknownTin, "unknown TIN " + owner.str());
    if (assessed.kobo() <= 0) throw Error(Errc::NonPositiveAmount, "assessed amount must be positive");
    for (int attempt = 0; attempt < 3; ++attempt) {
      ReferenceCode c;
      c.owner = owner;
      c.assessed_amount = assessed;
      c.issued_at = pool_.now();
      c.expires_at = c.issued_at + config_.code_lifetime;
      c.status = CodeStatus::Issued;
      auto nonce = crypto::random_bytes(8);
      std::string message = owner.str() + "|" + std::to_string(assessed.kobo()) + "|" +
                            std::to_string(to_millis(c.issued_at)) + "|" + crypto::to_hex(nonce);
      auto mac = crypto::hmac_sha256(config_.secret, crypto::as_bytes(message));
      c.code = *normalize_code(crypto::crockford_base32(std::span(mac).first(10)));
      try {
        pool_.put(c, std::string(kActorAgent));
        return c;
      } catch (const Error& e) {
        if (e.code() != Errc::AlreadyIssued) throw;
      }
    }
    throw Error(Errc::CollisionRetryExhausted, "reference code collision retries exhausted");
  }

  /// Resolves a typed code by stored record. Precedence: NotFound, Stolen
  /// (presenter differs from owner), Replayed (not Issued), Expired. Every
  /// call is logged as a CodeLookup.
  VerificationResult verify_reference_code(std::string_view typed, const std::optional<Tin>& presenter,
                                           const std::string& actor) {
    auto canonical = normalize_code(typed);
    std::optional<ReferenceCode> code;
    if (canonical) code = pool_.code(*canonical);
    const Timestamp now = pool_.now();

    VerificationResult result;
    bool expire = false;
    if (!code) {
      result.kind = VerificationResult::Kind::NotFound;
    } else if (presenter && *presenter != code->owner) {
      result.kind = VerificationResult::Kind::Stolen;
      result.owner_name = owner_name(code->owner);
    } else if (code->status != CodeStatus::Issued) {
      result.kind = code->status == CodeStatus::Expired ? VerificationResult::Kind::Expired
                                                        : VerificationResult::Kind::Replayed;
    } else if (now > code->expires_at) {
      result.kind = VerificationResult::Kind::Expired;
      expire = true;
    } else {
      result.kind = VerificationResult::Kind::Valid;
      result.owner = owner_details(*code);
    }

    Payload p{{"code", canonical ? *canonical : std::string(typed.substr(0, 64))},
              {"result", std::string(to_string(result.kind))}};
    if (presenter) p["presenter"] = presenter->str();
    if (expire) p["expire"] = "1";
    try {
      pool_.append_event(actor, EventKind::CodeLookup, std::move(p));
    } catch (const Error& e) {
      // lost a race with a concurrent state change; log the lookup without it
      if (!expire || e.code() != Errc::IntegrityViolation) throw;
      pool_.append_event(actor, EventKind::CodeLookup,
                         {{"code", *canonical}, {"result", std::string(to_string(result.kind))}});
    }
    return result;
  }

  /// Snapshot of what the agent knows about a payment attempt.
  TransactionContext build_context(std::string_view typed, const std::optional<Tin>& presenter,
                                   std::optional<Money> cash) {
    TransactionContext ctx;
    ctx.now = pool_.now();
    ctx.cash = cash;
    ctx.presenter = presenter;
    auto canonical = normalize_code(typed);
    if (canonical) ctx.code = pool_.code(*canonical);
    std::lock_guard lock(observe_mutex_);
    drain_locked();
    std::string key = canonical ? *canonical : std::string(typed);
    if (auto it = code_touches_.find(key); it != code_touches_.end()) ctx.prior_lookups = it->second;
    if (ctx.code) {
      ctx.owner_tier = pool_.read([&](const PoolState& s) {
        Tier best = Tier::Exempt;
        if (const auto* t = s.find_taxpayer_by_tin(ctx.code->owner.str())) {
          for (const auto* b : s.businesses_of(t->taxpayer_id)) {
            if (b->tier && *b->tier > best) best = *b->tier;
          }
        }
        return best;
      });
    }
    if (presenter) {
      if (auto it = logins_.find(presenter->str()); it != logins_.end()) {
        ctx.presenter_logins = it->second.first + it->second.second;
        ctx.presenter_login_failures = it->second.second;
      }
    }
    return ctx;
  }

  /// Rules first, then the neural score. A FraudAlert verdict is logged as
  /// a FraudAlert event together with a Rejected transaction; a stolen code
  /// is voided.
  FraudAssessment assess_transaction(std::string_view typed, const std::optional<Tin>& presenter, Money cash,
                                     const std::string& teller) {
    auto model = this->model();
    if (!model) throw Error(Errc::ModelUnloaded, "no scoring model loaded");

    auto ctx = build_context(typed, presenter, cash);
    FraudAssessment a;
    a.features = featurize(ctx);
    a.model_version = model->version;
    auto verification = verify_reference_code(typed, presenter, teller);

    switch (verification.kind) {
      case VerificationResult::Kind::NotFound: a.rule_hits.insert(RuleHit::CodeNotFound); break;
      case VerificationResult::Kind::Stolen: a.rule_hits.insert(RuleHit::StolenCode); break;
      case VerificationResult::Kind::Replayed: a.rule_hits.insert(RuleHit::Replay); break;
      case VerificationResult::Kind::Expired: a.rule_hits.insert(RuleHit::ExpiredCode); break;
      case VerificationResult::Kind::Valid: break;
    }
    if (ctx.code) {
      if (ctx.code->status == CodeStatus::Redeemed || ctx.code->status == CodeStatus::Voided) {
        a.rule_hits.insert(RuleHit::Replay);
      }
      if (ctx.code->status == CodeStatus::Expired || ctx.now > ctx.code->expires_at) {
        a.rule_hits.insert(RuleHit::ExpiredCode);
      }
      if (cash != ctx.code->assessed_amount) a.rule_hits.insert(RuleHit::AmountMismatch);
      if (alteration_attempted_after_issue(ctx.code->owner, ctx.code->code)) {
        a.rule_hits.insert(RuleHit::AlterationAttempt);
      }
    }

    a.ann_score = ann::ann_forward(*model, a.features);
    const bool alert = !a.rule_hits.empty() || a.ann_score >= config_.alert_threshold;
    a.verdict = alert ? Verdict::FraudAlert : Verdict::Clear;
    a.display_message = std::string(alert ? messages::kFraudAlert : messages::kTransactionSuccessful);
    if (alert) record_alert(a, typed, presenter, cash, teller);
    return a;
  }

  /// Only BIR staff may change an assessed amount (after review); every
  /// other role is blocked and the attempt is logged.
  GuardResult guard_amount_write(Role role, const std::string& actor, const std::string& business_id,
                                 std::string_view field, Money attempted) {
    if (role != Role::BirStaff || field != "assessed_amount") {
      pool_.append_event(actor, EventKind::AlterationBlocked,
                         {{"role", std::string(to_string(role))},
                          {"field", std::string(field)},
                          {"business_id", business_id},
                          {"attempted_kobo", std::to_string(attempted.kobo())},
                          {"owner_tin", owner_tin_of(business_id)}});
      return {WriteDecision::Blocked, std::string(messages::kAmountLocked)};
    }
    if (attempted.kobo() < 0) throw Error(Errc::NegativeInput, "assessed amount must be non-negative");
    pool_.commit(actor, EventKind::TierAssigned, [&](const PoolState& s) {
      const auto* b = s.find_business(business_id);
      if (!b) throw Error(Errc::NotFound, "unknown business " + business_id);
      Payload p{{"business_id", business_id},
                {"tier", std::string(to_string(b->tier.value_or(Tier::Exempt)))},
                {"tax_kobo", std::to_string(attempted.kobo())},
                {"source", "review"}};
      if (b->assessed_period) p["period"] = b->assessed_period->str();
      return p;
    });
    return {WriteDecision::Allowed, {}};
  }

  /// Logs a FraudAlert and its Rejected transaction. A StolenCode hit voids
  /// the code if it is still Issued.
  void record_alert(const FraudAssessment& a, std::string_view typed, const std::optional<Tin>& presenter, Money cash,
                    const std::string& teller) {
    std::string hits;
    for (auto h : a.rule_hits) {
      if (!hits.empty()) hits += ',';
      hits += to_string(h);
    }
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", a.ann_score);
    auto canonical = normalize_code(typed);
    std::string code_key = canonical ? *canonical : std::string(typed.substr(0, 64));
    const bool want_void = a.rule_hits.count(RuleHit::StolenCode) > 0;
    pool_.commit(std::string(kActorAgent), EventKind::FraudAlert, [&](const PoolState& s) {
      Payload p{{"code", code_key},
                {"rule_hits", hits},
                {"ann_score", score},
                {"teller", teller},
                {"amount_kobo", std::to_string(cash.kobo())},
                {"txn_id", s.next_txn_id()}};
      if (presenter) p["presenter"] = presenter->str();
      const auto* c = s.find_code(code_key);
      if (want_void && c && c->status == CodeStatus::Issued) p["void"] = "1";
      return p;
    });
  }

 private:
  std::string owner_name(const Tin& tin) const {
    auto t = pool_.taxpayer_by_tin(tin.str());
    return t ? t->full_name : std::string{};
  }

  std::string owner_tin_of(const std::string& business_id) const {
    return pool_.read([&](const PoolState& s) -> std::string {
      const auto* b = s.find_business(business_id);
      if (!b) return {};
      const auto* t = s.find_taxpayer(b->owner);
      return t ? t->tin.str() : std::string{};
    });
  }

  VerificationResult::OwnerDetails owner_details(const ReferenceCode& c) const {
    return pool_.read([&](const PoolState& s) {
      VerificationResult::OwnerDetails d;
      d.tin = c.owner;
      d.assessed = c.assessed_amount;
      if (const auto* t = s.find_taxpayer_by_tin(c.owner.str())) {
        d.taxpayer_name = t->full_name;
        for (const auto* b : s.businesses_of(t->taxpayer_id)) {
          if (!d.business_name.empty()) d.business_name += "; ";
          d.business_name += b->business_name;
        }
      }
      return d;
    });
  }

  // Ordered by log sequence, not clock: both can land in the same millisecond.
  bool alteration_attempted_after_issue(const Tin& owner, const std::string& code) {
    std::lock_guard lock(observe_mutex_);
    drain_locked();
    auto it = last_alteration_.find(owner.str());
    if (it == last_alteration_.end()) return false;
    auto issued = code_issued_seq_.find(code);
    return issued == code_issued_seq_.end() || it->second > issued->second;
  }

  void observe(const AuditEvent& e) {
    switch (e.kind) {
      case EventKind::CodeLookup:
      case EventKind::PaymentRecorded:
      case EventKind::FraudAlert:
        ++code_touches_[e.field_or("code")];
        break;
      case EventKind::CodeIssued:
        code_issued_seq_[e.field_or("code")] = e.seq;
        break;
      case EventKind::LoginOk:
        ++logins_[e.field_or("principal")].first;
        break;
      case EventKind::LoginFail:
        ++logins_[e.field_or("principal")].second;
        break;
      case EventKind::AlterationBlocked: {
        auto owner = e.field_or("owner_tin");
        if (!owner.empty()) last_alteration_[owner] = e.seq;
        break;
      }
      default:
        break;
    }
  }

  void drain_locked() {
    while (auto e = tap_.try_next()) observe(*e);
  }

  DataPool& pool_;
  AgentConfig config_;

  mutable std::mutex model_mutex_;
  std::shared_ptr<const ann::AnnModel> model_;

  std::mutex observe_mutex_;
  Tap tap_;
  std::map<std::string, std::size_t> code_touches_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> logins_;  // principal -> (ok, fail)
  std::map<std::string, std::uint64_t> last_alteration_;   // owner TIN -> seq of last blocked attempt
  std::map<std::string, std::uint64_t> code_issued_seq_;   // code -> seq of its CodeIssued event
};

}  // namespace revsys::agent
