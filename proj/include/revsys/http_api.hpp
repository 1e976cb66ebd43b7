#pragma once

// JSON-over-HTTP front end for the workflow service.
//
// Every response body is a JSON object. Errors carry {"error": <code>,
// "message": <text>}; refused payments add the agent's assessment.
// Authenticated routes expect `Authorization: Bearer <token>`.

#include <atomic>
#include <ctime>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "revsys/workflow.hpp"

namespace revsys::api {

using nlohmann::json;

inline std::string iso8601(Timestamp t) {
  auto ms = to_millis(t);
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  if (ms % 1000 < 0) --secs;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(((ms % 1000) + 1000) % 1000));
  return buf;
}

inline int status_for(Errc c) {
  switch (c) {
    case Errc::ValidationFailed:
    case Errc::NegativeInput:
    case Errc::ConfirmMismatch:
    case Errc::SameAsOld:
    case Errc::EmptyPassword:
    case Errc::OldPasswordWrong:
    case Errc::ParseError:
    case Errc::NonPositiveAmount:
    case Errc::InvalidGuide:
    case Errc::MissingContext:
      return 400;
    case Errc::Unauthorized:
    case Errc::InvalidCredentials:
      return 401;
    case Errc::Forbidden:
    case Errc::MustChangePassword:
    case Errc::AmountLocked:
    case Errc::NotYourCode:
      return 403;
    case Errc::NotFound:
    case Errc::NoAssessment:
    case Errc::UnknownTin:
      return 404;
    case Errc::DuplicateUsername:
    case Errc::DuplicateTin:
    case Errc::AlreadyIssued:
    case Errc::AlreadyRedeemed:
    case Errc::FraudDetected:
    case Errc::ExpiredOrVoided:
    case Errc::NotPaid:
      return 409;
    case Errc::NoEarningsRecords:
      return 422;
    case Errc::ModelUnloaded:
    case Errc::PoolClosed:
      return 503;
    default:
      return 500;
  }
}

// -- serialization ------------------------------------------------------------

inline json to_json(const Receipt& r) {
  return {{"receipt_no", r.receipt_no},
          {"business_name", r.business_name},
          {"amount_paid_kobo", r.amount_paid.kobo()},
          {"amount_paid", format_naira(r.amount_paid)},
          {"date", iso8601(r.date)},
          {"reference_code", r.reference_code},
          {"tin", r.tin.display()}};
}

inline json to_json(const workflow::PaymentSlip& s) {
  return {{"reference_code", s.reference_code},
          {"tax_amount_kobo", s.tax_amount.kobo()},
          {"tax_amount", format_naira(s.tax_amount)},
          {"taxpayer_name", s.taxpayer_name},
          {"business_name", s.business_name},
          {"date", iso8601(s.date)},
          {"expires_at", iso8601(s.expires_at)},
          {"outstanding", s.outstanding}};
}

inline json to_json(const workflow::AssessmentView& v) {
  json businesses = json::array();
  for (const auto& b : v.businesses) {
    businesses.push_back({{"business_id", b.business_id},
                          {"business_name", b.business_name},
                          {"tier", std::string(to_string(b.tier))},
                          {"tax_kobo", b.tax.kobo()},
                          {"period", b.period ? b.period->str() : std::string{}}});
  }
  return {{"taxpayer_id", v.taxpayer_id},
          {"taxpayer_name", v.taxpayer_name},
          {"tin", v.tin.display()},
          {"businesses", businesses},
          {"tax_amount_kobo", v.total_tax.kobo()},
          {"tax_amount", format_naira(v.total_tax)},
          {"amount_editable", v.amount_editable}};
}

/// NotFound renders an empty display; Stolen shows the owner's name only.
inline json to_json(const agent::VerificationResult& r) {
  json display = json::object();
  if (r.owner) {
    display = {{"business_name", r.owner->business_name},
               {"taxpayer_name", r.owner->taxpayer_name},
               {"tax_amount_kobo", r.owner->assessed.kobo()},
               {"tax_amount", format_naira(r.owner->assessed)},
               {"tin", r.owner->tin.display()}};
  } else if (r.owner_name) {
    display = {{"original_owner", *r.owner_name}};
  }
  return {{"result", std::string(agent::to_string(r.kind))}, {"display", display}};
}

inline json to_json(const agent::FraudAssessment& a) {
  json hits = json::array();
  for (auto h : a.rule_hits) hits.push_back(std::string(agent::to_string(h)));
  json features = json::object();
  for (std::size_t i = 0; i < ann::kFeatureCount; ++i) features[std::string(ann::kFeatureNames[i])] = a.features[i];
  return {{"rule_hits", hits},
          {"ann_score", a.ann_score},
          {"verdict", a.verdict == agent::Verdict::Clear ? "Clear" : "FraudAlert"},
          {"display_message", a.display_message},
          {"features", features},
          {"model_version", a.model_version}};
}

inline json to_json(const miner::MiningReport& r) {
  json counts = json::object();
  for (int t = 0; t <= 5; ++t) counts[std::string(to_string(static_cast<Tier>(t)))] = r.tier_counts[t];
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"business_id", e.business_id},
                       {"tin", e.tin},
                       {"period", e.period.str()},
                       {"net_profit_kobo", e.net_profit.kobo()},
                       {"tier", std::string(to_string(e.tier))},
                       {"tax_kobo", e.tax.kobo()}});
  }
  return {{"run_id", r.run_id},
          {"tier_counts", counts},
          {"total_tax_kobo", r.total_tax().kobo()},
          {"entries", entries},
          {"rejected", r.rejected.size()}};
}

inline agent::FraudAssessment assessment_from_json(const json& j) {
  agent::FraudAssessment a;
  for (const auto& h : j.at("rule_hits")) {
    auto name = h.get<std::string>();
    for (auto r : {agent::RuleHit::CodeNotFound, agent::RuleHit::StolenCode, agent::RuleHit::Replay,
                   agent::RuleHit::AmountMismatch, agent::RuleHit::AlterationAttempt, agent::RuleHit::ExpiredCode}) {
      if (agent::to_string(r) == name) a.rule_hits.insert(r);
    }
  }
  a.ann_score = j.at("ann_score").get<double>();
  a.verdict = j.at("verdict") == "Clear" ? agent::Verdict::Clear : agent::Verdict::FraudAlert;
  a.display_message = j.at("display_message").get<std::string>();
  for (std::size_t i = 0; i < ann::kFeatureCount; ++i) {
    a.features[i] = j.at("features").at(std::string(ann::kFeatureNames[i])).get<double>();
  }
  a.model_version = j.value("model_version", 0);
  return a;
}

// -- server -------------------------------------------------------------------

class HttpApi {
 public:
  explicit HttpApi(workflow::Service& service) : service_(service) {
    server_.set_keep_alive_timeout(1);  // idle keep-alive connections otherwise hold up stop()
    routes();
  }

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;
  ~HttpApi() { stop(); }

  httplib::Server& server() { return server_; }

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host, int port) {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::AddressInUse, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port)) throw Error(Errc::AddressInUse, "cannot bind " + host + ":" + std::to_string(port));
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  using Handler = std::function<json(const httplib::Request&, httplib::Response&)>;

  static std::string bearer(const httplib::Request& req) {
    auto h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    return h.rfind(prefix, 0) == 0 ? h.substr(prefix.size()) : std::string{};
  }

  static json body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::ValidationFailed, "request body must be a JSON object");
    return j;
  }

  static std::string str(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw Error(Errc::ValidationFailed, std::string("missing field ") + key);
    return it->get<std::string>();
  }

  static std::int64_t kobo(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
      throw Error(Errc::ValidationFailed, std::string("missing integer field ") + key);
    }
    return it->get<std::int64_t>();
  }

  static std::optional<Tin> optional_tin(const std::string& text) {
    if (text.empty()) return std::nullopt;
    return Tin::parse(text);
  }

  static void reply(httplib::Response& res, int status, const json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  void wrap(const httplib::Request& req, httplib::Response& res, const Handler& h) {
    try {
      res.status = 200;
      auto j = h(req, res);
      if (!j.is_null()) reply(res, res.status, j);  // null: the handler wrote the body itself
    } catch (const workflow::PaymentRejected& e) {
      reply(res, status_for(e.code()),
            {{"error", std::string(errc_name(e.code()))}, {"message", e.what()}, {"assessment", to_json(e.assessment())}});
    } catch (const Error& e) {
      reply(res, status_for(e.code()), {{"error", std::string(errc_name(e.code()))}, {"message", e.what()}});
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", "ValidationFailed"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  }

  void post(const std::string& path, Handler h) {
    server_.Post(path, [this, h](const httplib::Request& req, httplib::Response& res) { wrap(req, res, h); });
  }
  void get(const std::string& path, Handler h) {
    server_.Get(path, [this, h](const httplib::Request& req, httplib::Response& res) { wrap(req, res, h); });
  }
  void put(const std::string& path, Handler h) {
    server_.Put(path, [this, h](const httplib::Request& req, httplib::Response& res) { wrap(req, res, h); });
  }

  static workflow::CaptureForm form_from_json(const json& j) {
    workflow::CaptureForm f;
    f.full_name = j.value("full_name", "");
    f.email = j.value("email", "");
    f.phone = j.value("phone", "");
    f.business_name = j.value("business_name", "");
    f.location = j.value("location", "");
    f.sector = j.value("sector", "");
    for (const auto& m : j.value("financials", json::array())) {
      auto period = Period::parse(m.at("period").get<std::string>());
      if (!period) throw Error(Errc::ValidationFailed, "malformed period");
      f.financials.push_back({*period, Money(m.at("revenue_kobo").get<std::int64_t>()),
                              Money(m.at("expenses_kobo").get<std::int64_t>()), {}});
    }
    return f;
  }

  void routes() {
    auto& svc = service_;

    get("/api/health", [&](auto&, auto&) { return json{{"status", "ok"}, {"last_seq", svc.pool().last_seq()}}; });

    get("/api/admin/state-digest", [&](const httplib::Request& req, auto&) {
      auto digest = svc.state_digest(bearer(req));
      return json{{"last_seq", svc.pool().last_seq()}, {"digest", digest}};
    });

    post("/api/admin/staff", [&](const httplib::Request& req, httplib::Response& res) {
      auto j = body(req);
      auto u = svc.create_staff(bearer(req), str(j, "username"), parse_role(str(j, "role")), str(j, "password"));
      res.status = 201;
      return json{{"username", u.username}, {"role", std::string(to_string(u.role))}};
    });

    post("/api/auth/staff-login", [&](const httplib::Request& req, auto&) {
      auto j = body(req);
      auto r = svc.login_staff(str(j, "username"), str(j, "password"));
      return json{{"token", r.session.token}, {"role", std::string(to_string(r.session.role))}, {"message", r.message}};
    });

    post("/api/auth/taxpayer-login", [&](const httplib::Request& req, auto&) {
      auto j = body(req);
      auto r = svc.login_taxpayer(str(j, "tin"), str(j, "password"));
      return json{{"token", r.session.token},
                  {"role", "Taxpayer"},
                  {"must_change_password", r.session.must_change_password},
                  {"message", r.message}};
    });

    post("/api/auth/logout", [&](const httplib::Request& req, auto&) {
      svc.logout(bearer(req));
      return json{{"logged_out", true}};
    });

    post("/api/bir/taxpayers", [&](const httplib::Request& req, httplib::Response& res) {
      workflow::CaptureResult r;
      auto type = req.get_header_value("Content-Type");
      if (type.rfind("text/csv", 0) == 0) {
        r = svc.register_taxpayers_csv(bearer(req), req.body);
      } else {
        auto j = json::parse(req.body.empty() ? std::string("{}") : req.body);
        if (j.is_array()) {
          auto session = svc.authorize(bearer(req), {Role::BirStaff});
          std::vector<workflow::CaptureForm> forms;
          for (const auto& f : j) forms.push_back(form_from_json(f));
          r = svc.capture(forms, session.principal);
        } else {
          r = svc.register_taxpayer(bearer(req), form_from_json(j));
        }
      }
      json stored = json::array();
      for (const auto& s : r.stored) {
        stored.push_back({{"row", s.row}, {"taxpayer_id", s.taxpayer_id}, {"business_id", s.business_id}});
      }
      json errors = json::array();
      for (const auto& e : r.errors) errors.push_back({{"row", e.row}, {"error", "ValidationFailed"}, {"reason", e.reason}});
      res.status = r.stored.empty() && !r.errors.empty() ? 400 : 201;
      return json{{"stored", stored}, {"errors", errors}};
    });

    post(R"(/api/admin/tin/([A-Za-z0-9]+))", [&](const httplib::Request& req, auto&) {
      const std::string id = req.matches[1];
      auto tin = svc.issue_tin(bearer(req), id);
      return json{{"taxpayer_id", id}, {"tin", tin.display()}, {"notified", true}};
    });

    post("/api/taxpayer/password", [&](const httplib::Request& req, auto&) {
      auto j = body(req);
      auto msg = svc.change_password(bearer(req), str(j, "old_password"), str(j, "new_password"),
                                     str(j, "confirm_password"));
      return json{{"message", msg}};
    });

    get("/api/taxpayer/assessment",
        [&](const httplib::Request& req, auto&) { return to_json(svc.view_assessment(bearer(req))); });

    put("/api/taxpayer/assessment", [&](const httplib::Request& req, auto&) {
      auto j = body(req);
      svc.write_assessed_amount(bearer(req), j.value("business_id", ""), Money(kobo(j, "tax_amount_kobo")));
      return json{{"updated", true}};
    });

    put(R"(/api/bir/assessment/([A-Za-z0-9]+))", [&](const httplib::Request& req, auto&) {
      auto j = body(req);
      svc.write_assessed_amount(bearer(req), req.matches[1], Money(kobo(j, "tax_amount_kobo")));
      return json{{"updated", true}, {"business_id", std::string(req.matches[1])}};
    });

    post("/api/taxpayer/reference-code", [&](const httplib::Request& req, httplib::Response& res) {
      auto slip = svc.request_reference_code(bearer(req));
      res.status = slip.outstanding ? 200 : 201;
      return to_json(slip);
    });

    get(R"(/api/bank/lookup/([^/]+))", [&](const httplib::Request& req, auto&) {
      auto presenter = optional_tin(req.get_param_value("tin"));
      return to_json(svc.bank_lookup(bearer(req), req.matches[1].str(), presenter));
    });

    post("/api/bank/payment", [&](const httplib::Request& req, auto&) {
      auto j = body(req);
      auto r = svc.record_payment(bearer(req), str(j, "code"), Money(kobo(j, "cash_kobo")),
                                  optional_tin(j.value("tin", "")));
      return json{{"message", r.message}, {"receipt", to_json(r.receipt)}, {"assessment", to_json(r.assessment)}};
    });

    get(R"(/api/taxpayer/receipt/([^/]+))", [&](const httplib::Request& req, auto&) {
      return to_json(svc.reprint_receipt(bearer(req), req.matches[1].str()));
    });

    get("/api/bir/report", [&](const httplib::Request& req, httplib::Response& res) {
      res.set_content(miner::to_csv(svc.mining_report(bearer(req))), "text/csv");
      return json();
    });

    post("/api/bir/mine", [&](const httplib::Request& req, auto&) {
      auto r = svc.mine(bearer(req));
      auto j = to_json(r.report);
      j["message"] = r.message;
      return j;
    });
  }

  workflow::Service& service_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace revsys::api
