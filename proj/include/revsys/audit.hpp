#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "json.hpp"

#include "revsys/domain.hpp"
#include "revsys/error.hpp"

namespace revsys {

enum class EventKind {
  StaffCreated,
  TaxpayerCaptured,
  TinIssued,
  PasswordChanged,
  MiningRun,
  TierAssigned,
  CodeIssued,
  CodeLookup,
  PaymentRecorded,
  FraudAlert,
  LoginOk,
  LoginFail,
  AlterationBlocked,
};

inline constexpr std::string_view kEventKindNames[] = {
    "StaffCreated", "TaxpayerCaptured", "TinIssued",       "PasswordChanged", "MiningRun",
    "TierAssigned", "CodeIssued",       "CodeLookup",      "PaymentRecorded", "FraudAlert",
    "LoginOk",      "LoginFail",        "AlterationBlocked",
};

inline std::string_view to_string(EventKind k) { return kEventKindNames[static_cast<int>(k)]; }

inline EventKind parse_event_kind(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kEventKindNames); ++i) {
    if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
  }
  throw Error(Errc::ParseError, "unknown event kind: " + std::string(s));
}

/// Flat, string-valued, human-auditable payload.
using Payload = std::map<std::string, std::string>;

inline constexpr std::string_view kActorAgent = "BIRGENT";
inline constexpr std::string_view kActorSystem = "SYSTEM";

struct AuditEvent {
  std::uint64_t seq = 0;
  Timestamp at;
  std::string actor;
  EventKind kind = EventKind::LoginOk;
  Payload payload;

  const std::string& field(const std::string& key) const {
    auto it = payload.find(key);
    if (it == payload.end()) {
      throw Error(Errc::ParseError,
                  std::string(to_string(kind)) + " event #" + std::to_string(seq) + " lacks " + key);
    }
    return it->second;
  }

  std::string field_or(const std::string& key, std::string fallback = {}) const {
    auto it = payload.find(key);
    return it == payload.end() ? fallback : it->second;
  }

  bool operator==(const AuditEvent&) const = default;
};

/// One log line (no trailing newline). Field order is fixed:
/// seq, at, actor, kind, payload.
inline std::string to_log_line(const AuditEvent& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["at"] = to_millis(e.at);
  j["actor"] = e.actor;
  j["kind"] = std::string(to_string(e.kind));
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e.payload) payload[k] = v;
  j["payload"] = std::move(payload);
  return j.dump();
}

inline AuditEvent parse_log_line(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    AuditEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.at = from_millis(j.at("at").get<std::int64_t>());
    e.actor = j.at("actor").get<std::string>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    for (const auto& [k, v] : j.at("payload").items()) e.payload[k] = v.get<std::string>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, std::string("bad event-log line: ") + ex.what());
  }
}

}  // namespace revsys
