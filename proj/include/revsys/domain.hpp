#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "revsys/error.hpp"
#include "revsys/money.hpp"
#include "revsys/tin.hpp"

namespace revsys {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline std::int64_t to_millis(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_millis(std::int64_t ms) { return Timestamp(std::chrono::milliseconds(ms)); }

enum class Role { Admin, BirStaff, BankStaff, Taxpayer };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::Admin: return "Admin";
    case Role::BirStaff: return "BirStaff";
    case Role::BankStaff: return "BankStaff";
    case Role::Taxpayer: return "Taxpayer";
  }
  return "?";
}

inline Role parse_role(std::string_view s) {
  if (s == "Admin") return Role::Admin;
  if (s == "BirStaff") return Role::BirStaff;
  if (s == "BankStaff") return Role::BankStaff;
  if (s == "Taxpayer") return Role::Taxpayer;
  throw Error(Errc::ParseError, "unknown role: " + std::string(s));
}

// Ordered: Exempt < T1 < ... < T5.
enum class Tier : std::uint8_t { Exempt = 0, T1, T2, T3, T4, T5 };

inline std::string_view to_string(Tier t) {
  static constexpr std::string_view names[] = {"Exempt", "T1", "T2", "T3", "T4", "T5"};
  return names[static_cast<int>(t)];
}

inline Tier parse_tier(std::string_view s) {
  for (int i = 0; i <= 5; ++i) {
    if (to_string(static_cast<Tier>(i)) == s) return static_cast<Tier>(i);
  }
  throw Error(Errc::ParseError, "unknown tier: " + std::string(s));
}

inline int tier_ordinal(Tier t) { return static_cast<int>(t); }

/// Calendar month, `YYYY-MM`.
struct Period {
  int year = 0;
  int month = 0;

  static std::optional<Period> parse(std::string_view s) {
    if (s.size() != 7 || s[4] != '-') return std::nullopt;
    int y = 0;
    int m = 0;
    for (int i = 0; i < 4; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      y = y * 10 + (s[i] - '0');
    }
    for (int i = 5; i < 7; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      m = m * 10 + (s[i] - '0');
    }
    if (y < 1900 || m < 1 || m > 12) return std::nullopt;
    return Period{y, m};
  }

  std::string str() const {
    std::string out = std::to_string(year);
    out.push_back('-');
    if (month < 10) out.push_back('0');
    out += std::to_string(month);
    return out;
  }

  auto operator<=>(const Period&) const = default;
};

struct MonthlyFinancials {
  Period period;
  Money revenue;
  Money expenses;
  Timestamp captured_at;

  bool operator==(const MonthlyFinancials&) const = default;
};

enum class TaxpayerStatus { Provisional, Active };

struct TaxpayerRecord {
  std::string taxpayer_id;
  Tin tin;  // empty until issued
  std::string full_name;
  std::string email;
  std::string phone;
  std::string password_hash;
  bool must_change_password = true;
  TaxpayerStatus status = TaxpayerStatus::Provisional;

  bool operator==(const TaxpayerRecord&) const = default;
};

/// `owner` is the owning taxpayer's id; a business can be captured (and
/// mined) before its owner has been issued a TIN.
struct BusinessRecord {
  std::string business_id;
  std::string owner;
  std::string business_name;
  std::string location;
  std::string sector;
  std::vector<MonthlyFinancials> financials;  // sorted by period, unique
  std::optional<Tier> tier;
  std::optional<Money> assessed_tax;
  std::optional<Period> assessed_period;

  const MonthlyFinancials* latest() const {
    return financials.empty() ? nullptr : &financials.back();
  }

  bool operator==(const BusinessRecord&) const = default;
};

enum class CodeStatus { Issued, Redeemed, Expired, Voided };

inline std::string_view to_string(CodeStatus s) {
  switch (s) {
    case CodeStatus::Issued: return "Issued";
    case CodeStatus::Redeemed: return "Redeemed";
    case CodeStatus::Expired: return "Expired";
    case CodeStatus::Voided: return "Voided";
  }
  return "?";
}

inline CodeStatus parse_code_status(std::string_view s) {
  if (s == "Issued") return CodeStatus::Issued;
  if (s == "Redeemed") return CodeStatus::Redeemed;
  if (s == "Expired") return CodeStatus::Expired;
  if (s == "Voided") return CodeStatus::Voided;
  throw Error(Errc::ParseError, "unknown code status: " + std::string(s));
}

/// Only Issued -> {Redeemed, Expired, Voided}; terminal states are final.
constexpr bool is_valid_transition(CodeStatus from, CodeStatus to) {
  return from == CodeStatus::Issued && to != CodeStatus::Issued;
}

struct ReferenceCode {
  std::string code;  // XXXX-XXXX-XXXX-XXXX
  Tin owner;
  Money assessed_amount;
  Timestamp issued_at;
  Timestamp expires_at;
  CodeStatus status = CodeStatus::Issued;

  bool operator==(const ReferenceCode&) const = default;
};

/// Canonical `XXXX-XXXX-XXXX-XXXX` form of a teller-typed code: case folded,
/// separators dropped, Crockford aliases (O->0, I/L->1) resolved. Returns
/// nullopt when the input cannot be a reference code.
inline std::optional<std::string> normalize_code(std::string_view typed) {
  std::string raw;
  for (char c : typed) {
    if (c == '-' || c == ' ') continue;
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    if (c == 'O') c = '0';
    if (c == 'I' || c == 'L') c = '1';
    bool ok = (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z' && c != 'U');
    if (!ok) return std::nullopt;
    raw.push_back(c);
  }
  if (raw.size() != 16) return std::nullopt;
  return raw.substr(0, 4) + "-" + raw.substr(4, 4) + "-" + raw.substr(8, 4) + "-" + raw.substr(12, 4);
}

enum class TxnOutcome { Success, Rejected };

struct TransactionRecord {
  std::string txn_id;
  std::string code;
  Tin payer;
  Money amount_paid;
  std::string teller;
  Timestamp at;
  TxnOutcome outcome = TxnOutcome::Success;

  bool operator==(const TransactionRecord&) const = default;
};

struct Receipt {
  std::string receipt_no;
  std::string business_name;
  Money amount_paid;
  Timestamp date;
  std::string reference_code;
  Tin tin;

  bool operator==(const Receipt&) const = default;
};

struct UserAccount {
  std::string username;
  std::string password_hash;
  Role role = Role::BirStaff;

  bool operator==(const UserAccount&) const = default;
};

}  // namespace revsys
