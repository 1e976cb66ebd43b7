#pragma once

#include <array>
#include <string_view>

namespace revsys::messages {

// Screen messages. These strings are part of the external interface and
// must not change.
inline constexpr std::string_view kWelcome = "Welcome!";
inline constexpr std::string_view kInvalidTaxpayerLogin = "Invalid TIN or password...try again";
inline constexpr std::string_view kInvalidStaffLogin = "Invalid username or password...try again";
inline constexpr std::string_view kAmountLocked = "Amount cannot be altered by taxpayers.";
inline constexpr std::string_view kExtractionSuccessful = "Extraction successful!";
inline constexpr std::string_view kNoEarningsRecords =
    "Tax payers cannot be clustered into tiers..No records found on earnings or profit margin";
inline constexpr std::string_view kPasswordChanged = "Password change successful!";
inline constexpr std::string_view kTransactionSuccessful = "Transaction ... successful!";
inline constexpr std::string_view kFraudAlert = "Fraud Attempt Alert!!!";

inline constexpr std::array<std::string_view, 9> kAll = {
    kWelcome,          kInvalidTaxpayerLogin, kInvalidStaffLogin,     kAmountLocked, kExtractionSuccessful,
    kNoEarningsRecords, kPasswordChanged,     kTransactionSuccessful, kFraudAlert,
};

inline constexpr bool is_table_message(std::string_view s) {
  for (auto m : kAll) {
    if (m == s) return true;
  }
  return false;
}

}  // namespace revsys::messages
