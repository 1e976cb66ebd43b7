#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace revsys {

enum class Errc {
  CounterExhausted,
  EmptyPassword,
  PoolClosed,
  PoolLocked,
  IntegrityViolation,
  DuplicateTin,
  DuplicateUsername,
  NotFound,
  AlreadyRedeemed,
  ExpiredOrVoided,
  NegativeInput,
  InvalidGuide,
  NoEarningsRecords,
  UnknownTin,
  NonPositiveAmount,
  CollisionRetryExhausted,
  ModelUnloaded,
  DimensionMismatch,
  DegenerateData,
  NonFiniteLoss,
  MissingContext,
  Forbidden,
  MustChangePassword,
  Unauthorized,
  InvalidCredentials,
  ValidationFailed,
  AlreadyIssued,
  OldPasswordWrong,
  ConfirmMismatch,
  SameAsOld,
  NoAssessment,
  AmountLocked,
  FraudDetected,
  NotYourCode,
  NotPaid,
  ConfigInvalid,
  ParseError,
  IoError,
  AddressInUse,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::CounterExhausted: return "CounterExhausted";
    case Errc::EmptyPassword: return "EmptyPassword";
    case Errc::PoolClosed: return "PoolClosed";
    case Errc::PoolLocked: return "PoolLocked";
    case Errc::IntegrityViolation: return "IntegrityViolation";
    case Errc::DuplicateTin: return "DuplicateTin";
    case Errc::DuplicateUsername: return "DuplicateUsername";
    case Errc::NotFound: return "NotFound";
    case Errc::AlreadyRedeemed: return "AlreadyRedeemed";
    case Errc::ExpiredOrVoided: return "ExpiredOrVoided";
    case Errc::NegativeInput: return "NegativeInput";
    case Errc::InvalidGuide: return "InvalidGuide";
    case Errc::NoEarningsRecords: return "NoEarningsRecords";
    case Errc::UnknownTin: return "UnknownTin";
    case Errc::NonPositiveAmount: return "NonPositiveAmount";
    case Errc::CollisionRetryExhausted: return "CollisionRetryExhausted";
    case Errc::ModelUnloaded: return "ModelUnloaded";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::MissingContext: return "MissingContext";
    case Errc::Forbidden: return "Forbidden";
    case Errc::MustChangePassword: return "MustChangePassword";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::InvalidCredentials: return "InvalidCredentials";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::AlreadyIssued: return "AlreadyIssued";
    case Errc::OldPasswordWrong: return "OldPasswordWrong";
    case Errc::ConfirmMismatch: return "ConfirmMismatch";
    case Errc::SameAsOld: return "SameAsOld";
    case Errc::NoAssessment: return "NoAssessment";
    case Errc::AmountLocked: return "AmountLocked";
    case Errc::FraudDetected: return "FraudDetected";
    case Errc::NotYourCode: return "NotYourCode";
    case Errc::NotPaid: return "NotPaid";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::AddressInUse: return "AddressInUse";
  }
  return "Unknown";
}

/// Domain failure. `code()` is the stable discriminant; `what()` is the
/// human-readable text (for user-facing failures, a message-table string).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  explicit Error(Errc code) : Error(code, std::string(errc_name(code))) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace revsys
