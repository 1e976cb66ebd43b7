#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "revsys/error.hpp"

namespace revsys {

/// Luhn check digit for a string of decimal digits (the check digit is
/// appended to the right).
inline int luhn_check_digit(std::string_view digits) {
  int sum = 0;
  bool doubled = true;  // rightmost payload digit is doubled
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    int d = *it - '0';
    if (doubled) {
      d *= 2;
      if (d > 9) d -= 9;
    }
    sum += d;
    doubled = !doubled;
  }
  return (10 - sum % 10) % 10;
}

/// Tax Identification Number: "ED" + 8 digits + Luhn check digit, stored
/// without separators.
class Tin {
 public:
  static constexpr std::uint64_t kCapacity = 100'000'000;

  Tin() = default;

  /// Throws ParseError unless `text` passes `validate_tin`.
  static Tin parse(std::string_view text);

  const std::string& str() const { return text_; }
  bool empty() const { return text_.empty(); }

  /// `ED-XXXXXXXX-C`
  std::string display() const {
    if (text_.size() != 11) return text_;
    return text_.substr(0, 2) + "-" + text_.substr(2, 8) + "-" + text_.substr(10, 1);
  }

  auto operator<=>(const Tin&) const = default;

 private:
  explicit Tin(std::string text) : text_(std::move(text)) {}
  friend Tin mint_tin(std::uint64_t counter);

  std::string text_;
};

inline Tin mint_tin(std::uint64_t counter) {
  if (counter >= Tin::kCapacity) {
    throw Error(Errc::CounterExhausted, "TIN counter exhausted");
  }
  std::string digits = std::to_string(counter);
  digits.insert(0, 8 - digits.size(), '0');
  return Tin("ED" + digits + static_cast<char>('0' + luhn_check_digit(digits)));
}

inline bool validate_tin(std::string_view text) {
  if (text.size() != 11 || text[0] != 'E' || text[1] != 'D') return false;
  for (char c : text.substr(2)) {
    if (c < '0' || c > '9') return false;
  }
  return luhn_check_digit(text.substr(2, 8)) == text[10] - '0';
}

inline Tin Tin::parse(std::string_view text) {
  std::string compact;
  for (char c : text) {
    if (c != '-') compact.push_back(c);
  }
  if (!validate_tin(compact)) throw Error(Errc::ParseError, "malformed TIN");
  return Tin(std::move(compact));
}

}  // namespace revsys
