#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace revsys {

/// Naira amount held as an integer count of kobo (100 kobo = 1 Naira).
class Money {
 public:
  constexpr Money() = default;
  constexpr explicit Money(std::int64_t kobo) : kobo_(kobo) {}

  static constexpr Money from_naira(std::int64_t naira) { return Money(naira * 100); }

  constexpr std::int64_t kobo() const { return kobo_; }

  constexpr auto operator<=>(const Money&) const = default;

  constexpr Money operator+(Money o) const { return Money(kobo_ + o.kobo_); }
  constexpr Money operator-(Money o) const { return Money(kobo_ - o.kobo_); }
  constexpr Money operator-() const { return Money(-kobo_); }
  constexpr Money& operator+=(Money o) {
    kobo_ += o.kobo_;
    return *this;
  }

 private:
  std::int64_t kobo_ = 0;
};

/// `₦1,234.56`, with a leading minus for negative amounts.
inline std::string format_naira(Money m) {
  std::int64_t k = m.kobo();
  const bool negative = k < 0;
  // magnitude as unsigned so INT64_MIN does not overflow
  std::uint64_t mag = negative ? 0 - static_cast<std::uint64_t>(k) : static_cast<std::uint64_t>(k);
  std::string whole = std::to_string(mag / 100);
  std::string grouped;
  const auto n = whole.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i != 0 && (n - i) % 3 == 0) grouped.push_back(',');
    grouped.push_back(whole[i]);
  }
  const auto frac = mag % 100;
  std::string out = negative ? "-" : "";
  out += "\xE2\x82\xA6";  // U+20A6 NAIRA SIGN
  out += grouped;
  out.push_back('.');
  out.push_back(static_cast<char>('0' + frac / 10));
  out.push_back(static_cast<char>('0' + frac % 10));
  return out;
}

}  // namespace revsys
