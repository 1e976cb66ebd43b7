#pragma once

// Thin wrappers over OpenSSL: digests, HMAC, CSPRNG, PBKDF2 password
// digests and Crockford base32.

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "revsys/error.hpp"

namespace revsys::crypto {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xF]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(Errc::ParseError, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::ParseError, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

inline std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

inline std::string sha256_hex(std::string_view data) { return to_hex(sha256(as_bytes(data))); }

inline std::array<std::uint8_t, 32> hmac_sha256(std::span<const std::uint8_t> key,
                                                std::span<const std::uint8_t> message) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(), message.size(),
           out.data(), &len) == nullptr ||
      len != out.size()) {
    throw Error(Errc::IoError, "HMAC-SHA256 failed");
  }
  return out;
}

inline Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n != 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    throw Error(Errc::IoError, "CSPRNG failure");
  }
  return out;
}

inline bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

/// Random string over [A-Za-z0-9], rejection-sampled so every symbol is
/// equiprobable.
inline std::string random_alphanumeric(std::size_t n) {
  static constexpr std::string_view alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  std::string out;
  out.reserve(n);
  while (out.size() < n) {
    for (auto b : random_bytes(n)) {
      if (b >= 248) continue;  // 248 = 4 * 62
      out.push_back(alphabet[b % alphabet.size()]);
      if (out.size() == n) break;
    }
  }
  return out;
}

inline constexpr std::string_view kCrockfordAlphabet = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

/// Crockford base32, big-endian bit order, no padding.
inline std::string crockford_base32(std::span<const std::uint8_t> data) {
  std::string out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (auto b : data) {
    buffer = (buffer << 8) | b;
    bits += 8;
    while (bits >= 5) {
      out.push_back(kCrockfordAlphabet[(buffer >> (bits - 5)) & 0x1F]);
      bits -= 5;
    }
  }
  if (bits > 0) out.push_back(kCrockfordAlphabet[(buffer << (5 - bits)) & 0x1F]);
  return out;
}

// ---------------------------------------------------------------------------
// Password digests: "pbkdf2-sha256$<iterations>$<salt hex>$<key hex>"

inline constexpr int kDefaultPbkdf2Iterations = 20000;

inline std::string hash_password(std::string_view plain, std::span<const std::uint8_t> salt,
                                 int iterations = kDefaultPbkdf2Iterations) {
  if (plain.empty()) throw Error(Errc::EmptyPassword, "password must not be empty");
  std::array<std::uint8_t, 32> key{};
  if (PKCS5_PBKDF2_HMAC(plain.data(), static_cast<int>(plain.size()), salt.data(),
                        static_cast<int>(salt.size()), iterations, EVP_sha256(),
                        static_cast<int>(key.size()), key.data()) != 1) {
    throw Error(Errc::IoError, "PBKDF2 failed");
  }
  return "pbkdf2-sha256$" + std::to_string(iterations) + "$" + to_hex(salt) + "$" + to_hex(key);
}

inline std::string hash_password(std::string_view plain, int iterations = kDefaultPbkdf2Iterations) {
  return hash_password(plain, random_bytes(16), iterations);
}

/// False for malformed digests as well as wrong passwords.
inline bool verify_password(std::string_view plain, std::string_view digest) {
  if (plain.empty()) return false;
  constexpr std::string_view prefix = "pbkdf2-sha256$";
  if (digest.substr(0, prefix.size()) != prefix) return false;
  auto rest = digest.substr(prefix.size());
  auto p1 = rest.find('$');
  if (p1 == std::string_view::npos) return false;
  auto p2 = rest.find('$', p1 + 1);
  if (p2 == std::string_view::npos) return false;
  try {
    int iterations = std::stoi(std::string(rest.substr(0, p1)));
    if (iterations <= 0) return false;
    Bytes salt = from_hex(rest.substr(p1 + 1, p2 - p1 - 1));
    Bytes expected = from_hex(rest.substr(p2 + 1));
    std::string recomputed = hash_password(plain, salt, iterations);
    Bytes actual = from_hex(std::string_view(recomputed).substr(recomputed.rfind('$') + 1));
    return constant_time_equal(actual, expected);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace revsys::crypto
