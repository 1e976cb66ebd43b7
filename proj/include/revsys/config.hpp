#pragma once

// `revctl serve` configuration: a flat TOML subset.
//
//   # comment
//   pool_path = "var/pool"
//   bind = "127.0.0.1:8080"
//   alert_threshold = 0.8
//   fsync = true
//   [agent]
//   model = "model.txt"        -> key "agent.model"
//
// Strings are double-quoted (\" \\ \n \t escapes), numbers are decimal,
// booleans are true/false. Relative paths resolve against the config
// file's directory.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "revsys/app.hpp"

namespace revsys::config {

using Value = std::variant<std::string, double, bool>;

inline std::map<std::string, Value> parse_toml_subset(const std::string& text) {
  std::map<std::string, Value> out;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw Error(Errc::ConfigInvalid, "line " + std::to_string(lineno) + ": " + why);
  };
  auto trim = [](std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string{};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  };
  auto valid_key = [](const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    }
    return true;
  };

  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t[0] == '[') {
      if (t.back() != ']') fail("unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (!valid_key(section)) fail("bad section name");
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    auto key = trim(std::string_view(t).substr(0, eq));
    if (!valid_key(key)) fail("bad key '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    auto rest = trim(std::string_view(t).substr(eq + 1));
    if (rest.empty()) fail("missing value for " + key);

    Value v;
    if (rest[0] == '"') {
      std::string s;
      std::size_t i = 1;
      bool closed = false;
      for (; i < rest.size(); ++i) {
        char c = rest[i];
        if (c == '"') {
          closed = true;
          ++i;
          break;
        }
        if (c == '\\') {
          if (++i >= rest.size()) fail("dangling escape");
          switch (rest[i]) {
            case 'n': s += '\n'; break;
            case 't': s += '\t'; break;
            case '"': s += '"'; break;
            case '\\': s += '\\'; break;
            default: fail("unknown escape");
          }
        } else {
          s += c;
        }
      }
      if (!closed) fail("unterminated string");
      auto tail = trim(std::string_view(rest).substr(i));
      if (!tail.empty() && tail[0] != '#') fail("trailing characters after string");
      v = s;
    } else {
      if (auto hash = rest.find('#'); hash != std::string::npos) rest = trim(std::string_view(rest).substr(0, hash));
      if (rest == "true") {
        v = true;
      } else if (rest == "false") {
        v = false;
      } else {
        double d = 0;
        auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), d);
        if (ec != std::errc{} || p != rest.data() + rest.size()) fail("bad value for " + key);
        v = d;
      }
    }
    if (!out.emplace(key, v).second) fail("duplicate key " + key);
  }
  return out;
}

struct ServeConfig {
  std::optional<std::filesystem::path> pool_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> rate_guide;
  double alert_threshold = 0.8;
  std::optional<std::filesystem::path> mac_secret_path;
  std::optional<std::filesystem::path> model;
  std::string admin_user = "admin";
  std::string admin_password;
  int pbkdf2_iterations = 100'000;
  std::optional<std::filesystem::path> notifier_spool;
  std::uint64_t snapshot_interval = 1000;
  bool fsync = true;
};

inline ServeConfig config_from_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
  auto kv = parse_toml_subset(text);
  ServeConfig c;
  auto take = [&](const char* key) -> std::optional<Value> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto str = [&](const char* key) -> std::optional<std::string> {
    auto v = take(key);
    if (!v) return std::nullopt;
    if (!std::holds_alternative<std::string>(*v)) throw Error(Errc::ConfigInvalid, std::string(key) + " must be a string");
    return std::get<std::string>(*v);
  };
  auto path = [&](const char* key) -> std::optional<std::filesystem::path> {
    auto s = str(key);
    if (!s) return std::nullopt;
    if (s->empty()) throw Error(Errc::ConfigInvalid, std::string(key) + " is empty");
    std::filesystem::path p(*s);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  auto num = [&](const char* key) -> std::optional<double> {
    auto v = take(key);
    if (!v) return std::nullopt;
    if (!std::holds_alternative<double>(*v)) throw Error(Errc::ConfigInvalid, std::string(key) + " must be a number");
    return std::get<double>(*v);
  };
  auto whole = [&](const char* key, double lo, double hi) -> std::optional<std::int64_t> {
    auto d = num(key);
    if (!d) return std::nullopt;
    if (*d != static_cast<double>(static_cast<std::int64_t>(*d)) || *d < lo || *d > hi) {
      throw Error(Errc::ConfigInvalid, std::string(key) + " out of range");
    }
    return static_cast<std::int64_t>(*d);
  };

  c.pool_path = path("pool_path");
  if (auto b = str("bind")) {
    auto colon = b->rfind(':');
    if (colon == std::string::npos || colon == 0) throw Error(Errc::ConfigInvalid, "bind must be host:port");
    c.host = b->substr(0, colon);
    int port = 0;
    auto ps = b->substr(colon + 1);
    auto [p, ec] = std::from_chars(ps.data(), ps.data() + ps.size(), port);
    if (ec != std::errc{} || p != ps.data() + ps.size() || port < 0 || port > 65535) {
      throw Error(Errc::ConfigInvalid, "bad port in bind");
    }
    c.port = port;
  }
  c.rate_guide = path("rate_guide");
  if (auto t = num("alert_threshold")) {
    if (!(*t >= 0 && *t <= 1)) throw Error(Errc::ConfigInvalid, "alert_threshold must lie in [0, 1]");
    c.alert_threshold = *t;
  }
  c.mac_secret_path = path("mac_secret_path");
  c.model = path("model");
  if (auto u = str("admin_user")) c.admin_user = *u;
  if (auto p = str("admin_password")) c.admin_password = *p;
  if (auto i = whole("pbkdf2_iterations", 1, 1e8)) c.pbkdf2_iterations = static_cast<int>(*i);
  c.notifier_spool = path("notifier_spool");
  if (auto s = whole("snapshot_interval", 0, 1e12)) c.snapshot_interval = static_cast<std::uint64_t>(*s);
  if (auto f = take("fsync")) {
    if (!std::holds_alternative<bool>(*f)) throw Error(Errc::ConfigInvalid, "fsync must be true or false");
    c.fsync = std::get<bool>(*f);
  }
  if (!kv.empty()) throw Error(Errc::ConfigInvalid, "unknown key " + kv.begin()->first);
  return c;
}

inline ServeConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), file.parent_path());
}

/// Reads the MAC secret, creating a fresh 32-byte one (mode 0600) when the
/// file does not exist yet.
inline crypto::Bytes load_or_create_secret(const std::filesystem::path& p) {
  namespace fs = std::filesystem;
  if (!fs::exists(p)) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    auto fresh = crypto::random_bytes(32);
    {
      std::ofstream out(p, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::ConfigInvalid, "cannot create secret " + p.string());
      out.write(reinterpret_cast<const char*>(fresh.data()), static_cast<std::streamsize>(fresh.size()));
    }
    fs::permissions(p, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
    return fresh;
  }
  std::ifstream in(p, std::ios::binary);
  crypto::Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (out.size() < 16) throw Error(Errc::ConfigInvalid, "secret " + p.string() + " shorter than 16 bytes");
  return out;
}

inline AppOptions to_app_options(const ServeConfig& c) {
  AppOptions o;
  o.pool_path = c.pool_path;
  o.pool.snapshot_interval = c.snapshot_interval;
  o.pool.fsync = c.fsync;
  o.agent.alert_threshold = c.alert_threshold;
  o.agent.secret = c.mac_secret_path ? load_or_create_secret(*c.mac_secret_path) : crypto::random_bytes(32);
  try {
    if (c.rate_guide) o.service.guide = miner::load_guide(*c.rate_guide);
    if (c.model) o.model = ann::load_model(*c.model);
  } catch (const Error& e) {
    throw Error(Errc::ConfigInvalid, e.what());
  }
  o.service.pbkdf2_iterations = c.pbkdf2_iterations;
  // default passwords must land somewhere an operator can read them
  if (auto spool = c.notifier_spool ? c.notifier_spool : c.pool_path) {
    o.notifier = std::make_shared<workflow::FileSpoolNotifier>(*spool);
  }
  o.admin_user = c.admin_user;
  o.admin_password = c.admin_password;
  return o;
}

}  // namespace revsys::config
