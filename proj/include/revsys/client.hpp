#pragma once

// Minimal JSON client for the HTTP API.

#include <string>

#include "httplib.h"
#include "json.hpp"

#include "revsys/error.hpp"

namespace revsys::api {

struct ApiResponse {
  int status = 0;
  nlohmann::json body;
  std::string text;

  bool ok() const { return status >= 200 && status < 300; }
  std::string message() const { return body.is_object() ? body.value("message", "") : std::string{}; }
  std::string error() const { return body.is_object() ? body.value("error", "") : std::string{}; }
};

class ApiClient {
 public:
  /// `base_url` like "http://127.0.0.1:8080".
  explicit ApiClient(const std::string& base_url) : client_(base_url) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(60);
    client_.set_keep_alive(true);
  }

  ApiResponse get(const std::string& path, const std::string& token = {}) {
    return finish(client_.Get(path, headers(token)), path);
  }

  /// Non-JSON GET; the raw body lands in `text`.
  ApiResponse get_text(const std::string& path, const std::string& token = {}) {
    auto r = client_.Get(path, headers(token));
    auto out = finish(r, path);
    out.text = r->body;
    return out;
  }

  ApiResponse post(const std::string& path, const nlohmann::json& body = nlohmann::json::object(),
                   const std::string& token = {}) {
    return finish(client_.Post(path, headers(token), body.dump(), "application/json"), path);
  }

  ApiResponse post_csv(const std::string& path, const std::string& csv, const std::string& token = {}) {
    return finish(client_.Post(path, headers(token), csv, "text/csv"), path);
  }

  ApiResponse put(const std::string& path, const nlohmann::json& body, const std::string& token = {}) {
    return finish(client_.Put(path, headers(token), body.dump(), "application/json"), path);
  }

 private:
  static httplib::Headers headers(const std::string& token) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return h;
  }

  static ApiResponse finish(const httplib::Result& r, const std::string& path) {
    if (!r) throw Error(Errc::IoError, "service unreachable (" + httplib::to_string(r.error()) + ") at " + path);
    ApiResponse out;
    out.status = r->status;
    out.body = nlohmann::json::parse(r->body, nullptr, false);
    if (out.body.is_discarded()) out.body = nlohmann::json::object();
    return out;
  }

  httplib::Client client_;
};

}  // namespace revsys::api
