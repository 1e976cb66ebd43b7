#pragma once

// Pool + agent + service + HTTP front end wired together, as used by
// `revctl serve`, the simulator's embedded mode and the tests.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "revsys/http_api.hpp"

namespace revsys {

struct AppOptions {
  std::optional<std::filesystem::path> pool_path;  // in-memory pool when absent
  PoolOptions pool;
  agent::AgentConfig agent;
  std::optional<ann::AnnModel> model = ann::AnnModel::zeros();
  workflow::ServiceConfig service;
  std::shared_ptr<workflow::Notifier> notifier;  // in-memory when null
  std::string admin_user = "admin";
  std::string admin_password;                     // no bootstrap when empty
};

class App {
 public:
  explicit App(AppOptions options) : options_(std::move(options)) {
    pool_ = options_.pool_path ? std::make_unique<DataPool>(*options_.pool_path, options_.pool)
                               : std::make_unique<DataPool>(options_.pool);
    agent_ = std::make_unique<agent::Birgent>(*pool_, options_.agent, options_.model);
    if (!options_.notifier) options_.notifier = std::make_shared<workflow::InMemoryNotifier>();
    service_ = std::make_unique<workflow::Service>(*pool_, *agent_, options_.notifier, options_.service);
    if (!options_.admin_password.empty()) service_->bootstrap_admin(options_.admin_user, options_.admin_password);
    api_ = std::make_unique<api::HttpApi>(*service_);
  }

  App(const App&) = delete;
  App& operator=(const App&) = delete;

  ~App() { stop(); }

  /// Serves on a background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    host_ = host;
    port_ = api_->start(host, port);
    return port_;
  }

  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }

  void stop() {
    if (api_) api_->stop();
    if (pool_) pool_->close();
  }

  DataPool& pool() { return *pool_; }
  agent::Birgent& agent() { return *agent_; }
  workflow::Service& service() { return *service_; }
  api::HttpApi& http() { return *api_; }
  std::shared_ptr<workflow::Notifier> notifier() const { return options_.notifier; }

 private:
  AppOptions options_;
  std::unique_ptr<DataPool> pool_;
  std::unique_ptr<agent::Birgent> agent_;
  std::unique_ptr<workflow::Service> service_;
  std::unique_ptr<api::HttpApi> api_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
};

}  // namespace revsys
