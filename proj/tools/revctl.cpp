// revctl: operator CLI for the tax-collection service.
//
// Exit status: 0 success, 1 domain or service error, 2 usage error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include "CLI11.hpp"

#include "revsys/config.hpp"
#include "revsys/simulate.hpp"

using namespace revsys;

namespace {

struct Remote {
  std::string url = "http://127.0.0.1:8080";
  std::string user;
  std::string password;

  void attach(CLI::App* cmd, const std::string& default_user) {
    user = default_user;
    cmd->add_option("--url", url, "Service base URL")->envname("REVCTL_URL")->capture_default_str();
    cmd->add_option("--user", user, "Staff username")->envname("REVCTL_USER")->capture_default_str();
    cmd->add_option("--password", password, "Staff password")->envname("REVCTL_PASSWORD")->required();
  }

  std::string login(api::ApiClient& c) const {
    auto r = c.post("/api/auth/staff-login", {{"username", user}, {"password", password}});
    if (!r.ok()) throw Error(Errc::InvalidCredentials, r.message());
    return r.body.at("token").get<std::string>();
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_serve(const std::string& config_path, const std::string& bind_override) {
  auto cfg = config::load_config(config_path);
  if (!bind_override.empty()) {
    auto patched = config::config_from_text("bind = \"" + bind_override + "\"");
    cfg.host = patched.host;
    cfg.port = patched.port;
  }
  // Signals go to sigwait below, not to whichever server thread is running.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  App app(config::to_app_options(cfg));
  int port = app.start(cfg.host, cfg.port);
  std::cout << "revctl: serving on http://" << cfg.host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cout << "revctl: signal " << sig << ", shutting down" << std::endl;
  app.stop();
  return 0;
}

int cmd_seed(const Remote& remote, const std::string& csv_path) {
  api::ApiClient c(remote.url);
  auto token = remote.login(c);
  auto r = c.post_csv("/api/bir/taxpayers", read_file(csv_path), token);
  if (!r.body.contains("stored")) {
    std::cerr << "revctl: " << r.message() << "\n";
    return 1;
  }
  std::cout << "stored " << r.body.at("stored").size() << " rows, rejected " << r.body.at("errors").size() << "\n";
  for (const auto& e : r.body.at("errors")) {
    std::cout << "  row " << e.at("row").get<int>() << ": " << e.at("reason").get<std::string>() << "\n";
  }
  return r.ok() ? 0 : 1;
}

int cmd_mine(const Remote& remote) {
  api::ApiClient c(remote.url);
  auto token = remote.login(c);
  auto r = c.post("/api/bir/mine", {}, token);
  std::cout << r.message() << "\n";
  if (r.ok()) {
    for (const auto& [tier, n] : r.body.at("tier_counts").items()) std::cout << "  " << tier << " " << n << "\n";
    std::cout << "  total_tax_kobo " << r.body.at("total_tax_kobo") << "\n";
  }
  return r.ok() ? 0 : 1;
}

int cmd_report(const Remote& remote, const std::string& out) {
  api::ApiClient c(remote.url);
  auto token = remote.login(c);
  auto r = c.get_text("/api/bir/report", token);
  if (!r.ok()) {
    std::cerr << "revctl: " << r.message() << "\n";
    return 1;
  }
  if (out == "-") {
    std::cout << r.text;
  } else {
    sim::write_text(out, r.text);
  }
  return 0;
}

struct SimulateArgs {
  sim::SimulationSpec spec;
  std::string mix = "honest=0.8,suppression=0.05,stolen_code=0.05,replay=0.05,fabricated_code=0.05";
  std::string url;
  std::string admin_user = "admin";
  std::string admin_password;
  std::string spool;
  std::string model;
  std::string examples = "examples.csv";
  std::string ground_truth = "ground_truth.csv";
};

int cmd_simulate(SimulateArgs a) {
  a.spec.mix = sim::FraudMix::parse(a.mix);
  sim::SimulationResult r;
  if (a.url.empty()) {
    std::optional<ann::AnnModel> model = ann::AnnModel::zeros();
    if (!a.model.empty()) model = ann::load_model(a.model);
    r = sim::run_embedded(a.spec, model);
  } else {
    if (a.spool.empty()) throw CLI::ValidationError("--spool", "required with --url (default passwords are read from it)");
    sim::DriverOptions d;
    d.base_url = a.url;
    d.admin_user = a.admin_user;
    d.admin_password = a.admin_password;
    d.password_for = sim::spool_password_source(a.spool);
    r = sim::run_simulation(a.spec, d);
  }
  sim::write_text(a.examples, sim::examples_csv(r.examples()));
  sim::write_text(a.ground_truth, sim::ground_truth_csv(r.transactions));
  std::cout << sim::to_json(r.summary).dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& examples, ann::TrainOptions opt, const std::string& out) {
  auto data = ann::load_examples(examples);
  std::vector<double> curve;
  auto model = ann::ann_train(data, opt, &curve);
  ann::save_model(model, out);
  std::cout << "trained on " << data.size() << " examples: loss " << curve.front() << " -> " << curve.back()
            << ", model version " << model.version << " written to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& examples, double threshold) {
  auto data = ann::load_examples(examples);
  if (data.empty()) throw Error(Errc::DegenerateData, "no examples in " + examples);
  auto model = model_path.empty() ? ann::AnnModel::zeros() : ann::load_model(model_path);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& ex : data) {
    scores.push_back(ann::ann_forward(model, ex.features));
    labels.push_back(ex.label);
  }
  auto m = evaluate_scores(scores, labels, threshold);
  std::cout << "examples " << data.size() << "\n"
            << "threshold " << threshold << "\n"
            << "precision " << m.precision << "\n"
            << "recall " << m.recall << "\n"
            << "auc " << m.auc << "\n"
            << "tp " << m.true_positives << " fp " << m.false_positives << " fn " << m.false_negatives << " tn "
            << m.true_negatives << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"revctl: serve, seed, mine, report, simulate, train, eval"};
  cli.require_subcommand(1);

  std::string config_path, bind;
  auto* serve = cli.add_subcommand("serve", "Run the HTTP API until SIGINT/SIGTERM");
  serve->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", bind, "Override bind address (host:port)");

  Remote seed_remote, mine_remote, report_remote;
  std::string csv_path, report_out = "-";
  auto* seed = cli.add_subcommand("seed", "Capture taxpayers from a CSV file");
  seed_remote.attach(seed, "bir");
  seed->add_option("--csv", csv_path, "Capture CSV")->required()->check(CLI::ExistingFile);
  auto* mine = cli.add_subcommand("mine", "Run an extraction and print its status");
  mine_remote.attach(mine, "bir");
  auto* report = cli.add_subcommand("report", "Write the mining report CSV");
  report_remote.attach(report, "bir");
  report->add_option("--out", report_out, "Output file, '-' for stdout")->capture_default_str();

  SimulateArgs sa;
  auto* simulate = cli.add_subcommand("simulate", "Drive honest and fraudulent payers through the API");
  simulate->add_option("--n", sa.spec.n_taxpayers, "Taxpayers")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--months", sa.spec.months, "Months")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--mix", sa.mix, "Behaviour fractions, summing to 1")->capture_default_str();
  simulate->add_option("--seed", sa.spec.seed, "RNG seed")->capture_default_str();
  simulate->add_option("--parallelism", sa.spec.parallelism, "Concurrent API clients")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  simulate->add_option("--url", sa.url, "Live service; omitted: a private in-memory service");
  simulate->add_option("--admin-user", sa.admin_user, "Admin username (with --url)")->capture_default_str();
  simulate->add_option("--admin-password", sa.admin_password, "Admin password (with --url)")
      ->envname("REVCTL_ADMIN_PASSWORD");
  simulate->add_option("--spool", sa.spool, "Notifier outbox.ndjson of the live service");
  simulate->add_option("--model", sa.model, "Model for the private service")->check(CLI::ExistingFile);
  simulate->add_option("--examples", sa.examples, "Labeled feature CSV")->capture_default_str();
  simulate->add_option("--ground-truth", sa.ground_truth, "Ground-truth CSV")->capture_default_str();

  std::string train_examples, train_out = "model.txt";
  ann::TrainOptions topt;
  auto* train = cli.add_subcommand("train", "Fit the fraud scorer");
  train->add_option("--examples", train_examples, "Labeled feature CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--epochs", topt.epochs)->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--lr", topt.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--seed", topt.seed)->capture_default_str();
  train->add_option("--base-version", topt.base_version)->capture_default_str();
  train->add_option("--out", train_out, "Model file")->capture_default_str();

  std::string eval_model, eval_examples;
  double threshold = 0.8;
  auto* eval = cli.add_subcommand("eval", "Score labeled examples");
  eval->add_option("--model", eval_model, "Model file; omitted: the untrained zero model")->check(CLI::ExistingFile);
  eval->add_option("--examples", eval_examples, "Labeled feature CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--threshold", threshold)->capture_default_str()->check(CLI::Range(0.0, 1.0));

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = cli.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (serve->parsed()) return cmd_serve(config_path, bind);
    if (seed->parsed()) return cmd_seed(seed_remote, csv_path);
    if (mine->parsed()) return cmd_mine(mine_remote);
    if (report->parsed()) return cmd_report(report_remote, report_out);
    if (simulate->parsed()) return cmd_simulate(sa);
    if (train->parsed()) return cmd_train(train_examples, topt, train_out);
    if (eval->parsed()) return cmd_eval(eval_model, eval_examples, threshold);
  } catch (const CLI::ParseError& e) {
    std::cerr << "revctl: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "revctl: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "revctl: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
