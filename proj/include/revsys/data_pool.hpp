#pragma once

// Embedded store: an in-memory entity state backed by an append-only,
// newline-delimited event log plus a periodic snapshot. All mutations
// serialize through one commit path; readers share the latest committed
// state. Taps receive every committed event in seq order.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "revsys/audit.hpp"
#include "revsys/clock.hpp"
#include "revsys/pool_state.hpp"

namespace revsys {

inline constexpr int kSnapshotSchemaVersion = 1;

struct PoolOptions {
  std::uint64_t snapshot_interval = 1000;  // 0 disables automatic snapshots
  bool fsync = false;
  std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>();
};

namespace detail {

struct TapChannel {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<AuditEvent> queue;
  bool closed = false;

  void push(const AuditEvent& e) {
    {
      std::lock_guard lock(mutex);
      queue.push_back(e);
    }
    ready.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mutex);
      closed = true;
    }
    ready.notify_all();
  }
};

class FileHandle {
 public:
  FileHandle() = default;
  explicit FileHandle(int fd) : fd_(fd) {}
  FileHandle(FileHandle&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileHandle& operator=(FileHandle&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~FileHandle() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

}  // namespace detail

/// Ordered subscription to the audit log. Delivery is push-based; events
/// already delivered (by seq) are dropped, so each is seen exactly once.
class Tap {
 public:
  Tap() = default;

  std::optional<AuditEvent> try_next() {
    std::lock_guard lock(channel_->mutex);
    return pop_locked();
  }

  /// Blocks until an event arrives, the pool closes, or `timeout` elapses.
  std::optional<AuditEvent> next(std::chrono::milliseconds timeout = std::chrono::hours(24)) {
    std::unique_lock lock(channel_->mutex);
    channel_->ready.wait_for(lock, timeout, [&] { return !channel_->queue.empty() || channel_->closed; });
    return pop_locked();
  }

  /// Seq of the last event committed before this tap was opened.
  std::uint64_t start_seq() const { return start_seq_; }
  std::uint64_t last_seq() const { return last_seq_; }

 private:
  friend class DataPool;
  Tap(std::shared_ptr<detail::TapChannel> ch, std::uint64_t start)
      : channel_(std::move(ch)), start_seq_(start), last_seq_(start) {}

  std::optional<AuditEvent> pop_locked() {
    while (!channel_->queue.empty()) {
      AuditEvent e = std::move(channel_->queue.front());
      channel_->queue.pop_front();
      if (e.seq <= last_seq_) continue;
      last_seq_ = e.seq;
      return e;
    }
    return std::nullopt;
  }

  std::shared_ptr<detail::TapChannel> channel_;
  std::uint64_t start_seq_ = 0;
  std::uint64_t last_seq_ = 0;
};

/// Result of a successful payment settlement: the redeemed code plus the
/// transaction and receipt committed with it.
struct Settlement {
  ReferenceCode code;
  TransactionRecord transaction;
  Receipt receipt;
};

class DataPool {
 public:
  /// Volatile pool (no files).
  explicit DataPool(PoolOptions options = {}) : options_(std::move(options)) {}

  /// Persistent pool rooted at `dir` (created if missing). Holds an
  /// exclusive lock on the directory until closed.
  explicit DataPool(const std::filesystem::path& dir, PoolOptions options = {})
      : options_(std::move(options)), dir_(dir) {
    std::filesystem::create_directories(dir);
    lock_fd_ = detail::FileHandle(::open((dir / "LOCK").c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644));
    if (!lock_fd_) throw Error(Errc::IoError, "cannot open pool lock in " + dir.string());
    if (::flock(lock_fd_.get(), LOCK_EX | LOCK_NB) != 0) {
      throw Error(Errc::PoolLocked, "pool is in use by another process: " + dir.string());
    }
    recover();
    log_fd_ = detail::FileHandle(::open(log_path().c_str(), O_CREAT | O_WRONLY | O_APPEND | O_CLOEXEC, 0644));
    if (!log_fd_) throw Error(Errc::IoError, "cannot open event log " + log_path().string());
  }

  DataPool(const DataPool&) = delete;
  DataPool& operator=(const DataPool&) = delete;

  ~DataPool() { close(); }

  std::filesystem::path log_path() const { return dir_ / "events.log"; }
  std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }
  bool persistent() const { return !dir_.empty(); }

  const Clock& clock() const { return *options_.clock; }
  Timestamp now() const { return options_.clock->now(); }

  bool is_open() const {
    std::lock_guard lock(commit_mutex_);
    return open_;
  }

  /// Flushes, closes taps and releases the directory lock. Idempotent.
  void close() {
    std::lock_guard lock(commit_mutex_);
    if (!open_) return;
    open_ = false;
    if (log_fd_ && options_.fsync) ::fsync(log_fd_.get());
    log_fd_.reset();
    lock_fd_.reset();
    for (auto& weak : taps_) {
      if (auto ch = weak.lock()) ch->close();
    }
    taps_.clear();
  }

  // -- commit path ----------------------------------------------------------

  /// Appends one event whose payload is computed from the committed state
  /// under the commit lock. Throws (without side effects) if the event
  /// fails validation.
  AuditEvent commit(std::string actor, EventKind kind,
                    const std::function<Payload(const PoolState&)>& build) {
    std::lock_guard lock(commit_mutex_);
    if (!open_) throw Error(Errc::PoolClosed, "pool is closed");
    AuditEvent e;
    e.seq = state_.last_seq + 1;
    e.at = options_.clock->now();
    e.actor = std::move(actor);
    e.kind = kind;
    e.payload = build(state_);
    state_.validate(e);
    write_line(to_log_line(e));
    {
      std::unique_lock state_lock(state_mutex_);
      state_.apply(e);
      events_.push_back(e);
    }
    broadcast(e);
    if (persistent() && options_.snapshot_interval != 0 && e.seq % options_.snapshot_interval == 0) {
      write_snapshot_locked();
    }
    return e;
  }

  /// Appends an event with a fixed payload; returns its seq.
  std::uint64_t append_event(std::string actor, EventKind kind, Payload payload) {
    return commit(std::move(actor), kind, [&](const PoolState&) { return payload; }).seq;
  }

  Tap subscribe_tap() {
    std::lock_guard lock(commit_mutex_);
    if (!open_) throw Error(Errc::PoolClosed, "pool is closed");
    auto ch = std::make_shared<detail::TapChannel>();
    taps_.push_back(ch);
    return Tap(std::move(ch), state_.last_seq);
  }

  // -- reads ----------------------------------------------------------------

  /// Runs `f(const PoolState&)` under a shared lock.
  template <class F>
  decltype(auto) read(F&& f) const {
    std::shared_lock lock(state_mutex_);
    return std::forward<F>(f)(static_cast<const PoolState&>(state_));
  }

  PoolState snapshot() const {
    return read([](const PoolState& s) { return s; });
  }

  std::vector<AuditEvent> events() const {
    std::shared_lock lock(state_mutex_);
    return events_;
  }

  std::uint64_t last_seq() const {
    return read([](const PoolState& s) { return s.last_seq; });
  }

  std::string digest() const {
    return read([](const PoolState& s) { return state_digest(s); });
  }

  /// Writes the snapshot file now (no-op for volatile pools).
  void checkpoint() {
    std::lock_guard lock(commit_mutex_);
    if (persistent() && open_) write_snapshot_locked();
  }

  /// Folds `events` from an empty state.
  static PoolState replay(const std::vector<AuditEvent>& events) {
    PoolState s;
    for (const auto& e : events) {
      if (e.seq != s.last_seq + 1) {
        throw Error(Errc::IntegrityViolation, "event log gap before seq " + std::to_string(e.seq));
      }
      s.validate(e);
      s.apply(e);
    }
    return s;
  }

  // -- typed records ----------------------------------------------------------

  /// Stores a captured taxpayer; assigns `taxpayer_id` when empty. Returns the id.
  std::string put(const TaxpayerRecord& t, std::string actor = std::string(kActorSystem)) {
    auto e = commit(std::move(actor), EventKind::TaxpayerCaptured, [&](const PoolState& s) {
      Payload p{{"entity", "taxpayer"},
                {"taxpayer_id", t.taxpayer_id.empty() ? s.next_taxpayer_id() : t.taxpayer_id},
                {"full_name", t.full_name},
                {"email", t.email},
                {"phone", t.phone}};
      if (!t.tin.empty()) {
        p["tin"] = t.tin.str();
        p["password_hash"] = t.password_hash;
        p["must_change"] = t.must_change_password ? "1" : "0";
        p["status"] = t.status == TaxpayerStatus::Active ? "Active" : "Provisional";
      }
      return p;
    });
    return e.payload.at("taxpayer_id");
  }

  /// Stores a business and its financials; assigns `business_id` when empty.
  std::string put(const BusinessRecord& b, std::string actor = std::string(kActorSystem)) {
    for (const auto& f : b.financials) {
      if (f.revenue.kobo() < 0 || f.expenses.kobo() < 0) {
        throw Error(Errc::NegativeInput, "revenue and expenses must be non-negative");
      }
    }
    auto e = commit(actor, EventKind::TaxpayerCaptured, [&](const PoolState& s) {
      return Payload{{"entity", "business"},
                     {"business_id", b.business_id.empty() ? s.next_business_id() : b.business_id},
                     {"owner", b.owner},
                     {"business_name", b.business_name},
                     {"location", b.location},
                     {"sector", b.sector}};
    });
    const auto& id = e.payload.at("business_id");
    for (const auto& f : b.financials) put_financials(id, f, actor);
    return id;
  }

  void put_financials(const std::string& business_id, const MonthlyFinancials& f,
                      std::string actor = std::string(kActorSystem)) {
    append_event(std::move(actor), EventKind::TaxpayerCaptured,
                 {{"entity", "financials"},
                  {"business_id", business_id},
                  {"period", f.period.str()},
                  {"revenue_kobo", std::to_string(f.revenue.kobo())},
                  {"expenses_kobo", std::to_string(f.expenses.kobo())},
                  {"captured_at", std::to_string(to_millis(f.captured_at))}});
  }

  void put(const UserAccount& u, std::string actor = std::string(kActorSystem)) {
    append_event(std::move(actor), EventKind::StaffCreated,
                 {{"username", u.username}, {"role", std::string(to_string(u.role))},
                  {"password_hash", u.password_hash}});
  }

  void put(const ReferenceCode& c, std::string actor = std::string(kActorAgent)) {
    append_event(std::move(actor), EventKind::CodeIssued,
                 {{"code", c.code},
                  {"owner", c.owner.str()},
                  {"assessed_kobo", std::to_string(c.assessed_amount.kobo())},
                  {"issued_at", std::to_string(to_millis(c.issued_at))},
                  {"expires_at", std::to_string(to_millis(c.expires_at))}});
  }

  std::optional<TaxpayerRecord> taxpayer(const std::string& id) const {
    return read([&](const PoolState& s) -> std::optional<TaxpayerRecord> {
      auto* t = s.find_taxpayer(id);
      return t ? std::optional(*t) : std::nullopt;
    });
  }
  std::optional<TaxpayerRecord> taxpayer_by_tin(const std::string& tin) const {
    return read([&](const PoolState& s) -> std::optional<TaxpayerRecord> {
      auto* t = s.find_taxpayer_by_tin(tin);
      return t ? std::optional(*t) : std::nullopt;
    });
  }
  std::optional<BusinessRecord> business(const std::string& id) const {
    return read([&](const PoolState& s) -> std::optional<BusinessRecord> {
      auto* b = s.find_business(id);
      return b ? std::optional(*b) : std::nullopt;
    });
  }
  std::optional<UserAccount> user(const std::string& name) const {
    return read([&](const PoolState& s) -> std::optional<UserAccount> {
      auto it = s.users.find(name);
      return it == s.users.end() ? std::nullopt : std::optional(it->second);
    });
  }
  std::optional<ReferenceCode> code(const std::string& code) const {
    return read([&](const PoolState& s) -> std::optional<ReferenceCode> {
      auto* c = s.find_code(code);
      return c ? std::optional(*c) : std::nullopt;
    });
  }
  std::optional<Receipt> receipt_for_code(const std::string& code) const {
    return read([&](const PoolState& s) -> std::optional<Receipt> {
      auto it = s.receipt_by_code.find(code);
      if (it == s.receipt_by_code.end()) return std::nullopt;
      return s.receipts.at(it->second);
    });
  }

  /// Issued -> Redeemed. Exactly one caller succeeds per code.
  ReferenceCode redeem_code(const std::string& code, std::string actor = std::string(kActorSystem)) {
    commit(std::move(actor), EventKind::PaymentRecorded, [&](const PoolState& s) {
      check_redeemable(s, code);
      return Payload{{"code", code}};
    });
    return *this->code(code);
  }

  /// Redeems `code` and records the Success transaction and its receipt in
  /// the same commit.
  Settlement settle_payment(const std::string& code, const Tin& payer, Money amount, const std::string& teller,
                            const std::string& business_name) {
    auto e = commit(teller, EventKind::PaymentRecorded, [&](const PoolState& s) {
      const auto& c = check_redeemable(s, code);
      if (amount != c.assessed_amount) {
        throw Error(Errc::IntegrityViolation, "settled amount differs from assessed amount");
      }
      return Payload{{"code", code},
                     {"txn_id", s.next_txn_id()},
                     {"payer", payer.str()},
                     {"amount_kobo", std::to_string(amount.kobo())},
                     {"teller", teller},
                     {"receipt_no", s.next_receipt_no()},
                     {"business_name", business_name}};
    });
    return read([&](const PoolState& s) {
      return Settlement{s.codes.at(code), s.transactions.at(e.payload.at("txn_id")),
                        s.receipts.at(e.payload.at("receipt_no"))};
    });
  }

 private:
  static const ReferenceCode& check_redeemable(const PoolState& s, const std::string& code) {
    auto* c = s.find_code(code);
    if (!c) throw Error(Errc::NotFound, "unknown reference code");
    if (c->status == CodeStatus::Redeemed) throw Error(Errc::AlreadyRedeemed, "code already redeemed");
    if (c->status != CodeStatus::Issued) throw Error(Errc::ExpiredOrVoided, "code expired or voided");
    return *c;
  }

  void write_line(const std::string& line) {
    if (!log_fd_) return;
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      auto n = ::write(log_fd_.get(), p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::IoError, "event log write failed");
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (options_.fsync) ::fsync(log_fd_.get());
  }

  void broadcast(const AuditEvent& e) {
    std::erase_if(taps_, [](const auto& w) { return w.expired(); });
    for (auto& weak : taps_) {
      if (auto ch = weak.lock()) ch->push(e);
    }
  }

  void write_snapshot_locked() {
    nlohmann::json j;
    j["schema_version"] = kSnapshotSchemaVersion;
    {
      std::shared_lock lock(state_mutex_);
      j["last_seq"] = state_.last_seq;
      j["state"] = to_json(state_);
    }
    auto tmp = snapshot_path();
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump() << '\n';
      if (!out) throw Error(Errc::IoError, "snapshot write failed");
    }
    std::filesystem::rename(tmp, snapshot_path());
  }

  /// Loads the snapshot (if any) and replays the log tail. A torn final
  /// line left by a crash is truncated away.
  void recover() {
    PoolState state;
    std::uint64_t snapshot_seq = 0;
    if (std::filesystem::exists(snapshot_path())) {
      std::ifstream in(snapshot_path());
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::ParseError, std::string("unreadable snapshot: ") + ex.what());
      }
      if (j.value("schema_version", 0) != kSnapshotSchemaVersion) {
        throw Error(Errc::ParseError, "unsupported snapshot schema version");
      }
      state = pool_state_from_json(j.at("state"));
      snapshot_seq = j.at("last_seq");
    }

    std::vector<AuditEvent> events;
    if (std::filesystem::exists(log_path())) {
      std::string content;
      {
        std::ifstream in(log_path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        content = ss.str();
      }
      auto complete = content.rfind('\n');
      std::size_t keep = complete == std::string::npos ? 0 : complete + 1;
      if (keep != content.size()) {
        std::filesystem::resize_file(log_path(), keep);
        content.resize(keep);
      }
      std::size_t pos = 0;
      while (pos < content.size()) {
        auto end = content.find('\n', pos);
        std::string_view line(content.data() + pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        auto e = parse_log_line(line);
        std::uint64_t expected = events.empty() ? 1 : events.back().seq + 1;
        if (e.seq != expected) {
          throw Error(Errc::IntegrityViolation, "event log gap at seq " + std::to_string(e.seq));
        }
        events.push_back(std::move(e));
      }
    }
    if (snapshot_seq > (events.empty() ? 0 : events.back().seq)) {
      throw Error(Errc::IntegrityViolation, "snapshot is ahead of the event log");
    }
    for (const auto& e : events) {
      if (e.seq <= snapshot_seq) continue;
      state.validate(e);
      state.apply(e);
    }
    state_ = std::move(state);
    events_ = std::move(events);
  }

  PoolOptions options_;
  std::filesystem::path dir_;
  detail::FileHandle lock_fd_;
  detail::FileHandle log_fd_;

  mutable std::mutex commit_mutex_;
  mutable std::shared_mutex state_mutex_;
  bool open_ = true;
  PoolState state_;
  std::vector<AuditEvent> events_;
  std::vector<std::weak_ptr<detail::TapChannel>> taps_;
};

}  // namespace revsys
