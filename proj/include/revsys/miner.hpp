#pragma once

// Miner engine: cleansing of captured rows, profitability, decision-tree
// tier classification and tax assessment against a tier rate guide.

#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "revsys/data_pool.hpp"
#include "revsys/domain.hpp"
#include "revsys/error.hpp"
#include "revsys/messages.hpp"

namespace revsys::miner {

// ---------------------------------------------------------------------------
// Tier rate guide

struct TierBand {
  std::optional<Money> upper;  // inclusive upper edge; nullopt = unbounded
  Tier tier = Tier::T1;
  int rate_permille = 0;

  bool operator==(const TierBand&) const = default;
};

struct TierRateGuide {
  std::vector<TierBand> bands;
  std::string currency = "NGN";

  /// Five bands with monotone rates; amounts in Naira:
  /// (0, 50k] 20‰, (50k, 200k] 30‰, (200k, 1M] 40‰, (1M, 5M] 50‰, >5M 60‰.
  static TierRateGuide standard() {
    return TierRateGuide{{{Money::from_naira(50'000), Tier::T1, 20},
                          {Money::from_naira(200'000), Tier::T2, 30},
                          {Money::from_naira(1'000'000), Tier::T3, 40},
                          {Money::from_naira(5'000'000), Tier::T4, 50},
                          {std::nullopt, Tier::T5, 60}},
                         "NGN"};
  }

  /// Throws InvalidGuide describing the first broken rule.
  void validate() const {
    auto bad = [](const std::string& why) { throw Error(Errc::InvalidGuide, "invalid rate guide: " + why); };
    if (bands.size() != 5) bad("exactly 5 bands are required");
    for (std::size_t i = 0; i < bands.size(); ++i) {
      const auto& b = bands[i];
      if (b.tier != static_cast<Tier>(i + 1)) bad("tiers must appear in order T1..T5");
      if (b.rate_permille < 0 || b.rate_permille > 1000) bad("rate must be within 0..1000 permille");
      const bool last = i + 1 == bands.size();
      if (last != !b.upper.has_value()) bad("only the last band is unbounded");
      if (b.upper && b.upper->kobo() <= 0) bad("upper bounds must be positive");
      if (i > 0) {
        if (b.upper && *b.upper <= *bands[i - 1].upper) bad("upper bounds must strictly increase");
        if (b.rate_permille < bands[i - 1].rate_permille) bad("rates must be non-decreasing");
      }
    }
  }

  bool operator==(const TierRateGuide&) const = default;
};

inline nlohmann::json to_json(const TierRateGuide& g) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : g.bands) {
    bands.push_back({{"upper_kobo", b.upper ? nlohmann::json(b.upper->kobo()) : nlohmann::json()},
                     {"tier", std::string(to_string(b.tier))},
                     {"rate_permille", b.rate_permille}});
  }
  return {{"bands", bands}, {"currency", g.currency}};
}

inline TierRateGuide guide_from_json(const nlohmann::json& j) {
  TierRateGuide g;
  try {
    for (const auto& b : j.at("bands")) {
      TierBand band;
      if (b.contains("upper_kobo") && !b.at("upper_kobo").is_null()) {
        band.upper = Money(b.at("upper_kobo").get<std::int64_t>());
      }
      band.tier = parse_tier(b.at("tier").get<std::string>());
      band.rate_permille = b.at("rate_permille").get<int>();
      g.bands.push_back(band);
    }
    g.currency = j.value("currency", "NGN");
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidGuide, std::string("invalid rate guide: ") + ex.what());
  } catch (const Error& ex) {
    throw Error(Errc::InvalidGuide, std::string("invalid rate guide: ") + ex.what());
  }
  g.validate();
  return g;
}

inline TierRateGuide load_guide(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read rate guide " + path.string());
  try {
    return guide_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidGuide, std::string("invalid rate guide: ") + ex.what());
  }
}

// ---------------------------------------------------------------------------
// Decision tree

/// Fixed-shape binary decision tree over net profit. The root separates
/// non-profitable businesses (Exempt); below it, each decision node compares
/// profit against one band edge (`profit <= edge` goes left) and each leaf
/// is a tier.
class TierDecisionTree {
 public:
  struct Node {
    Money edge;               // decision nodes only
    int left = -1;            // profit <= edge
    int right = -1;           // profit > edge
    std::optional<Tier> leaf;
  };

  explicit TierDecisionTree(const TierRateGuide& guide) {
    guide.validate();
    nodes_.reserve(2 * guide.bands.size() + 1);
    nodes_.push_back(Node{Money(0), -1, -1, std::nullopt});
    int exempt = add_leaf(Tier::Exempt);
    int banded = build(guide.bands, 0, guide.bands.size());
    nodes_[0].left = exempt;
    nodes_[0].right = banded;
  }

  Tier classify(Money net_profit) const {
    const Node* n = &nodes_[0];
    while (!n->leaf) n = &nodes_[net_profit <= n->edge ? n->left : n->right];
    return *n->leaf;
  }

  std::size_t depth() const { return depth_from(0); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  int add_leaf(Tier t) {
    nodes_.push_back(Node{Money(0), -1, -1, t});
    return static_cast<int>(nodes_.size() - 1);
  }

  int build(const std::vector<TierBand>& bands, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return add_leaf(bands[lo].tier);
    std::size_t mid = (lo + hi) / 2;
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{*bands[mid - 1].upper, -1, -1, std::nullopt});
    int left = build(bands, lo, mid);
    int right = build(bands, mid, hi);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  std::size_t depth_from(int i) const {
    const auto& n = nodes_[i];
    if (n.leaf) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }

  std::vector<Node> nodes_;
};

inline Tier classify_tier(Money net_profit, const TierRateGuide& guide) {
  return TierDecisionTree(guide).classify(net_profit);
}

inline int rate_for(Tier tier, const TierRateGuide& guide) {
  for (const auto& b : guide.bands) {
    if (b.tier == tier) return b.rate_permille;
  }
  return 0;
}

struct Assessment {
  Tier tier = Tier::Exempt;
  Money tax;

  bool operator==(const Assessment&) const = default;
};

/// floor(profit_kobo * rate / 1000); Exempt pays nothing.
inline Assessment assess_with(const TierDecisionTree& tree, Money net_profit, const TierRateGuide& guide) {
  Tier tier = tree.classify(net_profit);
  if (tier == Tier::Exempt) return {tier, Money(0)};
  auto product = static_cast<__int128>(net_profit.kobo()) * rate_for(tier, guide);
  return {tier, Money(static_cast<std::int64_t>(product / 1000))};
}

inline Assessment assess_tax(Money net_profit, const TierRateGuide& guide) {
  return assess_with(TierDecisionTree(guide), net_profit, guide);
}

// ---------------------------------------------------------------------------
// Profitability

/// Exact ratio; denominator is positive.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Ratio& o) const {
    return static_cast<__int128>(num) * o.den == static_cast<__int128>(o.num) * den;
  }
};

struct ProfitReport {
  std::string business_id;
  Period period;
  Money net_profit;
  Ratio margin;  // net_profit / revenue, 0 when revenue is 0
};

inline ProfitReport compute_profitability(const MonthlyFinancials& fin, std::string business_id = {}) {
  if (fin.revenue.kobo() < 0 || fin.expenses.kobo() < 0) {
    throw Error(Errc::NegativeInput, "revenue and expenses must be non-negative");
  }
  Money net = fin.revenue - fin.expenses;
  Ratio margin = fin.revenue.kobo() == 0 ? Ratio{0, 1} : Ratio{net.kobo(), fin.revenue.kobo()};
  return {std::move(business_id), fin.period, net, margin};
}

// ---------------------------------------------------------------------------
// Cleansing

/// A captured row as typed in (capture form, CSV import, or lifted from the
/// pool). `owner` identifies the taxpayer for de-duplication.
struct CapturedRow {
  std::string owner;
  std::string full_name;
  std::string email;
  std::string phone;
  std::string business_name;
  std::string location;
  std::string sector;
  std::string period;
  std::string revenue_kobo;
  std::string expenses_kobo;
  Timestamp captured_at;
  std::string business_id;  // set when lifted from the pool
};

enum class RejectReason { MissingEarnings, DuplicateTin, MalformedNumeric, EmptyName };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::MissingEarnings: return "MissingEarnings";
    case RejectReason::DuplicateTin: return "DuplicateTin";
    case RejectReason::MalformedNumeric: return "MalformedNumeric";
    case RejectReason::EmptyName: return "EmptyName";
  }
  return "?";
}

struct CleanRecord {
  CapturedRow source;
  std::string business_name;  // normalized
  std::string full_name;      // normalized
  Period period;
  Money revenue;
  Money expenses;
  std::size_t index = 0;      // position in the input
};

struct Rejection {
  CapturedRow row;
  RejectReason reason;
  std::size_t index = 0;
};

struct CleansingReport {
  std::vector<CleanRecord> accepted;
  std::vector<Rejection> rejected;
};

/// Trims, collapses inner whitespace and title-cases each word.
inline std::string normalize_name(std::string_view raw) {
  std::string out;
  bool word_start = true;
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      word_start = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(word_start ? std::toupper(c) : std::tolower(c)));
    word_start = false;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

namespace detail {

enum class Parsed { Ok, Missing, Malformed };

inline Parsed parse_kobo(std::string_view raw, Money& out) {
  auto s = trim(raw);
  if (s.empty()) return Parsed::Missing;
  std::int64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return Parsed::Malformed;
    if (v > (INT64_MAX - 9) / 10) return Parsed::Malformed;
    v = v * 10 + (c - '0');
  }
  out = Money(v);
  return Parsed::Ok;
}

}  // namespace detail

/// Rejects rows with missing or non-numeric earnings, an empty business
/// name, or a malformed period; among rows sharing owner and normalized
/// business name, keeps the latest capture (ties: the later row).
inline CleansingReport cleanse(std::span<const CapturedRow> rows) {
  CleansingReport report;
  std::vector<std::optional<CleanRecord>> candidates(rows.size());
  std::map<std::pair<std::string, std::string>, std::size_t> latest;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    CleanRecord rec;
    rec.source = row;
    rec.index = i;
    rec.business_name = normalize_name(row.business_name);
    rec.full_name = normalize_name(row.full_name);
    if (rec.business_name.empty()) {
      report.rejected.push_back({row, RejectReason::EmptyName, i});
      continue;
    }
    auto rs = detail::parse_kobo(row.revenue_kobo, rec.revenue);
    auto es = detail::parse_kobo(row.expenses_kobo, rec.expenses);
    if (rs == detail::Parsed::Missing || es == detail::Parsed::Missing) {
      report.rejected.push_back({row, RejectReason::MissingEarnings, i});
      continue;
    }
    auto period = Period::parse(trim(row.period));
    if (rs == detail::Parsed::Malformed || es == detail::Parsed::Malformed || !period) {
      report.rejected.push_back({row, RejectReason::MalformedNumeric, i});
      continue;
    }
    rec.period = *period;
    auto key = std::make_pair(row.owner, rec.business_name);
    auto it = latest.find(key);
    if (it == latest.end()) {
      latest.emplace(key, i);
    } else {
      auto& incumbent = candidates[it->second];
      if (incumbent->source.captured_at <= row.captured_at) {
        report.rejected.push_back({incumbent->source, RejectReason::DuplicateTin, incumbent->index});
        incumbent.reset();
        it->second = i;
      } else {
        report.rejected.push_back({row, RejectReason::DuplicateTin, i});
        continue;
      }
    }
    candidates[i] = std::move(rec);
  }
  for (auto& c : candidates) {
    if (c) report.accepted.push_back(std::move(*c));
  }
  std::sort(report.rejected.begin(), report.rejected.end(),
            [](const Rejection& a, const Rejection& b) { return a.index < b.index; });
  return report;
}

// ---------------------------------------------------------------------------
// Extraction run

struct MiningEntry {
  std::string business_id;
  std::string tin;  // empty until the owner is issued a TIN
  Period period;
  Money net_profit;
  Tier tier = Tier::Exempt;
  Money tax;

  bool operator==(const MiningEntry&) const = default;
};

struct MiningReport {
  std::string run_id;
  Timestamp started_at;
  std::array<int, 6> tier_counts{};  // indexed by tier ordinal
  std::vector<MiningEntry> entries;
  std::vector<Rejection> rejected;
  std::string status;

  Money total_tax() const {
    Money sum;
    for (const auto& e : entries) sum += e.tax;
    return sum;
  }
};

/// `business_id,tin,period,net_profit_kobo,tier,tax_kobo`
inline std::string to_csv(const MiningReport& r) {
  std::ostringstream out;
  out << "business_id,tin,period,net_profit_kobo,tier,tax_kobo\n";
  for (const auto& e : r.entries) {
    out << e.business_id << ',' << e.tin << ',' << e.period.str() << ',' << e.net_profit.kobo() << ','
        << to_string(e.tier) << ',' << e.tax.kobo() << '\n';
  }
  return out.str();
}

/// One row per business, built from its latest financials (blank earnings
/// when none were captured).
inline std::vector<CapturedRow> rows_from_pool(const PoolState& s) {
  std::vector<CapturedRow> rows;
  rows.reserve(s.businesses.size());
  for (const auto& [id, b] : s.businesses) {
    CapturedRow r;
    r.business_id = id;
    r.owner = b.owner;
    r.business_name = b.business_name;
    r.location = b.location;
    r.sector = b.sector;
    if (const auto* t = s.find_taxpayer(b.owner)) {
      r.full_name = t->full_name;
      r.email = t->email;
      r.phone = t->phone;
    }
    if (const auto* f = b.latest()) {
      r.period = f->period.str();
      r.revenue_kobo = std::to_string(f->revenue.kobo());
      r.expenses_kobo = std::to_string(f->expenses.kobo());
      r.captured_at = f->captured_at;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

/// cleanse -> profitability -> classify -> assess over one committed
/// snapshot. Pure; records nothing.
inline MiningReport plan_extraction(const PoolState& snapshot, const TierRateGuide& guide) {
  TierDecisionTree tree(guide);
  auto rows = rows_from_pool(snapshot);
  auto cleansed = cleanse(rows);

  MiningReport report;
  report.run_id = snapshot.next_run_id();
  report.rejected = std::move(cleansed.rejected);
  for (const auto& rec : cleansed.accepted) {
    MonthlyFinancials fin{rec.period, rec.revenue, rec.expenses, rec.source.captured_at};
    auto profit = compute_profitability(fin, rec.source.business_id);
    auto assessed = assess_with(tree, profit.net_profit, guide);
    const auto* owner = snapshot.find_taxpayer(rec.source.owner);
    report.entries.push_back(MiningEntry{rec.source.business_id, owner ? owner->tin.str() : std::string{},
                                         profit.period, profit.net_profit, assessed.tier, assessed.tax});
    ++report.tier_counts[tier_ordinal(assessed.tier)];
  }
  return report;
}

/// Plans an extraction, then records a TierAssigned event per business and
/// a MiningRun summary. Throws NoEarningsRecords when nothing can be
/// classified.
inline MiningReport run_extraction(DataPool& pool, const TierRateGuide& guide,
                                   const std::string& actor = std::string(kActorSystem)) {
  auto report = plan_extraction(pool.snapshot(), guide);
  report.started_at = pool.now();
  if (report.entries.empty()) {
    pool.append_event(actor, EventKind::MiningRun,
                      {{"run_id", report.run_id}, {"status", std::string(messages::kNoEarningsRecords)},
                       {"businesses", "0"}});
    throw Error(Errc::NoEarningsRecords, std::string(messages::kNoEarningsRecords));
  }
  for (const auto& e : report.entries) {
    pool.append_event(actor, EventKind::TierAssigned,
                      {{"business_id", e.business_id},
                       {"tier", std::string(to_string(e.tier))},
                       {"tax_kobo", std::to_string(e.tax.kobo())},
                       {"period", e.period.str()},
                       {"net_profit_kobo", std::to_string(e.net_profit.kobo())},
                       {"source", report.run_id}});
  }
  report.status = std::string(messages::kExtractionSuccessful);
  Payload summary{{"run_id", report.run_id},
                  {"status", report.status},
                  {"businesses", std::to_string(report.entries.size())},
                  {"rejected", std::to_string(report.rejected.size())}};
  for (int t = 0; t <= 5; ++t) {
    summary["count_" + std::string(to_string(static_cast<Tier>(t)))] = std::to_string(report.tier_counts[t]);
  }
  pool.append_event(actor, EventKind::MiningRun, std::move(summary));
  return report;
}

}  // namespace revsys::miner
