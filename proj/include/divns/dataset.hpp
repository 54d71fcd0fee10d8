#ifndef DIVNS_DATASET_HPP
#define DIVNS_DATASET_HPP

#include "divns/common.hpp"

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace divns {

struct InteractionRecord {
  std::string user;
  std::string item;
  std::optional<double> weight;
  std::optional<std::int64_t> timestamp;
};

/// Raw interaction events as read from disk. Duplicates are allowed here.
struct RawInteractionLog {
  std::vector<InteractionRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

struct InputFormat {
  std::string delimiter = "\t";

  static InputFormat tsv() { return {"\t"}; }
  static InputFormat csv() { return {","}; }

  /// Accepts "tsv", "csv", "tab", "comma", or a literal delimiter such as "::".
  static InputFormat parse(std::string_view spec) {
    if (spec == "tsv" || spec == "tab" || spec == "\\t") return tsv();
    if (spec == "csv" || spec == "comma") return csv();
    if (spec.empty()) throw Error("empty delimiter spec");
    return {std::string(spec)};
  }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    // std::from_chars for doubles is available but strtod tolerates more forms.
    std::string tmp(s);
    char* end = nullptr;
    value = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) return std::nullopt;
  } else {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  }
  return value;
}

}  // namespace detail

/// Parses delimited interaction lines: user, item[, weight[, timestamp]].
/// Blank lines and lines starting with '#' are skipped.
inline RawInteractionLog parse_interactions(std::istream& in, const InputFormat& format) {
  RawInteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = detail::split_fields(view, format.delimiter);
    if (fields.size() < 2) throw ParseError("expected at least 2 fields", line_no);
    InteractionRecord rec;
    rec.user = std::string(detail::trim(fields[0]));
    rec.item = std::string(detail::trim(fields[1]));
    if (rec.user.empty() || rec.item.empty()) throw ParseError("empty user or item token", line_no);
    if (fields.size() >= 3 && !detail::trim(fields[2]).empty()) {
      rec.weight = detail::parse_number<double>(fields[2]);
      if (!rec.weight) throw ParseError("unparsable weight", line_no);
    }
    if (fields.size() >= 4 && !detail::trim(fields[3]).empty()) {
      rec.timestamp = detail::parse_number<std::int64_t>(fields[3]);
      if (!rec.timestamp) throw ParseError("unparsable timestamp", line_no);
    }
    log.records.push_back(std::move(rec));
  }
  return log;
}

inline RawInteractionLog load_interactions(const std::filesystem::path& path,
                                           const InputFormat& format = InputFormat::tsv()) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read interaction file: " + path.string());
  try {
    return parse_interactions(in, format);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

namespace detail {

struct PairHash {
  std::size_t operator()(const std::pair<Index, Index>& p) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 32) |
                                      static_cast<std::uint32_t>(p.second));
  }
};

/// Assigns dense ids in first-appearance order.
class TokenIndexer {
 public:
  Index id(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, static_cast<Index>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::unordered_map<std::string, Index> release_index() { return std::move(index_); }
  std::vector<std::string> release_tokens() { return std::move(tokens_); }

 private:
  std::unordered_map<std::string, Index> index_;
  std::vector<std::string> tokens_;
};

}  // namespace detail

/// Keeps the first occurrence of every (user, item) pair, order preserved.
inline RawInteractionLog deduplicate(const RawInteractionLog& log) {
  RawInteractionLog out;
  detail::TokenIndexer users, items;
  std::unordered_set<std::pair<Index, Index>, detail::PairHash> seen;
  for (const auto& rec : log.records) {
    if (seen.insert({users.id(rec.user), items.id(rec.item)}).second) out.records.push_back(rec);
  }
  return out;
}

/// Iteratively drops users and items with fewer than k distinct
/// interactions until every survivor has at least k.
inline RawInteractionLog k_core_filter(const RawInteractionLog& log, int k) {
  if (k < 1) throw Error("k_core_filter: k must be >= 1");
  RawInteractionLog dedup = deduplicate(log);

  detail::TokenIndexer users, items;
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(dedup.size());
  for (const auto& rec : dedup.records) pairs.emplace_back(users.id(rec.user), items.id(rec.item));

  std::vector<int> user_deg(users.tokens().size(), 0), item_deg(items.tokens().size(), 0);
  for (auto [u, i] : pairs) {
    ++user_deg[u];
    ++item_deg[i];
  }
  std::vector<char> alive(pairs.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      if (!alive[p]) continue;
      auto [u, i] = pairs[p];
      if (user_deg[u] < k || item_deg[i] < k) {
        alive[p] = 0;
        --user_deg[u];
        --item_deg[i];
        changed = true;
      }
    }
  }

  RawInteractionLog out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (alive[p]) out.records.push_back(dedup.records[p]);
  }
  if (out.empty()) throw EmptyResultError("k-core filtering removed every interaction");
  return out;
}

/// Indexed implicit-feedback universe. Indices are dense and assigned in
/// first-appearance order.
struct ImplicitDataset {
  Index num_users = 0;
  Index num_items = 0;
  std::vector<std::vector<Index>> positives;  // sorted per user
  std::vector<std::string> user_tokens;
  std::vector<std::string> item_tokens;
  std::unordered_map<std::string, Index> user_index;
  std::unordered_map<std::string, Index> item_index;
  std::vector<Index> popularity;  // distinct users per item

  std::size_t num_interactions() const {
    std::size_t n = 0;
    for (const auto& p : positives) n += p.size();
    return n;
  }
};

inline std::vector<Index> compute_popularity(const std::vector<std::vector<Index>>& positives,
                                             Index num_items) {
  std::vector<Index> pop(static_cast<std::size_t>(num_items), 0);
  for (const auto& items : positives) {
    for (Index i : items) ++pop[i];
  }
  return pop;
}

/// Discards weights, collapses duplicates and assigns dense indices.
inline ImplicitDataset binarize_and_index(const RawInteractionLog& log) {
  if (log.empty()) throw EmptyResultError("binarize_and_index: empty log");
  detail::TokenIndexer users, items;
  std::vector<std::vector<Index>> positives;
  for (const auto& rec : log.records) {
    const Index u = users.id(rec.user);
    const Index i = items.id(rec.item);
    if (static_cast<std::size_t>(u) >= positives.size()) positives.resize(u + 1);
    positives[u].push_back(i);
  }
  for (auto& p : positives) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  ImplicitDataset ds;
  ds.num_users = static_cast<Index>(users.tokens().size());
  ds.num_items = static_cast<Index>(items.tokens().size());
  ds.positives = std::move(positives);
  ds.popularity = compute_popularity(ds.positives, ds.num_items);
  ds.user_tokens = users.release_tokens();
  ds.item_tokens = items.release_tokens();
  ds.user_index = users.release_index();
  ds.item_index = items.release_index();
  return ds;
}

enum class SplitTag { kTrain, kValidation, kTest };

inline std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kValidation: return "validation";
    case SplitTag::kTest: return "test";
  }
  return "?";
}

inline SplitTag parse_split_tag(std::string_view s) {
  if (s == "train") return SplitTag::kTrain;
  if (s == "validation" || s == "valid" || s == "val") return SplitTag::kValidation;
  if (s == "test") return SplitTag::kTest;
  throw Error("unknown split tag: " + std::string(s));
}

/// Per-user disjoint partition of the positives into train/validation/test.
struct DataSplit {
  static constexpr std::array<double, 3> kRatios{0.70, 0.10, 0.20};

  std::vector<std::vector<Index>> train;
  std::vector<std::vector<Index>> validation;
  std::vector<std::vector<Index>> test;
  std::uint64_t seed = 0;

  const std::vector<std::vector<Index>>& part(SplitTag tag) const {
    switch (tag) {
      case SplitTag::kTrain: return train;
      case SplitTag::kValidation: return validation;
      case SplitTag::kTest: return test;
    }
    return train;
  }

  std::size_t num_train_interactions() const {
    std::size_t n = 0;
    for (const auto& t : train) n += t.size();
    return n;
  }
};

/// Per-split sizes for a user with n positives: floor each ratio, hand
/// leftovers to train, validation, test in order, then move items out of
/// train so that validation and test are never empty.
inline std::array<std::size_t, 3> split_sizes(std::size_t n) {
  if (n < 3) throw Error("split: user has fewer than 3 positives");
  std::array<std::size_t, 3> sizes{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    sizes[s] = static_cast<std::size_t>(static_cast<double>(n) * DataSplit::kRatios[s] + 1e-9);
    assigned += sizes[s];
  }
  for (std::size_t s = 0; assigned < n; s = (s + 1) % 3) {
    ++sizes[s];
    ++assigned;
  }
  for (std::size_t s = 1; s < 3; ++s) {
    if (sizes[s] == 0) {
      --sizes[0];
      ++sizes[s];
    }
  }
  return sizes;
}

inline DataSplit split(const ImplicitDataset& dataset, std::uint64_t seed) {
  DataSplit out;
  out.seed = seed;
  const auto nu = static_cast<std::size_t>(dataset.num_users);
  out.train.resize(nu);
  out.validation.resize(nu);
  out.test.resize(nu);
  for (std::size_t u = 0; u < nu; ++u) {
    std::vector<Index> items = dataset.positives[u];
    if (items.size() < 3) {
      throw Error("split: user " + std::to_string(u) + " has fewer than 3 positives");
    }
    Rng rng = make_stream(seed, StreamTag::kSplit, 0, u);
    std::shuffle(items.begin(), items.end(), rng);
    const auto sizes = split_sizes(items.size());
    auto first = items.begin();
    auto take = [&](std::vector<Index>& dst, std::size_t count) {
      dst.assign(first, first + static_cast<std::ptrdiff_t>(count));
      std::sort(dst.begin(), dst.end());
      first += static_cast<std::ptrdiff_t>(count);
    };
    take(out.train[u], sizes[0]);
    take(out.validation[u], sizes[1]);
    take(out.test[u], sizes[2]);
  }
  return out;
}

/// Dense users x items membership bitset.
class InteractionMask {
 public:
  InteractionMask() = default;
  InteractionMask(Index num_users, Index num_items, const std::vector<std::vector<Index>>& rows)
      : num_items_(num_items),
        words_per_row_((static_cast<std::size_t>(num_items) + 63) / 64),
        bits_(static_cast<std::size_t>(num_users) * words_per_row_, 0) {
    for (std::size_t u = 0; u < rows.size(); ++u) {
      for (Index i : rows[u]) bits_[u * words_per_row_ + (i >> 6)] |= (1ULL << (i & 63));
    }
  }

  bool contains(Index u, Index i) const {
    return (bits_[static_cast<std::size_t>(u) * words_per_row_ + (i >> 6)] >> (i & 63)) & 1ULL;
  }
  Index num_items() const { return num_items_; }

 private:
  Index num_items_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// A prepared experiment input: indexed dataset plus its fixed split.
struct PreparedData {
  ImplicitDataset dataset;
  DataSplit split;
  InteractionMask train_mask;

  PreparedData() = default;
  PreparedData(ImplicitDataset ds, DataSplit sp)
      : dataset(std::move(ds)),
        split(std::move(sp)),
        train_mask(dataset.num_users, dataset.num_items, split.train) {}
};

// ---------------------------------------------------------------------------
// On-disk snapshot: <dir>/interactions.tsv, users.tsv, items.tsv
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSnapshotVersion = "divns-snapshot v1";

inline void write_snapshot_interactions(std::ostream& out, const ImplicitDataset& ds,
                                        const DataSplit& sp) {
  out << "# " << kSnapshotVersion << " users=" << ds.num_users << " items=" << ds.num_items
      << " seed=" << sp.seed << "\n";
  out << "user_index\titem_index\tsplit\n";
  for (Index u = 0; u < ds.num_users; ++u) {
    std::vector<std::pair<Index, SplitTag>> rows;
    for (Index i : sp.train[u]) rows.emplace_back(i, SplitTag::kTrain);
    for (Index i : sp.validation[u]) rows.emplace_back(i, SplitTag::kValidation);
    for (Index i : sp.test[u]) rows.emplace_back(i, SplitTag::kTest);
    std::sort(rows.begin(), rows.end());
    for (auto [i, tag] : rows) out << u << '\t' << i << '\t' << to_string(tag) << '\n';
  }
}

inline void write_snapshot(const std::filesystem::path& dir, const ImplicitDataset& ds,
                           const DataSplit& sp) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "interactions.tsv");
    if (!out) throw Error("cannot write snapshot to " + dir.string());
    write_snapshot_interactions(out, ds, sp);
  }
  auto write_tokens = [&](const std::string& name, const std::vector<std::string>& tokens) {
    std::ofstream out(dir / name);
    out << "index\ttoken\n";
    for (std::size_t i = 0; i < tokens.size(); ++i) out << i << '\t' << tokens[i] << '\n';
  };
  write_tokens("users.tsv", ds.user_tokens);
  write_tokens("items.tsv", ds.item_tokens);
}

inline PreparedData read_snapshot(const std::filesystem::path& dir) {
  std::ifstream in(dir / "interactions.tsv");
  if (!in) throw Error("cannot read snapshot: " + (dir / "interactions.tsv").string());
  std::string line;
  std::size_t line_no = 0;
  Index num_users = -1, num_items = -1;
  std::uint64_t seed = 0;
  std::vector<std::tuple<Index, Index, SplitTag>> rows;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      std::istringstream meta{std::string(view.substr(1))};
      std::string tok;
      while (meta >> tok) {
        if (tok.rfind("users=", 0) == 0) num_users = std::stoi(tok.substr(6));
        if (tok.rfind("items=", 0) == 0) num_items = std::stoi(tok.substr(6));
        if (tok.rfind("seed=", 0) == 0) seed = std::stoull(tok.substr(5));
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (view.rfind("user_index", 0) == 0) continue;
    }
    const auto fields = detail::split_fields(view, "\t");
    if (fields.size() != 3) throw ParseError("snapshot row needs 3 fields", line_no);
    const auto u = detail::parse_number<Index>(fields[0]);
    const auto i = detail::parse_number<Index>(fields[1]);
    if (!u || !i || *u < 0 || *i < 0) throw ParseError("bad snapshot index", line_no);
    rows.emplace_back(*u, *i, parse_split_tag(detail::trim(fields[2])));
  }
  for (const auto& [u, i, tag] : rows) {
    num_users = std::max(num_users, static_cast<Index>(u + 1));
    num_items = std::max(num_items, static_cast<Index>(i + 1));
  }
  if (rows.empty() || num_users <= 0 || num_items <= 0) throw Error("empty snapshot");

  ImplicitDataset ds;
  ds.num_users = num_users;
  ds.num_items = num_items;
  ds.positives.resize(num_users);
  DataSplit sp;
  sp.seed = seed;
  sp.train.resize(num_users);
  sp.validation.resize(num_users);
  sp.test.resize(num_users);
  for (const auto& [u, i, tag] : rows) {
    ds.positives[u].push_back(i);
    switch (tag) {
      case SplitTag::kTrain: sp.train[u].push_back(i); break;
      case SplitTag::kValidation: sp.validation[u].push_back(i); break;
      case SplitTag::kTest: sp.test[u].push_back(i); break;
    }
  }
  for (auto* part : {&ds.positives, &sp.train, &sp.validation, &sp.test}) {
    for (auto& v : *part) std::sort(v.begin(), v.end());
  }
  ds.popularity = compute_popularity(ds.positives, num_items);

  auto read_tokens = [&](const std::string& name, Index count, std::vector<std::string>& tokens,
                         std::unordered_map<std::string, Index>& index) {
    tokens.resize(count);
    for (Index k = 0; k < count; ++k) tokens[k] = std::to_string(k);
    std::ifstream tin(dir / name);
    if (tin) {
      std::string tl;
      std::getline(tin, tl);  // header
      while (std::getline(tin, tl)) {
        const auto f = detail::split_fields(tl, "\t");
        if (f.size() < 2) continue;
        const auto k = detail::parse_number<Index>(f[0]);
        if (k && *k >= 0 && *k < count) tokens[*k] = std::string(f[1]);
      }
    }
    for (Index k = 0; k < count; ++k) index.emplace(tokens[k], k);
  };
  read_tokens("users.tsv", num_users, ds.user_tokens, ds.user_index);
  read_tokens("items.tsv", num_items, ds.item_tokens, ds.item_index);
  return PreparedData(std::move(ds), std::move(sp));
}

}  // namespace divns

#endif  // DIVNS_DATASET_HPP
