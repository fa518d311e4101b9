#pragma once

// Multivariate time-series ingestion: CSV loading, cleaning and resampling,
// per-subject splits, train-only normalization, sliding-window forecast
// datasets, and a synthetic generator with an optional covariate shift on
// test subjects.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rupi/error.hpp"
#include "rupi/rng.hpp"
#include "rupi/statcore.hpp"
#include "rupi/textio.hpp"

namespace rupi {

// ---------------------------------------------------------------------------
// Types

struct RawSeries {
  std::string subject_id;
  std::vector<std::int64_t> timestamps;  // epoch seconds
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;  // channels[c][t]; NaN = missing

  std::size_t size() const noexcept { return timestamps.size(); }

  std::size_t channel_index(const std::string& name) const {
    auto it = std::find(channel_names.begin(), channel_names.end(), name);
    if (it == channel_names.end())
      throw SchemaError("series " + subject_id + " has no channel '" + name + "'");
    return static_cast<std::size_t>(it - channel_names.begin());
  }
};

enum class Stat { mean, std };
enum class Normalization { zscore, minmax };
enum class Split : int { train = 0, validation = 1, test = 2 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split label '" + std::string(s) + "'");
}

inline const char* to_string(Normalization n) { return n == Normalization::zscore ? "zscore" : "minmax"; }

inline Normalization parse_normalization(std::string_view s) {
  if (s == "zscore") return Normalization::zscore;
  if (s == "minmax") return Normalization::minmax;
  throw ConfigError("unknown normalization '" + std::string(s) + "'");
}

inline Stat parse_stat(std::string_view s) {
  if (s == "mean") return Stat::mean;
  if (s == "std") return Stat::std;
  throw ConfigError("unknown resample statistic '" + std::string(s) + "'");
}

struct PreprocessConfig {
  /// Rows with any value below the floor are dropped.
  std::optional<double> value_floor;
  /// Rows whose named channel exceeds its ceiling are dropped.
  std::map<std::string, double> value_ceilings;
  /// Bucket length in seconds; unset keeps the native sampling.
  std::optional<std::int64_t> resample_period;
  std::vector<Stat> resample_stats{Stat::mean};
  Normalization normalization = Normalization::zscore;
  bool drop_missing = true;

  void validate() const {
    if (resample_period && *resample_period <= 0)
      throw ConfigError("resample_period must be positive");
    if (resample_period && resample_stats.empty())
      throw ConfigError("resample_stats must name at least one statistic");
    for (const auto& [name, c] : value_ceilings)
      if (!std::isfinite(c)) throw ConfigError("ceiling for '" + name + "' is not finite");
  }
};

// ---------------------------------------------------------------------------
// Timestamps

/// Integer epoch seconds, or ISO-8601 `YYYY-MM-DD[(T| )hh:mm[:ss[.fff]]][Z|±hh:mm]`
/// (fractional seconds truncated). Returns nullopt when unparseable.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  s = textio::trim(s);
  if (s.empty()) return std::nullopt;
  {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && ptr == s.data() + s.size()) return v;
  }
  auto digits = [&](std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    out = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      out = out * 10 + (s[i] - '0');
    }
    return true;
  };
  int y, mo, d, h = 0, mi = 0, sec = 0;
  if (!digits(0, 4, y) || s.size() < 10 || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' ||
      !digits(8, 2, d))
    return std::nullopt;
  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    if (!digits(pos + 1, 2, h) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !digits(pos + 4, 2, mi))
      return std::nullopt;
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      if (!digits(pos + 1, 2, sec)) return std::nullopt;
      pos += 3;
      if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
      }
    }
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      pos = s.size();
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
      int oh, om;
      if (!digits(pos + 1, 2, oh) || !digits(pos + 4, 2, om)) return std::nullopt;
      offset = (s[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
      pos = s.size();
    } else {
      return std::nullopt;
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec - offset;
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Reads `subject,timestamp,<channel...>` rows into one series per subject
/// (in order of first appearance), each stably sorted by timestamp. An empty
/// schema selects every channel column in the header.
inline std::vector<RawSeries> load_csv(std::istream& in, const std::vector<std::string>& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = textio::split_csv(line);
  if (header.size() < 2 || header[0] != "subject" || header[1] != "timestamp")
    throw ParseError("header must start with 'subject,timestamp'", 1);

  std::vector<std::string> channels = schema;
  if (channels.empty()) channels.assign(header.begin() + 2, header.end());
  std::vector<std::size_t> cols;
  for (const auto& name : channels) {
    auto it = std::find(header.begin() + 2, header.end(), name);
    if (it == header.end()) throw SchemaError("channel '" + name + "' is not in the CSV header");
    cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  std::vector<RawSeries> out;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto fields = textio::split_csv(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    const auto ts = parse_timestamp(fields[1]);
    if (!ts) throw ParseError("bad timestamp '" + fields[1] + "'", line_no);
    auto [it, fresh] = index.try_emplace(fields[0], out.size());
    if (fresh) {
      RawSeries s;
      s.subject_id = fields[0];
      s.channel_names = channels;
      s.channels.resize(channels.size());
      out.push_back(std::move(s));
    }
    RawSeries& s = out[it->second];
    s.timestamps.push_back(*ts);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      double v;
      if (!textio::parse_double(fields[cols[c]], v))
        throw ParseError("bad value '" + fields[cols[c]] + "' in column " + header[cols[c]],
                         line_no);
      s.channels[c].push_back(v);
    }
  }

  for (auto& s : out) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.timestamps[a] < s.timestamps[b]; });
    std::vector<std::int64_t> ts(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) ts[i] = s.timestamps[order[i]];
    s.timestamps = std::move(ts);
    for (auto& ch : s.channels) {
      std::vector<double> v(ch.size());
      for (std::size_t i = 0; i < order.size(); ++i) v[i] = ch[order[i]];
      ch = std::move(v);
    }
  }
  return out;
}

inline std::vector<RawSeries> load_csv(const std::filesystem::path& path,
                                       const std::vector<std::string>& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return load_csv(in, schema);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

inline void write_csv(std::ostream& out, const std::vector<RawSeries>& series) {
  if (series.empty()) {
    out << "subject,timestamp\n";
    return;
  }
  out << "subject,timestamp";
  for (const auto& name : series.front().channel_names) out << ',' << name;
  out << '\n';
  for (const auto& s : series)
    for (std::size_t t = 0; t < s.size(); ++t) {
      out << s.subject_id << ',' << s.timestamps[t];
      for (const auto& ch : s.channels) out << ',' << textio::format_double(ch[t]);
      out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Cleaning and resampling

namespace detail {

inline RawSeries keep_rows(const RawSeries& s, const std::vector<char>& keep) {
  RawSeries out;
  out.subject_id = s.subject_id;
  out.channel_names = s.channel_names;
  out.channels.resize(s.channels.size());
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (!keep[t]) continue;
    out.timestamps.push_back(s.timestamps[t]);
    for (std::size_t c = 0; c < s.channels.size(); ++c) out.channels[c].push_back(s.channels[c][t]);
  }
  return out;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

/// Buckets rows into [k·period, (k+1)·period) and emits one row per nonempty
/// bucket, stamped with the bucket start. The mean keeps the channel name;
/// the standard deviation (n-1 denominator, 0 for single samples) becomes
/// `<name>_std`. Missing values are ignored within a bucket.
inline RawSeries resample(const RawSeries& s, std::int64_t period, const std::vector<Stat>& stats) {
  RawSeries out;
  out.subject_id = s.subject_id;
  for (const auto& name : s.channel_names)
    for (Stat st : stats) out.channel_names.push_back(st == Stat::mean ? name : name + "_std");
  out.channels.resize(out.channel_names.size());

  std::size_t t = 0;
  while (t < s.size()) {
    const std::int64_t bucket = detail::floor_div(s.timestamps[t], period);
    std::size_t end = t;
    while (end < s.size() && detail::floor_div(s.timestamps[end], period) == bucket) ++end;
    out.timestamps.push_back(bucket * period);
    std::size_t k = 0;
    for (const auto& ch : s.channels) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = t; i < end; ++i)
        if (!std::isnan(ch[i])) {
          sum += ch[i];
          ++n;
        }
      const double mean = n ? sum / static_cast<double>(n) : std::nan("");
      for (Stat st : stats) {
        if (st == Stat::mean) {
          out.channels[k++].push_back(mean);
        } else {
          double ss = 0.0;
          for (std::size_t i = t; i < end; ++i)
            if (!std::isnan(ch[i])) ss += (ch[i] - mean) * (ch[i] - mean);
          out.channels[k++].push_back(n == 0 ? std::nan("")
                                      : n == 1 ? 0.0
                                               : std::sqrt(ss / static_cast<double>(n - 1)));
        }
      }
    }
    t = end;
  }
  return out;
}

/// Range filtering, optional resampling and missing-row removal. An empty
/// result is logged, not an error.
inline RawSeries preprocess(const RawSeries& series, const PreprocessConfig& cfg) {
  cfg.validate();
  std::vector<char> keep(series.size(), 1);
  std::vector<std::pair<std::size_t, double>> ceilings;
  for (const auto& [name, c] : cfg.value_ceilings) {
    auto it = std::find(series.channel_names.begin(), series.channel_names.end(), name);
    if (it != series.channel_names.end())
      ceilings.emplace_back(static_cast<std::size_t>(it - series.channel_names.begin()), c);
  }
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (cfg.value_floor)
      for (const auto& ch : series.channels)
        if (ch[t] < *cfg.value_floor) keep[t] = 0;
    for (const auto& [c, ceil] : ceilings)
      if (series.channels[c][t] > ceil) keep[t] = 0;
  }
  RawSeries out = detail::keep_rows(series, keep);
  if (cfg.resample_period) out = resample(out, *cfg.resample_period, cfg.resample_stats);
  if (cfg.drop_missing) {
    std::vector<char> complete(out.size(), 1);
    for (std::size_t t = 0; t < out.size(); ++t)
      for (const auto& ch : out.channels)
        if (std::isnan(ch[t])) complete[t] = 0;
    out = detail::keep_rows(out, complete);
  }
  if (out.size() == 0) spdlog::warn("subject {}: every row was filtered out", series.subject_id);
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-channel affine map x' = (x - offset) / scale, fitted on training
/// subjects only.
struct Normalizer {
  Normalization kind = Normalization::zscore;
  std::vector<std::string> channels;
  std::vector<double> offset;
  std::vector<double> scale;

  static Normalizer fit(const std::vector<RawSeries>& series, const std::set<std::string>& subjects,
                        Normalization kind) {
    Normalizer n;
    n.kind = kind;
    const RawSeries* first = nullptr;
    for (const auto& s : series)
      if (subjects.count(s.subject_id)) {
        first = &s;
        break;
      }
    if (!first) throw DataError("normalizer: no training subjects to fit on");
    n.channels = first->channel_names;
    for (std::size_t c = 0; c < n.channels.size(); ++c) {
      double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
      std::size_t count = 0;
      for (const auto& s : series) {
        if (!subjects.count(s.subject_id)) continue;
        for (double v : s.channels[s.channel_index(n.channels[c])]) {
          if (std::isnan(v)) continue;
          sum += v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          ++count;
        }
      }
      if (count == 0) throw DataError("normalizer: channel '" + n.channels[c] + "' has no data");
      double off, sc;
      if (kind == Normalization::zscore) {
        off = sum / static_cast<double>(count);
        double ss = 0.0;
        for (const auto& s : series) {
          if (!subjects.count(s.subject_id)) continue;
          for (double v : s.channels[s.channel_index(n.channels[c])])
            if (!std::isnan(v)) ss += (v - off) * (v - off);
        }
        sc = std::sqrt(ss / static_cast<double>(count));
      } else {
        off = lo;
        sc = hi - lo;
      }
      if (!(sc > 0.0)) {
        spdlog::warn("channel '{}' is constant on the training subjects; using scale 1",
                     n.channels[c]);
        sc = 1.0;
      }
      n.offset.push_back(off);
      n.scale.push_back(sc);
    }
    return n;
  }

  std::size_t index(const std::string& channel) const {
    auto it = std::find(channels.begin(), channels.end(), channel);
    if (it == channels.end()) throw SchemaError("normalizer has no channel '" + channel + "'");
    return static_cast<std::size_t>(it - channels.begin());
  }

  RawSeries apply(RawSeries s) const {
    for (std::size_t c = 0; c < channels.size(); ++c)
      for (double& v : s.channels[s.channel_index(channels[c])]) v = (v - offset[c]) / scale[c];
    return s;
  }

  RawSeries invert(RawSeries s) const {
    for (std::size_t c = 0; c < channels.size(); ++c)
      for (double& v : s.channels[s.channel_index(channels[c])]) v = v * scale[c] + offset[c];
    return s;
  }

  double invert(const std::string& channel, double v) const {
    const auto c = index(channel);
    return v * scale[c] + offset[c];
  }
};

// ---------------------------------------------------------------------------
// Splits

using SplitAssignment = std::map<std::string, Split>;

/// Whole-subject split. Ids are sorted, shuffled with the seed, and cut by
/// largest-remainder rounding of the fractions; every nonzero fraction gets
/// at least one subject.
inline SplitAssignment split_by_subject(std::vector<std::string> subject_ids,
                                        std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  std::sort(subject_ids.begin(), subject_ids.end());
  subject_ids.erase(std::unique(subject_ids.begin(), subject_ids.end()), subject_ids.end());
  const std::size_t n = subject_ids.size();
  const auto nonzero = static_cast<std::size_t>(std::count_if(
      fractions.begin(), fractions.end(), [](double f) { return f > 0.0; }));
  if (n < nonzero)
    throw DataError("split: " + std::to_string(n) + " subjects cannot fill " +
                    std::to_string(nonzero) + " nonempty splits");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(sizes[k]);
    assigned += sizes[k];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (rem[k] > rem[best]) best = k;
    ++sizes[best];
    rem[best] = -1.0;
    ++assigned;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    if (fractions[k] > 0.0 && sizes[k] == 0) {
      const auto donor = static_cast<std::size_t>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[donor];
      ++sizes[k];
    }
  }

  Rng rng(seed);
  rng.shuffle(std::span<std::string>(subject_ids));
  SplitAssignment out;
  std::size_t i = 0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < sizes[k]; ++c) out[subject_ids[i++]] = static_cast<Split>(k);
  return out;
}

inline std::vector<std::string> subject_ids(const std::vector<RawSeries>& series) {
  std::vector<std::string> ids;
  for (const auto& s : series) ids.push_back(s.subject_id);
  return ids;
}

// ---------------------------------------------------------------------------
// Windowed dataset

struct WindowedDataset {
  Matrix inputs;   // n × (W·C), channel-major: column c·W + s holds step t-W+1+s
  Matrix targets;  // n × (H·C_out), column c·H + (h-1) holds step t+h
  std::vector<Split> split;
  std::vector<std::string> subject;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::vector<std::string> channels;
  std::vector<std::string> target_channels;
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::optional<Normalizer> normalizer;

  Eigen::Index rows() const noexcept { return inputs.rows(); }

  std::vector<Eigen::Index> indices(Split s) const {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) idx.push_back(static_cast<Eigen::Index>(i));
    return idx;
  }

  Matrix input_rows(Split s) const { return inputs(indices(s), Eigen::all); }
  Matrix target_rows(Split s) const { return targets(indices(s), Eigen::all); }

  std::size_t target_channel(Eigen::Index col) const {
    return static_cast<std::size_t>(col) / horizon;
  }
  int target_horizon(Eigen::Index col) const {
    return static_cast<int>(static_cast<std::size_t>(col) % horizon) + 1;
  }
};

/// Sliding windows of W past steps (inputs) and the following H steps of the
/// target channels. Windows never cross subjects; series shorter than W+H
/// are skipped with a warning, and windows touching a missing value are
/// dropped.
inline WindowedDataset windowize(const std::vector<RawSeries>& series, std::size_t W,
                                 std::size_t H, const std::vector<std::string>& target_channels,
                                 const SplitAssignment& assignment) {
  if (W < 1 || H < 1) throw ConfigError("window and horizon must be at least 1");
  if (target_channels.empty()) throw ConfigError("at least one target channel is required");
  WindowedDataset ds;
  ds.window = W;
  ds.horizon = H;
  ds.target_channels = target_channels;
  if (series.empty()) throw DataError("windowize: no series");
  ds.channels = series.front().channel_names;
  for (const auto& name : target_channels)
    if (std::find(ds.channels.begin(), ds.channels.end(), name) == ds.channels.end())
      throw SchemaError("target channel '" + name + "' is not a series channel");
  for (const auto& ch : ds.channels)
    for (std::size_t s = 0; s < W; ++s)
      ds.feature_names.push_back(ch + "@t-" + std::to_string(W - 1 - s));
  for (const auto& ch : target_channels)
    for (std::size_t h = 1; h <= H; ++h) ds.target_names.push_back(ch + "@t+" + std::to_string(h));

  const std::size_t C = ds.channels.size();
  const std::size_t Co = target_channels.size();
  std::vector<double> in_buf, out_buf;
  for (const auto& s : series) {
    if (s.channel_names != ds.channels)
      throw SchemaError("series " + s.subject_id + " has a different channel layout");
    auto sp = assignment.find(s.subject_id);
    if (sp == assignment.end())
      throw DataError("subject " + s.subject_id + " has no split assignment");
    if (s.size() < W + H) {
      spdlog::warn("subject {}: {} rows is shorter than window+horizon = {}; skipped",
                   s.subject_id, s.size(), W + H);
      continue;
    }
    std::vector<std::size_t> tidx;
    for (const auto& name : target_channels) tidx.push_back(s.channel_index(name));
    for (std::size_t t = W - 1; t + H < s.size(); ++t) {
      bool ok = true;
      const std::size_t in_start = in_buf.size(), out_start = out_buf.size();
      for (std::size_t c = 0; c < C && ok; ++c)
        for (std::size_t k = t + 1 - W; k <= t; ++k) {
          const double v = s.channels[c][k];
          if (std::isnan(v)) ok = false;
          in_buf.push_back(v);
        }
      for (std::size_t c = 0; c < Co && ok; ++c)
        for (std::size_t h = 1; h <= H; ++h) {
          const double v = s.channels[tidx[c]][t + h];
          if (std::isnan(v)) ok = false;
          out_buf.push_back(v);
        }
      if (!ok) {
        in_buf.resize(in_start);
        out_buf.resize(out_start);
        continue;
      }
      ds.split.push_back(sp->second);
      ds.subject.push_back(s.subject_id);
    }
  }
  const auto n = static_cast<Eigen::Index>(ds.split.size());
  ds.inputs = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      in_buf.data(), n, static_cast<Eigen::Index>(W * C));
  ds.targets = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out_buf.data(), n, static_cast<Eigen::Index>(H * Co));
  return ds;
}

/// Cleaning, subject split, train-only normalization and windowing in one
/// call.
struct DatasetRecipe {
  PreprocessConfig preprocess;
  std::size_t window = 6;
  std::size_t horizon = 3;
  std::vector<std::string> target_channels;  // empty = every channel
  std::array<double, 3> fractions{0.7, 0.1, 0.2};
  std::uint64_t seed = 0;
};

inline WindowedDataset build_dataset(const std::vector<RawSeries>& raw, const DatasetRecipe& r) {
  std::vector<RawSeries> clean;
  clean.reserve(raw.size());
  for (const auto& s : raw) clean.push_back(preprocess(s, r.preprocess));
  const auto assignment = split_by_subject(subject_ids(clean), r.fractions, r.seed);
  std::set<std::string> train;
  for (const auto& [id, sp] : assignment)
    if (sp == Split::train) train.insert(id);
  const auto norm = Normalizer::fit(clean, train, r.preprocess.normalization);
  for (auto& s : clean) s = norm.apply(std::move(s));
  auto targets = r.target_channels;
  if (targets.empty() && !clean.empty()) targets = clean.front().channel_names;
  auto ds = windowize(clean, r.window, r.horizon, targets, assignment);
  ds.normalizer = norm;
  if (ds.rows() == 0) throw DataError("dataset is empty after windowing");
  return ds;
}

// ---------------------------------------------------------------------------
// Persistence: inputs.csv, targets.csv, split.csv, meta.json

namespace detail {

inline std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header) {
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out += ',';
    out += header[j];
  }
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += textio::format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header", 1);
  header = textio::split_csv(line);
  std::vector<double> buf;
  std::size_t line_no = 1, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto f = textio::split_csv(line);
    if (f.size() != header.size())
      throw ParseError(path.string() + ": wrong field count", line_no);
    for (const auto& v : f) {
      double x;
      if (!textio::parse_double(v, x)) throw ParseError(path.string() + ": bad number", line_no);
      buf.push_back(x);
    }
    ++rows;
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(header.size()));
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const WindowedDataset& ds) {
  std::filesystem::create_directories(dir);
  textio::atomic_write(dir / "inputs.csv", detail::matrix_csv(ds.inputs, ds.feature_names));
  textio::atomic_write(dir / "targets.csv", detail::matrix_csv(ds.targets, ds.target_names));
  std::string split = "row,subject,split\n";
  for (std::size_t i = 0; i < ds.split.size(); ++i)
    split += std::to_string(i) + "," + ds.subject[i] + "," + to_string(ds.split[i]) + "\n";
  textio::atomic_write(dir / "split.csv", split);

  nlohmann::ordered_json meta;
  meta["window"] = ds.window;
  meta["horizon"] = ds.horizon;
  meta["channels"] = ds.channels;
  meta["target_channels"] = ds.target_channels;
  meta["feature_names"] = ds.feature_names;
  meta["target_names"] = ds.target_names;
  if (ds.normalizer) {
    meta["normalizer"] = {{"kind", to_string(ds.normalizer->kind)},
                          {"channels", ds.normalizer->channels},
                          {"offset", ds.normalizer->offset},
                          {"scale", ds.normalizer->scale}};
  } else {
    meta["normalizer"] = nullptr;
  }
  textio::atomic_write(dir / "meta.json", meta.dump(2) + "\n");
}

/// Loads a persisted dataset. With `with_test_targets` false the test-split
/// target rows are replaced by NaN, so calibration code cannot see them.
inline WindowedDataset load_dataset(const std::filesystem::path& dir, bool with_test_targets) {
  WindowedDataset ds;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(textio::read_file(dir / "meta.json"));
    ds.window = meta.at("window").get<std::size_t>();
    ds.horizon = meta.at("horizon").get<std::size_t>();
    ds.channels = meta.at("channels").get<std::vector<std::string>>();
    ds.target_channels = meta.at("target_channels").get<std::vector<std::string>>();
    if (!meta.at("normalizer").is_null()) {
      const auto& n = meta["normalizer"];
      Normalizer norm;
      norm.kind = parse_normalization(n.at("kind").get<std::string>());
      norm.channels = n.at("channels").get<std::vector<std::string>>();
      norm.offset = n.at("offset").get<std::vector<double>>();
      norm.scale = n.at("scale").get<std::vector<double>>();
      ds.normalizer = std::move(norm);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  ds.inputs = detail::read_matrix_csv(dir / "inputs.csv", ds.feature_names);
  ds.targets = detail::read_matrix_csv(dir / "targets.csv", ds.target_names);

  std::ifstream in(dir / "split.csv");
  if (!in) throw DataError("cannot open " + (dir / "split.csv").string());
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto f = textio::split_csv(line);
    if (f.size() != 3) throw ParseError("split.csv: expected row,subject,split", line_no);
    ds.subject.push_back(f[1]);
    ds.split.push_back(parse_split(f[2]));
  }
  if (static_cast<Eigen::Index>(ds.split.size()) != ds.inputs.rows() ||
      ds.inputs.rows() != ds.targets.rows())
    throw DataError(dir.string() + ": inputs, targets and split row counts differ");
  if (!with_test_targets)
    for (std::size_t i = 0; i < ds.split.size(); ++i)
      if (ds.split[i] == Split::test)
        ds.targets.row(static_cast<Eigen::Index>(i)).setConstant(std::nan(""));
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t n_subjects = 20;
  std::size_t steps_per_subject = 200;
  std::size_t n_channels = 3;
  /// "constant", "linear" (noise grows with the latent magnitude) or
  /// "periodic".
  std::string noise_scale_fn = "linear";
  double shift_magnitude = 0.0;
  std::uint64_t seed = 0;
  /// Used to decide which subjects are test subjects; matches the split that
  /// build_dataset derives with the same seed.
  std::array<double, 3> fractions{0.7, 0.1, 0.2};
  std::int64_t sample_period = 60;

  void validate() const {
    if (n_subjects < 1 || steps_per_subject < 1 || n_channels < 1)
      throw ConfigError("synthetic: counts must be positive");
    if (!(shift_magnitude >= 0.0)) throw ConfigError("synthetic: shift must be nonnegative");
    if (noise_scale_fn != "constant" && noise_scale_fn != "linear" && noise_scale_fn != "periodic")
      throw ConfigError("synthetic: unknown noise profile '" + noise_scale_fn + "'");
    if (sample_period <= 0) throw ConfigError("synthetic: sample period must be positive");
  }
};

/// Channels are fixed mixtures of two smooth AR(1) latents plus a slow
/// sinusoid and a subject offset, with heteroscedastic Gaussian noise.
/// Every channel of a test subject is shifted up by `shift_magnitude`.
inline std::vector<RawSeries> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<double> load1(spec.n_channels), load2(spec.n_channels), base(spec.n_channels);
  for (std::size_t c = 0; c < spec.n_channels; ++c) {
    load1[c] = rng.uniform(0.5, 1.0);
    load2[c] = rng.uniform(-0.5, 0.5);
    base[c] = rng.uniform(-1.0, 1.0);
  }

  std::vector<std::string> ids;
  const auto width = std::to_string(spec.n_subjects).size();
  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    auto num = std::to_string(i);
    ids.push_back("s" + std::string(width - num.size(), '0') + num);
  }
  SplitAssignment assignment;
  if (spec.shift_magnitude > 0.0) assignment = split_by_subject(ids, spec.fractions, spec.seed);

  constexpr double phi = 0.95;
  const double innov = std::sqrt(1.0 - phi * phi);
  std::vector<RawSeries> out;
  for (const auto& id : ids) {
    RawSeries s;
    s.subject_id = id;
    for (std::size_t c = 0; c < spec.n_channels; ++c) s.channel_names.push_back("ch" + std::to_string(c));
    s.channels.assign(spec.n_channels, std::vector<double>(spec.steps_per_subject));
    const double offset = rng.normal(0.0, 0.2);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double period = rng.uniform(30.0, 60.0);
    const bool shifted = assignment.count(id) && assignment.at(id) == Split::test;
    double l1 = rng.normal(), l2 = rng.normal();
    for (std::size_t t = 0; t < spec.steps_per_subject; ++t) {
      l1 = phi * l1 + innov * rng.normal();
      l2 = phi * l2 + innov * rng.normal();
      const double wave = 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
      double noise_sd = 0.2;
      if (spec.noise_scale_fn == "linear")
        noise_sd = 0.05 + 0.25 * std::abs(l1);
      else if (spec.noise_scale_fn == "periodic")
        noise_sd = 0.1 + 0.2 * (1.0 + std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 50.0)) / 2.0;
      s.timestamps.push_back(static_cast<std::int64_t>(t) * spec.sample_period);
      for (std::size_t c = 0; c < spec.n_channels; ++c) {
        double v = base[c] + offset + load1[c] * l1 + load2[c] * l2 + wave + noise_sd * rng.normal();
        if (shifted) v += spec.shift_magnitude;
        s.channels[c][t] = v;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rupi
