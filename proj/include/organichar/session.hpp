#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "organichar/common.hpp"

namespace organichar {

inline constexpr int kSessionFormatVersion = 1;

struct Sample {
  double t = 0.0;
  std::vector<double> values;

  friend bool operator==(const Sample& a, const Sample& b) {
    if (a.t != b.t || a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double x = a.values[i], y = b.values[i];
      if (std::isnan(x) && std::isnan(y)) continue;
      if (x != y) return false;
    }
    return true;
  }
};

// One modality's recording. Doppler samples are frames holding a variable
// number of (range_m, velocity_mps, intensity) triples.
struct SampleSeries {
  Modality modality = Modality::imu;
  double rate_hz = 0.0;
  std::vector<Sample> samples;

  bool operator==(const SampleSeries&) const = default;
};

struct GroundTruthInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string activity;

  bool operator==(const GroundTruthInterval&) const = default;
};

struct Session {
  std::string session_id;
  double duration_s = 0.0;
  std::map<Modality, SampleSeries> modalities;
  std::optional<std::vector<GroundTruthInterval>> ground_truth;

  bool operator==(const Session&) const = default;

  bool has(Modality m) const { return modalities.count(m) != 0; }

  // Activity covering time t, or nullopt when no interval covers it.
  std::optional<std::string> activity_at(double t) const {
    if (!ground_truth) return std::nullopt;
    for (const auto& g : *ground_truth)
      if (t >= g.start_s && t < g.end_s) return g.activity;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// CSV layout
// ---------------------------------------------------------------------------

inline std::vector<std::string> csv_columns(Modality m) {
  std::vector<std::string> cols{"t"};
  switch (m) {
    case Modality::doppler:
      cols.insert(cols.end(), {"range_m", "velocity_mps", "intensity"});
      break;
    case Modality::lidar:
      for (int i = 0; i < 360; ++i) cols.push_back("a" + std::to_string(i));
      break;
    case Modality::thermal:
      for (int i = 0; i < 100; ++i) cols.push_back("c" + std::to_string(i));
      break;
    case Modality::imu:
      cols.insert(cols.end(), {"ax", "ay", "az", "gx", "gy", "gz"});
      break;
    case Modality::pose:
      for (int i = 0; i < kPoseKeypoints; ++i) {
        cols.push_back("kp" + std::to_string(i) + "x");
        cols.push_back("kp" + std::to_string(i) + "y");
      }
      for (int i = 0; i < kPoseKeypoints; ++i) cols.push_back("vis" + std::to_string(i));
      break;
    case Modality::depth:
      for (int i = 0; i < 100; ++i) cols.push_back("d" + std::to_string(i));
      break;
  }
  return cols;
}

inline std::string join_columns(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out.push_back(',');
    out += cols[i];
  }
  return out;
}

namespace detail {

inline void write_series_csv(const SampleSeries& s, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << join_columns(csv_columns(s.modality)) << '\n';
  const std::size_t arity = payload_arity(s.modality);
  std::string line;
  for (const Sample& smp : s.samples) {
    const std::string ts = format_fixed(smp.t, 6);
    if (s.modality == Modality::doppler) {
      for (std::size_t p = 0; p + 2 < smp.values.size(); p += 3) {
        line = ts;
        for (std::size_t k = 0; k < 3; ++k) {
          line.push_back(',');
          line += format_double(smp.values[p + k]);
        }
        out << line << '\n';
      }
    } else {
      line = ts;
      for (std::size_t k = 0; k < arity && k < smp.values.size(); ++k) {
        line.push_back(',');
        line += format_double(smp.values[k]);
      }
      out << line << '\n';
    }
  }
  if (!out) throw Error("I/O failure writing " + file.string());
}

inline SampleSeries read_series_csv(Modality m, double rate_hz, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  const std::string fname = file.string();
  const auto expected = csv_columns(m);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(fname, 1, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (trim(line) != join_columns(expected))
    throw ParseError(fname, 1, 1, "unexpected header for " + std::string(modality_name(m)));

  SampleSeries series{m, rate_hz, {}};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != expected.size())
      throw ParseError(fname, lineno, std::min(fields.size(), expected.size()) + 1,
                       "expected " + std::to_string(expected.size()) + " columns, found " +
                           std::to_string(fields.size()));
    std::vector<double> vals(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      auto v = parse_double(fields[c]);
      if (!v) throw ParseError(fname, lineno, c + 1, "malformed number '" + fields[c] + "'");
      vals[c] = *v;
    }
    const double t = vals[0];
    if (!std::isfinite(t)) throw ParseError(fname, lineno, 1, "non-finite timestamp");
    if (!series.samples.empty()) {
      const double prev = series.samples.back().t;
      const bool same_frame = (m == Modality::doppler && t == prev);
      if (!same_frame && t <= prev)
        throw ParseError(fname, lineno, 1,
                         "non-monotonic timestamp " + fields[0] + " after " + format_fixed(prev, 6));
      if (same_frame) {
        auto& dst = series.samples.back().values;
        dst.insert(dst.end(), vals.begin() + 1, vals.end());
        continue;
      }
    }
    series.samples.push_back(Sample{t, std::vector<double>(vals.begin() + 1, vals.end())});
  }
  return series;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Directory I/O
// ---------------------------------------------------------------------------

inline void write_session(const Session& session, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json meta;
  meta["format_version"] = kSessionFormatVersion;
  meta["session_id"] = session.session_id;
  meta["duration_s"] = session.duration_s;
  nlohmann::ordered_json rates = nlohmann::ordered_json::object();
  for (const auto& [m, s] : session.modalities) rates[std::string(modality_name(m))] = s.rate_hz;
  meta["rates"] = rates;
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  for (Modality m : kAllModalities) {
    const fs::path file = dir / (std::string(modality_name(m)) + ".csv");
    auto it = session.modalities.find(m);
    if (it == session.modalities.end()) {
      fs::remove(file, ec);
      continue;
    }
    detail::write_series_csv(it->second, file);
  }
  const fs::path labels = dir / "labels.csv";
  if (session.ground_truth) {
    std::ofstream out(labels, std::ios::binary);
    if (!out) throw Error("cannot write " + labels.string());
    out << "start_s,end_s,activity\n";
    for (const auto& g : *session.ground_truth)
      out << format_fixed(g.start_s, 6) << ',' << format_fixed(g.end_s, 6) << ',' << g.activity << '\n';
  } else {
    fs::remove(labels, ec);
  }
}

inline Session load_session(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("session directory not found: " + dir.string());
  const fs::path meta_path = dir / "meta.json";
  Session session;
  nlohmann::json meta;
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    try {
      meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(meta_path.string(), 1, e.byte, e.what());
    }
    const int version = meta.value("format_version", kSessionFormatVersion);
    if (version != kSessionFormatVersion)
      throw Error(meta_path.string() + ": unsupported format_version " + std::to_string(version));
    session.session_id = meta.value("session_id", dir.filename().string());
    session.duration_s = meta.value("duration_s", 0.0);
  } else {
    session.session_id = dir.filename().string();
  }

  bool any = false;
  double last_t = 0.0;
  for (Modality m : kAllModalities) {
    const fs::path file = dir / (std::string(modality_name(m)) + ".csv");
    if (!fs::exists(file)) continue;
    double rate = nominal_rate_hz(m);
    if (meta.contains("rates") && meta["rates"].contains(std::string(modality_name(m))))
      rate = meta["rates"][std::string(modality_name(m))].get<double>();
    auto series = detail::read_series_csv(m, rate, file);
    if (!series.samples.empty()) last_t = std::max(last_t, series.samples.back().t);
    session.modalities.emplace(m, std::move(series));
    any = true;
  }
  if (!any && !fs::exists(meta_path))
    throw Error("no modality files found in " + dir.string());
  if (session.duration_s <= 0.0) session.duration_s = last_t;

  const fs::path labels = dir / "labels.csv";
  if (fs::exists(labels)) {
    std::ifstream in(labels, std::ios::binary);
    std::string line;
    std::size_t lineno = 0;
    std::vector<GroundTruthInterval> gt;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (lineno == 1 || trim(line).empty()) continue;
      auto c1 = line.find(',');
      auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
      if (c2 == std::string::npos) throw ParseError(labels.string(), lineno, 1, "expected start_s,end_s,activity");
      auto s = parse_double(std::string_view(line).substr(0, c1));
      auto e = parse_double(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
      if (!s) throw ParseError(labels.string(), lineno, 1, "malformed start_s");
      if (!e) throw ParseError(labels.string(), lineno, 2, "malformed end_s");
      gt.push_back({*s, *e, line.substr(c2 + 1)});
    }
    session.ground_truth = std::move(gt);
  }
  return session;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Finding {
  enum class Kind { non_monotonic, out_of_range, arity, rate_deviation, empty_series };
  Modality modality;
  Kind kind;
  std::string message;
};

struct GapStats {
  std::size_t samples = 0;
  double median_dt = 0.0;
  double max_gap = 0.0;
  std::size_t gaps = 0;  // intervals longer than twice the median spacing
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::map<Modality, GapStats> gaps;

  bool empty() const { return findings.empty(); }
};

// Measured rate must lie within this factor of the nominal rate.
inline constexpr double kRateTolerance = 0.3;

inline ValidationReport validate_session(const Session& session) {
  ValidationReport report;
  auto add = [&](Modality m, Finding::Kind k, std::string msg) {
    report.findings.push_back({m, k, std::string(modality_name(m)) + ": " + std::move(msg)});
  };
  for (const auto& [m, series] : session.modalities) {
    GapStats st;
    st.samples = series.samples.size();
    if (series.samples.empty()) {
      add(m, Finding::Kind::empty_series, "no samples");
      report.gaps[m] = st;
      continue;
    }
    const std::size_t arity = payload_arity(m);
    std::size_t arity_bad = 0, order_bad = 0, range_bad = 0;
    std::vector<double> dts;
    for (std::size_t i = 0; i < series.samples.size(); ++i) {
      const auto& s = series.samples[i];
      const bool ok_arity = (m == Modality::doppler) ? (!s.values.empty() && s.values.size() % 3 == 0)
                                                      : s.values.size() == arity;
      if (!ok_arity) ++arity_bad;
      if (s.t < 0.0 || s.t > session.duration_s + 1e-9) ++range_bad;
      if (i > 0) {
        const double dt = s.t - series.samples[i - 1].t;
        if (dt <= 0.0) ++order_bad;
        dts.push_back(dt);
      }
    }
    if (arity_bad)
      add(m, Finding::Kind::arity, std::to_string(arity_bad) + " samples with payload arity != " + std::to_string(arity));
    if (order_bad) add(m, Finding::Kind::non_monotonic, std::to_string(order_bad) + " non-increasing timestamps");
    if (range_bad) add(m, Finding::Kind::out_of_range, std::to_string(range_bad) + " timestamps outside [0, duration]");
    if (!dts.empty()) {
      st.median_dt = quantile_of(dts, 0.5);
      st.max_gap = *std::max_element(dts.begin(), dts.end());
      for (double d : dts)
        if (d > 2.0 * st.median_dt) ++st.gaps;
      if (st.median_dt > 0.0) {
        const double measured = 1.0 / st.median_dt;
        const double nominal = nominal_rate_hz(m);
        if (std::abs(measured - nominal) > kRateTolerance * nominal)
          add(m, Finding::Kind::rate_deviation,
              "measured rate " + format_fixed(measured, 2) + " Hz vs nominal " + format_fixed(nominal, 1) + " Hz");
      }
    }
    report.gaps[m] = st;
  }
  return report;
}

}  // namespace organichar
