#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "organichar/gmm.hpp"
#include "organichar/hdbscan.hpp"
#include "organichar/reduce.hpp"

namespace organichar {

enum class MomentSource { cluster, change };

inline std::string_view source_name(MomentSource s) { return s == MomentSource::cluster ? "cluster" : "change"; }

inline MomentSource parse_source(std::string_view s) {
  if (s == "cluster") return MomentSource::cluster;
  if (s == "change") return MomentSource::change;
  throw Error("unknown key-moment source '" + std::string(s) + "'");
}

struct KeyMoment {
  std::string session_id;
  double t_s = 0.0;
  Modality modality = Modality::imu;
  MomentSource source = MomentSource::cluster;
  double score = 0.0;
  std::optional<int> cluster_id;

  bool operator==(const KeyMoment&) const = default;
};

// ---------------------------------------------------------------------------
// Change detection
// ---------------------------------------------------------------------------

struct ChangeDetectorConfig {
  int K = 2;
  int M = 10;
  double alpha = 0.1;
  int top_n = 10;
  int warmup = 20;

  void validate() const {
    if (K < 1) throw Error("change detector: K must be >= 1");
    if (M < 1) throw Error("change detector: M must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("change detector: alpha must lie in (0, 1)");
    if (top_n < 1) throw Error("change detector: top_n must be >= 1");
    if (warmup < 0) throw Error("change detector: warmup must be >= 0");
  }
};

// Anomaly score of every sample, each scored before the model absorbs it.
inline std::vector<double> score_stream(const std::vector<Eigen::VectorXd>& stream, int K, double alpha) {
  std::vector<double> scores;
  scores.reserve(stream.size());
  GmmState st = gmm_init(stream, K, alpha);
  for (const auto& y : stream) {
    scores.push_back(gmm_score(st, y));
    gmm_update_inplace(st, y);
  }
  return scores;
}

// Top indices by score (ties -> earlier index), skipping the warm-up prefix.
inline std::vector<std::size_t> top_scores(const std::vector<double>& scores, std::size_t warmup, std::size_t top_n) {
  std::vector<std::size_t> idx;
  for (std::size_t i = warmup; i < scores.size(); ++i) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (idx.size() > top_n) idx.resize(top_n);
  return idx;
}

inline std::vector<KeyMoment> detect_changes(const FeatureRows& rows, const ChangeDetectorConfig& cfg) {
  cfg.validate();
  if (rows.size() < static_cast<std::size_t>(cfg.K))
    throw Error("detect_changes: " + std::to_string(rows.size()) + " valid windows, need >= " + std::to_string(cfg.K));
  const ReducedTable red = preprocess_features(rows, static_cast<std::size_t>(cfg.M));
  std::vector<Eigen::VectorXd> stream;
  stream.reserve(red.size());
  for (Eigen::Index i = 0; i < red.points.rows(); ++i) stream.emplace_back(red.points.row(i).transpose());
  const auto scores = score_stream(stream, cfg.K, cfg.alpha);
  std::vector<KeyMoment> out;
  for (std::size_t i : top_scores(scores, static_cast<std::size_t>(cfg.warmup), static_cast<std::size_t>(cfg.top_n)))
    out.push_back({red.keys[i].session_id, red.keys[i].t_s, rows.modality, MomentSource::change, scores[i], std::nullopt});
  return out;
}

inline std::vector<KeyMoment> detect_changes(const FeatureTable& table, const ChangeDetectorConfig& cfg,
                                             const std::string& session_id = {}) {
  return detect_changes(valid_rows(table, session_id), cfg);
}

// ---------------------------------------------------------------------------
// Cluster scoring and grid search
// ---------------------------------------------------------------------------

struct ScoreConfig {
  double w1 = 0.35, w2 = 0.2, w3 = 0.2;
  int C_min = 20, C_max = 40;
  double N_max = 0.8;

  void validate() const {
    if (w1 < 0 || w2 < 0 || w3 < 0) throw Error("score config: weights must be non-negative");
    if (C_min < 1 || C_max < C_min) throw Error("score config: need 1 <= C_min <= C_max");
    if (!(N_max > 0.0)) throw Error("score config: N_max must be positive");
  }
};

struct ScoreComponents {
  double count = 0.0, noise = 0.0, prob = 0.0;
};

inline double count_component(int n_clusters, const ScoreConfig& sc) {
  if (n_clusters <= 0) return 0.0;
  if (n_clusters < sc.C_min) return static_cast<double>(n_clusters) / sc.C_min;
  if (n_clusters > sc.C_max) return static_cast<double>(sc.C_max) / n_clusters;
  return 1.0;
}

inline double noise_component(double noise_ratio, const ScoreConfig& sc) {
  return std::max(0.0, 1.0 - noise_ratio / sc.N_max);
}

inline ScoreComponents score_components(const Clustering& c, const ScoreConfig& sc) {
  ScoreComponents s;
  s.count = count_component(c.n_clusters, sc);
  s.noise = c.labels.empty() ? 0.0 : noise_component(c.noise_ratio(), sc);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    if (c.labels[i] == kNoise) continue;
    sum += c.membership_prob[i];
    ++n;
  }
  s.prob = n ? sum / static_cast<double>(n) : 0.0;
  return s;
}

inline double score_clustering(const Clustering& c, const ScoreConfig& sc = {}) {
  const auto s = score_components(c, sc);
  return sc.w1 * s.count + sc.w2 * s.noise + sc.w3 * s.prob;
}

struct ClusteringGrid {
  std::vector<int> min_cluster_sizes{3, 5, 8};
  std::vector<int> min_samples{2, 5};
  std::vector<int> n_components{8, 80};
  double cluster_selection_epsilon = 0.0;

  std::size_t size() const { return min_cluster_sizes.size() * min_samples.size() * n_components.size(); }

  static ClusteringGrid for_modality(Modality m) {
    ClusteringGrid g;
    if (m == Modality::thermal) g.cluster_selection_epsilon = 0.02;
    return g;
  }
};

struct GridPoint {
  ClusteringConfig config;
  double score = 0.0;
  int n_clusters = 0;
  double noise_ratio = 0.0;
};

struct GridResult {
  ClusteringConfig config;
  Clustering clustering;
  double score = -1.0;
  std::vector<WindowKey> keys;
  std::vector<GridPoint> evaluated;  // in lexicographic config order
};

// Exhaustive search; the distance matrix is shared per n_components and the
// spanning tree per (n_components, min_samples).
inline GridResult grid_search_clustering(const FeatureRows& rows, const ClusteringGrid& grid,
                                         const ScoreConfig& sc = {}) {
  sc.validate();
  if (grid.size() == 0) throw Error("grid_search_clustering: empty grid");
  std::vector<ClusteringConfig> configs;
  for (int mcs : grid.min_cluster_sizes)
    for (int ms : grid.min_samples)
      for (int nc : grid.n_components) configs.push_back({mcs, ms, nc, grid.cluster_selection_epsilon});
  std::sort(configs.begin(), configs.end(), [](const ClusteringConfig& a, const ClusteringConfig& b) {
    return std::tie(a.min_cluster_size, a.min_samples, a.n_components) <
           std::tie(b.min_cluster_size, b.min_samples, b.n_components);
  });

  const std::size_t d = rows.values.empty() ? 0 : rows.values.front().size();
  std::map<int, ReducedTable> reduced;
  std::map<int, std::unique_ptr<DensityClusterer>> clusterers;
  std::map<std::pair<int, int>, std::vector<DensityClusterer::MstEdge>> trees;
  GridResult best;
  for (const auto& cfg : configs) {
    // Component counts beyond the feature dimension collapse onto the full rotation.
    const int nc_eff = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.n_components), d));
    if (!reduced.count(nc_eff)) {
      reduced[nc_eff] = preprocess_features(rows, static_cast<std::size_t>(nc_eff));
      clusterers[nc_eff] = std::make_unique<DensityClusterer>(reduced[nc_eff].points);
    }
    const auto& cl = *clusterers[nc_eff];
    if (cl.size() < cfg.min_cluster_size) continue;
    auto key = std::make_pair(nc_eff, cfg.min_samples);
    if (!trees.count(key)) trees[key] = cl.mutual_reachability_mst(cfg.min_samples);
    Clustering c = DensityClusterer::cluster_from_mst(cl.size(), trees[key], cfg.min_cluster_size,
                                                      cfg.cluster_selection_epsilon);
    const double s = score_clustering(c, sc);
    best.evaluated.push_back({cfg, s, c.n_clusters, c.noise_ratio()});
    if (s > best.score) {
      best.score = s;
      best.config = cfg;
      best.clustering = std::move(c);
      best.keys = reduced[nc_eff].keys;
    }
  }
  if (best.score < 0.0)
    throw Error("grid_search_clustering: " + std::to_string(rows.size()) + " windows, too few for every grid point");
  return best;
}

inline GridResult grid_search_clustering(const FeatureTable& table, const ClusteringGrid& grid,
                                         const ScoreConfig& sc = {}) {
  return grid_search_clustering(valid_rows(table), grid, sc);
}

inline Clustering cluster_density(const ReducedTable& reduced, const ClusteringConfig& cfg) {
  return cluster_density(reduced.points, cfg);
}

// Highest-membership windows of every cluster (ties -> earlier t_s, then session).
inline std::vector<KeyMoment> select_representatives(const Clustering& c, const std::vector<WindowKey>& keys,
                                                     Modality modality, int per_cluster = 1) {
  if (per_cluster < 1) throw Error("select_representatives: per_cluster must be >= 1");
  if (keys.size() != c.labels.size()) throw Error("select_representatives: key/label size mismatch");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(c.n_clusters));
  for (std::size_t i = 0; i < c.labels.size(); ++i)
    if (c.labels[i] != kNoise) members[static_cast<std::size_t>(c.labels[i])].push_back(i);
  std::vector<KeyMoment> out;
  for (int k = 0; k < c.n_clusters; ++k) {
    auto& mem = members[static_cast<std::size_t>(k)];
    std::sort(mem.begin(), mem.end(), [&](std::size_t a, std::size_t b) {
      if (c.membership_prob[a] != c.membership_prob[b]) return c.membership_prob[a] > c.membership_prob[b];
      if (keys[a].t_s != keys[b].t_s) return keys[a].t_s < keys[b].t_s;
      return keys[a].session_id < keys[b].session_id;
    });
    const std::size_t take = std::min(mem.size(), static_cast<std::size_t>(per_cluster));
    for (std::size_t j = 0; j < take; ++j) {
      const auto i = mem[j];
      out.push_back({keys[i].session_id, keys[i].t_s, modality, MomentSource::cluster, c.membership_prob[i], k});
    }
  }
  return out;
}

inline std::vector<KeyMoment> select_representatives(const Clustering& c, const FeatureTable& table,
                                                     int per_cluster = 1, const std::string& session_id = {}) {
  return select_representatives(c, valid_rows(table, session_id).keys, table.modality, per_cluster);
}

// ---------------------------------------------------------------------------
// Merging and export
// ---------------------------------------------------------------------------

inline bool moment_time_less(const KeyMoment& a, const KeyMoment& b) {
  return std::tie(a.session_id, a.t_s, a.modality) < std::tie(b.session_id, b.t_s, b.modality);
}

// Greedy by score: a moment survives only if no already-kept moment of the
// same session lies within min_gap_s. Result is time-sorted.
inline std::vector<KeyMoment> merge_key_moments(const std::map<Modality, std::vector<KeyMoment>>& per_modality,
                                                double min_gap_s) {
  if (!(min_gap_s >= 0.0)) throw Error("merge_key_moments: min_gap_s must be >= 0");
  std::vector<KeyMoment> all;
  for (const auto& [m, list] : per_modality) all.insert(all.end(), list.begin(), list.end());
  std::stable_sort(all.begin(), all.end(), [](const KeyMoment& a, const KeyMoment& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    if (a.modality != b.modality) return modality_name(a.modality) < modality_name(b.modality);
    return a.session_id < b.session_id;
  });
  std::map<std::string, std::vector<double>> kept_times;
  std::vector<KeyMoment> kept;
  for (const auto& km : all) {
    auto& times = kept_times[km.session_id];
    const bool clash =
        std::any_of(times.begin(), times.end(), [&](double t) { return std::abs(t - km.t_s) <= min_gap_s; });
    if (clash) continue;
    times.push_back(km.t_s);
    kept.push_back(km);
  }
  std::sort(kept.begin(), kept.end(), moment_time_less);
  return kept;
}

inline nlohmann::ordered_json key_moment_to_json(const KeyMoment& km) {
  nlohmann::ordered_json j;
  j["session_id"] = km.session_id;
  j["t_s"] = km.t_s;
  j["modality"] = std::string(modality_name(km.modality));
  j["source"] = std::string(source_name(km.source));
  j["score"] = km.score;
  j["cluster_id"] = km.cluster_id ? nlohmann::ordered_json(*km.cluster_id) : nlohmann::ordered_json(nullptr);
  return j;
}

inline KeyMoment key_moment_from_json(const nlohmann::json& j) {
  KeyMoment km;
  km.session_id = j.value("session_id", std::string{});
  km.t_s = j.at("t_s").get<double>();
  km.modality = modality_from_string(j.at("modality").get<std::string>());
  km.source = parse_source(j.at("source").get<std::string>());
  km.score = j.at("score").get<double>();
  if (j.contains("cluster_id") && !j["cluster_id"].is_null()) km.cluster_id = j["cluster_id"].get<int>();
  if (km.source == MomentSource::cluster && !km.cluster_id) throw Error("cluster key moment without cluster_id");
  return km;
}

inline void write_key_moments_jsonl(const std::vector<KeyMoment>& moments, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& km : moments) out << key_moment_to_json(km).dump() << '\n';
}

inline std::vector<KeyMoment> read_key_moments_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::vector<KeyMoment> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(key_moment_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string(), lineno, 1, e.what());
    }
  }
  return out;
}

}  // namespace organichar
