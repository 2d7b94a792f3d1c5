#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>

#include <nlohmann/json.hpp>

#include "organichar/annotate.hpp"
#include "organichar/features.hpp"
#include "organichar/har.hpp"
#include "organichar/keymoments.hpp"
#include "organichar/labels.hpp"
#include "organichar/remote.hpp"
#include "organichar/session.hpp"
#include "organichar/synthetic.hpp"

namespace organichar {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct IncrementalPolicy {
  double confidence_floor = 0.6;
  bool retrain_every_session = true;
  double lambda = 0.4;  // granularity the per-session model is trained at

  void validate() const {
    if (!(confidence_floor > 0.0 && confidence_floor < 1.0))
      throw Error("incremental: confidence_floor must lie in (0, 1)");
  }
};

inline constexpr int kConfigFormatVersion = 1;

struct PipelineConfig {
  std::uint64_t seed = 7;
  unsigned jobs = 1;
  WindowSpec window;
  ChangeDetectorConfig change{2, 10, 0.1, 2, 20};
  ClusteringGrid clustering;
  double thermal_epsilon = 0.02;
  double cluster_stride_s = 2.0;  // subsampling of pooled windows before clustering
  int representatives_per_cluster = 1;
  ScoreConfig score;
  double merge_gap_s = 10.0;
  double theta_conf = 0.8;
  std::vector<double> lambdas{0.2, 0.3, 0.4};
  double label_spread_s = 2.5;  // windows within this distance of an annotated moment inherit its label
  HarGridConfig har;
  IncrementalPolicy incremental;
  std::string describer = "mock";
  std::string reasoner = "mock";
  std::string embedder = "mock";
  MockNoiseConfig mock_noise = MockNoiseConfig::corpus_default();
  HttpOptions http;

  ClusteringGrid grid_for(Modality m) const {
    ClusteringGrid g = clustering;
    g.cluster_selection_epsilon = m == Modality::thermal ? thermal_epsilon : clustering.cluster_selection_epsilon;
    return g;
  }

  void validate() const {
    window.validate();
    change.validate();
    score.validate();
    har.validate();
    incremental.validate();
    mock_noise.validate();
    http.validate();
    if (clustering.size() == 0) throw Error("config: empty clustering grid");
    if (jobs < 1) throw Error("config: jobs must be >= 1");
    if (!(cluster_stride_s >= 0.0)) throw Error("config: cluster_stride_s must be >= 0");
    if (representatives_per_cluster < 1) throw Error("config: representatives_per_cluster must be >= 1");
    if (!(merge_gap_s >= 0.0)) throw Error("config: merge_gap_s must be >= 0");
    if (!(theta_conf >= 0.0 && theta_conf <= 1.0)) throw Error("config: theta_conf must lie in [0, 1]");
    if (!(label_spread_s >= 0.0)) throw Error("config: label_spread_s must be >= 0");
    if (lambdas.empty() || !std::is_sorted(lambdas.begin(), lambdas.end()))
      throw Error("config: lambdas must be a non-empty ascending list");
    for (double l : lambdas)
      if (!(l >= 0.0 && l <= 1.0)) throw Error("config: lambdas must lie in [0, 1]");
    for (const auto* e : {&describer, &reasoner, &embedder})
      if (*e != "mock" && e->rfind("http://", 0) != 0 && e->rfind("https://", 0) != 0)
        throw Error("config: service endpoint '" + *e + "' must be \"mock\" or an http(s) URL");
  }
};

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["format_version"] = kConfigFormatVersion;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["window"] = {{"length_s", c.window.length_s}, {"stride_s", c.window.stride_s}};
  j["change_detector"] = {{"K", c.change.K},
                          {"M", c.change.M},
                          {"alpha", c.change.alpha},
                          {"top_n", c.change.top_n},
                          {"warmup", c.change.warmup}};
  j["clustering"] = {{"min_cluster_sizes", c.clustering.min_cluster_sizes},
                     {"min_samples", c.clustering.min_samples},
                     {"n_components", c.clustering.n_components},
                     {"cluster_selection_epsilon", c.clustering.cluster_selection_epsilon},
                     {"thermal_epsilon", c.thermal_epsilon},
                     {"stride_s", c.cluster_stride_s},
                     {"representatives_per_cluster", c.representatives_per_cluster}};
  j["score"] = {{"w1", c.score.w1},       {"w2", c.score.w2},       {"w3", c.score.w3},
                {"C_min", c.score.C_min}, {"C_max", c.score.C_max}, {"N_max", c.score.N_max}};
  j["merge_gap_s"] = c.merge_gap_s;
  j["theta_conf"] = c.theta_conf;
  j["lambdas"] = c.lambdas;
  j["label_spread_s"] = c.label_spread_s;
  std::vector<std::string> modes;
  for (auto m : c.har.modes) modes.emplace_back(vote_mode_name(m));
  j["classifiers"] = {{"knn_k", c.har.classifiers.knn_k},
                      {"forest_trees", c.har.classifiers.forest_trees},
                      {"forest_depth", c.har.classifiers.forest_depth},
                      {"boost_rounds", c.har.classifiers.boost_rounds},
                      {"boost_depth", c.har.classifiers.boost_depth},
                      {"modes", modes},
                      {"inner_folds", c.har.inner_folds}};
  j["incremental"] = {{"confidence_floor", c.incremental.confidence_floor},
                      {"retrain_every_session", c.incremental.retrain_every_session},
                      {"lambda", c.incremental.lambda}};
  j["describer"] = c.describer;
  j["reasoner"] = c.reasoner;
  j["embedder"] = c.embedder;
  j["mock_noise"] = {{"drop_rate", c.mock_noise.drop_rate},
                     {"confuse_rate", c.mock_noise.confuse_rate},
                     {"confidence_min", c.mock_noise.confidence_min},
                     {"confidence_max", c.mock_noise.confidence_max},
                     {"paraphrase", c.mock_noise.paraphrase}};
  j["http"] = {{"timeout_s", c.http.timeout_s}, {"retries", c.http.retries}};
  return j;
}

namespace detail {

// Copies recognised keys of `j` onto `out`; unknown keys are rejected so a
// typo never silently falls back to a default.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error("config: " + where_ + " must be an object");
  }
  ~ConfigReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error("config: unknown key '" + where_ + k + "'");
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error("config: '" + where_ + key + "' has the wrong type");
    }
  }
  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string path(const char* key) const { return where_ + key + "."; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Applies a (possibly partial) JSON document on top of `base`.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  {
    detail::ConfigReader r(j, "");
    int version = kConfigFormatVersion;
    r.get("format_version", version);
    if (version != kConfigFormatVersion) throw Error("config: unsupported format_version " + std::to_string(version));
    r.get("seed", c.seed);
    r.get("jobs", c.jobs);
    if (auto* s = r.sub("window")) {
      detail::ConfigReader w(*s, r.path("window"));
      w.get("length_s", c.window.length_s);
      w.get("stride_s", c.window.stride_s);
    }
    if (auto* s = r.sub("change_detector")) {
      detail::ConfigReader w(*s, r.path("change_detector"));
      w.get("K", c.change.K);
      w.get("M", c.change.M);
      w.get("alpha", c.change.alpha);
      w.get("top_n", c.change.top_n);
      w.get("warmup", c.change.warmup);
    }
    if (auto* s = r.sub("clustering")) {
      detail::ConfigReader w(*s, r.path("clustering"));
      w.get("min_cluster_sizes", c.clustering.min_cluster_sizes);
      w.get("min_samples", c.clustering.min_samples);
      w.get("n_components", c.clustering.n_components);
      w.get("cluster_selection_epsilon", c.clustering.cluster_selection_epsilon);
      w.get("thermal_epsilon", c.thermal_epsilon);
      w.get("stride_s", c.cluster_stride_s);
      w.get("representatives_per_cluster", c.representatives_per_cluster);
    }
    if (auto* s = r.sub("score")) {
      detail::ConfigReader w(*s, r.path("score"));
      w.get("w1", c.score.w1);
      w.get("w2", c.score.w2);
      w.get("w3", c.score.w3);
      w.get("C_min", c.score.C_min);
      w.get("C_max", c.score.C_max);
      w.get("N_max", c.score.N_max);
    }
    r.get("merge_gap_s", c.merge_gap_s);
    r.get("theta_conf", c.theta_conf);
    r.get("lambdas", c.lambdas);
    r.get("label_spread_s", c.label_spread_s);
    if (auto* s = r.sub("classifiers")) {
      detail::ConfigReader w(*s, r.path("classifiers"));
      w.get("knn_k", c.har.classifiers.knn_k);
      w.get("forest_trees", c.har.classifiers.forest_trees);
      w.get("forest_depth", c.har.classifiers.forest_depth);
      w.get("boost_rounds", c.har.classifiers.boost_rounds);
      w.get("boost_depth", c.har.classifiers.boost_depth);
      w.get("inner_folds", c.har.inner_folds);
      std::vector<std::string> modes;
      w.get("modes", modes);
      if (!modes.empty()) {
        c.har.modes.clear();
        for (const auto& m : modes) c.har.modes.push_back(parse_vote_mode(m));
      }
    }
    if (auto* s = r.sub("incremental")) {
      detail::ConfigReader w(*s, r.path("incremental"));
      w.get("confidence_floor", c.incremental.confidence_floor);
      w.get("retrain_every_session", c.incremental.retrain_every_session);
      w.get("lambda", c.incremental.lambda);
    }
    r.get("describer", c.describer);
    r.get("reasoner", c.reasoner);
    r.get("embedder", c.embedder);
    if (auto* s = r.sub("mock_noise")) {
      detail::ConfigReader w(*s, r.path("mock_noise"));
      w.get("drop_rate", c.mock_noise.drop_rate);
      w.get("confuse_rate", c.mock_noise.confuse_rate);
      w.get("confidence_min", c.mock_noise.confidence_min);
      w.get("confidence_max", c.mock_noise.confidence_max);
      w.get("paraphrase", c.mock_noise.paraphrase);
    }
    if (auto* s = r.sub("http")) {
      detail::ConfigReader w(*s, r.path("http"));
      w.get("timeout_s", c.http.timeout_s);
      w.get("retries", c.http.retries);
    }
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& file, PipelineConfig base = {}) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config " + file.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

// ORGANIC_SEED, ORGANIC_JOBS, ORGANIC_DESCRIBER_URL, ORGANIC_REASONER_URL,
// ORGANIC_EMBEDDER_URL, ORGANIC_THETA_CONF, ORGANIC_MERGE_GAP_S.
inline PipelineConfig apply_env_overrides(PipelineConfig c,
                                          const std::function<const char*(const char*)>& getenv_fn = std::getenv) {
  auto num = [&](const char* name) -> std::optional<double> {
    const char* v = getenv_fn(name);
    if (!v || !*v) return std::nullopt;
    auto d = parse_double(v);
    if (!d) throw Error(std::string(name) + ": not a number: '" + v + "'");
    return d;
  };
  auto str = [&](const char* name) -> std::optional<std::string> {
    const char* v = getenv_fn(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (const char* v = getenv_fn("ORGANIC_SEED"); v && *v) {
    std::uint64_t s = 0;
    const std::string_view sv(v);
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), s);
    if (ec != std::errc() || p != sv.data() + sv.size()) throw Error(std::string("ORGANIC_SEED: not an integer: '") + v + "'");
    c.seed = s;
  }
  if (auto j = num("ORGANIC_JOBS")) {
    if (*j < 1) throw Error("ORGANIC_JOBS must be >= 1");
    c.jobs = static_cast<unsigned>(*j);
  }
  if (auto u = str("ORGANIC_DESCRIBER_URL")) c.describer = *u;
  if (auto u = str("ORGANIC_REASONER_URL")) c.reasoner = *u;
  if (auto u = str("ORGANIC_EMBEDDER_URL")) c.embedder = *u;
  if (auto t = num("ORGANIC_THETA_CONF")) c.theta_conf = *t;
  if (auto g = num("ORGANIC_MERGE_GAP_S")) c.merge_gap_s = *g;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping
// ---------------------------------------------------------------------------

class StageError : public Error {
 public:
  StageError(std::string stage, std::string input, const std::string& what)
      : Error(stage + " [" + input + "]: " + what), stage_(std::move(stage)), input_(std::move(input)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& input() const noexcept { return input_; }

 private:
  std::string stage_, input_;
};

template <class F>
auto run_stage(const std::string& stage, const std::string& input, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, input, e.what());
  }
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct CorpusSession {
  Session session;
  std::map<Modality, FeatureTable> tables;
  std::optional<ActivityScript> script;

  std::vector<double> window_times() const {
    std::vector<double> t;
    if (tables.empty()) return t;
    for (const auto& w : tables.begin()->second.windows) t.push_back(w.t_s);
    return t;
  }
};

inline constexpr std::string_view kScriptFile = "script.txt";

inline std::vector<CorpusSession> prepare_corpus(std::vector<Session> sessions, std::vector<std::optional<ActivityScript>> scripts,
                                                 const PipelineConfig& cfg) {
  if (sessions.empty()) throw Error("no sessions given");
  scripts.resize(sessions.size());
  std::set<std::string> ids;
  for (const auto& s : sessions)
    if (!ids.insert(s.session_id).second) throw Error("duplicate session id '" + s.session_id + "'");
  std::vector<CorpusSession> out(sessions.size());
  parallel_for(sessions.size(), cfg.jobs, [&](std::size_t i) {
    out[i].tables = run_stage("featurize", sessions[i].session_id,
                              [&] { return featurize_session(sessions[i], cfg.window); });
    out[i].session = std::move(sessions[i]);
    out[i].script = std::move(scripts[i]);
  });
  return out;
}

inline std::vector<CorpusSession> load_corpus(const std::vector<std::filesystem::path>& dirs, const PipelineConfig& cfg) {
  if (dirs.empty()) throw Error("no session directories given");
  std::vector<Session> sessions;
  std::vector<std::optional<ActivityScript>> scripts;
  for (const auto& d : dirs) {
    sessions.push_back(run_stage("load", d.string(), [&] { return load_session(d); }));
    if (std::filesystem::exists(d / kScriptFile))
      scripts.push_back(run_stage("load", (d / kScriptFile).string(), [&] { return load_script(d / kScriptFile); }));
    else
      scripts.emplace_back();
  }
  return prepare_corpus(std::move(sessions), std::move(scripts), cfg);
}

// ---------------------------------------------------------------------------
// Service factories
// ---------------------------------------------------------------------------

inline std::unique_ptr<Describer> make_describer(const PipelineConfig& cfg, const std::vector<CorpusSession>& corpus) {
  if (cfg.describer != "mock") return std::make_unique<HttpDescriber>(cfg.describer, cfg.http);
  std::map<std::string, ActivityScript> scripts;
  for (const auto& c : corpus) {
    if (!c.script)
      throw Error("mock describer needs a ground-truth script for session '" + c.session.session_id + "' (" +
                  std::string(kScriptFile) + ")");
    scripts[c.session.session_id] = *c.script;
  }
  return std::make_unique<MockDescriber>(std::move(scripts), cfg.mock_noise, sub_seed(cfg.seed, "describer"));
}

inline std::unique_ptr<Reasoner> make_reasoner(const PipelineConfig& cfg) {
  if (cfg.reasoner == "mock") return std::make_unique<LexiconReasoner>();
  return std::make_unique<HttpReasoner>(cfg.reasoner, cfg.http);
}

inline std::unique_ptr<Embedder> make_embedder(const PipelineConfig& cfg) {
  if (cfg.embedder == "mock") return std::make_unique<HashEmbedder>();
  return std::make_unique<HttpEmbedder>(cfg.embedder, cfg.http);
}

// ---------------------------------------------------------------------------
// Key moments
// ---------------------------------------------------------------------------

struct KeyMomentResult {
  std::map<Modality, GridResult> grids;
  std::map<Modality, std::vector<KeyMoment>> per_modality;
  std::vector<KeyMoment> merged;
  double annotated_fraction = 0.0;
};

// Fraction of recorded time covered by the clips of the given moments.
inline double clip_coverage(const std::vector<KeyMoment>& moments, const std::vector<const CorpusSession*>& corpus,
                            double clip_s) {
  double total = 0.0, covered = 0.0;
  for (const auto* c : corpus) {
    total += c->session.duration_s;
    std::vector<std::pair<double, double>> iv;
    for (const auto& m : moments)
      if (m.session_id == c->session.session_id)
        iv.emplace_back(std::max(0.0, m.t_s - clip_s), std::min(c->session.duration_s, m.t_s));
    std::sort(iv.begin(), iv.end());
    double end = -1.0;
    for (auto [a, b] : iv) {
      if (b <= end) continue;
      covered += b - std::max(a, end);
      end = b;
    }
  }
  return total > 0.0 ? covered / total : 0.0;
}

// Pooled density clustering per modality plus per-session change detection,
// merged across modalities.
inline KeyMomentResult identify_key_moments(const std::vector<const CorpusSession*>& corpus, const PipelineConfig& cfg) {
  KeyMomentResult r;
  std::set<Modality> mods;
  for (const auto* c : corpus)
    for (const auto& [m, t] : c->tables) mods.insert(m);
  std::vector<Modality> mod_list(mods.begin(), mods.end());
  std::vector<std::optional<GridResult>> grids(mod_list.size());
  std::vector<std::vector<KeyMoment>> moments(mod_list.size());
  parallel_for(mod_list.size(), cfg.jobs, [&](std::size_t k) {
    const Modality m = mod_list[k];
    FeatureRows rows{m, {}, {}};
    for (const auto* c : corpus)
      if (auto it = c->tables.find(m); it != c->tables.end())
        append_rows(rows, valid_rows(it->second, c->session.session_id, cfg.cluster_stride_s));
    const int smallest = *std::min_element(cfg.clustering.min_cluster_sizes.begin(), cfg.clustering.min_cluster_sizes.end());
    if (rows.size() >= static_cast<std::size_t>(std::max(smallest, 2))) {
      grids[k] = run_stage("keymoments/cluster", std::string(modality_name(m)),
                           [&] { return grid_search_clustering(rows, cfg.grid_for(m), cfg.score); });
      moments[k] = select_representatives(grids[k]->clustering, grids[k]->keys, m, cfg.representatives_per_cluster);
    }
    for (const auto* c : corpus)
      if (auto it = c->tables.find(m); it != c->tables.end()) {
        auto ch = run_stage("keymoments/change", c->session.session_id + "/" + std::string(modality_name(m)),
                            [&] { return detect_changes(it->second, cfg.change, c->session.session_id); });
        moments[k].insert(moments[k].end(), ch.begin(), ch.end());
      }
  });
  for (std::size_t k = 0; k < mod_list.size(); ++k) {
    if (grids[k]) r.grids.emplace(mod_list[k], std::move(*grids[k]));
    r.per_modality[mod_list[k]] = std::move(moments[k]);
  }
  r.merged = merge_key_moments(r.per_modality, cfg.merge_gap_s);
  r.annotated_fraction = clip_coverage(r.merged, corpus, cfg.window.length_s);
  return r;
}

inline std::vector<DescriberRequest> requests_for(const std::vector<KeyMoment>& moments, const WindowSpec& w) {
  std::vector<DescriberRequest> out;
  for (const auto& m : moments) {
    DescriberRequest q;
    q.session_id = m.session_id;
    q.t_s = m.t_s;
    q.clip_length_s = w.length_s;
    out.push_back(q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

struct LabelResult {
  std::vector<SceneDescription> confident;
  Consolidation consolidation;
  std::vector<SemanticProfile> profiles;
  SimilarityMatrix similarity;
  LabelHierarchy hierarchy;

  // Base label of each confident description (empty when unassigned).
  std::string base_label_of(std::size_t i) const {
    const auto& a = consolidation.assigned[i];
    return a ? consolidation.clusters[*a].label : std::string{};
  }
};

inline LabelResult build_labels(std::vector<SceneDescription> confident, const Reasoner& reasoner,
                                const Embedder& embedder, const std::vector<double>& lambdas) {
  if (confident.empty()) throw Error("no confident descriptions to build labels from");
  LabelResult r;
  r.confident = std::move(confident);
  r.consolidation = consolidate_activities(r.confident, reasoner);
  if (r.consolidation.clusters.empty()) throw Error("consolidation produced no activity clusters");
  std::vector<std::string> zones;
  for (const auto& c : r.consolidation.clusters) {
    r.profiles.push_back(expand_semantics(c.label, c, reasoner, embedder));
    zones.push_back(c.zone);
  }
  r.similarity = similarity_matrix(r.profiles);
  r.hierarchy = build_hierarchy(r.similarity, zones, lambdas, reasoner);
  r.hierarchy.zone_assignment = r.consolidation.zone_map.assignment;
  return r;
}

struct AnnotatedMoment {
  std::string session_id;
  double t_s = 0.0;
  std::string base_label;
};

inline std::vector<AnnotatedMoment> annotated_moments(const LabelResult& lr) {
  std::vector<AnnotatedMoment> out;
  for (std::size_t i = 0; i < lr.confident.size(); ++i) {
    auto l = lr.base_label_of(i);
    if (!l.empty()) out.push_back({lr.confident[i].session_id, lr.confident[i].t_s, std::move(l)});
  }
  return out;
}

// Windows within `spread` seconds of an annotated moment take its label at
// lambda (nearest moment wins, earlier on ties).
inline std::vector<WindowLabel> window_labels_from_annotations(
    const std::vector<double>& window_times, const std::vector<AnnotatedMoment>& moments,
    const std::map<std::string, std::pair<std::string, std::string>>& mapping, double spread) {
  std::vector<const AnnotatedMoment*> ms;
  for (const auto& m : moments) ms.push_back(&m);
  std::sort(ms.begin(), ms.end(), [](const auto* a, const auto* b) { return a->t_s < b->t_s; });
  std::vector<WindowLabel> out;
  for (double t : window_times) {
    const AnnotatedMoment* best = nullptr;
    double best_d = 0.0;
    for (const auto* m : ms) {
      const double d = std::abs(m->t_s - t);
      if (d <= spread + 1e-9 && (!best || d < best_d - 1e-12)) {
        best = m;
        best_d = d;
      }
    }
    if (!best) continue;
    auto it = mapping.find(best->base_label);
    if (it == mapping.end()) throw Error("label '" + best->base_label + "' missing from hierarchy");
    out.push_back({t, it->second.second, it->second.first});
  }
  return out;
}

// Ground-truth activity of every window: the activity covering its midpoint.
inline std::vector<std::pair<double, std::string>> ground_truth_window_labels(const Session& s,
                                                                              const std::vector<double>& times,
                                                                              const WindowSpec& w) {
  std::vector<std::pair<double, std::string>> out;
  for (double t : times) out.emplace_back(t, s.activity_at(t - w.length_s / 2.0).value_or(std::string(kUndefinedLabel)));
  return out;
}

inline void write_annotations_jsonl(const std::vector<AnnotatedMoment>& ms, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& m : ms) {
    nlohmann::ordered_json j;
    j["session_id"] = m.session_id;
    j["t_s"] = m.t_s;
    j["label"] = m.base_label;
    out << j.dump() << '\n';
  }
}

inline std::vector<AnnotatedMoment> read_annotations_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::vector<AnnotatedMoment> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("session_id").get<std::string>(), j.at("t_s").get<double>(), j.at("label").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string(), lineno, 1, e.what());
    }
  }
  return out;
}

// Training rows from annotated moments at lambda.
inline LabeledDataset build_training_dataset(const std::vector<const CorpusSession*>& corpus,
                                             const std::vector<AnnotatedMoment>& moments,
                                             const LabelHierarchy& hierarchy, double lambda,
                                             const PipelineConfig& cfg) {
  const auto mapping = hierarchy.mapping_at(lambda);
  LabeledDataset ds;
  for (const auto* c : corpus) {
    std::vector<AnnotatedMoment> mine;
    for (const auto& m : moments)
      if (m.session_id == c->session.session_id) mine.push_back(m);
    const auto labels = window_labels_from_annotations(c->window_times(), mine, mapping, cfg.label_spread_s);
    add_session_windows(ds, c->session.session_id, c->tables, labels);
  }
  ds.validate();
  return ds;
}

inline LabeledDataset build_training_dataset(const std::vector<const CorpusSession*>& corpus, const LabelResult& lr,
                                             double lambda, const PipelineConfig& cfg) {
  return build_training_dataset(corpus, annotated_moments(lr), lr.hierarchy, lambda, cfg);
}

// ---------------------------------------------------------------------------
// Label alignment
// ---------------------------------------------------------------------------

// Maximum-weight assignment of rows to columns (Hungarian method on the
// padded square cost matrix). Returns the column of each row, or -1.
inline std::vector<int> optimal_assignment(const std::vector<std::vector<double>>& gain) {
  const std::size_t rows = gain.size();
  std::size_t cols = 0;
  for (const auto& r : gain) cols = std::max(cols, r.size());
  const std::size_t n = std::max(rows, cols);
  if (n == 0) return {};
  double top = 0.0;
  for (const auto& r : gain)
    for (double g : r) top = std::max(top, g);
  auto cost = [&](std::size_t i, std::size_t j) {
    const double g = i < rows && j < gain[i].size() ? gain[i][j] : 0.0;
    return top - g;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(rows, -1);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] >= 1 && p[j] - 1 < rows && j - 1 < cols) out[p[j] - 1] = static_cast<int>(j - 1);
  return out;
}

struct Alignment {
  std::map<std::string, std::string> mapping;  // discovered -> reference
  double agreement = 0.0;
  std::size_t matched = 0, total = 0;
};

// One-to-one alignment of discovered labels to reference labels maximizing
// the number of agreeing (discovered, reference) pairs.
inline Alignment align_labels(const std::vector<std::pair<std::string, std::string>>& pairs) {
  Alignment a;
  std::set<std::string> ds, rs;
  for (const auto& [d, r] : pairs) {
    ds.insert(d);
    rs.insert(r);
  }
  const std::vector<std::string> dl(ds.begin(), ds.end()), rl(rs.begin(), rs.end());
  std::vector<std::vector<double>> gain(dl.size(), std::vector<double>(rl.size(), 0.0));
  auto idx = [](const std::vector<std::string>& v, const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), s) - v.begin());
  };
  for (const auto& [d, r] : pairs) gain[idx(dl, d)][idx(rl, r)] += 1.0;
  const auto asg = optimal_assignment(gain);
  for (std::size_t i = 0; i < dl.size(); ++i)
    if (asg[i] >= 0) {
      a.mapping[dl[i]] = rl[static_cast<std::size_t>(asg[i])];
      a.matched += static_cast<std::size_t>(gain[i][static_cast<std::size_t>(asg[i])]);
    }
  a.total = pairs.size();
  a.agreement = a.total ? static_cast<double>(a.matched) / static_cast<double>(a.total) : 0.0;
  return a;
}

// ---------------------------------------------------------------------------
// Discovery
// ---------------------------------------------------------------------------

struct DiscoveryResult {
  KeyMomentResult key_moments;
  std::vector<SceneDescription> descriptions;
  double detection_rate = 0.0;
  LabelResult labels;
};

inline std::vector<const CorpusSession*> corpus_view(const std::vector<CorpusSession>& corpus) {
  std::vector<const CorpusSession*> v;
  for (const auto& c : corpus) v.push_back(&c);
  return v;
}

inline DiscoveryResult run_discovery(const std::vector<const CorpusSession*>& corpus, const PipelineConfig& cfg,
                                     const Describer& describer, const Reasoner& reasoner, const Embedder& embedder) {
  if (corpus.empty()) throw Error("discover: no sessions");
  DiscoveryResult r;
  r.key_moments = identify_key_moments(corpus, cfg);
  r.descriptions = run_stage("annotate", std::to_string(r.key_moments.merged.size()) + " moments", [&] {
    return describe_all(requests_for(r.key_moments.merged, cfg.window), describer, cfg.jobs);
  });
  r.detection_rate = detection_rate(r.descriptions);
  r.labels = run_stage("labels", std::to_string(r.descriptions.size()) + " descriptions", [&] {
    return build_labels(filter_confident(r.descriptions, cfg.theta_conf), reasoner, embedder, cfg.lambdas);
  });
  return r;
}

}  // namespace organichar
