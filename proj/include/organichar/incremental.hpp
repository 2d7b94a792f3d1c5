#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include <nlohmann/json.hpp>

#include "organichar/pipeline.hpp"

namespace organichar {

struct IncrementalRecord {
  std::size_t session_index = 0;  // 1-based
  std::string session_id;
  std::size_t query_count = 0;
  std::size_t cumulative_annotations = 0;
  std::optional<double> forward_accuracy;  // absent after the last session
  std::vector<std::string> labels;          // label space at the policy lambda
};

struct IncrementalTrace {
  std::vector<IncrementalRecord> records;
};

// Describer wrapper that keeps a log of every request it forwards.
class LoggingDescriber : public Describer {
 public:
  explicit LoggingDescriber(const Describer& inner) : inner_(inner) {}

  SceneDescription describe(const DescriberRequest& req) const override {
    {
      std::lock_guard lock(mu_);
      log_.push_back(req);
    }
    return inner_.describe(req);
  }

  std::vector<DescriberRequest> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

 private:
  const Describer& inner_;
  mutable std::mutex mu_;
  mutable std::vector<DescriberRequest> log_;
};

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

// Rows for every window with defined ground truth; the activity column holds
// the label the model is expected to output (via `expected`, falling back to
// the raw ground-truth name, which no model trained on discovered labels can
// produce).
inline LabeledDataset ground_truth_dataset(const std::vector<const CorpusSession*>& sessions,
                                           const std::map<std::string, std::string>& expected, const WindowSpec& w) {
  LabeledDataset ds;
  for (const auto* c : sessions) {
    std::vector<WindowLabel> labels;
    for (const auto& [t, g] : ground_truth_window_labels(c->session, c->window_times(), w)) {
      if (g == kUndefinedLabel) continue;
      auto it = expected.find(g);
      labels.push_back({t, {}, it == expected.end() ? g : it->second});
    }
    add_session_windows(ds, c->session.session_id, c->tables, labels);
  }
  return ds;
}

// Window-level accuracy of `predict` over the future rows.
inline double forward_accuracy(const RowPredictor& predict, const LabeledDataset& future) {
  if (future.size() == 0) throw Error("forward_accuracy: empty future set");
  const auto inf = predict(future, future.all_rows());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < future.size(); ++i) hit += inf[i].ok && inf[i].activity == future.rows[i].activity;
  return static_cast<double>(hit) / static_cast<double>(future.size());
}

inline double forward_accuracy(const ZoneModel& model, const LabeledDataset& future) {
  return forward_accuracy([&](const LabeledDataset& d, const std::vector<std::size_t>& idx) { return model.infer(d, idx); },
                          future);
}

// Ground-truth activity -> discovered label it most often carries in the
// training rows (ties: lexicographically first label).
inline std::map<std::string, std::string> majority_label_map(const std::vector<const CorpusSession*>& sessions,
                                                             const LabeledDataset& train, const WindowSpec& w) {
  std::map<std::string, const Session*> by_id;
  for (const auto* c : sessions) by_id[c->session.session_id] = &c->session;
  std::map<std::string, std::map<std::string, int>> votes;
  for (const auto& r : train.rows) {
    auto it = by_id.find(r.session_id);
    if (it == by_id.end()) continue;
    auto g = it->second->activity_at(r.t_s - w.length_s / 2.0);
    if (g) ++votes[*g][r.activity];
  }
  std::map<std::string, std::string> out;
  for (const auto& [g, v] : votes) {
    int best = 0;
    for (const auto& [label, n] : v)
      if (n > best) {
        best = n;
        out[g] = label;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline long long time_key(double t) { return std::llround(t * 1000.0); }

struct IncrementalState {
  std::size_t completed = 0;
  std::vector<IncrementalRecord> records;
  std::map<std::pair<std::string, long long>, SceneDescription> annotated;   // (session, t)
  std::set<std::tuple<std::string, std::string, long long>> queried;          // (session, modality, t)
};

inline nlohmann::ordered_json record_to_json(const IncrementalRecord& r) {
  nlohmann::ordered_json j;
  j["session_index"] = r.session_index;
  j["session_id"] = r.session_id;
  j["query_count"] = r.query_count;
  j["cumulative_annotations"] = r.cumulative_annotations;
  j["forward_accuracy"] = r.forward_accuracy ? nlohmann::ordered_json(*r.forward_accuracy) : nlohmann::ordered_json();
  j["labels"] = r.labels;
  return j;
}

inline IncrementalRecord record_from_json(const nlohmann::json& j) {
  IncrementalRecord r;
  r.session_index = j.at("session_index").get<std::size_t>();
  r.session_id = j.at("session_id").get<std::string>();
  r.query_count = j.at("query_count").get<std::size_t>();
  r.cumulative_annotations = j.at("cumulative_annotations").get<std::size_t>();
  if (!j.at("forward_accuracy").is_null()) r.forward_accuracy = j.at("forward_accuracy").get<double>();
  r.labels = j.at("labels").get<std::vector<std::string>>();
  return r;
}

inline std::string run_fingerprint(const std::vector<CorpusSession>& sessions, const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  auto c = config_to_json(cfg);
  c.erase("jobs");
  j["config"] = c;
  std::vector<std::string> ids;
  for (const auto& s : sessions) ids.push_back(s.session.session_id);
  j["sessions"] = ids;
  return std::to_string(fnv1a(j.dump()));
}

inline void save_checkpoint(const std::filesystem::path& dir, const IncrementalState& st, const std::string& fp) {
  std::filesystem::create_directories(dir);
  std::vector<SceneDescription> ds;
  for (const auto& [k, d] : st.annotated) ds.push_back(d);
  write_descriptions_jsonl(ds, dir / "annotations.jsonl.tmp");
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["fingerprint"] = fp;
  j["completed"] = st.completed;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : st.records) j["records"].push_back(record_to_json(r));
  j["queried"] = nlohmann::ordered_json::array();
  for (const auto& [s, m, t] : st.queried) j["queried"].push_back({s, m, t});
  {
    std::ofstream out(dir / "checkpoint.json.tmp", std::ios::binary);
    if (!out) throw Error("cannot write checkpoint in " + dir.string());
    out << j.dump(1) << '\n';
  }
  std::filesystem::rename(dir / "annotations.jsonl.tmp", dir / "annotations.jsonl");
  std::filesystem::rename(dir / "checkpoint.json.tmp", dir / "checkpoint.json");
}

inline std::optional<IncrementalState> load_checkpoint(const std::filesystem::path& dir, const std::string& fp) {
  if (!std::filesystem::exists(dir / "checkpoint.json")) return std::nullopt;
  std::ifstream in(dir / "checkpoint.json", std::ios::binary);
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format_version", 0) != kCheckpointFormatVersion) throw Error("unsupported checkpoint format_version");
    if (j.at("fingerprint").get<std::string>() != fp)
      throw Error("checkpoint in " + dir.string() + " belongs to a different configuration or session list");
    IncrementalState st;
    st.completed = j.at("completed").get<std::size_t>();
    for (const auto& r : j.at("records")) st.records.push_back(record_from_json(r));
    for (const auto& q : j.at("queried"))
      st.queried.emplace(q.at(0).get<std::string>(), q.at(1).get<std::string>(), q.at(2).get<long long>());
    for (auto& d : read_descriptions_jsonl(dir / "annotations.jsonl"))
      st.annotated.emplace(std::make_pair(d.session_id, time_key(d.t_s)), d);
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt checkpoint in " + dir.string() + ": " + e.what());
  }
}

// Whether any annotated moment of `session` lies within `radius` of t.
inline bool annotated_near(const IncrementalState& st, const std::string& session, double t, double radius) {
  auto lo = st.annotated.lower_bound({session, time_key(t - radius) - 1});
  for (auto it = lo; it != st.annotated.end() && it->first.first == session; ++it) {
    if (it->first.second > time_key(t + radius) + 1) break;
    if (std::abs(it->second.t_s - t) <= radius + 1e-9) return true;
  }
  return false;
}

}  // namespace detail

struct StepModel {
  LabelResult labels;
  ZoneModel model;
};

// Session-by-session replay: key moments over the prefix, selective queries,
// relabel + retrain, forward evaluation on the remaining sessions. With a
// checkpoint directory every completed step is persisted and a rerun resumes
// after the last completed step.
inline IncrementalTrace run_incremental(const std::vector<CorpusSession>& sessions, const PipelineConfig& cfg,
                                        const Describer& describer, const Reasoner& reasoner, const Embedder& embedder,
                                        const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt) {
  if (sessions.size() < 2) throw Error("incremental: need at least two sessions");
  cfg.validate();
  const auto& pol = cfg.incremental;
  std::vector<double> lambdas = cfg.lambdas;
  if (std::none_of(lambdas.begin(), lambdas.end(), [&](double l) { return std::abs(l - pol.lambda) < 1e-9; })) {
    lambdas.push_back(pol.lambda);
    std::sort(lambdas.begin(), lambdas.end());
  }
  const std::string fp = detail::run_fingerprint(sessions, cfg);
  detail::IncrementalState st;
  if (checkpoint_dir)
    if (auto loaded = detail::load_checkpoint(*checkpoint_dir, fp)) st = std::move(*loaded);

  // Rebuilds labels and the model from everything annotated so far.
  auto retrain = [&](std::size_t n) -> std::optional<StepModel> {
    std::vector<SceneDescription> all;
    for (const auto& [k, d] : st.annotated) all.push_back(d);
    auto confident = filter_confident(all, cfg.theta_conf);
    if (confident.empty()) return std::nullopt;
    StepModel sm;
    sm.labels = build_labels(std::move(confident), reasoner, embedder, lambdas);
    std::vector<const CorpusSession*> prefix;
    for (std::size_t i = 0; i < n; ++i) prefix.push_back(&sessions[i]);
    const auto ds = build_training_dataset(prefix, sm.labels, pol.lambda, cfg);
    if (ds.size() == 0) return std::nullopt;
    sm.model = train_zone_model(ds, ds.all_rows(), cfg.har, sub_seed(cfg.seed, "incremental:" + std::to_string(n)),
                                pol.lambda);
    return sm;
  };

  std::optional<StepModel> current;
  if (st.completed > 0) current = retrain(st.completed);

  for (std::size_t n = st.completed + 1; n <= sessions.size(); ++n) {
    const std::string sid = sessions[n - 1].session.session_id;
    std::vector<const CorpusSession*> prefix;
    for (std::size_t i = 0; i < n; ++i) prefix.push_back(&sessions[i]);
    const auto km = run_stage("incremental/keymoments", sid, [&] { return identify_key_moments(prefix, cfg); });

    // Model confidence on every candidate window, when a model exists.
    std::vector<std::optional<Inference>> inferred(km.merged.size());
    if (current) {
      LabeledDataset cand;
      std::map<std::string, const CorpusSession*> by_id;
      for (const auto* c : prefix) by_id[c->session.session_id] = c;
      for (const auto& m : km.merged) add_session_windows(cand, m.session_id, by_id.at(m.session_id)->tables, {{m.t_s, {}, {}}});
      const auto inf = current->model.infer(cand, cand.all_rows());
      for (std::size_t i = 0; i < inf.size(); ++i) inferred[i] = inf[i];
    }

    std::vector<KeyMoment> to_query;
    for (std::size_t i = 0; i < km.merged.size(); ++i) {
      const auto& m = km.merged[i];
      const long long tk = detail::time_key(m.t_s);
      if (st.annotated.count({m.session_id, tk})) continue;
      if (st.queried.count({m.session_id, std::string(modality_name(m.modality)), tk})) continue;
      bool query = !current;
      if (!query) {
        bool novel = false;
        if (m.source == MomentSource::cluster && m.cluster_id) {
          const auto& g = km.grids.at(m.modality);
          novel = true;
          for (std::size_t q = 0; q < g.keys.size() && novel; ++q)
            if (g.clustering.labels[q] == *m.cluster_id &&
                detail::annotated_near(st, g.keys[q].session_id, g.keys[q].t_s, cfg.label_spread_s))
              novel = false;
        } else {
          novel = !detail::annotated_near(st, m.session_id, m.t_s, cfg.merge_gap_s);
        }
        const bool unsure = !inferred[i] || !inferred[i]->ok || inferred[i]->confidence < pol.confidence_floor;
        query = novel || unsure;
      }
      if (query) to_query.push_back(m);
    }
    const auto descs = run_stage("incremental/annotate", sid + " (checkpoint after session " +
                                                             std::to_string(st.completed) + ")",
                                 [&] { return describe_all(requests_for(to_query, cfg.window), describer, cfg.jobs); });
    for (std::size_t i = 0; i < to_query.size(); ++i) {
      const auto& m = to_query[i];
      st.queried.emplace(m.session_id, std::string(modality_name(m.modality)), detail::time_key(m.t_s));
      st.annotated.emplace(std::make_pair(m.session_id, detail::time_key(m.t_s)), descs[i]);
    }

    IncrementalRecord rec;
    rec.session_index = n;
    rec.session_id = sid;
    rec.query_count = to_query.size();
    rec.cumulative_annotations = st.annotated.size();
    if (pol.retrain_every_session || !current)
      current = run_stage("incremental/retrain", sid, [&] { return retrain(n); });
    if (current) {
      for (const auto& [base, merged] : current->labels.hierarchy.mapping_at(pol.lambda)) rec.labels.push_back(merged.first);
      std::sort(rec.labels.begin(), rec.labels.end());
      rec.labels.erase(std::unique(rec.labels.begin(), rec.labels.end()), rec.labels.end());
    }
    if (n < sessions.size()) {
      std::vector<const CorpusSession*> future;
      for (std::size_t i = n; i < sessions.size(); ++i) future.push_back(&sessions[i]);
      if (current) {
        const auto train = build_training_dataset(prefix, current->labels, pol.lambda, cfg);
        const auto expected = majority_label_map(prefix, train, cfg.window);
        const auto fut = ground_truth_dataset(future, expected, cfg.window);
        rec.forward_accuracy = fut.size() ? forward_accuracy(current->model, fut) : 0.0;
      } else {
        rec.forward_accuracy = 0.0;
      }
    }
    st.records.push_back(std::move(rec));
    st.completed = n;
    if (checkpoint_dir) detail::save_checkpoint(*checkpoint_dir, st, fp);
  }
  IncrementalTrace trace;
  trace.records = st.records;
  return trace;
}

inline void write_trace_csv(const IncrementalTrace& t, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << "session,session_id,query_count,cumulative_annotations,forward_accuracy,n_labels\n";
  for (const auto& r : t.records)
    out << r.session_index << ',' << r.session_id << ',' << r.query_count << ',' << r.cumulative_annotations << ','
        << (r.forward_accuracy ? format_fixed(*r.forward_accuracy, 6) : std::string{}) << ',' << r.labels.size()
        << '\n';
}

inline void write_trace_snapshots(const IncrementalTrace& t, const std::filesystem::path& file) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : t.records) j["records"].push_back(detail::record_to_json(r));
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

}  // namespace organichar
