#include <gtest/gtest.h>

#include <filesystem>

#include "organichar/incremental.hpp"
#include "organichar/synthetic.hpp"

using namespace organichar;
namespace fs = std::filesystem;

namespace {

// Three short sessions over four planted activities (35 s each, rotated order).
struct SmallCorpus {
  PipelineConfig cfg;
  std::vector<CorpusSession> corpus;
  std::map<std::string, ActivityScript> scripts;
};

const SmallCorpus& small_corpus() {
  static const SmallCorpus sc = [] {
    SmallCorpus s;
    s.cfg.har.classifiers.knn_k = {3};
    s.cfg.har.classifiers.forest_trees = {15};
    s.cfg.har.classifiers.forest_depth = {6};
    s.cfg.har.classifiers.boost_rounds = {5};
    s.cfg.mock_noise = MockNoiseConfig::none();
    const std::vector<std::size_t> picks{0, 2, 4, 6};
    std::vector<Session> sessions;
    std::vector<std::optional<ActivityScript>> scripts;
    for (std::size_t k = 0; k < 3; ++k) {
      ActivityScript sc;
      sc.session_id = "inc-" + std::to_string(k + 1);
      double t = 0.0;
      for (std::size_t i = 0; i < picks.size(); ++i) {
        const auto& pa = kPlantedActivities[picks[(i + k) % picks.size()]];
        ScriptStep st;
        st.activity = std::string(pa.activity);
        st.zone = std::string(pa.zone);
        st.start_s = t;
        st.duration_s = 35.0;
        st.profile_name = std::string(pa.profile);
        st.profile = preset_profile(pa.profile);
        sc.steps.push_back(st);
        t += st.duration_s;
      }
      sc.duration_s = t;
      sessions.push_back(generate_synthetic_session(sc, sub_seed(5, k)));
      scripts.push_back(sc);
      s.scripts[sc.session_id] = sc;
    }
    s.corpus = prepare_corpus(std::move(sessions), std::move(scripts), s.cfg);
    return s;
  }();
  return sc;
}

// Fails every request for one session; used to interrupt a run mid-way.
class FailingDescriber : public Describer {
 public:
  FailingDescriber(const Describer& inner, std::string bad) : inner_(inner), bad_(std::move(bad)) {}
  SceneDescription describe(const DescriberRequest& r) const override {
    if (r.session_id == bad_) throw TransportError("describer unavailable");
    return inner_.describe(r);
  }

 private:
  const Describer& inner_;
  std::string bad_;
};

std::string dump(const IncrementalTrace& t) {
  std::string s;
  for (const auto& r : t.records) s += detail::record_to_json(r).dump() + "\n";
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Incremental, TraceIsMonotoneAndNeverRepeatsAQuery) {
  const auto& sc = small_corpus();
  const MockDescriber mock(sc.scripts, sc.cfg.mock_noise, 1);
  const LoggingDescriber logged(mock);
  const LexiconReasoner reasoner;
  const HashEmbedder embedder;
  const auto trace = run_incremental(sc.corpus, sc.cfg, logged, reasoner, embedder);
  ASSERT_EQ(trace.records.size(), 3u);
  std::size_t queries = 0, prev = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = trace.records[i];
    EXPECT_EQ(r.session_index, i + 1);
    EXPECT_EQ(r.session_id, sc.corpus[i].session.session_id);
    EXPECT_GE(r.cumulative_annotations, prev);
    prev = r.cumulative_annotations;
    queries += r.query_count;
    EXPECT_EQ(r.cumulative_annotations, queries);
    if (i < 2) {
      ASSERT_TRUE(r.forward_accuracy.has_value());
      EXPECT_GE(*r.forward_accuracy, 0.0);
      EXPECT_LE(*r.forward_accuracy, 1.0);
    } else {
      EXPECT_FALSE(r.forward_accuracy.has_value());
    }
  }
  EXPECT_GT(trace.records[0].query_count, 0u);
  EXPECT_FALSE(trace.records.back().labels.empty());
  const auto log = logged.log();
  EXPECT_EQ(log.size(), queries);
  std::set<std::pair<std::string, long long>> seen;
  for (const auto& q : log) EXPECT_TRUE(seen.insert({q.session_id, std::llround(q.t_s * 1000.0)}).second);
}

TEST(Incremental, ResumesFromCheckpointAfterFailure) {
  const auto& sc = small_corpus();
  const MockDescriber mock(sc.scripts, sc.cfg.mock_noise, 1);
  const LexiconReasoner reasoner;
  const HashEmbedder embedder;
  const auto reference = run_incremental(sc.corpus, sc.cfg, mock, reasoner, embedder);

  const auto dir = fresh_dir("organichar_ckpt");
  const FailingDescriber failing(mock, sc.corpus[2].session.session_id);
  EXPECT_THROW(run_incremental(sc.corpus, sc.cfg, failing, reasoner, embedder, dir), StageError);
  ASSERT_TRUE(fs::exists(dir / "checkpoint.json"));

  const LoggingDescriber logged(mock);
  const auto resumed = run_incremental(sc.corpus, sc.cfg, logged, reasoner, embedder, dir);
  EXPECT_EQ(dump(resumed), dump(reference));
  EXPECT_EQ(logged.log().size(), reference.records[2].query_count);

  // A completed checkpoint replays without querying anything.
  const LoggingDescriber idle(mock);
  EXPECT_EQ(dump(run_incremental(sc.corpus, sc.cfg, idle, reasoner, embedder, dir)), dump(reference));
  EXPECT_TRUE(idle.log().empty());

  auto other = sc.cfg;
  other.seed = 8;
  EXPECT_THROW(run_incremental(sc.corpus, other, mock, reasoner, embedder, dir), Error);
  auto more_jobs = sc.cfg;
  more_jobs.jobs = 2;
  EXPECT_NO_THROW(run_incremental(sc.corpus, more_jobs, mock, reasoner, embedder, dir));
}

TEST(Incremental, RejectsSingleSession) {
  const auto& sc = small_corpus();
  const MockDescriber mock(sc.scripts, sc.cfg.mock_noise, 1);
  std::vector<CorpusSession> one{sc.corpus[0]};
  EXPECT_THROW(run_incremental(one, sc.cfg, mock, LexiconReasoner{}, HashEmbedder{}), Error);
}

TEST(Incremental, TraceCsvHasOneRowPerSession) {
  IncrementalTrace t;
  t.records.push_back({1, "a", 4, 4, 0.5, {"x", "y"}});
  t.records.push_back({2, "b", 1, 5, std::nullopt, {"x"}});
  const auto f = fs::temp_directory_path() / "organichar_trace.csv";
  write_trace_csv(t, f);
  std::ifstream in(f);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_NE(lines[1].find("0.5"), std::string::npos);
  EXPECT_EQ(detail::record_from_json(detail::record_to_json(t.records[1])).forward_accuracy, std::nullopt);
  EXPECT_EQ(detail::record_from_json(detail::record_to_json(t.records[0])).labels, t.records[0].labels);
}

TEST(ForwardAccuracy, CountsExactLabelHits) {
  LabeledDataset ds;
  for (int i = 0; i < 4; ++i) ds.append({"s", 1.0 * i, "z", i < 3 ? "a" : "b"}, {{Modality::imu, {1.0}}});
  RowPredictor always_a = [](const LabeledDataset&, const std::vector<std::size_t>& idx) {
    return std::vector<Inference>(idx.size(), Inference{"z", "a", 1.0, true});
  };
  EXPECT_DOUBLE_EQ(forward_accuracy(always_a, ds), 0.75);
  EXPECT_THROW(forward_accuracy(always_a, LabeledDataset{}), Error);
}
