#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "organichar/pipeline.hpp"
#include "organichar/synthetic.hpp"

using namespace organichar;
namespace fs = std::filesystem;

namespace {

std::function<const char*(const char*)> fake_env(std::map<std::string, std::string> vars) {
  auto store = std::make_shared<std::map<std::string, std::string>>(std::move(vars));
  return [store](const char* name) -> const char* {
    auto it = store->find(name);
    return it == store->end() ? nullptr : it->second.c_str();
  };
}

ActivityScript short_script(const std::string& id) {
  std::istringstream in("# session: " + id +
                        "\n# duration: 40\n"
                        "activity,zone,start_s,duration_s,profile\n"
                        "washing dishes,sink area,0,20,washing_dishes\n"
                        "making coffee,coffee machine area,20,20,making_coffee\n");
  return parse_script(in);
}

double brute_best(const std::vector<std::vector<double>>& g, std::size_t cols) {
  const std::size_t n = std::max(g.size(), cols);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (static_cast<std::size_t>(perm[i]) < g[i].size()) s += g[i][static_cast<std::size_t>(perm[i])];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.seed = 99;
  c.jobs = 3;
  c.theta_conf = 0.7;
  c.lambdas = {0.1, 0.5};
  c.har.classifiers.knn_k = {1, 9};
  c.describer = "http://localhost:1234";
  const auto j = config_to_json(c);
  const auto back = config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
  EXPECT_EQ(config_to_json(config_from_json(nlohmann::json::object())).dump(), config_to_json(PipelineConfig{}).dump());
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const PipelineConfig c;
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.change.K, 2);
  EXPECT_EQ(c.change.M, 10);
  EXPECT_DOUBLE_EQ(c.change.alpha, 0.1);
  EXPECT_DOUBLE_EQ(c.theta_conf, 0.8);
  EXPECT_EQ(c.lambdas, (std::vector<double>{0.2, 0.3, 0.4}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, StrictParsing) {
  EXPECT_THROW(config_from_json({{"sed", 3}}), Error);
  EXPECT_THROW(config_from_json({{"seed", "three"}}), Error);
  EXPECT_THROW(config_from_json({{"window", {{"length_s", 2.0}, {"strid_s", 1.0}}}}), Error);
  EXPECT_THROW(config_from_json({{"theta_conf", 1.5}}), Error);
  EXPECT_THROW(config_from_json({{"lambdas", {0.4, 0.2}}}), Error);
  EXPECT_THROW(config_from_json({{"describer", "ftp://x"}}), Error);
  EXPECT_THROW(config_from_json({{"format_version", 2}}), Error);
  const auto partial = config_from_json({{"merge_gap_s", 4.0}});
  EXPECT_DOUBLE_EQ(partial.merge_gap_s, 4.0);
  EXPECT_DOUBLE_EQ(partial.theta_conf, 0.8);
}

TEST(Config, FileThenEnvironment) {
  const auto f = fs::temp_directory_path() / "organichar_cfg.json";
  {
    std::ofstream out(f);
    out << R"({"seed": 11, "theta_conf": 0.6, "jobs": 2})";
  }
  auto c = load_config(f);
  EXPECT_EQ(c.seed, 11u);
  c = apply_env_overrides(c, fake_env({{"ORGANIC_SEED", "42"}, {"ORGANIC_DESCRIBER_URL", "http://h:1"}}));
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.jobs, 2u);
  EXPECT_DOUBLE_EQ(c.theta_conf, 0.6);
  EXPECT_EQ(c.describer, "http://h:1");
  EXPECT_EQ(apply_env_overrides(c, fake_env({{"ORGANIC_SEED", ""}})).seed, 42u);
  EXPECT_THROW(apply_env_overrides(c, fake_env({{"ORGANIC_SEED", "4x"}})), Error);
  EXPECT_THROW(apply_env_overrides(c, fake_env({{"ORGANIC_SEED", "-1"}})), Error);
  EXPECT_THROW(apply_env_overrides(c, fake_env({{"ORGANIC_JOBS", "0"}})), Error);
  EXPECT_THROW(load_config(fs::temp_directory_path() / "organichar_missing.json"), Error);
  {
    std::ofstream out(f);
    out << "{ not json";
  }
  EXPECT_THROW(load_config(f), Error);
}

TEST(Stages, ErrorsCarryStageAndInput) {
  try {
    run_stage("featurize", "s1", []() -> int { throw Error("boom"); });
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "featurize");
    EXPECT_EQ(e.input(), "s1");
    EXPECT_EQ(std::string(e.what()), "featurize [s1]: boom");
  }
  try {
    run_stage("outer", "x", [] { return run_stage("inner", "y", []() -> int { throw std::runtime_error("e"); }); });
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "inner");
  }
  EXPECT_EQ(run_stage("ok", "", [] { return 5; }), 5);
}

TEST(Alignment, HungarianMatchesBruteForce) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const std::size_t rows = 1 + rng.index(5), cols = 1 + rng.index(5);
    std::vector<std::vector<double>> g(rows, std::vector<double>(cols));
    for (auto& r : g)
      for (auto& v : r) v = static_cast<double>(rng.index(10));
    const auto a = optimal_assignment(g);
    ASSERT_EQ(a.size(), rows);
    double total = 0.0;
    std::set<int> used;
    for (std::size_t i = 0; i < rows; ++i) {
      if (a[i] < 0) continue;
      EXPECT_TRUE(used.insert(a[i]).second);
      ASSERT_LT(static_cast<std::size_t>(a[i]), cols);
      total += g[i][static_cast<std::size_t>(a[i])];
    }
    EXPECT_EQ(std::count(a.begin(), a.end(), -1), static_cast<long>(rows > cols ? rows - cols : 0));
    EXPECT_DOUBLE_EQ(total, brute_best(g, cols));
  }
  EXPECT_TRUE(optimal_assignment({}).empty());
}

TEST(Alignment, LabelsAlignOneToOne) {
  std::vector<std::pair<std::string, std::string>> pairs{
      {"x", "A"}, {"x", "A"}, {"x", "B"}, {"y", "B"}, {"y", "B"}, {"z", "B"}, {"z", "C"}};
  const auto a = align_labels(pairs);
  EXPECT_EQ(a.mapping.at("x"), "A");
  EXPECT_EQ(a.mapping.at("y"), "B");
  EXPECT_EQ(a.mapping.at("z"), "C");
  EXPECT_EQ(a.matched, 5u);
  EXPECT_DOUBLE_EQ(a.agreement, 5.0 / 7.0);
  const auto b = align_labels({{"p", "A"}, {"q", "A"}});
  EXPECT_EQ(b.mapping.size(), 1u);
  EXPECT_EQ(b.matched, 1u);
}

TEST(Annotations, NearestMomentWithinSpreadLabelsWindows) {
  const std::map<std::string, std::pair<std::string, std::string>> mapping{{"wash", {"cleaning", "sink area"}},
                                                                           {"brew", {"brew", "coffee area"}}};
  const std::vector<AnnotatedMoment> ms{{"s", 10.0, "wash"}, {"s", 14.0, "brew"}};
  const auto wl = window_labels_from_annotations({5.0, 8.0, 10.5, 12.0, 13.0, 16.5, 17.0}, ms, mapping, 2.5);
  ASSERT_EQ(wl.size(), 5u);
  EXPECT_DOUBLE_EQ(wl[0].t_s, 8.0);
  EXPECT_EQ(wl[0].activity, "cleaning");
  EXPECT_EQ(wl[0].zone, "sink area");
  EXPECT_EQ(wl[2].activity, "cleaning");  // equidistant, earlier moment wins
  EXPECT_EQ(wl[3].activity, "brew");
  EXPECT_DOUBLE_EQ(wl[4].t_s, 16.5);
  EXPECT_THROW(window_labels_from_annotations({10.0}, {{"s", 10.0, "other"}}, mapping, 1.0), Error);
}

TEST(Annotations, JsonlRoundTrip) {
  const auto f = fs::temp_directory_path() / "organichar_ann.jsonl";
  const std::vector<AnnotatedMoment> ms{{"s1", 12.5, "washing dishes"}, {"s2", 3.0, "quote \" label"}};
  write_annotations_jsonl(ms, f);
  const auto back = read_annotations_jsonl(f);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].base_label, ms[1].base_label);
  EXPECT_DOUBLE_EQ(back[0].t_s, 12.5);
  {
    std::ofstream out(f, std::ios::app);
    out << "{\"session_id\": \"s\"}\n";
  }
  try {
    read_annotations_jsonl(f);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(Coverage, UnionOfClipsOverRecordedTime) {
  std::vector<CorpusSession> corpus(2);
  corpus[0].session.session_id = "a";
  corpus[0].session.duration_s = 100.0;
  corpus[1].session.session_id = "b";
  corpus[1].session.duration_s = 100.0;
  std::vector<KeyMoment> ms;
  for (double t : {10.0, 12.0, 1.0, 50.0}) ms.push_back({"a", t, Modality::imu, MomentSource::change, 0.0, {}});
  ms.push_back({"b", 99.0, Modality::imu, MomentSource::change, 0.0, {}});
  // a: [0,1] [5,12] [45,50] = 13, b: [94,99] = 5
  EXPECT_DOUBLE_EQ(clip_coverage(ms, corpus_view(corpus), 5.0), 18.0 / 200.0);
  EXPECT_DOUBLE_EQ(clip_coverage({}, corpus_view(corpus), 5.0), 0.0);
}

TEST(Corpus, PreparesSyntheticSessions) {
  PipelineConfig cfg;
  const auto script = short_script("t1");
  std::vector<Session> ss{generate_synthetic_session(script, 3)};
  auto corpus = prepare_corpus(ss, {script}, cfg);
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].session.session_id, "t1");
  EXPECT_FALSE(corpus[0].tables.empty());
  const auto times = corpus[0].window_times();
  ASSERT_FALSE(times.empty());
  for (const auto& [m, t] : corpus[0].tables) EXPECT_EQ(t.windows.size(), times.size()) << modality_name(m);
  const auto gt = ground_truth_window_labels(corpus[0].session, times, cfg.window);
  EXPECT_EQ(gt.front().second, "washing dishes");
  EXPECT_EQ(gt.back().second, "making coffee");
  EXPECT_NO_THROW(make_describer(cfg, corpus));

  EXPECT_THROW(prepare_corpus({ss[0], ss[0]}, {}, cfg), Error);
  EXPECT_THROW(prepare_corpus({}, {}, cfg), Error);
  auto no_script = prepare_corpus(ss, {}, cfg);
  EXPECT_THROW(make_describer(cfg, no_script), Error);
}

TEST(Discovery, RequestsCoverClipEndingAtMoment) {
  WindowSpec w;
  const auto rq = requests_for({{"s", 30.0, Modality::imu, MomentSource::cluster, 0.0, 1}}, w);
  ASSERT_EQ(rq.size(), 1u);
  EXPECT_EQ(rq[0].session_id, "s");
  EXPECT_DOUBLE_EQ(rq[0].t_s, 30.0);
  EXPECT_DOUBLE_EQ(rq[0].clip_length_s, w.length_s);
}
