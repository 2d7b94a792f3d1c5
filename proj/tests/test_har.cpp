#include <gtest/gtest.h>

#include <filesystem>
#include <mutex>

#include "oracles.hpp"
#include "organichar/har.hpp"

using namespace organichar;
namespace fs = std::filesystem;

namespace {

// Sessions s0..s{n-1}; zones "a" (activities a1, a2) and "b" (b1, b2), with
// imu and pose features centred per activity. Pose is missing on every 7th row.
LabeledDataset toy_dataset(int sessions, int per_activity, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds;
  const std::vector<std::pair<std::string, std::string>> acts{{"a", "a1"}, {"a", "a2"}, {"b", "b1"}, {"b", "b2"}};
  int row = 0;
  for (int s = 0; s < sessions; ++s)
    for (std::size_t k = 0; k < acts.size(); ++k)
      for (int i = 0; i < per_activity; ++i, ++row) {
        std::map<Modality, std::vector<double>> f;
        std::vector<double> imu(4), pose(3);
        for (auto& v : imu) v = rng.normal();
        for (auto& v : pose) v = rng.normal();
        imu[k] += 5.0;
        pose[k % 3] += 3.0;
        f[Modality::imu] = imu;
        if (row % 7) f[Modality::pose] = pose;
        ds.append({"s" + std::to_string(s), 5.0 + 0.5 * row, acts[k].first, acts[k].second}, f);
      }
  return ds;
}

HarGridConfig small_grid() {
  HarGridConfig g;
  g.classifiers.knn_k = {3};
  g.classifiers.forest_trees = {10};
  g.classifiers.forest_depth = {4};
  g.classifiers.boost_rounds = {5};
  return g;
}

}  // namespace

TEST(Metrics, BalancedAccuracyAndF1ByHand) {
  const Confusion c{{8, 2, 0}, {1, 3, 0}, {0, 0, 0}};
  EXPECT_DOUBLE_EQ(balanced_accuracy(c), (0.8 + 0.75) / 2.0);
  // f1: class0 2*8/(10+9), class1 2*3/(4+5)
  EXPECT_DOUBLE_EQ(f1_macro(c), (16.0 / 19.0 + 6.0 / 9.0) / 2.0);
  EXPECT_THROW(balanced_accuracy({{0, 0}, {0, 0}}), Error);
  EXPECT_THROW(balanced_accuracy({{1, 0}}), Error);
  EXPECT_DOUBLE_EQ(balanced_accuracy_of({0, 0, 1, 1, 1}, {0, 1, 1, 1, -1}, 3), (0.5 + 2.0 / 3.0) / 2.0);
}

TEST(Metrics, MatchMacroRecallOnRandomPredictions) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<FoldPrediction> preds;
    std::vector<std::string> truth, pred;
    for (int i = 0; i < 40; ++i) {
      const std::string tr = "c" + std::to_string(rng.index(4));
      const std::string pr = rng.uniform() < 0.1 ? std::string{} : "c" + std::to_string(rng.index(5));
      preds.push_back({"s" + std::to_string(i % 3), 1.0 * i, tr, pr, "z", 0.5});
      truth.push_back(tr);
      pred.push_back(pr);
    }
    const auto r = evaluate_predictions(preds);
    EXPECT_NEAR(r.balanced_accuracy, oracle::macro_recall(truth, pred), 1e-12);
    long long total = 0;
    for (const auto& row : r.confusion)
      for (auto v : row) total += v;
    EXPECT_EQ(total, 40);
  }
}

TEST(Votes, SoftAndHardMatchBruteForceTally) {
  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n_classes = 2 + rng.index(4), n_members = 1 + rng.index(5);
    std::vector<std::optional<std::vector<double>>> probs(n_members);
    std::vector<double> w(n_members);
    for (std::size_t m = 0; m < n_members; ++m) {
      w[m] = rng.index(3) == 0 ? 1.0 : rng.uniform(0.1, 2.0);
      if (m > 0 && rng.uniform() < 0.2) continue;
      std::vector<double> p(n_classes);
      double s = 0.0;
      for (auto& v : p) s += v = std::round(rng.uniform() * 4.0);
      if (s == 0.0) p[0] = s = 1.0;
      for (auto& v : p) v /= s;
      probs[m] = p;
    }
    for (auto mode : {VoteMode::soft, VoteMode::hard}) {
      const auto r = combine_votes(probs, w, mode, n_classes);
      const auto [win, tally] = oracle::tally(probs, w, mode == VoteMode::soft, n_classes);
      EXPECT_EQ(r.label, win);
      for (std::size_t c = 0; c < n_classes; ++c) EXPECT_NEAR(r.probs[c], tally[c], 1e-12);
      EXPECT_EQ(r.confidence, r.probs[static_cast<std::size_t>(r.label)]);
    }
  }
  EXPECT_THROW(combine_votes({std::nullopt}, {1.0}, VoteMode::soft, 2), Error);
  EXPECT_THROW(combine_votes({std::vector<double>{1.0}}, {1.0, 2.0}, VoteMode::soft, 1), Error);
}

TEST(Votes, TiesGoToFirstClass) {
  const auto r = combine_votes({std::vector<double>{0.5, 0.5}}, {1.0}, VoteMode::soft, 2);
  EXPECT_EQ(r.label, 0);
  const auto h = combine_votes({std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 0.0}}, {1.0, 1.0},
                               VoteMode::hard, 2);
  EXPECT_EQ(h.label, 0);
}

TEST(Dataset, AppendPadsMissingModalitiesAndValidates) {
  LabeledDataset ds;
  ds.append({"s", 1, "z", "x"}, {{Modality::imu, {1, 2}}});
  ds.append({"s", 2, "z", "y"}, {{Modality::pose, {3}}});
  EXPECT_EQ(ds.features[Modality::imu].size(), 2u);
  EXPECT_TRUE(ds.has(Modality::imu, 0));
  EXPECT_FALSE(ds.has(Modality::imu, 1));
  std::vector<std::size_t> kept;
  const auto X = ds.matrix(Modality::pose, {0, 1}, &kept);
  EXPECT_EQ(X.rows(), 1);
  EXPECT_EQ(kept, (std::vector<std::size_t>{1}));
  EXPECT_NO_THROW(ds.validate());
  ds.append({"s", 3, "w", "x"}, {});
  EXPECT_THROW(ds.validate(), Error);
}

TEST(Dataset, SessionWindowsUseGridAndSkipInvalid) {
  FeatureTable t;
  t.modality = Modality::imu;
  t.windows.push_back({5.0, Modality::imu, {1.0, 2.0}, true});
  t.windows.push_back({5.5, Modality::imu, {}, false});
  t.windows.push_back({6.0, Modality::imu, {std::nan(""), 1.0}, true});
  LabeledDataset ds;
  add_session_windows(ds, "s", {{Modality::imu, t}}, {{5.0, "z", "a"}, {5.5, "z", "a"}, {6.0, "z", "b"}});
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_TRUE(ds.has(Modality::imu, 0));
  EXPECT_FALSE(ds.has(Modality::imu, 1));
  EXPECT_FALSE(ds.has(Modality::imu, 2));
}

TEST(Loso, EveryRowTestedOnceWithoutLeakage) {
  const auto ds = toy_dataset(4, 6, 1);
  std::mutex mu;
  std::map<std::string, std::set<std::string>> train_sessions_of_fold;
  ModelBuilder spy = [&](const LabeledDataset& d, const std::vector<std::size_t>& train, std::uint64_t) {
    std::set<std::string> ss;
    for (auto r : train) ss.insert(d.rows[r].session_id);
    return RowPredictor([ss, &mu, &train_sessions_of_fold](const LabeledDataset& d2, const std::vector<std::size_t>& idx) {
      std::set<std::string> test;
      for (auto r : idx) test.insert(d2.rows[r].session_id);
      EXPECT_EQ(test.size(), 1u);
      {
        std::lock_guard lock(mu);
        train_sessions_of_fold[*test.begin()] = ss;
      }
      std::vector<Inference> out(idx.size());
      for (std::size_t q = 0; q < idx.size(); ++q) out[q] = {d2.rows[idx[q]].zone, d2.rows[idx[q]].activity, 1.0, true};
      return out;
    });
  };
  const auto rep = loso_cv(ds, spy, 3, 2);
  EXPECT_EQ(rep.predictions.size(), ds.size());
  std::set<std::pair<std::string, double>> seen;
  for (const auto& p : rep.predictions) EXPECT_TRUE(seen.insert({p.session_id, p.t_s}).second);
  ASSERT_EQ(train_sessions_of_fold.size(), 4u);
  for (const auto& [test, train] : train_sessions_of_fold) {
    EXPECT_FALSE(train.count(test));
    EXPECT_EQ(train.size(), 3u);
  }
  EXPECT_EQ(rep.balanced_accuracy, 1.0);
}

TEST(Loso, ZoneModelLearnsToyData) {
  const auto ds = toy_dataset(3, 10, 2);
  const auto rep = loso_cv(ds, zone_model_builder(small_grid(), 0.4), 5, 1);
  EXPECT_GT(rep.balanced_accuracy, 0.9);
  EXPECT_EQ(rep.per_session.size(), 3u);
  EXPECT_THROW(loso_cv(toy_dataset(1, 5, 1), zone_model_builder(small_grid()), 1), Error);
}

TEST(ZoneModel, ZoneThenActivityAndRoundTrip) {
  const auto ds = toy_dataset(3, 10, 4);
  const auto zm = train_zone_model(ds, ds.all_rows(), small_grid(), 9, 0.3);
  EXPECT_EQ(zm.zones, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(zm.per_zone.at("a").labels, (std::vector<std::string>{"a1", "a2"}));
  const auto inf = zm.infer(ds, ds.all_rows());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < inf.size(); ++i) {
    EXPECT_TRUE(inf[i].ok);
    EXPECT_GT(inf[i].confidence, 0.0);
    EXPECT_LE(inf[i].confidence, 1.0);
    hit += inf[i].activity == ds.rows[i].activity;
  }
  EXPECT_GT(static_cast<double>(hit) / inf.size(), 0.95);

  const fs::path dir = fs::temp_directory_path() / "organichar_zone_model";
  fs::remove_all(dir);
  save_zone_model(zm, dir);
  const auto back = load_zone_model(dir);
  EXPECT_DOUBLE_EQ(back.lambda, 0.3);
  const auto inf2 = back.infer(ds, ds.all_rows());
  for (std::size_t i = 0; i < inf.size(); ++i) {
    EXPECT_EQ(inf2[i].activity, inf[i].activity);
    EXPECT_EQ(inf2[i].confidence, inf[i].confidence);
  }
  EXPECT_THROW(zm.infer(std::map<Modality, std::vector<double>>{}), Error);
}

TEST(ZoneModel, SingleActivityZoneIsConstant) {
  auto ds = toy_dataset(2, 8, 6);
  for (auto& r : ds.rows)
    if (r.zone == "b") r.activity = "b1";
  const auto zm = train_zone_model(ds, ds.all_rows(), small_grid(), 1);
  EXPECT_TRUE(zm.per_zone.at("b").constant());
}

TEST(Aggregation, MajorityPerTickThenAbsorbShortRuns) {
  std::vector<WindowPrediction> ps;
  for (int i = 0; i < 10; ++i) ps.push_back({5.0 + i, "z", i == 4 ? "x" : (i < 6 ? "a" : "b"), 0.8});
  const auto segs = aggregate_predictions(ps, 2.0, 5.0);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].activity, "a");
  EXPECT_DOUBLE_EQ(segs[0].start_s, 0.0);
  EXPECT_DOUBLE_EQ(segs.back().end_s, 14.0);
  EXPECT_EQ(segs[1].activity, "b");
  EXPECT_DOUBLE_EQ(segs[0].end_s, segs[1].start_s);
  EXPECT_EQ(segs[0].zone, "z");
  EXPECT_THROW(aggregate_predictions({}, 1.0), Error);
  EXPECT_THROW(aggregate_predictions({{2.0, "z", "a", 1}, {1.0, "z", "a", 1}}, 1.0), Error);
}

TEST(Reports, FoldPredictionsCsvRoundTrip) {
  std::vector<FoldPrediction> ps{{"s1", 5.5, "a, b", "a, b", "zone 1", 0.25}, {"s2", 6.0, "c", "", "z", 0.0}};
  const auto f = fs::temp_directory_path() / "organichar_folds.csv";
  write_fold_predictions_csv(ps, f);
  const auto back = read_fold_predictions_csv(f);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].truth, "a, b");
  EXPECT_EQ(back[0].zone, "zone 1");
  EXPECT_DOUBLE_EQ(back[0].confidence, 0.25);
  EXPECT_EQ(back[1].predicted, "");
  EXPECT_EQ(confusion_of(back, evaluate_predictions(back).labels), evaluate_predictions(ps).confusion);
  {
    std::ofstream out(f);
    out << "session,t\n";
  }
  EXPECT_THROW(read_fold_predictions_csv(f), ParseError);
}
