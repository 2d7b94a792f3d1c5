#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "organichar/keymoments.hpp"

using namespace organichar;

namespace {

std::vector<Eigen::VectorXd> random_stream(std::size_t n, int m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> s;
  for (std::size_t t = 0; t < n; ++t) {
    Eigen::VectorXd y(m);
    const double shift = (t / 100) % 2 ? 3.0 : 0.0;
    for (int j = 0; j < m; ++j) y(j) = shift + rng.normal();
    s.push_back(y);
  }
  return s;
}

oracle::Gmm to_oracle(const GmmState& st) {
  oracle::Gmm g;
  g.alpha = st.alpha;
  for (int i = 0; i < st.K; ++i) {
    g.pi.push_back(st.weights[i]);
    oracle::Vec mu(st.M), mua(st.M);
    oracle::Mat sig(st.M, oracle::Vec(st.M)), siga(st.M, oracle::Vec(st.M));
    for (int r = 0; r < st.M; ++r) {
      mu[r] = st.means[i](r);
      mua[r] = st.aux_means[i](r);
      for (int c = 0; c < st.M; ++c) {
        sig[r][c] = st.covariances[i](r, c);
        siga[r][c] = st.aux_covariances[i](r, c);
      }
    }
    g.mu.push_back(mu);
    g.mu_aux.push_back(mua);
    g.sigma.push_back(sig);
    g.sigma_aux.push_back(siga);
  }
  return g;
}

oracle::Vec to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

FeatureRows rows_from(const std::vector<std::vector<double>>& values) {
  FeatureRows r;
  r.modality = Modality::imu;
  for (std::size_t i = 0; i < values.size(); ++i) {
    r.keys.push_back({"s", 5.0 + 0.5 * static_cast<double>(i)});
    r.values.push_back(values[i]);
  }
  return r;
}

}  // namespace

TEST(Gmm, InitUsesFirstDistinctSamples) {
  std::vector<Eigen::VectorXd> s(3, Eigen::VectorXd::Zero(2));
  s[2] << 1.0, 2.0;
  const auto st = gmm_init(s, 2, 0.1);
  EXPECT_EQ(st.means[0], Eigen::VectorXd::Zero(2));
  EXPECT_EQ(st.means[1], s[2]);
  EXPECT_DOUBLE_EQ(st.weights[0], 0.5);
  EXPECT_TRUE(st.covariances[1].isIdentity());
  EXPECT_THROW(gmm_init(s, 0, 0.1), Error);
  EXPECT_THROW(gmm_init(s, 2, 1.0), Error);
  EXPECT_THROW(gmm_init({}, 2, 0.1), Error);
}

TEST(Gmm, ScoreOfStandardNormalAtMean) {
  std::vector<Eigen::VectorXd> s{Eigen::VectorXd::Zero(1)};
  const auto st = gmm_init(s, 1, 0.1);
  // -ln N(0 | 0, 1) = 0.5 ln(2 pi)
  EXPECT_NEAR(gmm_score(st, s[0]), 0.5 * std::log(2.0 * M_PI), 1e-14);
  Eigen::VectorXd y(1);
  y << 2.0;
  EXPECT_NEAR(gmm_score(st, y), 0.5 * std::log(2.0 * M_PI) + 2.0, 1e-14);
  EXPECT_THROW(gmm_score(st, Eigen::VectorXd::Zero(2)), Error);
}

TEST(Gmm, SingleUpdateByHand) {
  // K=1: lambda = 1, so pi stays 1 and the moments are plain EWMAs.
  std::vector<Eigen::VectorXd> s{Eigen::VectorXd::Zero(1)};
  auto st = gmm_init(s, 1, 0.5);
  Eigen::VectorXd y(1);
  y << 2.0;
  st = gmm_update(st, y);
  EXPECT_DOUBLE_EQ(st.weights[0], 1.0);
  EXPECT_DOUBLE_EQ(st.means[0](0), 1.0);
  // aux cov: 0.5 * 1 + 0.5 * 4 = 2.5, minus mean^2 = 1.5, plus ridge
  EXPECT_NEAR(st.covariances[0](0, 0), 1.5 + kCovarianceRegularization, 1e-15);
}

TEST(Gmm, WeightsStayNormalized) {
  auto s = random_stream(200, 3, 4);
  auto st = gmm_init(s, 3, 0.1);
  for (const auto& y : s) {
    gmm_update_inplace(st, y);
    double w = 0.0;
    for (double x : st.weights) w += x;
    EXPECT_NEAR(w, 1.0, 1e-12);
  }
}

TEST(Gmm, MatchesReferenceRecursion) {
  auto s = random_stream(300, 4, 9);
  auto st = gmm_init(s, 2, 0.1);
  auto ref = to_oracle(st);
  for (const auto& y : s) {
    ASSERT_NEAR(gmm_score(st, y), oracle::score(ref, to_vec(y)), 1e-9);
    gmm_update_inplace(st, y);
    oracle::update(ref, to_vec(y));
    for (int i = 0; i < 2; ++i) {
      ASSERT_NEAR(st.weights[i], ref.pi[i], 1e-6);
      for (int r = 0; r < 4; ++r) ASSERT_NEAR(st.means[i](r), ref.mu[i][r], 1e-6);
    }
  }
}

TEST(ChangeDetection, StreamScoresBeforeAbsorbing) {
  auto s = random_stream(30, 2, 1);
  const auto scores = score_stream(s, 2, 0.1);
  ASSERT_EQ(scores.size(), s.size());
  auto st = gmm_init(s, 2, 0.1);
  EXPECT_EQ(scores[0], gmm_score(st, s[0]));
  gmm_update_inplace(st, s[0]);
  EXPECT_EQ(scores[1], gmm_score(st, s[1]));
}

TEST(ChangeDetection, TopScoresSkipWarmupAndPreferEarlierTies) {
  const std::vector<double> sc{9, 1, 5, 5, 2, 5};
  EXPECT_EQ(top_scores(sc, 1, 3), (std::vector<std::size_t>{2, 3, 5}));
  EXPECT_EQ(top_scores(sc, 0, 2), (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(top_scores(sc, 10, 2).empty());
}

TEST(ChangeDetection, FindsInjectedJump) {
  Rng rng(5);
  std::vector<std::vector<double>> v;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(6);
    for (auto& e : x) e = rng.normal() + (t >= 120 ? 8.0 : 0.0);
    v.push_back(x);
  }
  ChangeDetectorConfig cfg{2, 4, 0.1, 3, 20};
  const auto moments = detect_changes(rows_from(v), cfg);
  ASSERT_EQ(moments.size(), 3u);
  bool hit = false;
  for (const auto& m : moments) {
    EXPECT_EQ(m.source, MomentSource::change);
    EXPECT_FALSE(m.cluster_id.has_value());
    hit = hit || std::abs(m.t_s - (5.0 + 0.5 * 120)) <= 1.0;
  }
  EXPECT_TRUE(hit);
  EXPECT_GE(moments[0].score, moments[1].score);
}

TEST(ChangeDetection, RejectsBadConfig) {
  ChangeDetectorConfig cfg;
  cfg.top_n = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(detect_changes(rows_from({{1.0}}), ChangeDetectorConfig{}), Error);
}

TEST(Scoring, ComponentsByHand) {
  const ScoreConfig sc;
  EXPECT_DOUBLE_EQ(count_component(0, sc), 0.0);
  EXPECT_DOUBLE_EQ(count_component(10, sc), 0.5);
  EXPECT_DOUBLE_EQ(count_component(30, sc), 1.0);
  EXPECT_DOUBLE_EQ(count_component(80, sc), 0.5);
  EXPECT_DOUBLE_EQ(noise_component(0.4, sc), 0.5);
  EXPECT_DOUBLE_EQ(noise_component(0.9, sc), 0.0);

  Clustering c;
  c.labels = {0, 0, kNoise, 1};
  c.membership_prob = {1.0, 0.5, 0.0, 0.3};
  c.n_clusters = 2;
  const auto s = score_components(c, sc);
  EXPECT_DOUBLE_EQ(s.count, 0.1);
  EXPECT_DOUBLE_EQ(s.noise, 1.0 - 0.25 / 0.8);
  EXPECT_DOUBLE_EQ(s.prob, 0.6);
  EXPECT_DOUBLE_EQ(score_clustering(c, sc), 0.35 * 0.1 + 0.2 * (1.0 - 0.3125) + 0.2 * 0.6);
  EXPECT_DOUBLE_EQ(score_clustering(Clustering{}, sc), 0.0);
}

TEST(Scoring, MatchesOracleOnRandomTuples) {
  Rng rng(17);
  for (int t = 0; t < 200; ++t) {
    Clustering c;
    const std::size_t n = 1 + rng.index(200);
    c.n_clusters = static_cast<int>(rng.index(70));
    for (std::size_t i = 0; i < n; ++i) {
      const bool noise = c.n_clusters == 0 || rng.uniform() < 0.3;
      c.labels.push_back(noise ? kNoise : static_cast<int>(rng.index(static_cast<std::size_t>(c.n_clusters))));
      c.membership_prob.push_back(noise ? 0.0 : rng.uniform(0.01, 1.0));
    }
    ScoreConfig sc{rng.uniform(), rng.uniform(), rng.uniform(), 1 + static_cast<int>(rng.index(30)), 0, rng.uniform(0.1, 1.0)};
    sc.C_max = sc.C_min + static_cast<int>(rng.index(30));
    const auto o = oracle::score_parts(c.labels, c.membership_prob, c.n_clusters, sc.C_min, sc.C_max, sc.N_max);
    const auto s = score_components(c, sc);
    EXPECT_EQ(s.count, o.count);
    EXPECT_EQ(s.noise, o.noise);
    EXPECT_EQ(s.prob, o.prob);
    const double total = score_clustering(c, sc);
    EXPECT_GE(total, 0.0);
    EXPECT_LE(total, sc.w1 + sc.w2 + sc.w3);
  }
}

TEST(GridSearch, PicksFirstMaximumOverFullGrid) {
  Rng rng(2);
  std::vector<std::vector<double>> v;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 40; ++i) v.push_back({10.0 * b + rng.normal(), rng.normal(), -5.0 * b + rng.normal()});
  const auto res = grid_search_clustering(rows_from(v), ClusteringGrid{});
  ASSERT_EQ(res.evaluated.size(), 12u);
  double best = -1.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < res.evaluated.size(); ++i)
    if (res.evaluated[i].score > best) {
      best = res.evaluated[i].score;
      arg = i;
    }
  EXPECT_EQ(res.score, best);
  EXPECT_EQ(res.config.min_cluster_size, res.evaluated[arg].config.min_cluster_size);
  EXPECT_EQ(res.config.min_samples, res.evaluated[arg].config.min_samples);
  EXPECT_EQ(res.config.n_components, res.evaluated[arg].config.n_components);
  EXPECT_EQ(res.keys.size(), v.size());
}

TEST(Representatives, HighestMembershipPerCluster) {
  Clustering c;
  c.labels = {0, 1, 0, kNoise, 1};
  c.membership_prob = {0.5, 0.9, 0.8, 0.0, 0.9};
  c.n_clusters = 2;
  std::vector<WindowKey> keys{{"a", 1}, {"a", 2}, {"a", 3}, {"a", 4}, {"a", 5}};
  auto r = select_representatives(c, keys, Modality::lidar, 1);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_DOUBLE_EQ(r[0].t_s, 3.0);
  EXPECT_EQ(*r[0].cluster_id, 0);
  EXPECT_DOUBLE_EQ(r[1].t_s, 2.0);  // tie -> earlier
  EXPECT_EQ(r[1].modality, Modality::lidar);
  EXPECT_EQ(select_representatives(c, keys, Modality::lidar, 5).size(), 4u);
  EXPECT_THROW(select_representatives(c, keys, Modality::lidar, 0), Error);
}

TEST(Merge, GreedyByScoreWithinSession) {
  std::map<Modality, std::vector<KeyMoment>> per;
  per[Modality::imu] = {{"s", 10.0, Modality::imu, MomentSource::change, 5.0, {}},
                        {"s", 30.0, Modality::imu, MomentSource::change, 1.0, {}}};
  per[Modality::pose] = {{"s", 14.0, Modality::pose, MomentSource::cluster, 9.0, 0},
                         {"t", 10.0, Modality::pose, MomentSource::cluster, 0.1, 1}};
  const auto m = merge_key_moments(per, 5.0);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_DOUBLE_EQ(m[0].t_s, 14.0);
  EXPECT_DOUBLE_EQ(m[1].t_s, 30.0);
  EXPECT_EQ(m[2].session_id, "t");
  EXPECT_EQ(merge_key_moments(per, 0.0).size(), 4u);
  EXPECT_THROW(merge_key_moments(per, -1.0), Error);
}

TEST(KeyMomentIo, JsonlRoundTrip) {
  std::vector<KeyMoment> ms{{"s", 12.5, Modality::thermal, MomentSource::cluster, 0.75, 3},
                            {"s", 40.0, Modality::doppler, MomentSource::change, 123.25, {}}};
  const auto f = std::filesystem::temp_directory_path() / "organichar_km.jsonl";
  write_key_moments_jsonl(ms, f);
  EXPECT_EQ(read_key_moments_jsonl(f), ms);
  {
    std::ofstream out(f);
    out << key_moment_to_json(ms[0]).dump() << "\n{\"t_s\":\n";
  }
  try {
    read_key_moments_jsonl(f);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
