#include <gtest/gtest.h>

#include "organichar/classifiers.hpp"

using namespace organichar;

namespace {

struct Data {
  Eigen::MatrixXd X;
  std::vector<int> y;
};

// n_classes Gaussian blobs in d dimensions; class c is centred at 4c on axis c % d.
Data blobs(int n_classes, int per, int d, std::uint64_t seed, int minority = -1) {
  Rng rng(seed);
  Data out;
  std::vector<std::vector<double>> rows;
  for (int c = 0; c < n_classes; ++c) {
    const int n = c == minority ? per / 5 : per;
    for (int i = 0; i < n; ++i) {
      std::vector<double> r(static_cast<std::size_t>(d));
      for (auto& v : r) v = rng.normal();
      r[static_cast<std::size_t>(c % d)] += 4.0 * (c + 1);
      rows.push_back(r);
      out.y.push_back(c);
    }
  }
  out.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < d; ++j) out.X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return out;
}

double accuracy(const Classifier& c, const Data& d) {
  const auto p = c.predict(d.X);
  int hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == d.y[i];
  return static_cast<double>(hit) / static_cast<double>(p.size());
}

std::unique_ptr<Classifier> reload(const Classifier& c) {
  BlobWriter w;
  c.save(w);
  auto fresh = make_empty_classifier(c.spec());
  BlobReader r(w.bytes());
  fresh->load(r);
  EXPECT_TRUE(r.done());
  return fresh;
}

}  // namespace

TEST(Specs, NamesJsonAndValidation) {
  EXPECT_EQ(ClassifierSpec::knn(3).name(), "knn(k=3)");
  EXPECT_EQ(ClassifierSpec::forest(50, 8).name(), "balanced-forest(trees=50,depth=8)");
  for (const auto& s : ClassifierGrid{}.specs()) EXPECT_EQ(spec_from_json(spec_to_json(s)), s);
  EXPECT_EQ(ClassifierGrid{}.specs().size(), 10u);
  EXPECT_THROW(ClassifierSpec::knn(0).validate(), Error);
  EXPECT_THROW(spec_from_json({{"kind", "svm"}}), Error);
  EXPECT_THROW(spec_from_json({{"kind", "balanced-forest"}, {"trees", 0}, {"depth", 3}}), Error);
}

TEST(Knn, VotesOfNearestStandardizedNeighbours) {
  Eigen::MatrixXd X(6, 1);
  X << 0, 1, 2, 10, 11, 12;
  const std::vector<int> y{0, 0, 1, 1, 1, 1};
  KnnClassifier k(3);
  k.fit(X, y, 2);
  Eigen::MatrixXd q(2, 1);
  q << 0.4, 11.0;
  const auto P = k.predict_proba(q);
  EXPECT_NEAR(P(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(P(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(P(1, 1), 1.0);
  const auto multi = k.predict_proba_multi(q, {1, 6});
  EXPECT_EQ(multi[0](0, 0), 1.0);
  EXPECT_NEAR(multi[1](0, 0), 2.0 / 6.0, 1e-15);
}

TEST(Training, RejectsBadInput) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(6, 2);
  EXPECT_THROW(train_classifier(X, {0, 0, 0, 0, 0, 0}, 2, ClassifierSpec::knn(1), 1), Error);
  EXPECT_THROW(train_classifier(X, {0, 1, 0, 1}, 2, ClassifierSpec::knn(1), 1), Error);
  EXPECT_THROW(train_classifier(X.topRows(4), {0, 1, 0, 1}, 2, ClassifierSpec::knn(1), 1), Error);
  EXPECT_THROW(train_classifier(X, {0, 1, 0, 1, 0, 3}, 2, ClassifierSpec::knn(1), 1), Error);
}

TEST(AllKinds, LearnSeparableClassesAndReturnDistributions) {
  const auto train = blobs(3, 40, 4, 1), test = blobs(3, 20, 4, 2);
  for (const auto& spec : {ClassifierSpec::knn(5), ClassifierSpec::forest(30, 6), ClassifierSpec::boost(20, 3)}) {
    const auto c = train_classifier(train.X, train.y, 3, spec, 7);
    EXPECT_EQ(c->spec(), spec);
    EXPECT_GT(accuracy(*c, test), 0.9) << spec.name();
    const auto P = c->predict_proba(test.X);
    ASSERT_EQ(P.cols(), 3);
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      EXPECT_NEAR(P.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(P.row(i).minCoeff(), 0.0);
    }
  }
}

TEST(AllKinds, SeededAndSerializable) {
  const auto train = blobs(3, 30, 5, 3), test = blobs(3, 10, 5, 4);
  for (const auto& spec : {ClassifierSpec::knn(3), ClassifierSpec::forest(20, 5), ClassifierSpec::boost(10, 2)}) {
    const auto a = train_classifier(train.X, train.y, 3, spec, 11);
    const auto b = train_classifier(train.X, train.y, 3, spec, 11);
    EXPECT_EQ(a->predict_proba(test.X), b->predict_proba(test.X)) << spec.name();
    const auto back = reload(*a);
    EXPECT_EQ(back->predict_proba(test.X), a->predict_proba(test.X)) << spec.name();
    EXPECT_EQ(back->n_classes(), 3);
  }
  ConstantClassifier k(4, 2);
  const auto back = reload(k);
  EXPECT_EQ(back->predict(test.X), std::vector<int>(static_cast<std::size_t>(test.X.rows()), 2));
}

TEST(BalancedForest, MinorityClassStillRecalled) {
  const auto train = blobs(3, 100, 3, 5, 2), test = blobs(3, 30, 3, 6);
  BalancedForest f(40, 6);
  f.fit(train.X, train.y, 3, 1);
  const auto p = f.predict(test.X);
  int hit = 0, n = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (test.y[i] == 2) {
      ++n;
      hit += p[i] == 2;
    }
  EXPECT_GT(static_cast<double>(hit) / n, 0.8);
  EXPECT_EQ(f.predict_proba_prefix(test.X, 40), f.predict_proba(test.X));
}

TEST(Blob, TruncationIsDetected) {
  const auto train = blobs(2, 20, 2, 8);
  const auto c = train_classifier(train.X, train.y, 2, ClassifierSpec::knn(3), 1);
  BlobWriter w;
  c->save(w);
  auto bytes = w.bytes();
  bytes.resize(bytes.size() / 2);
  BlobReader r(bytes);
  auto fresh = make_empty_classifier(c->spec());
  EXPECT_THROW(fresh->load(r), Error);
}
