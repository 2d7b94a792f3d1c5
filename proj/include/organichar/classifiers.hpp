#pragma once

#include <cstring>
#include <map>
#include <memory>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "organichar/common.hpp"

namespace organichar {

// ---------------------------------------------------------------------------
// Binary parameter blobs
// ---------------------------------------------------------------------------

class BlobWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put(x);
  }
  void put_ints(const std::vector<int>& v) {
    put<std::uint64_t>(v.size());
    for (int x : v) put<std::int32_t>(x);
  }
  void put_matrix(const Eigen::MatrixXd& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put(m(i, j));
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw Error("model blob truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > bytes_.size()) throw Error("model blob corrupt");
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  std::vector<int> get_ints() {
    const auto n = get<std::uint64_t>();
    if (n > bytes_.size()) throw Error("model blob corrupt");
    std::vector<int> v(n);
    for (auto& x : v) x = get<std::int32_t>();
    return v;
  }
  Eigen::MatrixXd get_matrix() {
    const auto r = get<std::uint64_t>(), c = get<std::uint64_t>();
    if (r * c > bytes_.size()) throw Error("model blob corrupt");
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

enum class ClassifierKind { knn, balanced_forest, boosted_resampled, constant };

inline std::string_view kind_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::knn: return "knn";
    case ClassifierKind::balanced_forest: return "balanced-forest";
    case ClassifierKind::boosted_resampled: return "boosted-resampled";
    case ClassifierKind::constant: return "constant";
  }
  return "?";
}

inline ClassifierKind parse_kind(std::string_view s) {
  for (auto k : {ClassifierKind::knn, ClassifierKind::balanced_forest, ClassifierKind::boosted_resampled,
                 ClassifierKind::constant})
    if (kind_name(k) == s) return k;
  throw Error("unknown classifier kind '" + std::string(s) + "'");
}

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::knn;
  int k = 5;            // knn
  int trees = 100;      // forest
  int depth = 8;        // forest / boosting base learner
  int rounds = 50;      // boosting

  static ClassifierSpec knn(int k) { return {ClassifierKind::knn, k, 0, 0, 0}; }
  static ClassifierSpec forest(int trees, int depth) { return {ClassifierKind::balanced_forest, 0, trees, depth, 0}; }
  static ClassifierSpec boost(int rounds, int depth = 4) {
    return {ClassifierKind::boosted_resampled, 0, 0, depth, rounds};
  }
  static ClassifierSpec constant() { return {ClassifierKind::constant, 0, 0, 0, 0}; }

  std::string name() const {
    switch (kind) {
      case ClassifierKind::knn: return "knn(k=" + std::to_string(k) + ")";
      case ClassifierKind::balanced_forest:
        return "balanced-forest(trees=" + std::to_string(trees) + ",depth=" + std::to_string(depth) + ")";
      case ClassifierKind::boosted_resampled:
        return "boosted-resampled(rounds=" + std::to_string(rounds) + ",depth=" + std::to_string(depth) + ")";
      case ClassifierKind::constant: return "constant";
    }
    return "?";
  }

  void validate() const {
    switch (kind) {
      case ClassifierKind::knn:
        if (k < 1) throw Error("knn: k must be >= 1");
        break;
      case ClassifierKind::balanced_forest:
        if (trees < 1 || depth < 1) throw Error("balanced-forest: trees and depth must be >= 1");
        break;
      case ClassifierKind::boosted_resampled:
        if (rounds < 1 || depth < 1) throw Error("boosted-resampled: rounds and depth must be >= 1");
        break;
      case ClassifierKind::constant: break;
    }
  }

  bool operator==(const ClassifierSpec&) const = default;
};

inline nlohmann::ordered_json spec_to_json(const ClassifierSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(kind_name(s.kind));
  switch (s.kind) {
    case ClassifierKind::knn: j["k"] = s.k; break;
    case ClassifierKind::balanced_forest:
      j["trees"] = s.trees;
      j["depth"] = s.depth;
      break;
    case ClassifierKind::boosted_resampled:
      j["rounds"] = s.rounds;
      j["depth"] = s.depth;
      break;
    case ClassifierKind::constant: break;
  }
  return j;
}

inline ClassifierSpec spec_from_json(const nlohmann::json& j) {
  ClassifierSpec s;
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.k = j.value("k", 0);
  s.trees = j.value("trees", 0);
  s.depth = j.value("depth", 0);
  s.rounds = j.value("rounds", 0);
  s.validate();
  return s;
}

// Default search space.
struct ClassifierGrid {
  std::vector<int> knn_k{1, 3, 5, 7};
  std::vector<int> forest_trees{50, 100};
  std::vector<int> forest_depth{8, 16};
  std::vector<int> boost_rounds{20, 50};
  int boost_depth = 4;

  std::vector<ClassifierSpec> specs() const {
    std::vector<ClassifierSpec> out;
    for (int k : knn_k) out.push_back(ClassifierSpec::knn(k));
    for (int t : forest_trees)
      for (int d : forest_depth) out.push_back(ClassifierSpec::forest(t, d));
    for (int r : boost_rounds) out.push_back(ClassifierSpec::boost(r, boost_depth));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Classifier interface
// ---------------------------------------------------------------------------

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassifierSpec spec() const = 0;
  int n_classes() const { return n_classes_; }
  // rows = samples, cols = classes; each row sums to 1
  virtual Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const = 0;
  virtual void save(BlobWriter& w) const = 0;
  virtual void load(BlobReader& r) = 0;

  std::vector<int> predict(const Eigen::MatrixXd& X) const {
    const Eigen::MatrixXd P = predict_proba(X);
    std::vector<int> out(static_cast<std::size_t>(P.rows()));
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      Eigen::Index arg = 0;
      P.row(i).maxCoeff(&arg);  // first maximum
      out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
  }

 protected:
  int n_classes_ = 0;
};

namespace detail {

inline constexpr std::size_t kMinTrainingRows = 5;

inline void check_training(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("train_classifier: feature/label row mismatch");
  if (y.size() < kMinTrainingRows) throw Error("train_classifier: insufficient rows (" + std::to_string(y.size()) + ")");
  std::set<int> present;
  for (int c : y) {
    if (c < 0 || c >= n_classes) throw Error("train_classifier: label out of range");
    present.insert(c);
  }
  if (present.size() < 2) throw Error("train_classifier: single-class data");
}

inline std::vector<std::vector<std::size_t>> rows_by_class(const std::vector<int>& y, int n_classes) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(y[i])].push_back(i);
  return out;
}

inline std::size_t minority_count(const std::vector<std::vector<std::size_t>>& by_class) {
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const auto& v : by_class)
    if (!v.empty()) m = std::min(m, v.size());
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// k nearest neighbours on z-scored features
// ---------------------------------------------------------------------------

class KnnClassifier : public Classifier {
 public:
  explicit KnnClassifier(int k = 5) : k_(k) {}

  ClassifierSpec spec() const override { return ClassifierSpec::knn(k_); }

  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes) {
    detail::check_training(X, y, n_classes);
    n_classes_ = n_classes;
    mean_ = X.colwise().mean();
    scale_ = ((X.rowwise() - mean_).array().square().colwise().sum() / static_cast<double>(X.rows())).sqrt();
    for (Eigen::Index j = 0; j < scale_.size(); ++j)
      if (!(scale_(j) > 1e-12)) scale_(j) = 1.0;
    train_ = standardize(X);
    y_ = y;
  }

  // Class-vote fractions for several k at once from one neighbour ordering.
  std::vector<Eigen::MatrixXd> predict_proba_multi(const Eigen::MatrixXd& X, const std::vector<int>& ks) const {
    const Eigen::MatrixXd Z = standardize(X);
    const int kmax = *std::max_element(ks.begin(), ks.end());
    const auto n = static_cast<std::size_t>(train_.rows());
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t q = 0; q < ks.size(); ++q) out.emplace_back(Eigen::MatrixXd::Zero(X.rows(), n_classes_));
    std::vector<std::pair<double, std::size_t>> d(n);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      for (std::size_t t = 0; t < n; ++t)
        d[t] = {(train_.row(static_cast<Eigen::Index>(t)) - Z.row(i)).squaredNorm(), t};
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(kmax), n);
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
      for (std::size_t q = 0; q < ks.size(); ++q) {
        const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(ks[q]), n);
        for (std::size_t t = 0; t < kk; ++t) out[q](i, y_[d[t].second]) += 1.0 / static_cast<double>(kk);
      }
    }
    return out;
  }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    return predict_proba_multi(X, {k_}).front();
  }

  void save(BlobWriter& w) const override {
    w.put<std::int32_t>(n_classes_);
    w.put<std::int32_t>(k_);
    w.put_matrix(mean_);
    w.put_matrix(scale_);
    w.put_matrix(train_);
    w.put_ints(y_);
  }

  void load(BlobReader& r) override {
    n_classes_ = r.get<std::int32_t>();
    k_ = r.get<std::int32_t>();
    mean_ = r.get_matrix();
    scale_ = r.get_matrix();
    train_ = r.get_matrix();
    y_ = r.get_ints();
  }

 private:
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean_).array().rowwise() / scale_.array();
  }

  int k_;
  Eigen::RowVectorXd mean_, scale_;
  Eigen::MatrixXd train_;
  std::vector<int> y_;
};

// ---------------------------------------------------------------------------
// CART tree (gini), optionally with random feature subsets and sample weights
// ---------------------------------------------------------------------------

class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    int leaf = -1;  // offset into leaf_probs_ / n_classes
  };

  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const std::vector<double>& w,
           const std::vector<std::size_t>& rows, int n_classes, int max_depth, int max_features, Rng& rng) {
    n_classes_ = n_classes;
    nodes_.clear();
    leaf_probs_.clear();
    const int d = static_cast<int>(X.cols());
    const int mf = std::clamp(max_features, 1, d);
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    struct Task {
      int node;
      std::vector<std::size_t> idx;
      int depth;
    };
    nodes_.push_back({});
    std::vector<Task> stack;
    stack.push_back({0, rows, 0});
    std::vector<double> total(static_cast<std::size_t>(n_classes)), left(static_cast<std::size_t>(n_classes));
    std::vector<std::size_t> order;
    while (!stack.empty()) {
      Task task = std::move(stack.back());
      stack.pop_back();
      std::fill(total.begin(), total.end(), 0.0);
      double W = 0.0;
      for (auto i : task.idx) {
        total[static_cast<std::size_t>(y[i])] += w[i];
        W += w[i];
      }
      int n_present = 0;
      for (double t : total) n_present += t > 0.0;
      auto make_leaf = [&] {
        Node& nd = nodes_[static_cast<std::size_t>(task.node)];
        nd.feature = -1;
        nd.leaf = static_cast<int>(leaf_probs_.size()) / n_classes_;
        for (double t : total) leaf_probs_.push_back(W > 0.0 ? t / W : 1.0 / n_classes_);
      };
      if (task.depth >= max_depth || n_present <= 1 || task.idx.size() < 2) {
        make_leaf();
        continue;
      }
      double parent_gini = 1.0;
      for (double t : total) parent_gini -= (t / W) * (t / W);
      // partial Fisher-Yates draw of candidate features
      for (int f = 0; f < mf; ++f) std::swap(features[static_cast<std::size_t>(f)], features[f + rng.index(static_cast<std::size_t>(d - f))]);
      double best_gain = 1e-12;
      int best_f = -1;
      double best_thr = 0.0;
      for (int fi = 0; fi < mf; ++fi) {
        const int f = features[static_cast<std::size_t>(fi)];
        order = task.idx;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const double va = X(static_cast<Eigen::Index>(a), f), vb = X(static_cast<Eigen::Index>(b), f);
          return va < vb || (va == vb && a < b);
        });
        std::fill(left.begin(), left.end(), 0.0);
        double WL = 0.0;
        for (std::size_t p = 0; p + 1 < order.size(); ++p) {
          const auto i = order[p];
          left[static_cast<std::size_t>(y[i])] += w[i];
          WL += w[i];
          const double v = X(static_cast<Eigen::Index>(i), f);
          const double vn = X(static_cast<Eigen::Index>(order[p + 1]), f);
          if (!(vn > v)) continue;
          const double WR = W - WL;
          if (WL <= 0.0 || WR <= 0.0) continue;
          double gl = 1.0, gr = 1.0;
          for (int c = 0; c < n_classes; ++c) {
            const double l = left[static_cast<std::size_t>(c)] / WL;
            const double r = (total[static_cast<std::size_t>(c)] - left[static_cast<std::size_t>(c)]) / WR;
            gl -= l * l;
            gr -= r * r;
          }
          const double gain = parent_gini - (WL * gl + WR * gr) / W;
          if (gain > best_gain) {
            best_gain = gain;
            best_f = f;
            best_thr = 0.5 * (v + vn);
          }
        }
      }
      if (best_f < 0) {
        make_leaf();
        continue;
      }
      std::vector<std::size_t> li, ri;
      for (auto i : task.idx) (X(static_cast<Eigen::Index>(i), best_f) <= best_thr ? li : ri).push_back(i);
      const int ln = static_cast<int>(nodes_.size());
      nodes_.push_back({});
      const int rn = static_cast<int>(nodes_.size());
      nodes_.push_back({});
      Node& nd = nodes_[static_cast<std::size_t>(task.node)];
      nd.feature = best_f;
      nd.threshold = best_thr;
      nd.left = ln;
      nd.right = rn;
      stack.push_back({rn, std::move(ri), task.depth + 1});
      stack.push_back({ln, std::move(li), task.depth + 1});
    }
  }

  const double* leaf_distribution(const Eigen::MatrixXd& X, Eigen::Index row) const {
    int n = 0;
    while (nodes_[static_cast<std::size_t>(n)].feature >= 0) {
      const Node& nd = nodes_[static_cast<std::size_t>(n)];
      n = X(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return &leaf_probs_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(n)].leaf * n_classes_)];
  }

  int predict_one(const Eigen::MatrixXd& X, Eigen::Index row) const {
    const double* p = leaf_distribution(X, row);
    return static_cast<int>(std::max_element(p, p + n_classes_) - p);
  }

  void save(BlobWriter& w) const {
    w.put<std::int32_t>(n_classes_);
    w.put<std::uint64_t>(nodes_.size());
    for (const auto& nd : nodes_) {
      w.put<std::int32_t>(nd.feature);
      w.put(nd.threshold);
      w.put<std::int32_t>(nd.left);
      w.put<std::int32_t>(nd.right);
      w.put<std::int32_t>(nd.leaf);
    }
    w.put_doubles(leaf_probs_);
  }

  void load(BlobReader& r) {
    n_classes_ = r.get<std::int32_t>();
    const auto n = r.get<std::uint64_t>();
    nodes_.resize(n);
    for (auto& nd : nodes_) {
      nd.feature = r.get<std::int32_t>();
      nd.threshold = r.get<double>();
      nd.left = r.get<std::int32_t>();
      nd.right = r.get<std::int32_t>();
      nd.leaf = r.get<std::int32_t>();
    }
    leaf_probs_ = r.get_doubles();
  }

 private:
  int n_classes_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> leaf_probs_;
};

// ---------------------------------------------------------------------------
// Balanced random forest: every tree sees a per-class bootstrap of the
// minority-class size.
// ---------------------------------------------------------------------------

class BalancedForest : public Classifier {
 public:
  BalancedForest(int trees = 100, int depth = 8) : trees_(trees), depth_(depth) {}

  ClassifierSpec spec() const override { return ClassifierSpec::forest(trees_, depth_); }

  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
    detail::check_training(X, y, n_classes);
    n_classes_ = n_classes;
    const auto by_class = detail::rows_by_class(y, n_classes);
    const std::size_t m = detail::minority_count(by_class);
    const int mf = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(X.cols())))));
    const std::vector<double> w(y.size(), 1.0);
    forest_.assign(static_cast<std::size_t>(trees_), {});
    for (int t = 0; t < trees_; ++t) {
      Rng rng(sub_seed(seed, static_cast<std::uint64_t>(t)));
      std::vector<std::size_t> rows;
      for (const auto& cls : by_class) {
        if (cls.empty()) continue;
        for (std::size_t s = 0; s < m; ++s) rows.push_back(cls[rng.index(cls.size())]);
      }
      forest_[static_cast<std::size_t>(t)].fit(X, y, w, rows, n_classes, depth_, mf, rng);
    }
  }

  // Average over the first n_trees trees.
  Eigen::MatrixXd predict_proba_prefix(const Eigen::MatrixXd& X, int n_trees) const {
    n_trees = std::clamp(n_trees, 1, static_cast<int>(forest_.size()));
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.rows(), n_classes_);
    for (int t = 0; t < n_trees; ++t)
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double* p = forest_[static_cast<std::size_t>(t)].leaf_distribution(X, i);
        for (int c = 0; c < n_classes_; ++c) P(i, c) += p[c];
      }
    return P / static_cast<double>(n_trees);
  }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    return predict_proba_prefix(X, static_cast<int>(forest_.size()));
  }

  void save(BlobWriter& w) const override {
    w.put<std::int32_t>(n_classes_);
    w.put<std::int32_t>(trees_);
    w.put<std::int32_t>(depth_);
    for (const auto& t : forest_) t.save(w);
  }

  void load(BlobReader& r) override {
    n_classes_ = r.get<std::int32_t>();
    trees_ = r.get<std::int32_t>();
    depth_ = r.get<std::int32_t>();
    forest_.assign(static_cast<std::size_t>(trees_), {});
    for (auto& t : forest_) t.load(r);
  }

 private:
  int trees_, depth_;
  std::vector<DecisionTree> forest_;
};

// ---------------------------------------------------------------------------
// Multi-class boosting (SAMME) where every round trains on a random
// undersample balanced to the minority class.
// ---------------------------------------------------------------------------

class BoostedResampled : public Classifier {
 public:
  BoostedResampled(int rounds = 50, int depth = 4) : rounds_(rounds), depth_(depth) {}

  ClassifierSpec spec() const override { return ClassifierSpec::boost(rounds_, depth_); }

  void fit(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
    detail::check_training(X, y, n_classes);
    n_classes_ = n_classes;
    const auto by_class = detail::rows_by_class(y, n_classes);
    const std::size_t m = detail::minority_count(by_class);
    const std::size_t n = y.size();
    int present = 0;
    for (const auto& c : by_class) present += !c.empty();
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    learners_.clear();
    alphas_.clear();
    const int all_features = static_cast<int>(X.cols());
    for (int r = 0; r < rounds_; ++r) {
      Rng rng(sub_seed(seed, static_cast<std::uint64_t>(r)));
      std::vector<std::size_t> rows;
      for (auto cls : by_class) {
        if (cls.empty()) continue;
        rng.shuffle(cls);
        rows.insert(rows.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(m));
      }
      DecisionTree tree;
      tree.fit(X, y, w, rows, n_classes, depth_, all_features, rng);
      double err = 0.0, W = 0.0;
      std::vector<char> miss(n);
      for (std::size_t i = 0; i < n; ++i) {
        miss[i] = tree.predict_one(X, static_cast<Eigen::Index>(i)) != y[i];
        err += miss[i] * w[i];
        W += w[i];
      }
      err /= W;
      if (err >= 1.0 - 1.0 / present) {
        if (learners_.empty()) {
          learners_.push_back(std::move(tree));
          alphas_.push_back(1.0);
        }
        break;
      }
      const double e = std::max(err, 1e-10);
      const double alpha = std::log((1.0 - e) / e) + std::log(static_cast<double>(std::max(present, 2) - 1));
      learners_.push_back(std::move(tree));
      alphas_.push_back(alpha);
      if (err <= 0.0) break;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (miss[i]) w[i] *= std::exp(alpha);
        s += w[i];
      }
      for (auto& x : w) x /= s;
    }
  }

  // Normalized weighted votes of the first `rounds` learners.
  Eigen::MatrixXd predict_proba_prefix(const Eigen::MatrixXd& X, int rounds) const {
    rounds = std::clamp(rounds, 1, static_cast<int>(learners_.size()));
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.rows(), n_classes_);
    double total = 0.0;
    for (int r = 0; r < rounds; ++r) {
      total += alphas_[static_cast<std::size_t>(r)];
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        P(i, learners_[static_cast<std::size_t>(r)].predict_one(X, i)) += alphas_[static_cast<std::size_t>(r)];
    }
    return P / total;
  }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    return predict_proba_prefix(X, static_cast<int>(learners_.size()));
  }

  void save(BlobWriter& w) const override {
    w.put<std::int32_t>(n_classes_);
    w.put<std::int32_t>(rounds_);
    w.put<std::int32_t>(depth_);
    w.put_doubles(alphas_);
    for (const auto& t : learners_) t.save(w);
  }

  void load(BlobReader& r) override {
    n_classes_ = r.get<std::int32_t>();
    rounds_ = r.get<std::int32_t>();
    depth_ = r.get<std::int32_t>();
    alphas_ = r.get_doubles();
    learners_.assign(alphas_.size(), {});
    for (auto& t : learners_) t.load(r);
  }

 private:
  int rounds_, depth_;
  std::vector<DecisionTree> learners_;
  std::vector<double> alphas_;
};

// Always predicts one class (zones with a single activity).
class ConstantClassifier : public Classifier {
 public:
  ConstantClassifier(int n_classes = 1, int cls = 0) : cls_(cls) { n_classes_ = n_classes; }
  ClassifierSpec spec() const override { return ClassifierSpec::constant(); }
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.rows(), n_classes_);
    P.col(cls_).setOnes();
    return P;
  }
  void save(BlobWriter& w) const override {
    w.put<std::int32_t>(n_classes_);
    w.put<std::int32_t>(cls_);
  }
  void load(BlobReader& r) override {
    n_classes_ = r.get<std::int32_t>();
    cls_ = r.get<std::int32_t>();
  }

 private:
  int cls_;
};

inline std::unique_ptr<Classifier> train_classifier(const Eigen::MatrixXd& X, const std::vector<int>& y,
                                                    int n_classes, const ClassifierSpec& spec, std::uint64_t seed) {
  spec.validate();
  switch (spec.kind) {
    case ClassifierKind::knn: {
      auto c = std::make_unique<KnnClassifier>(spec.k);
      c->fit(X, y, n_classes);
      return c;
    }
    case ClassifierKind::balanced_forest: {
      auto c = std::make_unique<BalancedForest>(spec.trees, spec.depth);
      c->fit(X, y, n_classes, seed);
      return c;
    }
    case ClassifierKind::boosted_resampled: {
      auto c = std::make_unique<BoostedResampled>(spec.rounds, spec.depth);
      c->fit(X, y, n_classes, seed);
      return c;
    }
    case ClassifierKind::constant: {
      if (y.empty()) throw Error("train_classifier: no rows");
      return std::make_unique<ConstantClassifier>(n_classes, y.front());
    }
  }
  throw Error("train_classifier: unknown kind");
}

inline std::unique_ptr<Classifier> make_empty_classifier(const ClassifierSpec& spec) {
  switch (spec.kind) {
    case ClassifierKind::knn: return std::make_unique<KnnClassifier>(spec.k);
    case ClassifierKind::balanced_forest: return std::make_unique<BalancedForest>(spec.trees, spec.depth);
    case ClassifierKind::boosted_resampled: return std::make_unique<BoostedResampled>(spec.rounds, spec.depth);
    case ClassifierKind::constant: return std::make_unique<ConstantClassifier>();
  }
  throw Error("unknown classifier kind");
}

}  // namespace organichar
