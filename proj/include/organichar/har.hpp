#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "organichar/classifiers.hpp"
#include "organichar/features.hpp"

namespace organichar {

// ---------------------------------------------------------------------------
// Labeled windows
// ---------------------------------------------------------------------------

inline constexpr std::string_view kUndefinedLabel = "undefined";

enum class Target { zone, activity };

struct LabeledRow {
  std::string session_id;
  double t_s = 0.0;
  std::string zone;
  std::string activity;

  const std::string& label(Target t) const { return t == Target::zone ? zone : activity; }
};

struct WindowLabel {
  double t_s = 0.0;
  std::string zone;
  std::string activity;
};

// Row-aligned per-modality features. An empty feature vector marks a
// modality that is missing or invalid for that window.
struct LabeledDataset {
  std::vector<LabeledRow> rows;
  std::map<Modality, std::vector<std::vector<double>>> features;

  std::size_t size() const { return rows.size(); }

  bool has(Modality m, std::size_t r) const {
    auto it = features.find(m);
    return it != features.end() && !it->second[r].empty();
  }

  std::vector<Modality> modalities() const {
    std::vector<Modality> out;
    for (Modality m : kAllModalities) {
      auto it = features.find(m);
      if (it == features.end()) continue;
      if (std::any_of(it->second.begin(), it->second.end(), [](const auto& v) { return !v.empty(); })) out.push_back(m);
    }
    return out;
  }

  std::vector<std::string> sessions() const {
    std::set<std::string> s;
    for (const auto& r : rows) s.insert(r.session_id);
    return {s.begin(), s.end()};
  }

  std::vector<std::size_t> all_rows() const {
    std::vector<std::size_t> v(rows.size());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  }

  // Features of `idx` rows for modality m; rows without values are skipped and
  // their positions (into idx) returned through `kept`.
  Eigen::MatrixXd matrix(Modality m, const std::vector<std::size_t>& idx, std::vector<std::size_t>* kept) const {
    if (kept) kept->clear();
    auto it = features.find(m);
    if (it == features.end()) return {};
    std::size_t d = 0, n = 0;
    for (std::size_t p = 0; p < idx.size(); ++p)
      if (!it->second[idx[p]].empty()) {
        d = it->second[idx[p]].size();
        ++n;
      }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::Index r = 0;
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const auto& v = it->second[idx[p]];
      if (v.empty()) continue;
      for (std::size_t j = 0; j < d; ++j) X(r, static_cast<Eigen::Index>(j)) = v[j];
      ++r;
      if (kept) kept->push_back(p);
    }
    return X;
  }

  void append(LabeledRow row, const std::map<Modality, std::vector<double>>& values) {
    const std::size_t n = rows.size();
    rows.push_back(std::move(row));
    for (auto& [m, col] : features) col.resize(n + 1);
    for (const auto& [m, v] : values) {
      auto& col = features[m];
      col.resize(n + 1);
      col[n] = v;
    }
  }

  void validate() const {
    std::map<std::string, std::string> zone_of;
    for (const auto& r : rows) {
      auto [it, fresh] = zone_of.emplace(r.activity, r.zone);
      if (!fresh && it->second != r.zone)
        throw Error("dataset: activity '" + r.activity + "' appears in zones '" + it->second + "' and '" + r.zone + "'");
    }
    for (const auto& [m, col] : features) {
      if (col.size() != rows.size()) throw Error("dataset: feature column size mismatch");
      std::size_t d = 0;
      for (const auto& v : col) {
        if (v.empty()) continue;
        if (d && v.size() != d) throw Error("dataset: inconsistent feature width");
        d = v.size();
      }
    }
  }
};

// Adds one row per label whose t_s lies on the tables' window grid.
inline void add_session_windows(LabeledDataset& ds, const std::string& session_id,
                                const std::map<Modality, FeatureTable>& tables, const std::vector<WindowLabel>& labels) {
  std::map<Modality, std::map<long long, const FeatureWindow*>> index;
  for (const auto& [m, table] : tables)
    for (const auto& w : table.windows) index[m][std::llround(w.t_s * 1000.0)] = &w;
  for (const auto& l : labels) {
    const long long key = std::llround(l.t_s * 1000.0);
    std::map<Modality, std::vector<double>> values;
    for (const auto& [m, by_t] : index) {
      auto it = by_t.find(key);
      if (it == by_t.end() || !it->second->valid) continue;
      const auto& v = it->second->values;
      if (std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) values[m] = v;
    }
    ds.append({session_id, l.t_s, l.zone, l.activity}, values);
  }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

using Confusion = std::vector<std::vector<long long>>;

namespace detail {

inline void check_confusion(const Confusion& c) {
  long long total = 0;
  for (const auto& row : c) {
    if (row.size() != c.size()) throw Error("confusion matrix must be square");
    for (long long v : row) {
      if (v < 0) throw Error("confusion matrix must be non-negative");
      total += v;
    }
  }
  if (total == 0) throw Error("confusion matrix is all zero");
}

}  // namespace detail

// Rows = truth, columns = prediction. Classes without support are excluded.
inline double balanced_accuracy(const Confusion& c) {
  detail::check_confusion(c);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    long long support = 0;
    for (long long v : c[i]) support += v;
    if (support == 0) continue;
    sum += static_cast<double>(c[i][i]) / static_cast<double>(support);
    ++n;
  }
  return sum / n;
}

// Macro F1 over classes with support.
inline double f1_macro(const Confusion& c) {
  detail::check_confusion(c);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    long long support = 0, predicted = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      support += c[i][j];
      predicted += c[j][i];
    }
    if (support == 0) continue;
    const double tp = static_cast<double>(c[i][i]);
    sum += tp > 0 ? 2.0 * tp / static_cast<double>(support + predicted) : 0.0;
    ++n;
  }
  return sum / n;
}

// Macro recall straight from label indices (-1 = no prediction, always wrong).
inline double balanced_accuracy_of(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t n_classes) {
  std::vector<double> hit(n_classes, 0.0), support(n_classes, 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    support[static_cast<std::size_t>(truth[i])] += 1.0;
    if (pred[i] == truth[i]) hit[static_cast<std::size_t>(truth[i])] += 1.0;
  }
  double s = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < n_classes; ++c)
    if (support[c] > 0) {
      s += hit[c] / support[c];
      ++n;
    }
  return n ? s / n : 0.0;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

enum class VoteMode { soft, hard };

inline std::string_view vote_mode_name(VoteMode m) { return m == VoteMode::soft ? "soft" : "hard"; }

inline VoteMode parse_vote_mode(std::string_view s) {
  if (s == "soft") return VoteMode::soft;
  if (s == "hard") return VoteMode::hard;
  throw Error("unknown vote mode '" + std::string(s) + "'");
}

struct EnsembleMember {
  Modality modality = Modality::imu;
  ClassifierSpec classifier;
  double weight = 1.0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  VoteMode mode = VoteMode::soft;

  void validate() const {
    if (members.empty()) throw Error("ensemble needs at least one member");
    double total = 0.0;
    for (const auto& m : members) {
      if (!(m.weight >= 0.0)) throw Error("ensemble weights must be non-negative");
      m.classifier.validate();
      total += m.weight;
    }
    if (!(total > 0.0)) throw Error("ensemble weights must not all be zero");
  }

  std::string name() const {
    std::string s = std::string(vote_mode_name(mode)) + "[";
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i) s += ", ";
      s += std::string(modality_name(members[i].modality)) + ":" + members[i].classifier.name();
    }
    return s + "]";
  }
};

struct VoteResult {
  int label = -1;
  std::vector<double> probs;
  double confidence = 0.0;
};

// Combines per-member probability vectors (nullopt = member skipped). Ties go
// to the lower class index, i.e. the lexicographically first label.
inline VoteResult combine_votes(const std::vector<std::optional<std::vector<double>>>& member_probs,
                                const std::vector<double>& weights, VoteMode mode, std::size_t n_classes) {
  if (member_probs.size() != weights.size()) throw Error("combine_votes: weights do not match members");
  VoteResult r;
  r.probs.assign(n_classes, 0.0);
  double total = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < member_probs.size(); ++i) {
    if (!member_probs[i]) continue;
    const auto& p = *member_probs[i];
    if (p.size() != n_classes) throw Error("combine_votes: probability width mismatch");
    any = true;
    if (mode == VoteMode::soft) {
      for (std::size_t c = 0; c < n_classes; ++c) r.probs[c] += weights[i] * p[c];
      total += weights[i];
    } else {
      const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      r.probs[arg] += weights[i] * p[arg];
      total += weights[i] * p[arg];
    }
  }
  if (!any) throw Error("ensemble: all members skipped (no usable modality features)");
  if (total > 0.0)
    for (auto& v : r.probs) v /= total;
  else
    std::fill(r.probs.begin(), r.probs.end(), 1.0 / static_cast<double>(n_classes));
  r.label = static_cast<int>(std::max_element(r.probs.begin(), r.probs.end()) - r.probs.begin());
  r.confidence = r.probs[static_cast<std::size_t>(r.label)];
  return r;
}

// Ensemble with fitted members and its label space (sorted).
struct TrainedEnsemble {
  EnsembleSpec spec;
  std::vector<std::string> labels;
  std::vector<std::shared_ptr<const Classifier>> members;
  double cv_score = 0.0;

  bool constant() const { return labels.size() == 1; }

  // One result per idx row; nullopt where every member was skipped.
  std::vector<std::optional<VoteResult>> predict(const LabeledDataset& ds, const std::vector<std::size_t>& idx) const {
    std::vector<std::optional<VoteResult>> out(idx.size());
    if (constant()) {
      for (auto& o : out) o = VoteResult{0, {1.0}, 1.0};
      return out;
    }
    std::vector<std::vector<std::optional<std::vector<double>>>> per_row(
        idx.size(), std::vector<std::optional<std::vector<double>>>(members.size()));
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const Eigen::MatrixXd X = ds.matrix(spec.members[k].modality, idx, &kept);
      if (kept.empty()) continue;
      const Eigen::MatrixXd P = members[k]->predict_proba(X);
      for (std::size_t q = 0; q < kept.size(); ++q) {
        std::vector<double> p(labels.size());
        for (std::size_t c = 0; c < labels.size(); ++c) p[c] = P(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(c));
        per_row[kept[q]][k] = std::move(p);
      }
    }
    std::vector<double> w;
    for (const auto& m : spec.members) w.push_back(m.weight);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (std::none_of(per_row[i].begin(), per_row[i].end(), [](const auto& p) { return p.has_value(); })) continue;
      out[i] = combine_votes(per_row[i], w, spec.mode, labels.size());
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> label_space(const LabeledDataset& ds, const std::vector<std::size_t>& rows, Target t) {
  std::set<std::string> s;
  for (auto r : rows) s.insert(ds.rows[r].label(t));
  return {s.begin(), s.end()};
}

inline std::vector<int> encode(const LabeledDataset& ds, const std::vector<std::size_t>& rows, Target t,
                               const std::vector<std::string>& labels) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto r : rows) {
    auto it = std::lower_bound(labels.begin(), labels.end(), ds.rows[r].label(t));
    y.push_back(static_cast<int>(it - labels.begin()));
  }
  return y;
}

// Fits spec, falling back to a majority-class constant when the data cannot
// support it (too few rows or a single class).
inline std::shared_ptr<const Classifier> fit_or_constant(const Eigen::MatrixXd& X, const std::vector<int>& y,
                                                         int n_classes, const ClassifierSpec& spec, std::uint64_t seed) {
  std::set<int> present(y.begin(), y.end());
  if (present.size() < 2 || y.size() < kMinTrainingRows) {
    std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
    for (int c : y) ++count[static_cast<std::size_t>(c)];
    const int major = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    return std::make_shared<ConstantClassifier>(n_classes, major);
  }
  return train_classifier(X, y, n_classes, spec, seed);
}

inline std::uint64_t member_seed(std::uint64_t seed, Modality m) { return sub_seed(seed, modality_name(m)); }

}  // namespace detail

inline TrainedEnsemble train_ensemble(const LabeledDataset& ds, const std::vector<std::size_t>& rows, Target target,
                                      const EnsembleSpec& spec, std::uint64_t seed) {
  TrainedEnsemble e;
  e.labels = detail::label_space(ds, rows, target);
  if (e.labels.empty()) throw Error("train_ensemble: no rows");
  if (e.labels.size() == 1) {
    e.spec = spec;
    return e;
  }
  spec.validate();
  e.spec = spec;
  std::vector<std::size_t> kept;
  for (const auto& m : spec.members) {
    const Eigen::MatrixXd X = ds.matrix(m.modality, rows, &kept);
    std::vector<std::size_t> sub;
    for (auto p : kept) sub.push_back(rows[p]);
    const auto y = detail::encode(ds, sub, target, e.labels);
    if (y.empty()) throw Error("train_ensemble: modality " + std::string(modality_name(m.modality)) + " has no rows");
    e.members.push_back(detail::fit_or_constant(X, y, static_cast<int>(e.labels.size()), m.classifier,
                                                detail::member_seed(seed, m.modality)));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Grid search over (modality subset, classifier, vote mode)
// ---------------------------------------------------------------------------

struct HarGridConfig {
  ClassifierGrid classifiers;
  std::vector<VoteMode> modes{VoteMode::soft, VoteMode::hard};
  int inner_folds = 3;
  std::vector<Modality> modalities;  // empty: every modality with data

  void validate() const {
    if (classifiers.specs().empty()) throw Error("har grid: no classifiers");
    if (modes.empty()) throw Error("har grid: no vote modes");
    if (inner_folds < 2) throw Error("har grid: inner_folds must be >= 2");
  }
};

struct HarCandidate {
  std::vector<Modality> modalities;
  ClassifierSpec classifier;
  VoteMode mode = VoteMode::soft;
  double score = 0.0;
};

struct HarSearchResult {
  EnsembleSpec best;
  double score = 0.0;
  std::vector<HarCandidate> evaluated;
};

namespace detail {

// Session-grouped fold ids (sessions in sorted order, round robin); falls
// back to contiguous row blocks when only one session is present.
inline std::vector<int> inner_fold_ids(const LabeledDataset& ds, const std::vector<std::size_t>& rows, int k) {
  std::set<std::string> ss;
  for (auto r : rows) ss.insert(ds.rows[r].session_id);
  std::vector<int> f(rows.size());
  if (ss.size() >= 2) {
    const std::vector<std::string> sessions(ss.begin(), ss.end());
    const int folds = std::min<int>(k, static_cast<int>(sessions.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto pos = std::lower_bound(sessions.begin(), sessions.end(), ds.rows[rows[i]].session_id) - sessions.begin();
      f[i] = static_cast<int>(pos % folds);
    }
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i)
      f[i] = static_cast<int>(i * static_cast<std::size_t>(k) / std::max<std::size_t>(rows.size(), 1));
  }
  return f;
}

// Ordering key for ties: fewer modalities, then names, then grid order.
inline std::vector<std::string> candidate_key(const std::vector<Modality>& ms) {
  std::vector<std::string> names;
  for (Modality m : ms) names.emplace_back(modality_name(m));
  std::sort(names.begin(), names.end());
  return names;
}

inline bool candidate_before(const HarCandidate& a, std::size_t a_spec, const HarCandidate& b, std::size_t b_spec) {
  if (a.modalities.size() != b.modalities.size()) return a.modalities.size() < b.modalities.size();
  const auto ka = candidate_key(a.modalities), kb = candidate_key(b.modalities);
  if (ka != kb) return ka < kb;
  if (a_spec != b_spec) return a_spec < b_spec;
  return a.mode < b.mode;
}

// Out-of-fold probabilities for every classifier of the grid on one modality.
// Returns, per spec, a (rows x classes) matrix and a flag per row.
struct OofTable {
  std::vector<Eigen::MatrixXd> probs;  // per spec
  std::vector<char> have;              // per row
};

inline OofTable out_of_fold(const LabeledDataset& ds, const std::vector<std::size_t>& rows, const std::vector<int>& y,
                            int n_classes, Modality m, const std::vector<ClassifierSpec>& specs,
                            const std::vector<int>& fold, int n_folds, std::uint64_t seed) {
  OofTable t;
  t.probs.assign(specs.size(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n_classes));
  t.have.assign(rows.size(), 0);
  for (int f = 0; f < n_folds; ++f) {
    std::vector<std::size_t> tr, te, tr_pos, te_pos;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!ds.has(m, rows[i])) continue;
      (fold[i] == f ? te : tr).push_back(rows[i]);
      (fold[i] == f ? te_pos : tr_pos).push_back(i);
    }
    if (te.empty() || tr.empty()) continue;
    const Eigen::MatrixXd Xtr = ds.matrix(m, tr, nullptr), Xte = ds.matrix(m, te, nullptr);
    std::vector<int> ytr;
    for (auto p : tr_pos) ytr.push_back(y[p]);
    const std::uint64_t s = member_seed(seed, m);
    auto scatter = [&](std::size_t spec_i, const Eigen::MatrixXd& P) {
      for (std::size_t q = 0; q < te_pos.size(); ++q)
        t.probs[spec_i].row(static_cast<Eigen::Index>(te_pos[q])) = P.row(static_cast<Eigen::Index>(q));
    };
    for (auto p : te_pos) t.have[p] = 1;
    std::set<int> present(ytr.begin(), ytr.end());
    if (present.size() < 2 || ytr.size() < kMinTrainingRows) {
      const auto c = fit_or_constant(Xtr, ytr, n_classes, specs.front(), s);
      const Eigen::MatrixXd P = c->predict_proba(Xte);
      for (std::size_t i = 0; i < specs.size(); ++i) scatter(i, P);
      continue;
    }
    // knn: one neighbour ordering for all k
    std::vector<int> ks;
    std::vector<std::size_t> knn_idx;
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].kind == ClassifierKind::knn) {
        ks.push_back(specs[i].k);
        knn_idx.push_back(i);
      }
    if (!ks.empty()) {
      KnnClassifier knn(ks.front());
      knn.fit(Xtr, ytr, n_classes);
      const auto Ps = knn.predict_proba_multi(Xte, ks);
      for (std::size_t q = 0; q < ks.size(); ++q) scatter(knn_idx[q], Ps[q]);
    }
    // forests: largest tree count per depth, prefixes for the rest
    std::map<int, int> forest_trees;
    for (const auto& sp : specs)
      if (sp.kind == ClassifierKind::balanced_forest) forest_trees[sp.depth] = std::max(forest_trees[sp.depth], sp.trees);
    for (const auto& [depth, trees] : forest_trees) {
      BalancedForest bf(trees, depth);
      bf.fit(Xtr, ytr, n_classes, s);
      for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].kind == ClassifierKind::balanced_forest && specs[i].depth == depth)
          scatter(i, bf.predict_proba_prefix(Xte, specs[i].trees));
    }
    std::map<int, int> boost_rounds;
    for (const auto& sp : specs)
      if (sp.kind == ClassifierKind::boosted_resampled)
        boost_rounds[sp.depth] = std::max(boost_rounds[sp.depth], sp.rounds);
    for (const auto& [depth, rounds] : boost_rounds) {
      BoostedResampled br(rounds, depth);
      br.fit(Xtr, ytr, n_classes, s);
      for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].kind == ClassifierKind::boosted_resampled && specs[i].depth == depth)
          scatter(i, br.predict_proba_prefix(Xte, specs[i].rounds));
    }
  }
  return t;
}

}  // namespace detail

// Picks the ensemble with the best cross-validated balanced accuracy on
// `rows` for the given target. Out-of-fold member probabilities are computed
// once per (modality, classifier) and reused across subsets and vote modes.
inline HarSearchResult grid_search_har(const LabeledDataset& ds, const std::vector<std::size_t>& rows, Target target,
                                       const HarGridConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (rows.empty()) throw Error("grid_search_har: no rows");
  const auto specs = cfg.classifiers.specs();
  const auto labels = detail::label_space(ds, rows, target);
  std::vector<Modality> mods;
  for (Modality m : cfg.modalities.empty() ? ds.modalities() : cfg.modalities)
    if (std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return ds.has(m, r); })) mods.push_back(m);
  if (mods.empty()) throw Error("grid_search_har: no modality has features");
  HarSearchResult res;
  if (labels.size() == 1) {
    res.best = {{{mods.front(), ClassifierSpec::constant(), 1.0}}, VoteMode::soft};
    res.score = 1.0;
    return res;
  }
  const auto y = detail::encode(ds, rows, target, labels);
  const int C = static_cast<int>(labels.size());
  const auto fold = detail::inner_fold_ids(ds, rows, cfg.inner_folds);
  const int n_folds = *std::max_element(fold.begin(), fold.end()) + 1;
  std::vector<detail::OofTable> oof;
  for (Modality m : mods) oof.push_back(detail::out_of_fold(ds, rows, y, C, m, specs, fold, n_folds, seed));

  const std::size_t n = rows.size();
  std::vector<int> pred(n);
  std::vector<double> acc(static_cast<std::size_t>(C));
  bool have_best = false;
  HarCandidate best;
  std::size_t best_spec = 0;
  for (unsigned mask = 1; mask < (1u << mods.size()); ++mask) {
    std::vector<std::size_t> sel;
    for (std::size_t k = 0; k < mods.size(); ++k)
      if (mask & (1u << k)) sel.push_back(k);
    for (std::size_t si = 0; si < specs.size(); ++si)
      for (VoteMode mode : cfg.modes) {
        for (std::size_t i = 0; i < n; ++i) {
          std::fill(acc.begin(), acc.end(), 0.0);
          bool any = false;
          for (auto k : sel) {
            if (!oof[k].have[i]) continue;
            any = true;
            const auto row = oof[k].probs[si].row(static_cast<Eigen::Index>(i));
            if (mode == VoteMode::soft) {
              for (int c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += row(c);
            } else {
              Eigen::Index arg = 0;
              const double conf = row.maxCoeff(&arg);
              acc[static_cast<std::size_t>(arg)] += conf;
            }
          }
          pred[i] = !any ? -1 : static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
        }
        HarCandidate cand;
        for (auto k : sel) cand.modalities.push_back(mods[k]);
        cand.classifier = specs[si];
        cand.mode = mode;
        cand.score = balanced_accuracy_of(y, pred, labels.size());
        if (!have_best || cand.score > best.score ||
            (cand.score == best.score && detail::candidate_before(cand, si, best, best_spec))) {
          best = cand;
          best_spec = si;
          have_best = true;
        }
        res.evaluated.push_back(std::move(cand));
      }
  }
  for (Modality m : best.modalities) res.best.members.push_back({m, best.classifier, 1.0});
  res.best.mode = best.mode;
  res.score = best.score;
  return res;
}

// ---------------------------------------------------------------------------
// Zone-first model
// ---------------------------------------------------------------------------

struct Inference {
  std::string zone;
  std::string activity;
  double confidence = 0.0;
  bool ok = false;
};

struct ZoneModel {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> zones;
  TrainedEnsemble zone_classifier;
  std::map<std::string, TrainedEnsemble> per_zone;

  std::vector<Inference> infer(const LabeledDataset& ds, const std::vector<std::size_t>& idx) const {
    std::vector<Inference> out(idx.size());
    const auto zr = zone_classifier.predict(ds, idx);
    std::map<std::string, std::vector<std::size_t>> by_zone;  // zone -> positions in idx
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (!zr[i]) continue;
      out[i].zone = zone_classifier.labels[static_cast<std::size_t>(zr[i]->label)];
      out[i].confidence = zr[i]->confidence;
      by_zone[out[i].zone].push_back(i);
    }
    for (const auto& [zone, pos] : by_zone) {
      const auto& ens = per_zone.at(zone);
      std::vector<std::size_t> sub;
      for (auto p : pos) sub.push_back(idx[p]);
      const auto ar = ens.predict(ds, sub);
      for (std::size_t q = 0; q < pos.size(); ++q) {
        auto& o = out[pos[q]];
        if (!ar[q]) continue;
        o.activity = ens.labels[static_cast<std::size_t>(ar[q]->label)];
        o.confidence *= ar[q]->confidence;
        o.ok = true;
      }
    }
    return out;
  }

  // Single window given its per-modality features.
  Inference infer(const std::map<Modality, std::vector<double>>& window) const {
    LabeledDataset ds;
    ds.append({}, window);
    auto r = infer(ds, {0});
    if (!r[0].ok) throw Error("infer: no usable modality features");
    return r[0];
  }
};

struct ZoneModelConfig {
  HarGridConfig grid;
};

// Zone ensemble on all rows, then one activity ensemble per zone. A zone
// with a single activity gets a constant predictor.
inline ZoneModel train_zone_model(const LabeledDataset& ds, const std::vector<std::size_t>& rows,
                                  const HarGridConfig& grid, std::uint64_t seed, double lambda = 0.0) {
  if (rows.empty()) throw Error("train_zone_model: no rows");
  ZoneModel zm;
  zm.lambda = lambda;
  zm.seed = seed;
  zm.zones = detail::label_space(ds, rows, Target::zone);
  const auto zs = grid_search_har(ds, rows, Target::zone, grid, sub_seed(seed, "zone"));
  zm.zone_classifier = train_ensemble(ds, rows, Target::zone, zs.best, sub_seed(seed, "zone"));
  zm.zone_classifier.cv_score = zs.score;
  for (const auto& z : zm.zones) {
    std::vector<std::size_t> zr;
    for (auto r : rows)
      if (ds.rows[r].zone == z) zr.push_back(r);
    const std::uint64_t s = sub_seed(seed, "zone:" + z);
    const auto as = grid_search_har(ds, zr, Target::activity, grid, s);
    auto ens = train_ensemble(ds, zr, Target::activity, as.best, s);
    ens.cv_score = as.score;
    zm.per_zone.emplace(z, std::move(ens));
  }
  return zm;
}

// ---------------------------------------------------------------------------
// Leave-one-session-out evaluation
// ---------------------------------------------------------------------------

using RowPredictor = std::function<std::vector<Inference>(const LabeledDataset&, const std::vector<std::size_t>&)>;
using ModelBuilder =
    std::function<RowPredictor(const LabeledDataset&, const std::vector<std::size_t>& train, std::uint64_t seed)>;

inline ModelBuilder zone_model_builder(HarGridConfig grid, double lambda = 0.0) {
  return [grid, lambda](const LabeledDataset& ds, const std::vector<std::size_t>& train, std::uint64_t seed) {
    auto zm = std::make_shared<ZoneModel>(train_zone_model(ds, train, grid, seed, lambda));
    return RowPredictor([zm](const LabeledDataset& d, const std::vector<std::size_t>& idx) { return zm->infer(d, idx); });
  };
}

struct FoldPrediction {
  std::string session_id;
  double t_s = 0.0;
  std::string truth;
  std::string predicted;  // empty when inference had no usable features
  std::string zone;
  double confidence = 0.0;
};

struct SessionMetrics {
  std::size_t n = 0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
};

struct EvalReport {
  std::vector<std::string> labels;
  Confusion confusion;
  double balanced_accuracy = 0.0;
  double f1_macro = 0.0;
  std::map<std::string, SessionMetrics> per_session;
  std::vector<FoldPrediction> predictions;
};

inline constexpr std::string_view kNoPrediction = "(none)";

inline Confusion confusion_of(const std::vector<FoldPrediction>& preds, const std::vector<std::string>& labels) {
  Confusion c(labels.size(), std::vector<long long>(labels.size(), 0));
  auto at = [&](const std::string& l) {
    const std::string& key = l.empty() ? std::string(kNoPrediction) : l;
    return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), key) - labels.begin());
  };
  for (const auto& p : preds) ++c[at(p.truth)][at(p.predicted)];
  return c;
}

// Report built purely from persisted predictions.
inline EvalReport evaluate_predictions(std::vector<FoldPrediction> preds) {
  if (preds.empty()) throw Error("evaluate: no predictions");
  EvalReport r;
  std::set<std::string> ls;
  for (const auto& p : preds) {
    ls.insert(p.truth);
    ls.insert(p.predicted.empty() ? std::string(kNoPrediction) : p.predicted);
  }
  r.labels.assign(ls.begin(), ls.end());
  r.confusion = confusion_of(preds, r.labels);
  r.balanced_accuracy = balanced_accuracy(r.confusion);
  r.f1_macro = f1_macro(r.confusion);
  std::map<std::string, std::vector<FoldPrediction>> by_session;
  for (const auto& p : preds) by_session[p.session_id].push_back(p);
  for (const auto& [s, ps] : by_session) {
    SessionMetrics m;
    m.n = ps.size();
    std::size_t hit = 0;
    for (const auto& p : ps) hit += p.truth == p.predicted;
    m.accuracy = static_cast<double>(hit) / static_cast<double>(ps.size());
    m.balanced_accuracy = balanced_accuracy(confusion_of(ps, r.labels));
    r.per_session[s] = m;
  }
  r.predictions = std::move(preds);
  return r;
}

// One fold per session: train on every other session, test on it.
inline EvalReport loso_cv(const LabeledDataset& ds, const ModelBuilder& builder, std::uint64_t seed,
                          unsigned jobs = 1) {
  const auto sessions = ds.sessions();
  if (sessions.size() < 2) throw Error("loso_cv: need at least two sessions");
  std::vector<std::vector<FoldPrediction>> fold_preds(sessions.size());
  parallel_for(sessions.size(), jobs, [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t r = 0; r < ds.size(); ++r) (ds.rows[r].session_id == sessions[f] ? test : train).push_back(r);
    const auto predictor = builder(ds, train, sub_seed(seed, sessions[f]));
    const auto inf = predictor(ds, test);
    for (std::size_t q = 0; q < test.size(); ++q) {
      const auto& row = ds.rows[test[q]];
      fold_preds[f].push_back({row.session_id, row.t_s, row.activity, inf[q].ok ? inf[q].activity : std::string{},
                               inf[q].zone, inf[q].ok ? inf[q].confidence : 0.0});
    }
  });
  std::vector<FoldPrediction> all;
  for (auto& fp : fold_preds) all.insert(all.end(), fp.begin(), fp.end());
  return evaluate_predictions(std::move(all));
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["labels"] = r.labels;
  j["confusion"] = r.confusion;
  j["balanced_accuracy"] = r.balanced_accuracy;
  j["f1_macro"] = r.f1_macro;
  nlohmann::ordered_json ps = nlohmann::ordered_json::object();
  for (const auto& [s, m] : r.per_session)
    ps[s] = {{"n", m.n}, {"accuracy", m.accuracy}, {"balanced_accuracy", m.balanced_accuracy}};
  j["per_session"] = ps;
  return j;
}

inline void write_confusion_csv(const EvalReport& r, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  auto quote = [](const std::string& s) { return "\"" + s + "\""; };
  out << "truth\\predicted";
  for (const auto& l : r.labels) out << ',' << quote(l);
  out << '\n';
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    out << quote(r.labels[i]);
    for (long long v : r.confusion[i]) out << ',' << v;
    out << '\n';
  }
}

inline void write_fold_predictions_csv(const std::vector<FoldPrediction>& preds, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << "session_id,t_s,truth,predicted,zone,confidence\n";
  for (const auto& p : preds)
    out << p.session_id << ',' << format_fixed(p.t_s, 3) << ",\"" << p.truth << "\",\"" << p.predicted << "\",\""
        << p.zone << "\"," << format_fixed(p.confidence, 6) << '\n';
}

namespace detail {

// Splits one CSV record; fields may be double-quoted (no embedded quotes).
inline std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"')
      quoted = !quoted;
    else if (ch == ',' && !quoted)
      out.emplace_back();
    else if (ch != '\r')
      out.back() += ch;
  }
  if (quoted) throw Error("unterminated quote");
  return out;
}

}  // namespace detail

inline std::vector<FoldPrediction> read_fold_predictions_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "session_id,t_s,truth,predicted,zone,confidence")
    throw ParseError(file.string(), 1, 1, "unexpected header");
  std::vector<FoldPrediction> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    try {
      f = detail::csv_fields(line);
    } catch (const Error& e) {
      throw ParseError(file.string(), lineno, 1, e.what());
    }
    if (f.size() != 6) throw ParseError(file.string(), lineno, 1, "expected 6 fields");
    const auto t = parse_double(f[1]);
    const auto c = parse_double(f[5]);
    if (!t || !c) throw ParseError(file.string(), lineno, 1, "non-numeric field");
    out.push_back({f[0], *t, f[2], f[3], f[4], *c});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal aggregation
// ---------------------------------------------------------------------------

struct WindowPrediction {
  double t_s = 0.0;  // window end
  std::string zone;
  std::string activity;
  double confidence = 0.0;
};

struct ActivitySegment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string zone;
  std::string activity;
  double confidence = 0.0;
};

inline constexpr double kTick = 0.5;

// Majority vote of all windows covering each 0.5 s tick (ties: lexicographic),
// then repeated absorption of the shortest run below min_segment_s into its
// longer neighbour (earlier neighbour on ties).
inline std::vector<ActivitySegment> aggregate_predictions(const std::vector<WindowPrediction>& preds,
                                                          double min_segment_s, double window_length_s = 5.0) {
  if (preds.empty()) throw Error("aggregate_predictions: no predictions");
  for (std::size_t i = 1; i < preds.size(); ++i)
    if (preds[i].t_s < preds[i - 1].t_s) throw Error("aggregate_predictions: predictions not time-ordered");
  const double start = std::max(0.0, preds.front().t_s - window_length_s);
  const double end = preds.back().t_s;
  const auto n_ticks = static_cast<std::size_t>(std::max(1.0, std::ceil((end - start) / kTick - 1e-9)));
  std::vector<std::string> tick(n_ticks);
  std::vector<std::map<std::string, int>> votes(n_ticks);
  for (const auto& p : preds) {
    const double lo = p.t_s - window_length_s;
    for (std::size_t k = 0; k < n_ticks; ++k) {
      const double a = start + kTick * static_cast<double>(k);
      if (a >= lo - 1e-9 && a + kTick <= p.t_s + 1e-9) ++votes[k][p.activity];
    }
  }
  for (std::size_t k = 0; k < n_ticks; ++k) {
    int best = 0;
    for (const auto& [label, v] : votes[k])
      if (v > best) {
        best = v;
        tick[k] = label;
      }
    if (best == 0) tick[k] = k ? tick[k - 1] : std::string{};
  }
  if (tick[0].empty()) {
    std::size_t k = 0;
    while (k < n_ticks && tick[k].empty()) ++k;
    const std::string fill = k < n_ticks ? tick[k] : preds.front().activity;
    for (std::size_t q = 0; q < k && q < n_ticks; ++q) tick[q] = fill;
  }
  struct Run {
    std::size_t a, b;  // ticks [a, b)
    std::string label;
  };
  std::vector<Run> runs;
  for (std::size_t k = 0; k < n_ticks; ++k) {
    if (!runs.empty() && runs.back().label == tick[k])
      runs.back().b = k + 1;
    else
      runs.push_back({k, k + 1, tick[k]});
  }
  const auto min_ticks = static_cast<std::size_t>(std::ceil(min_segment_s / kTick - 1e-9));
  while (runs.size() > 1) {
    std::size_t s = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::size_t len = runs[i].b - runs[i].a;
      if (len < min_ticks && (s == runs.size() || len < runs[s].b - runs[s].a)) s = i;
    }
    if (s == runs.size()) break;
    std::size_t into;
    if (s == 0)
      into = 1;
    else if (s + 1 == runs.size())
      into = s - 1;
    else
      into = (runs[s + 1].b - runs[s + 1].a) > (runs[s - 1].b - runs[s - 1].a) ? s + 1 : s - 1;
    runs[s].label = runs[into].label;
    std::vector<Run> merged;
    for (const auto& r : runs) {
      if (!merged.empty() && merged.back().label == r.label)
        merged.back().b = r.b;
      else
        merged.push_back(r);
    }
    runs = std::move(merged);
  }
  std::map<std::string, std::string> zone_of;
  for (const auto& p : preds) zone_of.emplace(p.activity, p.zone);
  std::vector<ActivitySegment> out;
  for (const auto& r : runs) {
    ActivitySegment seg;
    seg.start_s = start + kTick * static_cast<double>(r.a);
    seg.end_s = r.b == n_ticks ? end : start + kTick * static_cast<double>(r.b);
    seg.activity = r.label;
    seg.zone = zone_of.count(r.label) ? zone_of[r.label] : std::string{};
    double sum = 0.0;
    int cnt = 0;
    for (const auto& p : preds) {
      const double mid = p.t_s - window_length_s / 2.0;
      if (mid >= seg.start_s && mid < seg.end_s && p.activity == r.label) {
        sum += p.confidence;
        ++cnt;
      }
    }
    seg.confidence = cnt ? sum / cnt : 0.0;
    out.push_back(std::move(seg));
  }
  return out;
}

inline void write_segments_csv(const std::vector<ActivitySegment>& segs, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << "start_s,end_s,zone,activity,confidence\n";
  for (const auto& s : segs)
    out << format_fixed(s.start_s, 3) << ',' << format_fixed(s.end_s, 3) << ",\"" << s.zone << "\",\"" << s.activity
        << "\"," << format_fixed(s.confidence, 6) << '\n';
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void write_blob(const std::filesystem::path& file, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_blob(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("model bundle: missing blob " + file.filename().string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::ordered_json ensemble_to_json(const TrainedEnsemble& e, const std::filesystem::path& dir,
                                               const std::string& prefix) {
  nlohmann::ordered_json j;
  j["labels"] = e.labels;
  j["mode"] = std::string(vote_mode_name(e.spec.mode));
  j["cv_balanced_accuracy"] = e.cv_score;
  j["members"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < e.spec.members.size(); ++k) {
    const auto& m = e.spec.members[k];
    nlohmann::ordered_json mj;
    mj["modality"] = std::string(modality_name(m.modality));
    mj["classifier"] = spec_to_json(m.classifier);
    mj["weight"] = m.weight;
    if (k < e.members.size()) {
      const std::string blob = prefix + "-" + std::to_string(k) + ".bin";
      BlobWriter w;
      w.put<std::int32_t>(static_cast<std::int32_t>(e.members[k]->spec().kind));
      e.members[k]->save(w);
      write_blob(dir / blob, w.bytes());
      mj["blob"] = blob;
    }
    j["members"].push_back(mj);
  }
  return j;
}

inline TrainedEnsemble ensemble_from_json(const nlohmann::json& j, const std::filesystem::path& dir) {
  TrainedEnsemble e;
  e.labels = j.at("labels").get<std::vector<std::string>>();
  e.spec.mode = parse_vote_mode(j.at("mode").get<std::string>());
  e.cv_score = j.value("cv_balanced_accuracy", 0.0);
  for (const auto& mj : j.at("members")) {
    EnsembleMember m;
    m.modality = modality_from_string(mj.at("modality").get<std::string>());
    m.classifier = spec_from_json(mj.at("classifier"));
    m.weight = mj.value("weight", 1.0);
    e.spec.members.push_back(m);
    if (!mj.contains("blob")) continue;
    const auto bytes = read_blob(dir / mj.at("blob").get<std::string>());
    BlobReader r(bytes);
    const auto kind = static_cast<ClassifierKind>(r.get<std::int32_t>());
    ClassifierSpec s = m.classifier;
    s.kind = kind;
    auto c = make_empty_classifier(s);
    c->load(r);
    if (!r.done()) throw Error("model bundle: trailing bytes in " + mj.at("blob").get<std::string>());
    if (c->n_classes() != static_cast<int>(e.labels.size())) throw Error("model bundle: class count mismatch");
    e.members.push_back(std::move(c));
  }
  if (!e.constant() && e.members.size() != e.spec.members.size()) throw Error("model bundle: missing member blobs");
  return e;
}

}  // namespace detail

inline void save_zone_model(const ZoneModel& zm, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = "zone-model";
  j["lambda"] = zm.lambda;
  j["seed"] = zm.seed;
  j["zones"] = zm.zones;
  j["zone_classifier"] = detail::ensemble_to_json(zm.zone_classifier, dir, "zone");
  nlohmann::ordered_json pz = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < zm.zones.size(); ++i)
    pz[zm.zones[i]] = detail::ensemble_to_json(zm.per_zone.at(zm.zones[i]), dir, "activity-" + std::to_string(i));
  j["per_zone"] = pz;
  std::ofstream out(dir / "model.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "model.json").string());
  out << j.dump(2) << '\n';
}

inline ZoneModel load_zone_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json", std::ios::binary);
  if (!in) throw Error("model bundle: cannot read " + (dir / "model.json").string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format_version", 0) != kModelFormatVersion)
      throw Error("model bundle: unsupported format_version " + j.value("format_version", nlohmann::json()).dump());
    ZoneModel zm;
    zm.lambda = j.at("lambda").get<double>();
    zm.seed = j.at("seed").get<std::uint64_t>();
    zm.zones = j.at("zones").get<std::vector<std::string>>();
    zm.zone_classifier = detail::ensemble_from_json(j.at("zone_classifier"), dir);
    for (const auto& z : zm.zones) zm.per_zone.emplace(z, detail::ensemble_from_json(j.at("per_zone").at(z), dir));
    return zm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model bundle: corrupt model.json: ") + e.what());
  }
}

}  // namespace organichar
