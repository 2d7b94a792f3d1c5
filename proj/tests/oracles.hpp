#pragma once

// Independent reference implementations used only by the tests. They work on
// plain vectors and avoid the library's numerical helpers on purpose.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

// ---------------------------------------------------------------------------
// Discounted GMM recursion
// ---------------------------------------------------------------------------

struct Gmm {
  double alpha = 0.1;
  double reg = 1e-6;          // ridge added to every covariance after an update
  double weight_floor = 1e-250;
  double density_floor = 1e-300;
  Vec pi;
  std::vector<Vec> mu, mu_aux;
  std::vector<Mat> sigma, sigma_aux;
};

inline Mat outer(const Vec& a, const Vec& b) {
  Mat m(a.size(), Vec(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m[i][j] = a[i] * b[j];
  return m;
}

// Lower Cholesky factor; returns false when the matrix is not positive definite.
inline bool cholesky(const Mat& a, Mat& l) {
  const std::size_t n = a.size();
  l.assign(n, Vec(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
    if (!(d > 0.0)) return false;
    l[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = s / l[j][j];
    }
  }
  return true;
}

inline double log_normal(const Vec& y, const Vec& mu, const Mat& sigma) {
  const std::size_t n = y.size();
  Mat l;
  if (!cholesky(sigma, l)) return -INFINITY;
  Vec z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = y[i] - mu[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * z[k];
    z[i] = s / l[i][i];
  }
  double quad = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    quad += z[i] * z[i];
    logdet += 2.0 * std::log(l[i][i]);
  }
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * 3.14159265358979323846) + logdet + quad);
}

inline Vec log_joint(const Gmm& g, const Vec& y) {
  Vec lj(g.pi.size());
  for (std::size_t i = 0; i < g.pi.size(); ++i) lj[i] = std::log(g.pi[i]) + log_normal(y, g.mu[i], g.sigma[i]);
  return lj;
}

inline double log_mixture(const Vec& lj) {
  double mx = -INFINITY;
  for (double v : lj) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : lj) s += std::exp(v - mx);
  return mx + std::log(s);
}

// s = -ln sum_i pi_i N(y | mu_i, Sigma_i)
inline double score(const Gmm& g, const Vec& y) {
  return -std::max(log_mixture(log_joint(g, y)), std::log(g.density_floor));
}

inline void update(Gmm& g, const Vec& y) {
  const Vec lj = log_joint(g, y);
  const double lse = log_mixture(lj);
  const std::size_t K = g.pi.size(), n = y.size();
  const Mat yy = outer(y, y);
  for (std::size_t i = 0; i < K; ++i) {
    const double lam = std::isfinite(lse) ? std::exp(lj[i] - lse) : 1.0 / static_cast<double>(K);
    const double a = g.alpha;
    g.pi[i] = std::max((1 - a) * g.pi[i] + a * lam, g.weight_floor);
    for (std::size_t r = 0; r < n; ++r) {
      g.mu_aux[i][r] = (1 - a) * g.mu_aux[i][r] + a * lam * y[r];
      for (std::size_t c = 0; c < n; ++c) g.sigma_aux[i][r][c] = (1 - a) * g.sigma_aux[i][r][c] + a * lam * yy[r][c];
    }
    for (std::size_t r = 0; r < n; ++r) g.mu[i][r] = g.mu_aux[i][r] / g.pi[i];
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        g.sigma[i][r][c] = g.sigma_aux[i][r][c] / g.pi[i] - g.mu[i][r] * g.mu[i][c] + (r == c ? g.reg : 0.0);
  }
}

// ---------------------------------------------------------------------------
// Clustering quality score, straight from the component definitions
// ---------------------------------------------------------------------------

struct ScoreParts {
  double count, noise, prob;
};

inline ScoreParts score_parts(const std::vector<int>& labels, const Vec& prob, int n_clusters, int c_min, int c_max,
                              double n_max) {
  ScoreParts s{0.0, 0.0, 0.0};
  if (n_clusters > 0) {
    if (n_clusters < c_min)
      s.count = static_cast<double>(n_clusters) / c_min;
    else if (n_clusters > c_max)
      s.count = static_cast<double>(c_max) / n_clusters;
    else
      s.count = 1.0;
  }
  int noise = 0;
  double psum = 0.0;
  int members = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      ++noise;
    } else {
      psum += prob[i];
      ++members;
    }
  }
  if (!labels.empty()) {
    const double r = static_cast<double>(noise) / static_cast<double>(labels.size());
    s.noise = 1.0 - r / n_max;
    if (s.noise < 0.0) s.noise = 0.0;
  }
  s.prob = members ? psum / members : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Set partitions
// ---------------------------------------------------------------------------

using Blocks = std::vector<std::vector<std::size_t>>;

inline Blocks canonical(Blocks b) {
  for (auto& x : b) std::sort(x.begin(), x.end());
  std::sort(b.begin(), b.end());
  return b;
}

// Every partition of {0..n-1}, via restricted growth strings.
inline std::vector<Blocks> all_partitions(std::size_t n) {
  std::vector<Blocks> out;
  if (n == 0) return {Blocks{}};
  std::vector<std::size_t> a(n, 0);
  while (true) {
    std::size_t k = 0;
    for (auto v : a) k = std::max(k, v + 1);
    Blocks b(k);
    for (std::size_t i = 0; i < n; ++i) b[a[i]].push_back(i);
    out.push_back(canonical(b));
    // next restricted growth string
    std::size_t i = n - 1;
    while (i > 0) {
      std::size_t mx = 0;
      for (std::size_t j = 0; j < i; ++j) mx = std::max(mx, a[j]);
      if (a[i] <= mx) {
        ++a[i];
        for (std::size_t j = i + 1; j < n; ++j) a[j] = 0;
        break;
      }
      --i;
    }
    if (i == 0) break;
  }
  return out;
}

inline double min_within(const Blocks& p, const Mat& S) {
  double m = 1.0;
  for (const auto& b : p)
    for (auto i : b)
      for (auto j : b) m = std::min(m, S[i][j]);
  return m;
}

inline bool satisfies(const Blocks& p, const Mat& S, double lambda, double tol = 1e-12) {
  return min_within(p, S) >= 1.0 - lambda - tol;
}

// Whether q is p with exactly two blocks joined; returns those blocks.
inline std::optional<std::pair<std::size_t, std::size_t>> joins_two(const Blocks& p, const Blocks& q) {
  if (q.size() + 1 != p.size()) return std::nullopt;
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = a + 1; b < p.size(); ++b) {
      Blocks r;
      for (std::size_t k = 0; k < p.size(); ++k)
        if (k != a && k != b) r.push_back(p[k]);
      auto u = p[a];
      u.insert(u.end(), p[b].begin(), p[b].end());
      r.push_back(u);
      if (canonical(r) == q) return std::make_pair(a, b);
    }
  return std::nullopt;
}

// Complete linkage replayed over the enumerated partition lattice: starting
// from singletons, move to the one-merge coarsening whose joined blocks have
// the largest minimum cross similarity (ties by smallest (label, label) key),
// as long as that minimum is at least 1 - lambda.
inline Blocks complete_linkage_by_enumeration(const Mat& S, const std::vector<std::string>& labels, double lambda,
                                              double tol = 1e-12) {
  const std::size_t n = S.size();
  const auto lattice = all_partitions(n);
  Blocks cur;
  for (std::size_t i = 0; i < n; ++i) cur.push_back({i});
  auto first_label = [&](const std::vector<std::size_t>& b) {
    std::string s = labels[b[0]];
    for (auto i : b) s = std::min(s, labels[i]);
    return s;
  };
  while (true) {
    std::optional<Blocks> next;
    double best = -1.0;
    std::pair<std::string, std::string> best_key;
    for (const auto& q : lattice) {
      auto j = joins_two(cur, q);
      if (!j) continue;
      double link = 1.0;
      for (auto i : cur[j->first])
        for (auto k : cur[j->second]) link = std::min(link, S[i][k]);
      auto la = first_label(cur[j->first]), lb = first_label(cur[j->second]);
      if (lb < la) std::swap(la, lb);
      const std::pair<std::string, std::string> key{la, lb};
      if (link > best || (link == best && key < best_key)) {
        best = link;
        best_key = key;
        next = q;
      }
    }
    if (!next || best < 1.0 - lambda - tol) break;
    cur = *next;
  }
  return canonical(cur);
}

// No two blocks of p can be joined without breaking the pairwise bound.
inline bool maximal(const Blocks& p, const Mat& S, double lambda, double tol = 1e-12) {
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = a + 1; b < p.size(); ++b) {
      bool ok = true;
      for (auto i : p[a])
        for (auto j : p[b]) ok = ok && S[i][j] >= 1.0 - lambda - tol;
      if (ok) return false;
    }
  return true;
}

// Every block of fine lies inside one block of coarse.
inline bool refines(const Blocks& fine, const Blocks& coarse) {
  std::map<std::size_t, std::size_t> owner;
  for (std::size_t k = 0; k < coarse.size(); ++k)
    for (auto i : coarse[k]) owner[i] = k;
  for (const auto& b : fine)
    for (auto i : b)
      if (owner.at(i) != owner.at(b[0])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Semantic similarity
// ---------------------------------------------------------------------------

inline double naive_similarity(const std::vector<Vec>& a, const std::vector<Vec>& b, const Vec& w) {
  double s = 0.0;
  for (std::size_t d = 0; d < w.size(); ++d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a[d].size(); ++k) {
      dot += a[d][k] * b[d][k];
      na += a[d][k] * a[d][k];
      nb += b[d][k] * b[d][k];
    }
    dot = na > 0.0 && nb > 0.0 ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
    if (dot < 0.0) dot = 0.0;
    if (dot > 1.0) dot = 1.0;
    s += w[d] * dot;
  }
  return std::min(1.0, std::max(0.0, s));
}

// ---------------------------------------------------------------------------
// Ensemble vote tallies
// ---------------------------------------------------------------------------

// Soft: weighted mean of member distributions. Hard: each member puts its
// weight times its top probability on its first top class; tallies are then
// normalized. Winner is the first class with the largest tally.
inline std::pair<int, Vec> tally(const std::vector<std::optional<Vec>>& probs, const Vec& w, bool soft,
                                 std::size_t n_classes) {
  Vec t(n_classes, 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (!probs[m]) continue;
    const Vec& p = *probs[m];
    if (soft) {
      for (std::size_t c = 0; c < n_classes; ++c) t[c] += w[m] * p[c];
      total += w[m];
    } else {
      std::size_t top = 0;
      for (std::size_t c = 1; c < n_classes; ++c)
        if (p[c] > p[top]) top = c;
      t[top] += w[m] * p[top];
      total += w[m] * p[top];
    }
  }
  for (auto& v : t) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(n_classes);
  int win = 0;
  for (std::size_t c = 1; c < n_classes; ++c)
    if (t[c] > t[static_cast<std::size_t>(win)]) win = static_cast<int>(c);
  return {win, t};
}

// Macro recall over classes that occur in truth.
inline double macro_recall(const std::vector<std::string>& truth, const std::vector<std::string>& pred) {
  std::map<std::string, std::pair<int, int>> per;  // hits, support
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& e = per[truth[i]];
    e.second += 1;
    if (pred[i] == truth[i]) e.first += 1;
  }
  double s = 0.0;
  for (const auto& [c, e] : per) s += static_cast<double>(e.first) / e.second;
  return per.empty() ? 0.0 : s / static_cast<double>(per.size());
}

}  // namespace oracle
