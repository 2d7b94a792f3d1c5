#pragma once

#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "organichar/common.hpp"

namespace organichar {

inline constexpr int kNoise = -1;

struct ClusteringConfig {
  int min_cluster_size = 5;
  int min_samples = 3;
  int n_components = 10;
  double cluster_selection_epsilon = 0.0;
};

struct Clustering {
  std::vector<int> labels;  // cluster id or kNoise
  std::vector<double> membership_prob;
  int n_clusters = 0;

  double noise_ratio() const {
    if (labels.empty()) return 0.0;
    return static_cast<double>(std::count(labels.begin(), labels.end(), kNoise)) / static_cast<double>(labels.size());
  }
};

// Hierarchical density-based clustering: mutual-reachability distances, a
// minimum spanning tree, the condensed cluster tree and excess-of-mass
// selection. The distance matrix is computed once so that several
// (min_samples, min_cluster_size) settings can share it.
class DensityClusterer {
 public:
  struct MstEdge {
    int a, b;
    double w;
  };

  explicit DensityClusterer(const Eigen::MatrixXd& points) : n_(static_cast<int>(points.rows())) {
    dist_.assign(static_cast<std::size_t>(n_) * n_, 0.0f);
    for (int i = 0; i < n_; ++i) {
      for (int j = i + 1; j < n_; ++j) {
        const float d = static_cast<float>((points.row(i) - points.row(j)).norm());
        dist_[idx(i, j)] = d;
        dist_[idx(j, i)] = d;
      }
    }
  }

  int size() const { return n_; }

  double distance(int i, int j) const { return dist_[idx(i, j)]; }

  // Distance to the min_samples-th nearest point, counting the point itself.
  std::vector<double> core_distances(int min_samples) const {
    std::vector<double> core(n_, 0.0);
    const int k = std::clamp(min_samples - 1, 0, std::max(0, n_ - 1));
    std::vector<float> row(n_);
    for (int i = 0; i < n_; ++i) {
      std::copy(dist_.begin() + static_cast<std::ptrdiff_t>(i) * n_,
                dist_.begin() + static_cast<std::ptrdiff_t>(i + 1) * n_, row.begin());
      std::nth_element(row.begin(), row.begin() + k, row.end());
      core[i] = row[k];
    }
    return core;
  }

  // Prim's algorithm over the dense mutual-reachability graph.
  std::vector<MstEdge> mutual_reachability_mst(int min_samples) const {
    std::vector<MstEdge> edges;
    if (n_ < 2) return edges;
    const auto core = core_distances(min_samples);
    std::vector<double> best(n_, std::numeric_limits<double>::infinity());
    std::vector<int> from(n_, -1);
    std::vector<char> in_tree(n_, 0);
    int cur = 0;
    in_tree[0] = 1;
    for (int step = 1; step < n_; ++step) {
      int next = -1;
      double next_w = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n_; ++j) {
        if (in_tree[j]) continue;
        const double mr = std::max({static_cast<double>(dist_[idx(cur, j)]), core[cur], core[j]});
        if (mr < best[j]) {
          best[j] = mr;
          from[j] = cur;
        }
        if (best[j] < next_w) {
          next_w = best[j];
          next = j;
        }
      }
      in_tree[next] = 1;
      edges.push_back({from[next], next, next_w});
      cur = next;
    }
    return edges;
  }

  static Clustering cluster_from_mst(int n, std::vector<MstEdge> edges, int min_cluster_size, double epsilon);

  Clustering cluster(const ClusteringConfig& cfg) const {
    if (n_ < 1) throw Error("cluster_density: no points");
    if (n_ < cfg.min_cluster_size)
      throw Error("cluster_density: " + std::to_string(n_) + " points < min_cluster_size " +
                  std::to_string(cfg.min_cluster_size));
    return cluster_from_mst(n_, mutual_reachability_mst(cfg.min_samples), cfg.min_cluster_size,
                            cfg.cluster_selection_epsilon);
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

  int n_;
  std::vector<float> dist_;
};

namespace detail {

struct CondensedEdge {
  int parent;
  int child;
  double lambda;
  int child_size;
};

inline double to_lambda(double dist) { return 1.0 / std::max(dist, 1e-12); }

}  // namespace detail

inline Clustering DensityClusterer::cluster_from_mst(int n, std::vector<MstEdge> edges, int min_cluster_size,
                                                     double epsilon) {
  Clustering out;
  out.labels.assign(n, kNoise);
  out.membership_prob.assign(n, 0.0);
  if (n == 1) {
    out.labels[0] = 0;
    out.membership_prob[0] = 1.0;
    out.n_clusters = 1;
    return out;
  }
  const int mcs = std::max(2, min_cluster_size);

  // Single-linkage dendrogram: node n + i is the i-th merge.
  std::stable_sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) { return x.w < y.w; });
  const int total = 2 * n - 1;
  std::vector<int> left(total, -1), right(total, -1), size(total, 1);
  std::vector<double> height(total, 0.0);
  std::vector<int> uf_parent(total);
  std::iota(uf_parent.begin(), uf_parent.end(), 0);
  auto find = [&](int x) {
    while (uf_parent[x] != x) {
      uf_parent[x] = uf_parent[uf_parent[x]];
      x = uf_parent[x];
    }
    return x;
  };
  int next_node = n;
  for (const auto& e : edges) {
    const int ra = find(e.a), rb = find(e.b);
    left[next_node] = ra;
    right[next_node] = rb;
    height[next_node] = e.w;
    size[next_node] = size[ra] + size[rb];
    uf_parent[ra] = next_node;
    uf_parent[rb] = next_node;
    ++next_node;
  }
  const int root = total - 1;

  // Condense: walk from the root, keeping splits where both sides are large
  // enough and letting small sides fall out as individual points.
  std::vector<detail::CondensedEdge> tree;
  std::vector<int> relabel(total, -1);
  std::vector<char> ignore(total, 0);
  relabel[root] = n;
  int next_label = n + 1;
  auto drop_leaves = [&](int sub, int parent_label, double lambda) {
    std::vector<int> stack{sub};
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      ignore[x] = 1;
      if (x < n) {
        tree.push_back({parent_label, x, lambda, 1});
      } else {
        stack.push_back(left[x]);
        stack.push_back(right[x]);
      }
    }
  };
  std::vector<int> queue{root};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const int node = queue[qi];
    if (ignore[node] || node < n) continue;
    const int l = left[node], r = right[node];
    const double lambda = detail::to_lambda(height[node]);
    const int lc = size[l], rc = size[r];
    const int label = relabel[node];
    if (lc >= mcs && rc >= mcs) {
      relabel[l] = next_label++;
      tree.push_back({label, relabel[l], lambda, lc});
      relabel[r] = next_label++;
      tree.push_back({label, relabel[r], lambda, rc});
      queue.push_back(l);
      queue.push_back(r);
    } else if (lc < mcs && rc < mcs) {
      drop_leaves(l, label, lambda);
      drop_leaves(r, label, lambda);
    } else if (lc < mcs) {
      relabel[r] = label;
      drop_leaves(l, label, lambda);
      queue.push_back(r);
    } else {
      relabel[l] = label;
      drop_leaves(r, label, lambda);
      queue.push_back(l);
    }
  }

  const int n_tree_clusters = next_label - n;
  auto cid = [&](int label) { return label - n; };  // 0 = root
  std::vector<double> birth(n_tree_clusters, 0.0), stability(n_tree_clusters, 0.0);
  std::vector<int> parent_of(n_tree_clusters, -1);
  std::vector<std::vector<int>> children(n_tree_clusters);
  for (const auto& e : tree) {
    if (e.child >= n) {
      birth[cid(e.child)] = e.lambda;
      parent_of[cid(e.child)] = cid(e.parent);
      children[cid(e.parent)].push_back(cid(e.child));
    }
  }
  for (const auto& e : tree) stability[cid(e.parent)] += (e.lambda - birth[cid(e.parent)]) * e.child_size;

  // Excess of mass; children always carry larger ids than their parents.
  std::vector<char> selected(n_tree_clusters, 0);
  for (int c = 1; c < n_tree_clusters; ++c) selected[c] = 1;
  auto unselect_descendants = [&](int c) {
    std::vector<int> stack(children[c].begin(), children[c].end());
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      selected[x] = 0;
      stack.insert(stack.end(), children[x].begin(), children[x].end());
    }
  };
  for (int c = n_tree_clusters - 1; c >= 1; --c) {
    double sub = 0.0;
    for (int ch : children[c]) sub += stability[ch];
    if (!children[c].empty() && sub > stability[c]) {
      selected[c] = 0;
      stability[c] = sub;
    } else {
      unselect_descendants(c);
    }
  }
  if (n_tree_clusters == 1) selected[0] = 1;  // the tree never split: one cluster

  if (epsilon > 0.0 && n_tree_clusters > 1) {
    std::vector<int> chosen;
    for (int c = 1; c < n_tree_clusters; ++c)
      if (selected[c]) chosen.push_back(c);
    std::vector<char> processed(n_tree_clusters, 0), result(n_tree_clusters, 0);
    for (int c : chosen) {
      if (1.0 / birth[c] >= epsilon) {
        result[c] = 1;
        continue;
      }
      if (processed[c]) continue;
      int up = c;
      while (true) {
        const int p = parent_of[up];
        if (p <= 0) break;
        up = p;
        if (1.0 / birth[up] > epsilon) break;
      }
      result[up] = 1;
      std::vector<int> stack(children[up].begin(), children[up].end());
      while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        processed[x] = 1;
        result[x] = 0;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    }
    selected = result;
  }

  // Label points by the selected cluster containing the node they fell out of.
  std::vector<int> out_id(n_tree_clusters, -1);
  int next_id = 0;
  for (int c = 0; c < n_tree_clusters; ++c)
    if (selected[c]) out_id[c] = next_id++;
  out.n_clusters = next_id;
  std::vector<double> point_lambda(n, 0.0);
  std::vector<int> point_parent(n, 0);
  for (const auto& e : tree) {
    if (e.child < n) {
      point_lambda[e.child] = e.lambda;
      point_parent[e.child] = cid(e.parent);
    }
  }
  std::vector<int> owner(n, -1);
  for (int p = 0; p < n; ++p) {
    int c = point_parent[p];
    while (c >= 0 && !selected[c]) c = parent_of[c];
    owner[p] = c;
  }
  std::vector<double> max_lambda(n_tree_clusters, 0.0);
  for (int p = 0; p < n; ++p)
    if (owner[p] >= 0) max_lambda[owner[p]] = std::max(max_lambda[owner[p]], point_lambda[p]);
  for (int p = 0; p < n; ++p) {
    if (owner[p] < 0) continue;
    out.labels[p] = out_id[owner[p]];
    const double ml = max_lambda[owner[p]];
    out.membership_prob[p] = ml > 0.0 ? std::min(point_lambda[p], ml) / ml : 1.0;
    if (!(out.membership_prob[p] > 0.0)) out.membership_prob[p] = std::numeric_limits<double>::min();
  }
  return out;
}

inline Clustering cluster_density(const Eigen::MatrixXd& points, const ClusteringConfig& cfg) {
  return DensityClusterer(points).cluster(cfg);
}

}  // namespace organichar
