#pragma once

#include <Eigen/Dense>

#include "organichar/features.hpp"

namespace organichar {

// Identifies a window within a corpus of sessions.
struct WindowKey {
  std::string session_id;
  double t_s = 0.0;

  bool operator==(const WindowKey&) const = default;
  auto operator<=>(const WindowKey&) const = default;
};

// Valid feature windows of one modality, possibly pooled across sessions.
struct FeatureRows {
  Modality modality = Modality::imu;
  std::vector<WindowKey> keys;
  std::vector<std::vector<double>> values;

  std::size_t size() const { return keys.size(); }
};

inline FeatureRows valid_rows(const FeatureTable& table, const std::string& session_id = {}, double stride_s = 0.0) {
  FeatureRows rows{table.modality, {}, {}};
  double next_t = -std::numeric_limits<double>::infinity();
  for (const auto& w : table.windows) {
    if (!w.valid) continue;
    if (stride_s > 0.0 && w.t_s + 1e-9 < next_t) continue;
    rows.keys.push_back({session_id, w.t_s});
    rows.values.push_back(w.values);
    if (stride_s > 0.0) next_t = w.t_s + stride_s;
  }
  return rows;
}

inline void append_rows(FeatureRows& dst, const FeatureRows& src) {
  dst.modality = src.modality;
  dst.keys.insert(dst.keys.end(), src.keys.begin(), src.keys.end());
  dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
}

struct ReducedTable {
  Modality modality = Modality::imu;
  std::vector<WindowKey> keys;
  Eigen::MatrixXd points;                  // rows = windows, cols = components
  std::vector<double> explained_variance;  // eigenvalues of the kept components, descending
  std::vector<double> center, scale;       // robust scaling parameters
  Eigen::MatrixXd components;              // features x kept components

  std::size_t size() const { return keys.size(); }
};

// Robust scaling (median / IQR, IQR 0 -> 1) followed by projection onto the
// leading principal components of the scaled data.
inline ReducedTable preprocess_features(const FeatureRows& rows, std::size_t n_components) {
  const std::size_t n = rows.size();
  if (n == 0) throw Error("preprocess_features: no valid windows");
  const std::size_t d = rows.values.front().size();
  const std::size_t k = std::min(n_components, d);
  if (k == 0) throw Error("preprocess_features: n_components must be >= 1");
  if (n < k) throw Error("preprocess_features: " + std::to_string(n) + " valid windows, need >= " + std::to_string(k));

  ReducedTable out;
  out.modality = rows.modality;
  out.keys = rows.keys;
  out.center.resize(d);
  out.scale.resize(d);
  Eigen::MatrixXd x(n, d);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = rows.values[i][j];
    const double med = quantile_of(col, 0.5);
    double iqr = quantile_of(col, 0.75) - quantile_of(col, 0.25);
    if (!(iqr > 1e-12)) iqr = 1.0;
    out.center[j] = med;
    out.scale[j] = iqr;
    for (std::size_t i = 0; i < n; ++i) x(i, j) = (col[i] - med) / iqr;
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mu;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("preprocess_features: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  out.components.resize(d, k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.components.col(static_cast<Eigen::Index>(c)) = v;
    out.explained_variance.push_back(std::max(0.0, eig.eigenvalues()(src)));
  }
  out.points = centered * out.components;
  return out;
}

inline ReducedTable preprocess_features(const FeatureTable& table, std::size_t n_components) {
  return preprocess_features(valid_rows(table), n_components);
}

}  // namespace organichar
