#pragma once

#include <Eigen/Dense>

#include "organichar/common.hpp"

namespace organichar {

// Online Gaussian mixture with exponential forgetting. The auxiliary
// statistics hold the discounted zeroth/first/second moments that the
// recursion is written in; means and covariances are derived from them.
struct GmmState {
  int K = 2;
  int M = 10;
  double alpha = 0.1;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<Eigen::VectorXd> aux_means;
  std::vector<Eigen::MatrixXd> aux_covariances;
};

inline constexpr double kCovarianceRegularization = 1e-6;
inline constexpr double kDensityFloor = 1e-300;
inline constexpr double kWeightFloor = 1e-250;

// Means from the first K distinct samples (falling back to jittered copies of
// the first), unit covariances, uniform weights.
inline GmmState gmm_init(const std::vector<Eigen::VectorXd>& stream, int K, double alpha) {
  if (K < 1) throw Error("gmm: K must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("gmm: alpha must lie in (0, 1)");
  if (stream.empty()) throw Error("gmm: empty stream");
  GmmState st;
  st.K = K;
  st.M = static_cast<int>(stream.front().size());
  st.alpha = alpha;
  std::vector<Eigen::VectorXd> seeds;
  for (const auto& y : stream) {
    if (static_cast<int>(seeds.size()) == K) break;
    bool dup = false;
    for (const auto& s : seeds)
      if ((s - y).squaredNorm() == 0.0) dup = true;
    if (!dup) seeds.push_back(y);
  }
  for (int i = static_cast<int>(seeds.size()); i < K; ++i)
    seeds.push_back(stream.front() + Eigen::VectorXd::Constant(st.M, 1e-3 * i));
  const double w = 1.0 / K;
  for (int i = 0; i < K; ++i) {
    const Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(st.M, st.M);
    st.weights.push_back(w);
    st.means.push_back(seeds[i]);
    st.covariances.push_back(cov);
    st.aux_means.push_back(w * seeds[i]);
    st.aux_covariances.push_back(w * (cov + seeds[i] * seeds[i].transpose()));
  }
  return st;
}

inline double gaussian_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const auto m = static_cast<double>(y.size());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  double jitter = 0.0;
  while (llt.info() != Eigen::Success) {
    jitter = jitter == 0.0 ? 1e-9 : jitter * 10.0;
    if (jitter > 1e3) throw Error("gmm: covariance is not positive definite");
    llt.compute(cov + jitter * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  }
  const Eigen::VectorXd diff = y - mean;
  const Eigen::VectorXd z = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (m * std::log(2.0 * M_PI) + log_det + z.squaredNorm());
}

namespace detail {

inline void check_dim(const GmmState& st, const Eigen::VectorXd& y) {
  if (y.size() != st.M)
    throw Error("gmm: sample dimension " + std::to_string(y.size()) + " != " + std::to_string(st.M));
}

// ln(pi_i) + ln N(y | mu_i, Sigma_i) for every component.
inline std::vector<double> log_joint(const GmmState& st, const Eigen::VectorXd& y) {
  std::vector<double> lj(st.K);
  for (int i = 0; i < st.K; ++i)
    lj[i] = st.weights[i] > 0.0 ? std::log(st.weights[i]) + gaussian_log_density(y, st.means[i], st.covariances[i])
                                : -std::numeric_limits<double>::infinity();
  return lj;
}

inline double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

// Anomaly score: negative log of the mixture density, density floored.
inline double gmm_score(const GmmState& st, const Eigen::VectorXd& y) {
  detail::check_dim(st, y);
  const double log_density = detail::log_sum_exp(detail::log_joint(st, y));
  return -std::max(log_density, std::log(kDensityFloor));
}

inline std::vector<double> gmm_responsibilities(const GmmState& st, const Eigen::VectorXd& y) {
  detail::check_dim(st, y);
  auto lj = detail::log_joint(st, y);
  const double lse = detail::log_sum_exp(lj);
  std::vector<double> r(st.K);
  if (!std::isfinite(lse)) {
    std::fill(r.begin(), r.end(), 1.0 / st.K);
    return r;
  }
  for (int i = 0; i < st.K; ++i) r[i] = std::exp(lj[i] - lse);
  return r;
}

// One step of the discounted recursion: responsibilities, weights, auxiliary
// moments, then means and (regularized) covariances.
inline void gmm_update_inplace(GmmState& st, const Eigen::VectorXd& y) {
  const auto resp = gmm_responsibilities(st, y);
  const double a = st.alpha;
  const Eigen::MatrixXd yy = y * y.transpose();
  const Eigen::MatrixXd reg = kCovarianceRegularization * Eigen::MatrixXd::Identity(st.M, st.M);
  for (int i = 0; i < st.K; ++i) {
    st.weights[i] = std::max((1.0 - a) * st.weights[i] + a * resp[i], kWeightFloor);
    st.aux_means[i] = (1.0 - a) * st.aux_means[i] + a * resp[i] * y;
    st.means[i] = st.aux_means[i] / st.weights[i];
    st.aux_covariances[i] = (1.0 - a) * st.aux_covariances[i] + a * resp[i] * yy;
    Eigen::MatrixXd cov = st.aux_covariances[i] / st.weights[i] - st.means[i] * st.means[i].transpose();
    cov = 0.5 * (cov + cov.transpose());
    st.covariances[i] = cov + reg;
  }
}

inline GmmState gmm_update(GmmState st, const Eigen::VectorXd& y) {
  detail::check_dim(st, y);
  gmm_update_inplace(st, y);
  return st;
}

}  // namespace organichar
