#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <span>

#include "organichar/common.hpp"
#include "organichar/session.hpp"

namespace organichar {

struct WindowSpec {
  double length_s = 5.0;
  double stride_s = 0.5;

  void validate() const {
    if (!(stride_s > 0.0) || stride_s > length_s)
      throw Error("window spec requires 0 < stride <= length");
  }
};

struct WindowSlice {
  double t_s = 0.0;
  std::span<const Sample> samples;
};

struct FeatureWindow {
  double t_s = 0.0;
  Modality modality = Modality::imu;
  std::vector<double> values;
  bool valid = false;
};

struct FeatureTable {
  Modality modality = Modality::imu;
  std::vector<FeatureWindow> windows;
  std::vector<std::string> feature_names;

  std::size_t dim() const { return feature_names.size(); }
};

// Thresholds used by the featurizers; defaults follow the sensor signal
// descriptions (stationary vs moving radar returns, human vs appliance heat).
struct FeatureThresholds {
  double stationary_mps = 0.05;
  double fast_mps = 0.5;
  double lidar_deviation_m = 0.15;
  double lidar_boundary_m = 0.2;
  double human_band_lo = 28.0, human_band_hi = 36.0;
  double appliance_c = 40.0;
  double below_ambient_c = 18.0;
  double depth_deviation = 0.1;
};

inline std::size_t window_count(double duration, const WindowSpec& spec) {
  if (duration + 1e-9 < spec.length_s) return 0;
  return static_cast<std::size_t>(std::floor((duration - spec.length_s) / spec.stride_s + 1e-9)) + 1;
}

inline double window_anchor(std::size_t k, const WindowSpec& spec) {
  return round_micro(spec.length_s + static_cast<double>(k) * spec.stride_s);
}

// Windows end at t_s = length, length + stride, ... <= duration and hold the
// samples with timestamps in the closed interval [t_s - length, t_s].
inline std::vector<WindowSlice> window_series(const SampleSeries& series, const WindowSpec& spec, double duration) {
  spec.validate();
  std::vector<WindowSlice> out;
  if (series.samples.empty()) return out;
  const std::size_t n = window_count(duration, spec);
  const auto& smp = series.samples;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t_s = window_anchor(k, spec);
    const double lo_t = round_micro(t_s - spec.length_s);
    auto lo = std::lower_bound(smp.begin(), smp.end(), lo_t, [](const Sample& s, double v) { return s.t < v; });
    auto hi = std::upper_bound(lo, smp.end(), t_s, [](double v, const Sample& s) { return v < s.t; });
    out.push_back({t_s, std::span<const Sample>(smp.data() + (lo - smp.begin()), static_cast<std::size_t>(hi - lo))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature names
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& feature_names(Modality m) {
  static const std::vector<std::string> doppler = {
      "vel_mean",      "vel_std",        "vel_min",       "vel_max",       "frac_approach",
      "frac_recede",   "frac_static",    "range_mean",    "range_std",     "range_extent",
      "vel_entropy",   "dir_changes",    "frames_stationary", "frames_slow", "frames_fast"};
  static const std::vector<std::string> lidar = {
      "dev_count_mean", "centroid_x",    "centroid_y",    "centroid_disp", "radial_spread", "min_distance",
      "angular_extent", "boundary_hits", "jitter_std",    "occupancy",     "pos_x_std",     "pos_y_std"};
  static const std::vector<std::string> thermal = {
      "temp_mean",   "temp_std",       "temp_min",        "temp_max",      "gradient_mean", "hot_row",
      "hot_col",     "human_frac",     "appliance_frac",  "cold_frac",     "diff_energy",   "hot_drift"};
  static const std::vector<std::string> imu = [] {
    std::vector<std::string> v;
    for (const char* a : {"ax", "ay", "az", "gx", "gy", "gz"}) {
      v.push_back(std::string(a) + "_mean");
      v.push_back(std::string(a) + "_std");
      v.push_back(std::string(a) + "_energy");
    }
    for (const char* s : {"acc_mag_mean", "acc_mag_std", "acc_mag_max", "gyro_mag_mean", "gyro_mag_std",
                          "gyro_mag_max", "acc_zcr", "acc_dom_freq", "corr_xy", "corr_yz", "corr_xz"})
      v.emplace_back(s);
    return v;
  }();
  static const std::vector<std::string> pose = {
      "wrist_speed_mean", "wrist_speed_max", "wrist_speed_std", "torso_x",       "torso_y",
      "torso_speed",      "hand_torso_mean", "hand_torso_std",  "bbox_area",     "visibility",
      "wrist_accel_mean", "wrist_v_extent",  "wrist_h_extent",  "occluded_frames", "torso_disp",
      "wrist_lr_dist"};
  static const std::vector<std::string> depth = {
      "dev_count_mean", "centroid_row", "centroid_col",  "dev_closeness", "diff_energy",
      "occupancy",      "centroid_disp", "dev_spread",   "max_closeness", "dev_count_std"};
  switch (m) {
    case Modality::doppler: return doppler;
    case Modality::lidar: return lidar;
    case Modality::thermal: return thermal;
    case Modality::imu: return imu;
    case Modality::pose: return pose;
    case Modality::depth: return depth;
  }
  return imu;
}

inline std::size_t feature_dim(Modality m) { return feature_names(m).size(); }

namespace detail {

inline FeatureWindow invalid_window(Modality m, double t_s) {
  return FeatureWindow{t_s, m, std::vector<double>(feature_dim(m), 0.0), false};
}

inline FeatureWindow finish(Modality m, double t_s, std::vector<double> v) {
  for (double& x : v)
    if (!std::isfinite(x)) x = 0.0;
  return FeatureWindow{t_s, m, std::move(v), true};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Doppler radar: velocity statistics, direction changes, range extent,
// velocity entropy and per-frame motion types.
// ---------------------------------------------------------------------------

inline FeatureWindow featurize_doppler(double t_s, std::span<const Sample> slice, const FeatureThresholds& th = {}) {
  constexpr Modality m = Modality::doppler;
  if (slice.size() < 2) return detail::invalid_window(m, t_s);
  std::vector<double> vel, range, frame_mean;
  std::size_t frames_static = 0, frames_slow = 0, frames_fast = 0;
  for (const Sample& s : slice) {
    if (s.values.size() % 3 != 0) throw Error("doppler frame with payload not a multiple of 3");
    double fsum = 0.0, fabs_sum = 0.0;
    const std::size_t np = s.values.size() / 3;
    for (std::size_t p = 0; p < np; ++p) {
      range.push_back(s.values[3 * p]);
      vel.push_back(s.values[3 * p + 1]);
      fsum += s.values[3 * p + 1];
      fabs_sum += std::abs(s.values[3 * p + 1]);
    }
    if (np == 0) continue;
    frame_mean.push_back(fsum / static_cast<double>(np));
    const double speed = fabs_sum / static_cast<double>(np);
    if (speed <= th.stationary_mps) ++frames_static;
    else if (speed < th.fast_mps) ++frames_slow;
    else ++frames_fast;
  }
  if (frame_mean.size() < 2 || vel.empty()) return detail::invalid_window(m, t_s);

  std::vector<double> f(15, 0.0);
  f[0] = mean_of(vel);
  f[1] = std_of(vel);
  f[2] = *std::min_element(vel.begin(), vel.end());
  f[3] = *std::max_element(vel.begin(), vel.end());
  std::size_t pos = 0, neg = 0, still = 0;
  std::array<double, 8> hist{};
  for (double v : vel) {
    if (v > th.stationary_mps) ++pos;
    else if (v < -th.stationary_mps) ++neg;
    else ++still;
    int bin = static_cast<int>(std::floor((v + 2.0) / 0.5));
    hist[static_cast<std::size_t>(std::clamp(bin, 0, 7))] += 1.0;
  }
  const double n = static_cast<double>(vel.size());
  f[4] = pos / n;
  f[5] = neg / n;
  f[6] = still / n;
  f[7] = mean_of(range);
  f[8] = std_of(range);
  f[9] = *std::max_element(range.begin(), range.end()) - *std::min_element(range.begin(), range.end());
  double entropy = 0.0;
  for (double c : hist)
    if (c > 0.0) entropy -= (c / n) * std::log(c / n);
  f[10] = std::max(0.0, entropy);
  int last_sign = 0;
  double flips = 0.0;
  for (double v : frame_mean) {
    const int sg = v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
    if (sg == 0) continue;
    if (last_sign != 0 && sg != last_sign) flips += 1.0;
    last_sign = sg;
  }
  f[11] = flips;
  const double nf = static_cast<double>(frame_mean.size());
  f[12] = frames_static / nf;
  f[13] = frames_slow / nf;
  f[14] = frames_fast / nf;
  return detail::finish(m, t_s, std::move(f));
}

// ---------------------------------------------------------------------------
// 2D lidar: deviations from the static per-angle boundary.
// ---------------------------------------------------------------------------

inline FeatureWindow featurize_lidar(double t_s, std::span<const Sample> slice, std::span<const double> boundary,
                                     const FeatureThresholds& th = {}) {
  constexpr Modality m = Modality::lidar;
  if (boundary.size() != 360) throw Error("lidar boundary must have 360 entries");
  if (slice.size() < 2) return detail::invalid_window(m, t_s);

  struct FrameStats {
    bool any = false;
    double cx = 0, cy = 0;
  };
  std::vector<FrameStats> frames;
  std::vector<double> counts, spreads, extents;
  double min_dist = std::numeric_limits<double>::infinity();
  double boundary_hits = 0.0;
  for (const Sample& s : slice) {
    if (s.values.size() != 360) throw Error("lidar frame must have 360 distances");
    std::vector<double> xs, ys, angles;
    bool near_boundary = false;
    for (int a = 0; a < 360; ++a) {
      const double d = s.values[a];
      if (!std::isfinite(d) || !std::isfinite(boundary[a])) continue;
      if (d < boundary[a] - th.lidar_deviation_m) {
        const double ang = a * M_PI / 180.0;
        xs.push_back(d * std::cos(ang));
        ys.push_back(d * std::sin(ang));
        angles.push_back(static_cast<double>(a));
        min_dist = std::min(min_dist, d);
        if (boundary[a] - d < th.lidar_boundary_m) near_boundary = true;
      }
    }
    counts.push_back(static_cast<double>(xs.size()));
    FrameStats fs;
    if (!xs.empty()) {
      fs.any = true;
      fs.cx = mean_of(xs);
      fs.cy = mean_of(ys);
      double far = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) far = std::max(far, std::hypot(xs[i] - fs.cx, ys[i] - fs.cy));
      spreads.push_back(far);
      // Angular extent on the circle: 360 minus the largest empty gap.
      double largest_gap = 360.0 - (angles.back() - angles.front());
      for (std::size_t i = 1; i < angles.size(); ++i) largest_gap = std::max(largest_gap, angles[i] - angles[i - 1]);
      extents.push_back(360.0 - largest_gap);
    }
    if (near_boundary) boundary_hits += 1.0;
    frames.push_back(fs);
  }

  std::vector<double> f(12, 0.0);
  f[0] = mean_of(counts);
  std::vector<double> cxs, cys, steps;
  const FrameStats* prev = nullptr;
  for (const auto& fs : frames) {
    if (!fs.any) continue;
    cxs.push_back(fs.cx);
    cys.push_back(fs.cy);
    if (prev) steps.push_back(std::hypot(fs.cx - prev->cx, fs.cy - prev->cy));
    prev = &fs;
  }
  if (!cxs.empty()) {
    f[1] = mean_of(cxs);
    f[2] = mean_of(cys);
    f[3] = std::hypot(cxs.back() - cxs.front(), cys.back() - cys.front());
    f[4] = mean_of(spreads);
    f[5] = min_dist;
    f[6] = mean_of(extents);
    f[8] = std_of(steps);
    f[10] = std_of(cxs);
    f[11] = std_of(cys);
  }
  f[7] = boundary_hits;
  f[9] = static_cast<double>(cxs.size()) / static_cast<double>(frames.size());
  return detail::finish(m, t_s, std::move(f));
}

// ---------------------------------------------------------------------------
// Thermal 10x10: temperature statistics, gradients, heat signatures.
// ---------------------------------------------------------------------------

inline FeatureWindow featurize_thermal(double t_s, std::span<const Sample> slice, const FeatureThresholds& th = {}) {
  constexpr Modality m = Modality::thermal;
  for (const Sample& s : slice)
    if (s.values.size() != 100)
      throw Error("thermal frame must have 100 cells, found " + std::to_string(s.values.size()));
  if (slice.size() < 2) return detail::invalid_window(m, t_s);

  std::vector<double> all;
  all.reserve(slice.size() * 100);
  double grad_sum = 0.0, human = 0.0, appliance = 0.0, cold = 0.0;
  double hot_row = 0.0, hot_col = 0.0, diff_energy = 0.0, drift = 0.0;
  int prev_r = -1, prev_c = -1;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const auto& v = slice[i].values;
    all.insert(all.end(), v.begin(), v.end());
    double g = 0.0;
    for (int r = 0; r < kGridSide - 1; ++r) {
      for (int c = 0; c < kGridSide - 1; ++c) {
        const double gx = v[r * kGridSide + c + 1] - v[r * kGridSide + c];
        const double gy = v[(r + 1) * kGridSide + c] - v[r * kGridSide + c];
        g += std::sqrt(gx * gx + gy * gy);
      }
    }
    grad_sum += g / 81.0;
    std::size_t arg = 0;
    double h = 0, a = 0, cl = 0;
    for (std::size_t k = 0; k < 100; ++k) {
      if (v[k] > v[arg]) arg = k;
      if (v[k] >= th.human_band_lo && v[k] <= th.human_band_hi) h += 1.0;
      if (v[k] > th.appliance_c) a += 1.0;
      if (v[k] < th.below_ambient_c) cl += 1.0;
    }
    human += h / 100.0;
    appliance += a / 100.0;
    cold += cl / 100.0;
    const int r = static_cast<int>(arg) / kGridSide, c = static_cast<int>(arg) % kGridSide;
    hot_row += r;
    hot_col += c;
    if (i > 0) {
      const auto& p = slice[i - 1].values;
      double e = 0.0;
      for (std::size_t k = 0; k < 100; ++k) e += (v[k] - p[k]) * (v[k] - p[k]);
      diff_energy += e / 100.0;
      drift += std::hypot(r - prev_r, c - prev_c);
    }
    prev_r = r;
    prev_c = c;
  }
  const double nf = static_cast<double>(slice.size());
  std::vector<double> f(12, 0.0);
  f[0] = mean_of(all);
  f[1] = std_of(all);
  f[2] = *std::min_element(all.begin(), all.end());
  f[3] = *std::max_element(all.begin(), all.end());
  f[4] = grad_sum / nf;
  f[5] = hot_row / nf;
  f[6] = hot_col / nf;
  f[7] = human / nf;
  f[8] = appliance / nf;
  f[9] = cold / nf;
  f[10] = diff_energy / (nf - 1.0);
  f[11] = drift / (nf - 1.0);
  return detail::finish(m, t_s, std::move(f));
}

// ---------------------------------------------------------------------------
// Wrist IMU: statistical motion features.
// ---------------------------------------------------------------------------

inline constexpr int kImuSpectrumBins = 16;

// Frequency (Hz) at the center of the strongest of 16 equal bands spanning
// [0, Nyquist] in the DFT power of the demeaned signal; 0 for flat input.
inline double dominant_band_frequency(const std::vector<double>& x, double sample_rate) {
  const std::size_t n = x.size();
  if (n < 4 || !(sample_rate > 0.0)) return 0.0;
  const double mu = mean_of(x);
  const double nyquist = sample_rate / 2.0;
  std::array<double, kImuSpectrumBins> band{};
  std::vector<double> cos_t(n), sin_t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ph = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    cos_t[i] = std::cos(ph);
    sin_t[i] = std::sin(ph);
  }
  for (std::size_t k = 1; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = k * i % n;
      re += (x[i] - mu) * cos_t[idx];
      im -= (x[i] - mu) * sin_t[idx];
    }
    const double freq = static_cast<double>(k) * sample_rate / static_cast<double>(n);
    int b = static_cast<int>(freq / nyquist * kImuSpectrumBins);
    band[static_cast<std::size_t>(std::clamp(b, 0, kImuSpectrumBins - 1))] += re * re + im * im;
  }
  std::size_t best = 0;
  double total = 0.0;
  for (std::size_t b = 0; b < band.size(); ++b) {
    total += band[b];
    if (band[b] > band[best]) best = b;
  }
  if (total <= 1e-12) return 0.0;
  return (static_cast<double>(best) + 0.5) * nyquist / kImuSpectrumBins;
}

inline FeatureWindow featurize_imu(double t_s, std::span<const Sample> slice) {
  constexpr Modality m = Modality::imu;
  if (slice.size() < 10) return detail::invalid_window(m, t_s);
  std::array<std::vector<double>, 6> axes;
  std::vector<double> acc_mag, gyro_mag;
  for (const Sample& s : slice) {
    if (s.values.size() != 6) throw Error("imu sample must have 6 values");
    for (int a = 0; a < 6; ++a) axes[a].push_back(s.values[a]);
    acc_mag.push_back(std::sqrt(s.values[0] * s.values[0] + s.values[1] * s.values[1] + s.values[2] * s.values[2]));
    gyro_mag.push_back(std::sqrt(s.values[3] * s.values[3] + s.values[4] * s.values[4] + s.values[5] * s.values[5]));
  }
  std::vector<double> f;
  f.reserve(29);
  for (const auto& ax : axes) {
    double energy = 0.0;
    for (double v : ax) energy += v * v;
    f.push_back(mean_of(ax));
    f.push_back(std_of(ax));
    f.push_back(energy / static_cast<double>(ax.size()));
  }
  f.push_back(mean_of(acc_mag));
  f.push_back(std_of(acc_mag));
  f.push_back(*std::max_element(acc_mag.begin(), acc_mag.end()));
  f.push_back(mean_of(gyro_mag));
  f.push_back(std_of(gyro_mag));
  f.push_back(*std::max_element(gyro_mag.begin(), gyro_mag.end()));

  const double mu = mean_of(acc_mag);
  double crossings = 0.0;
  for (std::size_t i = 1; i < acc_mag.size(); ++i) {
    const double a = acc_mag[i - 1] - mu, b = acc_mag[i] - mu;
    if ((a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0)) crossings += 1.0;
  }
  // A flat signal has no meaningful crossings.
  if (std_of(acc_mag) < 1e-9) crossings = 0.0;
  f.push_back(crossings / static_cast<double>(acc_mag.size() - 1));
  const double span_s = slice.back().t - slice.front().t;
  const double rate = span_s > 0.0 ? static_cast<double>(slice.size() - 1) / span_s : 0.0;
  f.push_back(dominant_band_frequency(acc_mag, rate));
  f.push_back(correlation_of(axes[0], axes[1]));
  f.push_back(correlation_of(axes[1], axes[2]));
  f.push_back(correlation_of(axes[0], axes[2]));
  return detail::finish(m, t_s, std::move(f));
}

// ---------------------------------------------------------------------------
// 2D pose over 25 keypoints: wrist kinematics and torso placement.
// ---------------------------------------------------------------------------

inline FeatureWindow featurize_pose(double t_s, std::span<const Sample> slice) {
  constexpr Modality m = Modality::pose;
  if (slice.size() < 2) return detail::invalid_window(m, t_s);
  struct Frame {
    double t;
    bool torso = false;
    double tx = 0, ty = 0;
    std::array<bool, 2> wrist_vis{};
    std::array<double, 2> wx{}, wy{};
    double vis_frac = 0;
    double bbox = 0;
  };
  constexpr std::array<int, 6> torso_joints = {1, 2, 5, 8, 9, 12};
  constexpr std::array<int, 2> wrist_joints = {4, 7};
  std::vector<Frame> frames;
  std::size_t occluded = 0;
  for (const Sample& s : slice) {
    if (s.values.size() != 75) throw Error("pose sample must have 75 values");
    Frame fr;
    fr.t = s.t;
    std::size_t vis = 0;
    double minx = 1e18, maxx = -1e18, miny = 1e18, maxy = -1e18;
    for (int j = 0; j < kPoseKeypoints; ++j) {
      if (s.values[50 + j] < 0.5) continue;
      ++vis;
      minx = std::min(minx, s.values[2 * j]);
      maxx = std::max(maxx, s.values[2 * j]);
      miny = std::min(miny, s.values[2 * j + 1]);
      maxy = std::max(maxy, s.values[2 * j + 1]);
    }
    fr.vis_frac = static_cast<double>(vis) / kPoseKeypoints;
    if (vis * 2 < static_cast<std::size_t>(kPoseKeypoints)) ++occluded;
    if (vis >= 2) fr.bbox = (maxx - minx) * (maxy - miny) / 1000.0;
    double sx = 0, sy = 0;
    int nt = 0;
    for (int j : torso_joints) {
      if (s.values[50 + j] < 0.5) continue;
      sx += s.values[2 * j];
      sy += s.values[2 * j + 1];
      ++nt;
    }
    if (nt > 0) fr.torso = true, fr.tx = sx / nt, fr.ty = sy / nt;
    for (int w = 0; w < 2; ++w) {
      const int j = wrist_joints[w];
      fr.wrist_vis[w] = s.values[50 + j] >= 0.5;
      fr.wx[w] = s.values[2 * j];
      fr.wy[w] = s.values[2 * j + 1];
    }
    frames.push_back(fr);
  }
  std::size_t seen = 0;
  for (const auto& fr : frames)
    if (fr.vis_frac > 0.0) ++seen;
  if (seen < 2) return detail::invalid_window(m, t_s);

  std::vector<double> speeds, accels, torso_x, torso_y, torso_speed, hand_torso, lr, wys, wxs;
  std::array<double, 2> last_speed{-1.0, -1.0};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& fr = frames[i];
    if (fr.torso) {
      torso_x.push_back(fr.tx);
      torso_y.push_back(fr.ty);
    }
    for (int w = 0; w < 2; ++w) {
      if (!fr.wrist_vis[w]) continue;
      wxs.push_back(fr.wx[w]);
      wys.push_back(fr.wy[w]);
      if (fr.torso) hand_torso.push_back(std::hypot(fr.wx[w] - fr.tx, fr.wy[w] - fr.ty));
    }
    if (fr.wrist_vis[0] && fr.wrist_vis[1]) lr.push_back(std::hypot(fr.wx[0] - fr.wx[1], fr.wy[0] - fr.wy[1]));
    if (i == 0) continue;
    const auto& pv = frames[i - 1];
    const double dt = fr.t - pv.t;
    if (dt <= 0.0) continue;
    for (int w = 0; w < 2; ++w) {
      if (!(fr.wrist_vis[w] && pv.wrist_vis[w])) {
        last_speed[w] = -1.0;
        continue;
      }
      const double sp = std::hypot(fr.wx[w] - pv.wx[w], fr.wy[w] - pv.wy[w]) / dt;
      speeds.push_back(sp);
      if (last_speed[w] >= 0.0) accels.push_back(std::abs(sp - last_speed[w]) / dt);
      last_speed[w] = sp;
    }
    if (fr.torso && pv.torso) torso_speed.push_back(std::hypot(fr.tx - pv.tx, fr.ty - pv.ty) / dt);
  }
  std::vector<double> f(16, 0.0);
  if (!speeds.empty()) {
    f[0] = mean_of(speeds);
    f[1] = *std::max_element(speeds.begin(), speeds.end());
    f[2] = std_of(speeds);
  }
  f[3] = mean_of(torso_x);
  f[4] = mean_of(torso_y);
  f[5] = mean_of(torso_speed);
  f[6] = mean_of(hand_torso);
  f[7] = std_of(hand_torso);
  double bbox = 0.0, vis = 0.0;
  for (const auto& fr : frames) bbox += fr.bbox, vis += fr.vis_frac;
  f[8] = bbox / static_cast<double>(frames.size());
  f[9] = vis / static_cast<double>(frames.size());
  f[10] = mean_of(accels);
  if (!wys.empty()) {
    f[11] = *std::max_element(wys.begin(), wys.end()) - *std::min_element(wys.begin(), wys.end());
    f[12] = *std::max_element(wxs.begin(), wxs.end()) - *std::min_element(wxs.begin(), wxs.end());
  }
  f[13] = static_cast<double>(occluded);
  if (torso_x.size() >= 2) f[14] = std::hypot(torso_x.back() - torso_x.front(), torso_y.back() - torso_y.front());
  f[15] = mean_of(lr);
  return detail::finish(m, t_s, std::move(f));
}

// ---------------------------------------------------------------------------
// Depth 10x10 closeness: deviations from the static per-cell boundary.
// ---------------------------------------------------------------------------

inline FeatureWindow featurize_depth(double t_s, std::span<const Sample> slice, std::span<const double> boundary,
                                     const FeatureThresholds& th = {}) {
  constexpr Modality m = Modality::depth;
  if (boundary.size() != 100) throw Error("depth boundary must have 100 entries");
  if (slice.size() < 2) return detail::invalid_window(m, t_s);
  std::vector<double> counts, rows, cols, closeness, spreads;
  double diff_energy = 0.0, max_close = 0.0;
  std::size_t occupied = 0;
  std::optional<std::pair<double, double>> first, last;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const auto& v = slice[i].values;
    if (v.size() != 100) throw Error("depth frame must have 100 cells");
    std::vector<double> rr, cc;
    for (int k = 0; k < 100; ++k) {
      max_close = std::max(max_close, v[k]);
      if (v[k] > boundary[k] + th.depth_deviation) {
        rr.push_back(k / kGridSide);
        cc.push_back(k % kGridSide);
        closeness.push_back(v[k]);
      }
    }
    counts.push_back(static_cast<double>(rr.size()));
    if (!rr.empty()) {
      ++occupied;
      const double r = mean_of(rr), c = mean_of(cc);
      rows.push_back(r);
      cols.push_back(c);
      if (!first) first = std::pair{r, c};
      last = std::pair{r, c};
      double s = 0.0;
      for (std::size_t q = 0; q < rr.size(); ++q) s += (rr[q] - r) * (rr[q] - r) + (cc[q] - c) * (cc[q] - c);
      spreads.push_back(std::sqrt(s / static_cast<double>(rr.size())));
    }
    if (i > 0) {
      const auto& p = slice[i - 1].values;
      double e = 0.0;
      for (int k = 0; k < 100; ++k) e += (v[k] - p[k]) * (v[k] - p[k]);
      diff_energy += e / 100.0;
    }
  }
  const double nf = static_cast<double>(slice.size());
  std::vector<double> f(10, 0.0);
  f[0] = mean_of(counts);
  f[1] = mean_of(rows);
  f[2] = mean_of(cols);
  f[3] = mean_of(closeness);
  f[4] = diff_energy / (nf - 1.0);
  f[5] = static_cast<double>(occupied) / nf;
  if (first && last) f[6] = std::hypot(last->first - first->first, last->second - first->second);
  f[7] = mean_of(spreads);
  f[8] = max_close;
  f[9] = std_of(counts);
  return detail::finish(m, t_s, std::move(f));
}

// ---------------------------------------------------------------------------
// Static boundaries
// ---------------------------------------------------------------------------

// Per-angle background distance. A high percentile of the observed distance
// keeps people (who only ever shorten a beam) out of the background.
inline std::vector<double> lidar_boundary(const SampleSeries& series, double percentile = 0.95) {
  std::vector<double> out(360, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> col;
  for (int a = 0; a < 360; ++a) {
    col.clear();
    for (const auto& s : series.samples)
      if (s.values.size() == 360 && std::isfinite(s.values[a])) col.push_back(s.values[a]);
    if (!col.empty()) out[a] = quantile_of(col, percentile);
  }
  return out;
}

// Per-cell background closeness (low percentile: the farthest usual return).
inline std::vector<double> depth_boundary(const SampleSeries& series, double percentile = 0.05) {
  std::vector<double> out(100, 0.0);
  std::vector<double> col;
  for (int k = 0; k < 100; ++k) {
    col.clear();
    for (const auto& s : series.samples)
      if (s.values.size() == 100) col.push_back(s.values[k]);
    if (!col.empty()) out[k] = quantile_of(col, percentile);
  }
  return out;
}

struct Boundaries {
  std::vector<double> lidar;
  std::vector<double> depth;
};

inline Boundaries estimate_boundaries(const Session& session) {
  Boundaries b;
  if (auto it = session.modalities.find(Modality::lidar); it != session.modalities.end())
    b.lidar = lidar_boundary(it->second);
  if (auto it = session.modalities.find(Modality::depth); it != session.modalities.end())
    b.depth = depth_boundary(it->second);
  return b;
}

inline FeatureWindow featurize_slice(Modality m, double t_s, std::span<const Sample> slice, const Boundaries& b,
                                     const FeatureThresholds& th = {}) {
  switch (m) {
    case Modality::doppler: return featurize_doppler(t_s, slice, th);
    case Modality::lidar: return featurize_lidar(t_s, slice, b.lidar, th);
    case Modality::thermal: return featurize_thermal(t_s, slice, th);
    case Modality::imu: return featurize_imu(t_s, slice);
    case Modality::pose: return featurize_pose(t_s, slice);
    case Modality::depth: return featurize_depth(t_s, slice, b.depth, th);
  }
  throw Error("unknown modality");
}

inline FeatureTable featurize_series(const SampleSeries& series, const WindowSpec& spec, double duration,
                                     const Boundaries& b, const FeatureThresholds& th = {}) {
  FeatureTable table{series.modality, {}, feature_names(series.modality)};
  const std::size_t n = window_count(duration, spec);
  auto slices = window_series(series, spec, duration);
  table.windows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t_s = window_anchor(k, spec);
    if (k < slices.size())
      table.windows.push_back(featurize_slice(series.modality, t_s, slices[k].samples, b, th));
    else
      table.windows.push_back(detail::invalid_window(series.modality, t_s));
  }
  return table;
}

// All modalities present in the session on the shared window grid.
inline std::map<Modality, FeatureTable> featurize_session(const Session& session, const WindowSpec& spec = {},
                                                          const FeatureThresholds& th = {}) {
  spec.validate();
  const Boundaries b = estimate_boundaries(session);
  std::map<Modality, FeatureTable> out;
  for (const auto& [m, series] : session.modalities) out[m] = featurize_series(series, spec, session.duration_s, b, th);
  return out;
}

inline void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << "t_s";
  for (const auto& n : table.feature_names) out << ',' << n;
  out << ",valid\n";
  for (const auto& w : table.windows) {
    out << format_fixed(w.t_s, 6);
    for (double v : w.values) out << ',' << format_double(v);
    out << ',' << (w.valid ? 1 : 0) << '\n';
  }
}

}  // namespace organichar
