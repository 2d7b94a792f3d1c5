#pragma once

#include <filesystem>
#include <fstream>
#include <map>

#include "organichar/common.hpp"
#include "organichar/session.hpp"

namespace organichar {

// Parametric description of how a person moves while doing one activity.
// Positions are room coordinates in meters with the ambient sensor hub
// (lidar, radar, depth) at the origin.
struct MotionProfile {
  double x = 0.0, y = 0.0;               // anchor position
  double drift_vx = 0.0, drift_vy = 0.0;  // linear drift of the anchor (m/s)
  double sway_amp = 0.0, sway_freq = 0.2;
  double hand_amp = 0.0, hand_freq = 1.0;  // wrist oscillation (m, Hz)
  double hand_axis = 0.0;                  // 0 = x-dominant, 1 = y-dominant wrist motion
  double tilt_deg = 0.0;                   // static wrist tilt relative to gravity
  double gyro_amp = 0.0;                   // rad/s
  double appliance_temp = 0.0;             // 0 disables the hotspot
  double appliance_x = 0.0, appliance_y = 0.0;
  double cold_temp = 0.0;                  // 0 disables the cold spot
  double cold_x = 0.0, cold_y = 0.0;
  bool seated = false;

  bool operator==(const MotionProfile&) const = default;
};

struct ScriptStep {
  std::string activity;
  std::string zone;
  double start_s = 0.0;
  double duration_s = 0.0;
  std::string profile_name = "idle";
  MotionProfile profile;

  double end_s() const { return start_s + duration_s; }
  bool operator==(const ScriptStep&) const = default;
};

struct ActivityScript {
  std::string session_id = "synthetic";
  double duration_s = 0.0;  // 0 means "end of the last step"
  std::vector<ScriptStep> steps;

  double total_duration() const {
    double end = 0.0;
    for (const auto& s : steps) end = std::max(end, s.end_s());
    return std::max(duration_s, end);
  }

  const ScriptStep* step_at(double t) const {
    for (const auto& s : steps)
      if (t >= s.start_s && t < s.end_s()) return &s;
    return nullptr;
  }

  bool operator==(const ActivityScript&) const = default;
};

inline void validate_script(const ActivityScript& script) {
  if (script.steps.empty()) throw Error("script has no steps");
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    const auto& s = script.steps[i];
    if (s.activity.empty()) throw Error("step " + std::to_string(i + 1) + ": empty activity");
    if (!(s.duration_s > 0.0)) throw Error("step " + std::to_string(i + 1) + ": duration must be > 0");
    if (s.start_s < 0.0) throw Error("step " + std::to_string(i + 1) + ": negative start");
    if (i > 0 && s.start_s < script.steps[i - 1].end_s() - 1e-9)
      throw Error("step " + std::to_string(i + 1) + " overlaps the previous step");
  }
  if (script.duration_s > 0.0 && script.duration_s + 1e-9 < script.steps.back().end_s())
    throw Error("script duration shorter than its steps");
}

// ---------------------------------------------------------------------------
// World layout and motion presets
// ---------------------------------------------------------------------------

struct ZoneAnchor {
  std::string_view zone;
  double x, y;
};

inline constexpr std::array<ZoneAnchor, 4> kZoneAnchors = {{
    {"sink area", 2.5, 0.6},
    {"coffee machine area", 2.4, -2.1},
    {"counter area", -0.2, 3.0},
    {"dining table area", -2.2, 0.4},
}};

inline std::pair<double, double> zone_anchor(std::string_view zone) {
  for (const auto& z : kZoneAnchors)
    if (z.zone == zone) return {z.x, z.y};
  // Unknown zones get a deterministic spot inside the room.
  const auto h = fnv1a(zone);
  return {-2.0 + 4.0 * static_cast<double>(h % 1000) / 1000.0,
          -2.0 + 4.0 * static_cast<double>((h / 1000) % 1000) / 1000.0};
}

inline MotionProfile preset_profile(std::string_view name) {
  MotionProfile p;
  auto at = [&](std::string_view zone, double dx, double dy) {
    auto [x, y] = zone_anchor(zone);
    p.x = x + dx;
    p.y = y + dy;
  };
  if (name == "idle") {
    at("dining table area", 0.0, 0.0);
  } else if (name == "walking") {
    p.x = -1.0, p.y = -1.0;
    p.drift_vx = 0.8;
    p.sway_amp = 0.02, p.sway_freq = 1.8;
    p.hand_amp = 0.05, p.hand_freq = 1.8;
  } else if (name == "washing_dishes") {
    at("sink area", 0.0, 0.3);
    p.sway_amp = 0.06, p.sway_freq = 0.3;
    p.hand_amp = 0.09, p.hand_freq = 2.0, p.hand_axis = 0.2;
    p.tilt_deg = 35.0, p.gyro_amp = 1.6;
  } else if (name == "washing_hands") {
    at("sink area", 0.1, -0.3);
    p.sway_amp = 0.02, p.sway_freq = 0.2;
    p.hand_amp = 0.035, p.hand_freq = 3.2, p.hand_axis = 0.8;
    p.tilt_deg = 70.0, p.gyro_amp = 2.5;
  } else if (name == "making_coffee") {
    at("coffee machine area", 0.0, 0.3);
    p.sway_amp = 0.03, p.sway_freq = 0.15;
    p.hand_amp = 0.04, p.hand_freq = 0.5, p.hand_axis = 0.5;
    p.tilt_deg = 10.0, p.gyro_amp = 0.3;
    p.appliance_temp = 72.0, p.appliance_x = 3.3, p.appliance_y = -2.2;
  } else if (name == "preparing_tea") {
    at("coffee machine area", -0.2, -0.3);
    p.sway_amp = 0.05, p.sway_freq = 0.25;
    p.hand_amp = 0.12, p.hand_freq = 1.0, p.hand_axis = 0.1;
    p.tilt_deg = 55.0, p.gyro_amp = 1.0;
    p.appliance_temp = 88.0, p.appliance_x = 2.2, p.appliance_y = -3.0;
  } else if (name == "making_sandwich") {
    at("counter area", -0.4, 0.0);
    p.sway_amp = 0.05, p.sway_freq = 0.3;
    p.hand_amp = 0.10, p.hand_freq = 1.5, p.hand_axis = 0.3;
    p.tilt_deg = 20.0, p.gyro_amp = 1.2;
    p.cold_temp = 8.0, p.cold_x = -1.6, p.cold_y = 3.6;
  } else if (name == "preparing_cereal") {
    at("counter area", 0.4, 0.0);
    p.sway_amp = 0.04, p.sway_freq = 0.2;
    p.hand_amp = 0.16, p.hand_freq = 0.7, p.hand_axis = 0.9;
    p.tilt_deg = 60.0, p.gyro_amp = 0.8;
  } else if (name == "eating_breakfast") {
    at("dining table area", 0.0, 0.3);
    p.seated = true;
    p.sway_amp = 0.02, p.sway_freq = 0.1;
    p.hand_amp = 0.14, p.hand_freq = 0.6, p.hand_axis = 0.0;
    p.tilt_deg = 45.0, p.gyro_amp = 0.9;
  } else if (name == "reading_newspaper") {
    at("dining table area", 0.1, -0.3);
    p.seated = true;
    p.sway_amp = 0.01, p.sway_freq = 0.05;
    p.hand_amp = 0.015, p.hand_freq = 0.15, p.hand_axis = 0.6;
    p.tilt_deg = 80.0, p.gyro_amp = 0.1;
  } else {
    throw Error("unknown motion profile '" + std::string(name) + "'");
  }
  return p;
}

inline void apply_profile_override(MotionProfile& p, std::string_view key, double v) {
  if (key == "x") p.x = v;
  else if (key == "y") p.y = v;
  else if (key == "drift_vx") p.drift_vx = v;
  else if (key == "drift_vy") p.drift_vy = v;
  else if (key == "sway_amp") p.sway_amp = v;
  else if (key == "sway_freq") p.sway_freq = v;
  else if (key == "hand_amp") p.hand_amp = v;
  else if (key == "hand_freq") p.hand_freq = v;
  else if (key == "hand_axis") p.hand_axis = v;
  else if (key == "tilt_deg") p.tilt_deg = v;
  else if (key == "gyro_amp") p.gyro_amp = v;
  else if (key == "appliance_temp") p.appliance_temp = v;
  else if (key == "appliance_x") p.appliance_x = v;
  else if (key == "appliance_y") p.appliance_y = v;
  else if (key == "cold_temp") p.cold_temp = v;
  else if (key == "cold_x") p.cold_x = v;
  else if (key == "cold_y") p.cold_y = v;
  else if (key == "seated") p.seated = v != 0.0;
  else throw Error("unknown profile parameter '" + std::string(key) + "'");
}

// ---------------------------------------------------------------------------
// Script files
//
//   # session: demo-01
//   # duration: 300
//   activity,zone,start_s,duration_s,profile[,key=value...]
//   washing dishes with sponge,sink area,0,90,washing_dishes,hand_freq=2.1
// ---------------------------------------------------------------------------

inline ActivityScript parse_script(std::istream& in, const std::string& name = "<script>") {
  ActivityScript script;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      auto colon = t.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(t.substr(1, colon - 1));
      const std::string val = trim(t.substr(colon + 1));
      if (key == "session") {
        script.session_id = val;
      } else if (key == "duration") {
        auto d = parse_double(val);
        if (!d) throw ParseError(name, lineno, colon + 2, "malformed duration");
        script.duration_s = *d;
      }
      continue;
    }
    if (!header_seen && t.rfind("activity,", 0) == 0) {
      header_seen = true;
      continue;
    }
    auto fields = split(t, ',');
    if (fields.size() < 5) throw ParseError(name, lineno, fields.size() + 1, "expected activity,zone,start_s,duration_s,profile");
    ScriptStep step;
    step.activity = trim(fields[0]);
    step.zone = trim(fields[1]);
    auto s = parse_double(fields[2]);
    if (!s) throw ParseError(name, lineno, 3, "malformed start_s '" + fields[2] + "'");
    auto d = parse_double(fields[3]);
    if (!d) throw ParseError(name, lineno, 4, "malformed duration_s '" + fields[3] + "'");
    step.start_s = *s;
    step.duration_s = *d;
    try {
      step.profile_name = trim(fields[4]);
      step.profile = preset_profile(step.profile_name);
    } catch (const Error& e) {
      throw ParseError(name, lineno, 5, e.what());
    }
    for (std::size_t c = 5; c < fields.size(); ++c) {
      auto eq = fields[c].find('=');
      if (eq == std::string::npos) throw ParseError(name, lineno, c + 1, "expected key=value");
      auto v = parse_double(fields[c].substr(eq + 1));
      if (!v) throw ParseError(name, lineno, c + 1, "malformed value in '" + fields[c] + "'");
      try {
        apply_profile_override(step.profile, trim(fields[c].substr(0, eq)), *v);
      } catch (const Error& e) {
        throw ParseError(name, lineno, c + 1, e.what());
      }
    }
    script.steps.push_back(std::move(step));
  }
  try {
    validate_script(script);
  } catch (const Error& e) {
    throw ParseError(name, lineno, 1, e.what());
  }
  return script;
}

inline ActivityScript load_script(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open script " + file.string());
  return parse_script(in, file.string());
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace synth {

inline constexpr double kRoomMinX = -3.6, kRoomMaxX = 4.2;
inline constexpr double kRoomMinY = -3.6, kRoomMaxY = 4.2;
inline constexpr double kBodyRadius = 0.22;
inline constexpr double kWalkSpeed = 1.0;

// Pose camera sits in a corner looking into the room.
inline constexpr double kCamX = -3.4, kCamY = -3.4, kCamHeadingDeg = 45.0, kCamHalfFovDeg = 30.0;
// Depth sensor at the hub looking along +x.
inline constexpr double kDepthHalfFovDeg = 45.0, kDepthRange = 5.0;

struct Kinematics {
  double x = 0.0, y = 0.0;    // body position
  double vx = 0.0, vy = 0.0;  // body velocity
  double hand = 0.0;          // wrist displacement along its axis
  double hand_v = 0.0;
  double hand_a = 0.0;
  const MotionProfile* profile = nullptr;
  bool walking = false;
};

// Per-session perturbation of each step's profile.
struct StepVariant {
  MotionProfile profile;
  double phase = 0.0;
};

class World {
 public:
  World(const ActivityScript& script, std::uint64_t seed) : script_(script) {
    Rng rng(sub_seed(seed, "variants"));
    for (const auto& s : script_.steps) {
      StepVariant v{s.profile, rng.uniform(0.0, 2.0 * M_PI)};
      v.profile.x += rng.normal(0.0, 0.05);
      v.profile.y += rng.normal(0.0, 0.05);
      v.profile.hand_freq *= rng.uniform(0.93, 1.07);
      v.profile.hand_amp *= rng.uniform(0.9, 1.1);
      v.profile.sway_amp *= rng.uniform(0.9, 1.1);
      variants_.push_back(v);
    }
    ambient_ = 22.0 + rng.uniform(-0.8, 0.8);
  }

  double ambient() const { return ambient_; }

  Kinematics at(double t) const {
    Kinematics k;
    const auto& steps = script_.steps;
    std::size_t idx = steps.size();
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (t >= steps[i].start_s && t < steps[i].end_s()) {
        idx = i;
        break;
      }
    }
    if (idx == steps.size()) {
      // Between or after steps the person rests at the last anchor.
      std::size_t last = 0;
      bool found = false;
      for (std::size_t i = 0; i < steps.size(); ++i)
        if (steps[i].end_s() <= t) last = i, found = true;
      const auto& p = variants_[found ? last : 0].profile;
      const double tt = found ? steps[last].duration_s : 0.0;
      k.x = p.x + p.drift_vx * tt;
      k.y = p.y + p.drift_vy * tt;
      return k;
    }
    const auto& step = steps[idx];
    const auto& var = variants_[idx];
    const auto& p = var.profile;
    k.profile = &p;
    const double local = t - step.start_s;

    double prev_x = p.x, prev_y = p.y;
    if (idx > 0) {
      const auto& pp = variants_[idx - 1].profile;
      prev_x = pp.x + pp.drift_vx * steps[idx - 1].duration_s;
      prev_y = pp.y + pp.drift_vy * steps[idx - 1].duration_s;
    }
    const double dist = std::hypot(p.x - prev_x, p.y - prev_y);
    const double walk_time = std::min(dist / kWalkSpeed, step.duration_s / 3.0);
    if (local < walk_time && walk_time > 0.0) {
      const double f = local / walk_time;
      k.x = prev_x + (p.x - prev_x) * f;
      k.y = prev_y + (p.y - prev_y) * f;
      k.vx = (p.x - prev_x) / walk_time;
      k.vy = (p.y - prev_y) / walk_time;
      const double w = 2.0 * M_PI * 1.8;
      k.hand = 0.06 * std::sin(w * local);
      k.hand_v = 0.06 * w * std::cos(w * local);
      k.hand_a = -0.06 * w * w * std::sin(w * local);
      k.walking = true;
      return k;
    }
    const double active = local - walk_time;
    const double ws = 2.0 * M_PI * p.sway_freq;
    k.x = p.x + p.drift_vx * active + p.sway_amp * std::sin(ws * active + var.phase);
    k.y = p.y + p.drift_vy * active + p.sway_amp * std::cos(ws * active + 0.7 * var.phase);
    k.vx = p.drift_vx + p.sway_amp * ws * std::cos(ws * active + var.phase);
    k.vy = p.drift_vy - p.sway_amp * ws * std::sin(ws * active + 0.7 * var.phase);
    const double wh = 2.0 * M_PI * p.hand_freq;
    // Slightly non-sinusoidal wrist motion with a second harmonic.
    k.hand = p.hand_amp * (std::sin(wh * active + var.phase) + 0.25 * std::sin(2.0 * wh * active));
    k.hand_v = p.hand_amp * wh * (std::cos(wh * active + var.phase) + 0.5 * std::cos(2.0 * wh * active));
    k.hand_a = -p.hand_amp * wh * wh * (std::sin(wh * active + var.phase) + std::sin(2.0 * wh * active));
    return k;
  }

  const ActivityScript& script() const { return script_; }

 private:
  const ActivityScript& script_;
  std::vector<StepVariant> variants_;
  double ambient_ = 22.0;
};

inline double wall_distance(double angle_rad) {
  const double dx = std::cos(angle_rad), dy = std::sin(angle_rad);
  double best = std::numeric_limits<double>::infinity();
  if (dx > 1e-12) best = std::min(best, kRoomMaxX / dx);
  if (dx < -1e-12) best = std::min(best, kRoomMinX / dx);
  if (dy > 1e-12) best = std::min(best, kRoomMaxY / dy);
  if (dy < -1e-12) best = std::min(best, kRoomMinY / dy);
  return best;
}

// Distance along a ray from the origin to a disk, or +inf.
inline double ray_disk(double angle_rad, double cx, double cy, double r) {
  const double dx = std::cos(angle_rad), dy = std::sin(angle_rad);
  const double b = dx * cx + dy * cy;
  const double c = cx * cx + cy * cy - r * r;
  const double disc = b * b - c;
  if (disc < 0.0 || b <= 0.0) return std::numeric_limits<double>::infinity();
  const double t = b - std::sqrt(disc);
  return t > 0.0 ? t : std::numeric_limits<double>::infinity();
}

inline std::vector<double> sample_times(double duration, double rate, Rng& rng, double drop_prob) {
  std::vector<double> ts;
  const auto n = static_cast<std::size_t>(std::floor(duration * rate + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = round_micro(static_cast<double>(i) / rate);
    if (t > duration) break;
    if (i > 0 && rng.bernoulli(drop_prob)) continue;
    ts.push_back(t);
  }
  return ts;
}

inline SampleSeries gen_lidar(const World& w, double duration, Rng& rng) {
  SampleSeries s{Modality::lidar, nominal_rate_hz(Modality::lidar), {}};
  for (double t : sample_times(duration, s.rate_hz, rng, 0.003)) {
    const auto k = w.at(t);
    Sample smp{t, std::vector<double>(360)};
    for (int a = 0; a < 360; ++a) {
      const double ang = a * M_PI / 180.0;
      double d = std::min(wall_distance(ang), ray_disk(ang, k.x, k.y, kBodyRadius));
      d += rng.normal(0.0, 0.01);
      smp.values[a] = rng.bernoulli(0.002) ? std::numeric_limits<double>::quiet_NaN() : quantize(d, 0.001);
    }
    s.samples.push_back(std::move(smp));
  }
  return s;
}

inline SampleSeries gen_doppler(const World& w, double duration, Rng& rng) {
  SampleSeries s{Modality::doppler, nominal_rate_hz(Modality::doppler), {}};
  for (double t : sample_times(duration, s.rate_hz, rng, 0.003)) {
    const auto k = w.at(t);
    const double r = std::max(0.3, std::hypot(k.x, k.y));
    const double ux = k.x / r, uy = k.y / r;
    const double body_v = k.vx * ux + k.vy * uy;
    double hand_axis = k.profile ? k.profile->hand_axis : 0.0;
    // Wrist motion direction in the room plane; radial projection is what the radar sees.
    const double hx = std::cos(hand_axis * M_PI / 2.0), hy = std::sin(hand_axis * M_PI / 2.0);
    const double hand_v = body_v + k.hand_v * (hx * ux + hy * uy);
    Sample smp{t, {}};
    const int body_pts = 2 + static_cast<int>(rng.index(2));
    for (int i = 0; i < body_pts; ++i) {
      smp.values.push_back(quantize(r + rng.normal(0.0, 0.05), 0.001));
      smp.values.push_back(quantize(body_v + rng.normal(0.0, 0.01), 0.0001));
      smp.values.push_back(quantize(rng.uniform(18.0, 30.0), 0.01));
    }
    if (std::abs(k.hand_v) > 1e-6) {
      const int hand_pts = 1 + static_cast<int>(rng.index(2));
      for (int i = 0; i < hand_pts; ++i) {
        smp.values.push_back(quantize(r - 0.25 + rng.normal(0.0, 0.04), 0.001));
        smp.values.push_back(quantize(hand_v + rng.normal(0.0, 0.02), 0.0001));
        smp.values.push_back(quantize(rng.uniform(8.0, 18.0), 0.01));
      }
    }
    s.samples.push_back(std::move(smp));
  }
  return s;
}

// Room plane mapped onto the 10x10 top-down thermal grid.
inline std::pair<int, int> thermal_cell(double x, double y) {
  const double fx = (x - kRoomMinX) / (kRoomMaxX - kRoomMinX);
  const double fy = (y - kRoomMinY) / (kRoomMaxY - kRoomMinY);
  int col = std::clamp(static_cast<int>(fx * kGridSide), 0, kGridSide - 1);
  int row = std::clamp(static_cast<int>((1.0 - fy) * kGridSide), 0, kGridSide - 1);
  return {row, col};
}

inline SampleSeries gen_thermal(const World& w, double duration, Rng& rng) {
  SampleSeries s{Modality::thermal, nominal_rate_hz(Modality::thermal), {}};
  for (double t : sample_times(duration, s.rate_hz, rng, 0.003)) {
    const auto k = w.at(t);
    Sample smp{t, std::vector<double>(100, w.ambient())};
    // Person heat signature: a soft blob around the body cell.
    const double cell_w = (kRoomMaxX - kRoomMinX) / kGridSide;
    for (int row = 0; row < kGridSide; ++row) {
      for (int col = 0; col < kGridSide; ++col) {
        const double cx = kRoomMinX + (col + 0.5) * cell_w;
        const double cy = kRoomMaxY - (row + 0.5) * cell_w;
        const double d2 = (cx - k.x) * (cx - k.x) + (cy - k.y) * (cy - k.y);
        const double heat = 11.0 * std::exp(-d2 / (2.0 * 0.35 * 0.35));
        smp.values[row * kGridSide + col] += heat;
      }
    }
    if (k.profile && k.profile->appliance_temp > 0.0) {
      auto [r, c] = thermal_cell(k.profile->appliance_x, k.profile->appliance_y);
      smp.values[r * kGridSide + c] = std::max(smp.values[r * kGridSide + c], k.profile->appliance_temp);
    }
    if (k.profile && k.profile->cold_temp > 0.0) {
      auto [r, c] = thermal_cell(k.profile->cold_x, k.profile->cold_y);
      smp.values[r * kGridSide + c] = k.profile->cold_temp;
    }
    for (double& v : smp.values) v = quantize(v + rng.normal(0.0, 0.15), 0.01);
    s.samples.push_back(std::move(smp));
  }
  return s;
}

inline SampleSeries gen_imu(const World& w, double duration, Rng& rng) {
  SampleSeries s{Modality::imu, nominal_rate_hz(Modality::imu), {}};
  for (double t : sample_times(duration, s.rate_hz, rng, 0.002)) {
    const auto k = w.at(t);
    const double tilt = (k.profile ? k.profile->tilt_deg : 0.0) * M_PI / 180.0;
    const double axis = k.profile ? k.profile->hand_axis : 0.0;
    const double gyro_amp = k.profile ? k.profile->gyro_amp : 0.0;
    const double g = 9.81;
    double ax = g * std::sin(tilt) + k.hand_a * std::cos(axis * M_PI / 2.0);
    double ay = k.hand_a * std::sin(axis * M_PI / 2.0);
    double az = g * std::cos(tilt) + 0.3 * k.hand_a * std::sin(axis * M_PI / 2.0);
    const double hand_norm = (k.profile && k.profile->hand_amp > 0.0) ? k.hand / k.profile->hand_amp : 0.0;
    double gx = gyro_amp * hand_norm * std::cos(axis * M_PI / 2.0);
    double gy = gyro_amp * hand_norm * std::sin(axis * M_PI / 2.0);
    double gz = 0.2 * gyro_amp * hand_norm;
    if (k.walking) {
      ax += 1.5 * std::sin(2.0 * M_PI * 1.8 * t);
      az += 2.0 * std::sin(2.0 * M_PI * 3.6 * t);
    }
    Sample smp{t,
               {quantize(ax + rng.normal(0.0, 0.04), 1e-4), quantize(ay + rng.normal(0.0, 0.04), 1e-4),
                quantize(az + rng.normal(0.0, 0.04), 1e-4), quantize(gx + rng.normal(0.0, 0.01), 1e-4),
                quantize(gy + rng.normal(0.0, 0.01), 1e-4), quantize(gz + rng.normal(0.0, 0.01), 1e-4)}};
    s.samples.push_back(std::move(smp));
  }
  return s;
}

// Stick-figure skeleton offsets (meters, body frame: x right, y up from hips).
struct Joint {
  double x, y;
};
inline constexpr std::array<Joint, kPoseKeypoints> kSkeleton = {{
    {0.0, 0.75},    // 0 nose
    {0.0, 0.60},    // 1 neck
    {-0.20, 0.58},  // 2 right shoulder
    {-0.25, 0.32},  // 3 right elbow
    {-0.22, 0.10},  // 4 right wrist
    {0.20, 0.58},   // 5 left shoulder
    {0.25, 0.32},   // 6 left elbow
    {0.22, 0.10},   // 7 left wrist
    {0.0, 0.0},     // 8 mid hip
    {-0.12, 0.0},   // 9 right hip
    {-0.13, -0.45}, // 10 right knee
    {-0.14, -0.90}, // 11 right ankle
    {0.12, 0.0},    // 12 left hip
    {0.13, -0.45},  // 13 left knee
    {0.14, -0.90},  // 14 left ankle
    {-0.04, 0.78},  // 15 right eye
    {0.04, 0.78},   // 16 left eye
    {-0.08, 0.76},  // 17 right ear
    {0.08, 0.76},   // 18 left ear
    {0.10, -0.95},  // 19 left big toe
    {0.16, -0.95},  // 20 left small toe
    {0.14, -0.93},  // 21 left heel
    {-0.10, -0.95}, // 22 right big toe
    {-0.16, -0.95}, // 23 right small toe
    {-0.14, -0.93}, // 24 right heel
}};

inline SampleSeries gen_pose(const World& w, double duration, Rng& rng) {
  SampleSeries s{Modality::pose, nominal_rate_hz(Modality::pose), {}};
  for (double t : sample_times(duration, s.rate_hz, rng, 0.003)) {
    const auto k = w.at(t);
    const double dx = k.x - kCamX, dy = k.y - kCamY;
    const double dist = std::max(0.5, std::hypot(dx, dy));
    double rel = std::atan2(dy, dx) * 180.0 / M_PI - kCamHeadingDeg;
    while (rel > 180.0) rel -= 360.0;
    while (rel < -180.0) rel += 360.0;
    const bool in_view = std::abs(rel) <= kCamHalfFovDeg;
    const double scale = 420.0 / dist;  // pixels per meter
    const double u0 = 320.0 - rel / kCamHalfFovDeg * 320.0;
    const double v0 = 300.0 + (k.profile && k.profile->seated ? 40.0 : 0.0);
    const double axis = k.profile ? k.profile->hand_axis : 0.0;
    Sample smp{t, std::vector<double>(75, 0.0)};
    for (int j = 0; j < kPoseKeypoints; ++j) {
      double jx = kSkeleton[j].x, jy = kSkeleton[j].y;
      if (k.profile && k.profile->seated && jy < 0.0) jy *= 0.4;
      if (j == 4 || j == 7) {
        const double sign = (j == 4) ? 1.0 : 0.6;
        jx += sign * k.hand * std::cos(axis * M_PI / 2.0);
        jy += sign * k.hand * std::sin(axis * M_PI / 2.0) + 0.25;
      }
      if (j == 3 || j == 6) jy += 0.5 * (j == 3 ? 1.0 : 0.6) * k.hand * std::sin(axis * M_PI / 2.0);
      const double u = u0 + jx * scale + rng.normal(0.0, 1.0);
      const double v = v0 - jy * scale + rng.normal(0.0, 1.0);
      const bool visible = in_view && u >= 0.0 && u < 640.0 && v >= 0.0 && v < 480.0 && !rng.bernoulli(0.03);
      smp.values[2 * j] = visible ? quantize(u, 0.01) : 0.0;
      smp.values[2 * j + 1] = visible ? quantize(v, 0.01) : 0.0;
      smp.values[50 + j] = visible ? 1.0 : 0.0;
    }
    s.samples.push_back(std::move(smp));
  }
  return s;
}

inline SampleSeries gen_depth(const World& w, double duration, Rng& rng) {
  SampleSeries s{Modality::depth, nominal_rate_hz(Modality::depth), {}};
  for (double t : sample_times(duration, s.rate_hz, rng, 0.003)) {
    const auto k = w.at(t);
    Sample smp{t, std::vector<double>(100)};
    const double person_dist = std::hypot(k.x, k.y);
    const double person_ang = std::atan2(k.y, k.x) * 180.0 / M_PI;
    const double half_width_deg = std::atan2(kBodyRadius + 0.1, std::max(person_dist, 0.3)) * 180.0 / M_PI;
    const int top_row = (k.profile && k.profile->seated) ? 4 : 2;
    for (int col = 0; col < kGridSide; ++col) {
      const double ang = kDepthHalfFovDeg - (col + 0.5) * (2.0 * kDepthHalfFovDeg / kGridSide);
      const double wall = wall_distance(ang * M_PI / 180.0);
      const bool hits = std::abs(ang - person_ang) <= half_width_deg + 4.5;
      for (int row = 0; row < kGridSide; ++row) {
        double d = wall;
        if (hits && row >= top_row) d = std::min(d, person_dist);
        double closeness = std::clamp(1.0 - d / kDepthRange, 0.0, 1.0);
        closeness = std::clamp(closeness + rng.normal(0.0, 0.01), 0.0, 1.0);
        smp.values[row * kGridSide + col] = quantize(closeness, 0.001);
      }
    }
    s.samples.push_back(std::move(smp));
  }
  return s;
}

}  // namespace synth

inline Session generate_synthetic_session(const ActivityScript& script, std::uint64_t seed) {
  validate_script(script);
  const double duration = script.total_duration();
  synth::World world(script, seed);
  Session session;
  session.session_id = script.session_id;
  session.duration_s = duration;
  Rng r_doppler(sub_seed(seed, "doppler")), r_lidar(sub_seed(seed, "lidar")),
      r_thermal(sub_seed(seed, "thermal")), r_imu(sub_seed(seed, "imu")), r_pose(sub_seed(seed, "pose")),
      r_depth(sub_seed(seed, "depth"));
  session.modalities[Modality::doppler] = synth::gen_doppler(world, duration, r_doppler);
  session.modalities[Modality::lidar] = synth::gen_lidar(world, duration, r_lidar);
  session.modalities[Modality::thermal] = synth::gen_thermal(world, duration, r_thermal);
  session.modalities[Modality::imu] = synth::gen_imu(world, duration, r_imu);
  session.modalities[Modality::pose] = synth::gen_pose(world, duration, r_pose);
  session.modalities[Modality::depth] = synth::gen_depth(world, duration, r_depth);
  std::vector<GroundTruthInterval> gt;
  for (const auto& s : script.steps) gt.push_back({round_micro(s.start_s), round_micro(s.end_s()), s.activity});
  session.ground_truth = std::move(gt);
  return session;
}

// ---------------------------------------------------------------------------
// Bundled demo corpus: four kitchen zones, eight activities.
// ---------------------------------------------------------------------------

struct PlantedActivity {
  std::string_view activity;
  std::string_view zone;
  std::string_view profile;
};

inline constexpr std::array<PlantedActivity, 8> kPlantedActivities = {{
    {"washing dishes with sponge", "sink area", "washing_dishes"},
    {"washing hands with soap", "sink area", "washing_hands"},
    {"making coffee with machine", "coffee machine area", "making_coffee"},
    {"preparing tea with kettle", "coffee machine area", "preparing_tea"},
    {"making sandwich", "counter area", "making_sandwich"},
    {"preparing cereal", "counter area", "preparing_cereal"},
    {"eating breakfast", "dining table area", "eating_breakfast"},
    {"reading newspaper", "dining table area", "reading_newspaper"},
}};

// Session i of the demo corpus. Early sessions cover only part of the
// activity set so that later sessions keep adding information.
inline ActivityScript demo_script(std::size_t index, std::uint64_t seed) {
  Rng rng(sub_seed(seed, index));
  std::vector<std::size_t> order(kPlantedActivities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t count = order.size();
  if (index == 0) count = 4;
  else if (index == 1) count = 6;
  else if (index == 2) count = 7;
  order.resize(count);
  ActivityScript script;
  char id[32];
  std::snprintf(id, sizeof(id), "session-%02zu", index + 1);
  script.session_id = id;
  double t = 0.0;
  for (std::size_t i : order) {
    const auto& pa = kPlantedActivities[i];
    ScriptStep step;
    step.activity = std::string(pa.activity);
    step.zone = std::string(pa.zone);
    step.start_s = t;
    step.duration_s = std::round(rng.uniform(70.0, 100.0));
    step.profile_name = std::string(pa.profile);
    step.profile = preset_profile(pa.profile);
    script.steps.push_back(step);
    t += step.duration_s;
  }
  script.duration_s = t;
  return script;
}

inline std::vector<ActivityScript> demo_corpus_scripts(std::size_t n_sessions = 10, std::uint64_t seed = 7) {
  std::vector<ActivityScript> out;
  for (std::size_t i = 0; i < n_sessions; ++i) out.push_back(demo_script(i, seed));
  return out;
}

inline void write_script(const ActivityScript& script, std::ostream& out) {
  out << "# session: " << script.session_id << '\n';
  out << "# duration: " << format_double(script.total_duration()) << '\n';
  out << "activity,zone,start_s,duration_s,profile\n";
  for (const auto& s : script.steps) {
    out << s.activity << ',' << s.zone << ',' << format_double(s.start_s) << ',' << format_double(s.duration_s) << ','
        << s.profile_name;
    const MotionProfile base = preset_profile(s.profile_name);
    const auto& p = s.profile;
    auto emit = [&](const char* key, double a, double b) {
      if (a != b) out << ',' << key << '=' << format_double(a);
    };
    emit("x", p.x, base.x);
    emit("y", p.y, base.y);
    emit("drift_vx", p.drift_vx, base.drift_vx);
    emit("drift_vy", p.drift_vy, base.drift_vy);
    emit("sway_amp", p.sway_amp, base.sway_amp);
    emit("sway_freq", p.sway_freq, base.sway_freq);
    emit("hand_amp", p.hand_amp, base.hand_amp);
    emit("hand_freq", p.hand_freq, base.hand_freq);
    emit("hand_axis", p.hand_axis, base.hand_axis);
    emit("tilt_deg", p.tilt_deg, base.tilt_deg);
    emit("gyro_amp", p.gyro_amp, base.gyro_amp);
    emit("appliance_temp", p.appliance_temp, base.appliance_temp);
    emit("appliance_x", p.appliance_x, base.appliance_x);
    emit("appliance_y", p.appliance_y, base.appliance_y);
    emit("cold_temp", p.cold_temp, base.cold_temp);
    emit("cold_x", p.cold_x, base.cold_x);
    emit("cold_y", p.cold_y, base.cold_y);
    emit("seated", p.seated ? 1.0 : 0.0, base.seated ? 1.0 : 0.0);
    out << '\n';
  }
}

}  // namespace organichar
