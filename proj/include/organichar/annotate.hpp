#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "organichar/lexicon.hpp"
#include "organichar/synthetic.hpp"

namespace organichar {

struct ActivityStructure {
  std::string initial, main, result;

  bool operator==(const ActivityStructure&) const = default;
};

struct SceneDescription {
  std::string session_id;
  double t_s = 0.0;
  std::vector<std::string> actions;
  std::vector<std::string> objects;
  std::string location;
  ActivityStructure structure;
  double confidence = 0.0;
  bool empty = true;

  bool operator==(const SceneDescription&) const = default;
};

struct DescriberRequest {
  std::string session_id;
  double t_s = 0.0;
  double clip_length_s = 5.0;
  double frame_rate_fps = 1.0;
  int width = 640, height = 480;
  std::vector<std::string> frames;  // opaque references (paths, URLs or base64)
};

inline SceneDescription empty_description(const DescriberRequest& req) {
  SceneDescription d;
  d.session_id = req.session_id;
  d.t_s = req.t_s;
  return d;
}

class Describer {
 public:
  virtual ~Describer() = default;
  // Must be safe to call concurrently.
  virtual SceneDescription describe(const DescriberRequest& req) const = 0;
};

// ---------------------------------------------------------------------------
// Structured response contract
// ---------------------------------------------------------------------------

namespace detail {

inline bool string_array(const nlohmann::json& j, std::vector<std::string>& out) {
  if (!j.is_array()) return false;
  out.clear();
  for (const auto& x : j) {
    if (!x.is_string()) return false;
    out.push_back(x.get<std::string>());
  }
  return true;
}

}  // namespace detail

// Anything that violates the schema yields an empty description with
// confidence 0.
inline SceneDescription parse_description_response(const nlohmann::json& j, const DescriberRequest& req) {
  SceneDescription d = empty_description(req);
  if (!j.is_object()) return d;
  std::vector<std::string> actions, objects;
  if (!j.contains("actions") || !detail::string_array(j["actions"], actions)) return d;
  if (j.contains("objects") && !detail::string_array(j["objects"], objects)) return d;
  if (!j.contains("location") || !j["location"].is_string()) return d;
  if (!j.contains("confidence") || !j["confidence"].is_number()) return d;
  const double conf = j["confidence"].get<double>();
  if (!(conf >= 0.0 && conf <= 1.0)) return d;
  ActivityStructure st;
  if (j.contains("structure")) {
    const auto& s = j["structure"];
    if (!s.is_object()) return d;
    st.initial = s.value("initial", std::string{});
    st.main = s.value("main", std::string{});
    st.result = s.value("result", std::string{});
  }
  const std::string location = trim(j["location"].get<std::string>());
  std::erase_if(actions, [](const std::string& a) { return trim(a).empty(); });
  if (actions.empty() || location.empty()) return d;
  d.actions = std::move(actions);
  d.objects = std::move(objects);
  d.location = location;
  d.structure = st;
  d.confidence = conf;
  d.empty = false;
  return d;
}

inline nlohmann::ordered_json description_to_json(const SceneDescription& d) {
  nlohmann::ordered_json j;
  j["session_id"] = d.session_id;
  j["t_s"] = d.t_s;
  j["actions"] = d.actions;
  j["objects"] = d.objects;
  j["location"] = d.location;
  j["structure"] = {{"initial", d.structure.initial}, {"main", d.structure.main}, {"result", d.structure.result}};
  j["confidence"] = d.confidence;
  j["empty"] = d.empty;
  return j;
}

inline SceneDescription description_from_json(const nlohmann::json& j) {
  SceneDescription d;
  d.session_id = j.value("session_id", std::string{});
  d.t_s = j.at("t_s").get<double>();
  d.actions = j.value("actions", std::vector<std::string>{});
  d.objects = j.value("objects", std::vector<std::string>{});
  d.location = j.value("location", std::string{});
  if (j.contains("structure")) {
    d.structure.initial = j["structure"].value("initial", std::string{});
    d.structure.main = j["structure"].value("main", std::string{});
    d.structure.result = j["structure"].value("result", std::string{});
  }
  d.confidence = j.value("confidence", 0.0);
  d.empty = j.value("empty", d.actions.empty());
  return d;
}

inline void write_descriptions_jsonl(const std::vector<SceneDescription>& ds, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& d : ds) out << description_to_json(d).dump() << '\n';
}

inline std::vector<SceneDescription> read_descriptions_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::vector<SceneDescription> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(description_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string(), lineno, 1, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch description and filtering
// ---------------------------------------------------------------------------

// One description per request, in request order, using up to `jobs` threads.
inline std::vector<SceneDescription> describe_all(const std::vector<DescriberRequest>& requests,
                                                  const Describer& describer, unsigned jobs = 1) {
  std::vector<SceneDescription> out(requests.size());
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(requests.size())));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) out[i] = describer.describe(requests[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          out[i] = describer.describe(requests[i]);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline SceneDescription describe(const DescriberRequest& req, const Describer& describer) {
  return describer.describe(req);
}

// Keeps non-empty descriptions with confidence >= theta (boundary included).
inline std::vector<SceneDescription> filter_confident(const std::vector<SceneDescription>& descs, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error("filter_confident: theta must lie in [0, 1]");
  std::vector<SceneDescription> out;
  for (const auto& d : descs)
    if (!d.empty && d.confidence >= theta) out.push_back(d);
  return out;
}

inline double detection_rate(const std::vector<SceneDescription>& descs) {
  if (descs.empty()) return 0.0;
  const auto n = std::count_if(descs.begin(), descs.end(), [](const SceneDescription& d) { return !d.empty; });
  return static_cast<double>(n) / static_cast<double>(descs.size());
}

// ---------------------------------------------------------------------------
// Offline describer driven by activity scripts
// ---------------------------------------------------------------------------

struct MockNoiseConfig {
  double drop_rate = 0.0;
  double confuse_rate = 0.0;
  double confidence_min = 0.95;
  double confidence_max = 0.95;
  bool paraphrase = false;

  static MockNoiseConfig none() { return {}; }
  static MockNoiseConfig corpus_default() { return {0.08, 0.05, 0.75, 1.0, true}; }

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(drop_rate) || !unit(confuse_rate)) throw Error("mock noise: rates must lie in [0, 1]");
    if (!unit(confidence_min) || !unit(confidence_max) || confidence_min > confidence_max)
      throw Error("mock noise: need 0 <= confidence_min <= confidence_max <= 1");
  }
};

namespace detail {

inline std::string join_words(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace detail

inline SceneDescription mock_describe(const DescriberRequest& req, const ActivityScript& script,
                                      const MockNoiseConfig& noise, std::uint64_t seed) {
  Rng rng(sub_seed(sub_seed(seed, req.session_id), static_cast<std::uint64_t>(std::llround(req.t_s * 1000.0))));
  const double u_drop = rng.uniform();
  const double u_confuse = rng.uniform();
  const double u_side = rng.uniform();
  const double conf = rng.uniform(noise.confidence_min, noise.confidence_max);
  SceneDescription d = empty_description(req);

  const double mid = req.t_s - req.clip_length_s / 2.0;
  std::size_t idx = script.steps.size();
  for (std::size_t i = 0; i < script.steps.size(); ++i)
    if (mid >= script.steps[i].start_s && mid < script.steps[i].end_s()) idx = i;
  if (idx == script.steps.size()) return d;
  if (u_drop < noise.drop_rate) return d;
  if (u_confuse < noise.confuse_rate && script.steps.size() > 1) {
    if (idx == 0) idx = 1;
    else if (idx + 1 == script.steps.size()) idx -= 1;
    else idx = u_side < 0.5 ? idx - 1 : idx + 1;
  }
  const ScriptStep& step = script.steps[idx];
  const auto* act = lexicon::find_activity(step.activity);
  const auto* zone = lexicon::find_zone(step.zone);
  if (noise.paraphrase && act) {
    d.actions = {act->actions[rng.index(act->actions.size())]};
    d.objects = act->objects[rng.index(act->objects.size())];
  } else {
    d.actions = {step.activity};
    if (act) d.objects = act->objects.front();
  }
  if (noise.paraphrase && zone)
    d.location = zone->paraphrases[rng.index(zone->paraphrases.size())];
  else
    d.location = step.zone;
  d.structure = {"person approaches " + d.location, d.actions.front(),
                 d.objects.empty() ? "task finished" : "puts down " + detail::join_words(d.objects, " and ")};
  d.confidence = conf;
  d.empty = false;
  return d;
}

class MockDescriber : public Describer {
 public:
  MockDescriber(std::map<std::string, ActivityScript> scripts, MockNoiseConfig noise, std::uint64_t seed)
      : scripts_(std::move(scripts)), noise_(noise), seed_(seed) {
    noise_.validate();
  }

  SceneDescription describe(const DescriberRequest& req) const override {
    auto it = scripts_.find(req.session_id);
    if (it == scripts_.end()) throw Error("mock describer: no script for session '" + req.session_id + "'");
    return mock_describe(req, it->second, noise_, seed_);
  }

 private:
  std::map<std::string, ActivityScript> scripts_;
  MockNoiseConfig noise_;
  std::uint64_t seed_;
};

}  // namespace organichar
