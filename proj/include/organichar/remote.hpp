#pragma once

#include <chrono>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "organichar/annotate.hpp"
#include "organichar/labels.hpp"

// HTTP adapters for remote describer / reasoner / embedder services. All
// exchange JSON over POST; transport failures surface as TransportError after
// the configured retries, malformed payloads are handled in-band.

namespace organichar {

struct HttpOptions {
  double timeout_s = 30.0;
  int retries = 2;

  void validate() const {
    if (!(timeout_s > 0.0)) throw Error("http: timeout must be positive");
    if (retries < 0) throw Error("http: retries must be >= 0");
  }
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/'
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("invalid URL '" + url + "': missing scheme");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error("invalid URL '" + url + "': unsupported scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (e.origin.size() <= scheme_end + 3) throw Error("invalid URL '" + url + "': missing host");
  return e;
}

namespace detail {

inline std::string join_path(const std::string& base, std::string_view leaf) {
  std::string p = base;
  if (p.empty() || p.back() != '/') p += '/';
  return p + std::string(leaf);
}

// POSTs body to origin+path, retrying transport failures and 5xx answers.
inline nlohmann::json post_json(const Endpoint& ep, const std::string& path, const nlohmann::json& body,
                                const HttpOptions& opt) {
  opt.validate();
  httplib::Client cli(ep.origin);
  const auto whole = std::chrono::duration<double>(opt.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(whole);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(whole - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  const std::string payload = body.dump();
  std::string last;
  for (int attempt = 0; attempt <= opt.retries; ++attempt) {
    auto res = cli.Post(path, payload, "application/json");
    if (!res) {
      last = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last = "server answered " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw TransportError(ep.origin + path + ": server answered " + std::to_string(res->status));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    return j;  // discarded (invalid) values are handled by callers
  }
  throw TransportError(ep.origin + path + ": " + last + " after " + std::to_string(opt.retries + 1) + " attempt(s)");
}

inline nlohmann::ordered_json cluster_json(const ActivityCluster& c) {
  return {{"label", c.label}, {"zone", c.zone}, {"actions", c.canonical_actions}, {"objects", c.canonical_objects}};
}

inline double unit_number(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number()) return 0.0;
  return std::clamp(j[key].get<double>(), 0.0, 1.0);
}

}  // namespace detail

class HttpDescriber : public Describer {
 public:
  explicit HttpDescriber(const std::string& url, HttpOptions opt = {}) : ep_(parse_endpoint(url)), opt_(opt) {
    opt_.validate();
  }

  SceneDescription describe(const DescriberRequest& req) const override {
    nlohmann::ordered_json body;
    body["session_id"] = req.session_id;
    body["t_s"] = req.t_s;
    body["frames"] = req.frames;
    body["params"] = {{"clip_length_s", req.clip_length_s},
                      {"frame_rate_fps", req.frame_rate_fps},
                      {"width", req.width},
                      {"height", req.height}};
    const auto j = detail::post_json(ep_, ep_.path, body, opt_);
    if (j.is_discarded()) return empty_description(req);
    return parse_description_response(j, req);
  }

 private:
  Endpoint ep_;
  HttpOptions opt_;
};

// Operations are posted to <base>/<operation>.
class HttpReasoner : public Reasoner {
 public:
  explicit HttpReasoner(const std::string& url, HttpOptions opt = {}) : ep_(parse_endpoint(url)), opt_(opt) {
    opt_.validate();
  }

  ZoneMap consolidate_locations(const std::vector<std::string>& raw_locations) const override {
    const auto j = call("consolidate_locations", {{"locations", raw_locations}});
    ZoneMap zm;
    std::set<std::string> zones;
    for (const auto& raw : raw_locations) {
      std::string z = to_lower(trim(raw));
      if (j.is_object() && j.contains("zones") && j["zones"].is_object() && j["zones"].contains(raw) &&
          j["zones"][raw].is_string())
        z = j["zones"][raw].get<std::string>();
      zm.assignment[raw] = z;
      zones.insert(z);
    }
    zm.zones.assign(zones.begin(), zones.end());
    return zm;
  }

  ComponentSims compare(const SceneDescription& d, const std::string& desc_zone,
                        const ActivityCluster& c) const override {
    const auto j = call("compare", {{"description", description_to_json(d)},
                                    {"zone", desc_zone},
                                    {"cluster", detail::cluster_json(c)}});
    return {detail::unit_number(j, "action"), detail::unit_number(j, "object"), detail::unit_number(j, "location")};
  }

  std::string propose_label(const SceneDescription& d) const override {
    const auto j = call("propose_label", {{"description", description_to_json(d)}});
    if (j.is_object() && j.contains("label") && j["label"].is_string() && !trim(j["label"].get<std::string>()).empty())
      return trim(j["label"].get<std::string>());
    return d.actions.empty() ? std::string("undefined") : to_lower(trim(d.actions.front()));
  }

  std::map<std::string, std::string> expand(const std::string& label, const ActivityCluster& c) const override {
    const auto j = call("expand", {{"label", label}, {"cluster", detail::cluster_json(c)}});
    std::map<std::string, std::string> out;
    for (auto dim : kSemanticDimensions) {
      const std::string key(dim);
      if (j.is_object() && j.contains("dimensions") && j["dimensions"].is_object() &&
          j["dimensions"].contains(key) && j["dimensions"][key].is_string())
        out[key] = j["dimensions"][key].get<std::string>();
      else
        out[key] = label;
    }
    return out;
  }

  std::string name_group(const std::vector<std::string>& labels) const override {
    const auto j = call("name_group", {{"labels", labels}});
    if (j.is_object() && j.contains("name") && j["name"].is_string() && !trim(j["name"].get<std::string>()).empty())
      return trim(j["name"].get<std::string>());
    std::vector<std::string> sorted(labels);
    std::sort(sorted.begin(), sorted.end());
    return sorted.empty() ? std::string("undefined") : sorted.front() + " and related";
  }

 private:
  nlohmann::json call(std::string_view op, const nlohmann::json& body) const {
    return detail::post_json(ep_, detail::join_path(ep_.path, op), body, opt_);
  }

  Endpoint ep_;
  HttpOptions opt_;
};

class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(const std::string& url, HttpOptions opt = {}) : ep_(parse_endpoint(url)), opt_(opt) {
    opt_.validate();
  }

  std::vector<double> embed(const std::string& text) const override {
    const auto j = detail::post_json(ep_, ep_.path, {{"text", text}}, opt_);
    if (!j.is_object() || !j.contains("embedding") || !j["embedding"].is_array() || j["embedding"].empty())
      throw Error("embedder: malformed response for '" + text + "'");
    std::vector<double> v;
    for (const auto& x : j["embedding"]) {
      if (!x.is_number()) throw Error("embedder: non-numeric embedding component");
      v.push_back(x.get<double>());
    }
    return v;
  }

 private:
  Endpoint ep_;
  HttpOptions opt_;
};

}  // namespace organichar
