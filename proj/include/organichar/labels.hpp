#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "organichar/annotate.hpp"
#include "organichar/lexicon.hpp"

namespace organichar {

struct ZoneMap {
  std::vector<std::string> zones;                    // sorted, unique
  std::map<std::string, std::string> assignment;     // raw location -> zone

  const std::string& zone_of(const std::string& raw) const {
    auto it = assignment.find(raw);
    if (it == assignment.end()) throw Error("zone map: unknown location '" + raw + "'");
    return it->second;
  }
};

struct ActivityCluster {
  std::string label;
  std::string zone;
  std::vector<std::size_t> members;  // description ids
  std::vector<std::string> canonical_actions;
  std::vector<std::string> canonical_objects;
};

inline constexpr std::array<std::string_view, 6> kSemanticDimensions = {"action",  "object", "location",
                                                                        "purpose", "access", "relation"};

struct SemanticProfile {
  std::string label;
  std::map<std::string, std::string> dimensions;
  std::map<std::string, std::vector<double>> embeddings;
};

struct SimilarityWeights {
  // action, object, location, purpose, access, relation
  std::array<double, 6> w{0.20, 0.25, 0.15, 0.15, 0.15, 0.10};

  double sum() const {
    double s = 0.0;
    for (double x : w) s += x;
    return s;
  }
};

struct SimilarityMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> S;
  SimilarityWeights weights;

  std::size_t size() const { return labels.size(); }
};

struct ComponentSims {
  double action = 0.0, object = 0.0, location = 0.0;
};

// Language-side operations. A remote implementation forwards these to a
// service; the offline one below uses the kitchen lexicon.
class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual ZoneMap consolidate_locations(const std::vector<std::string>& raw_locations) const = 0;
  virtual ComponentSims compare(const SceneDescription& d, const std::string& desc_zone,
                                const ActivityCluster& c) const = 0;
  virtual std::string propose_label(const SceneDescription& d) const = 0;
  virtual std::map<std::string, std::string> expand(const std::string& label, const ActivityCluster& c) const = 0;
  virtual std::string name_group(const std::vector<std::string>& labels) const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

class LexiconReasoner : public Reasoner {
 public:
  ZoneMap consolidate_locations(const std::vector<std::string>& raw_locations) const override {
    ZoneMap zm;
    std::set<std::string> zones;
    for (const auto& raw : raw_locations) {
      const std::string z = lexicon::zone_of_location(raw).value_or(to_lower(trim(raw)));
      zm.assignment[raw] = z;
      zones.insert(z);
    }
    zm.zones.assign(zones.begin(), zones.end());
    return zm;
  }

  ComponentSims compare(const SceneDescription& d, const std::string& desc_zone,
                        const ActivityCluster& c) const override {
    ComponentSims s;
    s.action = lexicon::jaccard(lexicon::concept_tokens(d.actions), lexicon::concept_tokens(c.canonical_actions));
    s.object = lexicon::jaccard(lexicon::concept_tokens(d.objects), lexicon::concept_tokens(c.canonical_objects));
    s.location = desc_zone == c.zone ? 1.0 : 0.0;
    return s;
  }

  std::string propose_label(const SceneDescription& d) const override {
    if (const auto* e = lexicon::activity_of_actions(d.actions)) return e->label;
    return d.actions.empty() ? std::string("undefined") : to_lower(trim(d.actions.front()));
  }

  std::map<std::string, std::string> expand(const std::string& label, const ActivityCluster& c) const override {
    if (const auto* e = lexicon::find_activity(label)) {
      return {{"action", e->action_type}, {"object", e->object_text}, {"location", e->location_text},
              {"purpose", e->purpose},    {"access", e->access},      {"relation", e->relation}};
    }
    std::string objects;
    for (const auto& o : c.canonical_objects) objects += (objects.empty() ? "" : " ") + o;
    return {{"action", label},
            {"object", objects.empty() ? label : objects},
            {"location", c.zone.empty() ? "unknown" : c.zone},
            {"purpose", "general activity"},
            {"access", c.zone.empty() ? "unknown" : c.zone},
            {"relation", "unspecified"}};
  }

  std::string name_group(const std::vector<std::string>& labels) const override {
    std::set<std::string> groups;
    for (const auto& l : labels) {
      const auto* e = lexicon::find_activity(l);
      groups.insert(e ? e->group : l);
    }
    if (groups.size() == 1) return *groups.begin();
    std::vector<std::string> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted[0] + " and related";
  }
};

// Hashed bag of words, unit length.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256) : dim_(dim) {}

  std::vector<double> embed(const std::string& text) const override {
    std::vector<double> v(dim_, 0.0);
    auto toks = tokenize(text);
    if (toks.empty()) toks.push_back("none");
    for (const auto& t : toks) v[fnv1a(t) % dim_] += 1.0;
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  }

 private:
  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Consolidation
// ---------------------------------------------------------------------------

inline ZoneMap consolidate_locations(const std::vector<SceneDescription>& descs, const Reasoner& reasoner) {
  std::set<std::string> raw;
  for (const auto& d : descs)
    if (!d.empty) raw.insert(d.location);
  if (raw.empty()) throw Error("consolidate_locations: no usable descriptions");
  ZoneMap zm = reasoner.consolidate_locations({raw.begin(), raw.end()});
  for (const auto& r : raw)
    if (!zm.assignment.count(r)) throw Error("consolidate_locations: reasoner left '" + r + "' unassigned");
  return zm;
}

inline constexpr double kActionWeight = 60.0, kObjectWeight = 25.0, kLocationWeight = 15.0;

inline double match_score(const ComponentSims& s) {
  return (kActionWeight * s.action + kObjectWeight * s.object + kLocationWeight * s.location) / 100.0;
}

struct MatchResult {
  int cluster = -1;  // -1: nothing reached the floor
  double score = 0.0;
};

// Argmax over clusters; ties keep the earliest-created cluster.
inline MatchResult best_match(const SceneDescription& d, const std::string& desc_zone,
                              const std::vector<ActivityCluster>& clusters, const Reasoner& reasoner) {
  MatchResult best;
  best.score = -1.0;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const double s = match_score(reasoner.compare(d, desc_zone, clusters[i]));
    if (s > best.score) {
      best.score = s;
      best.cluster = static_cast<int>(i);
    }
  }
  return best;
}

inline constexpr double kDefaultMatchFloor = 0.5;

// Assigns description `id` to its best cluster, or opens a new cluster when
// the best score falls below the floor. Returns the cluster index and score.
inline MatchResult match_description(const SceneDescription& d, std::size_t id, const std::string& desc_zone,
                                     std::vector<ActivityCluster>& clusters, const Reasoner& reasoner,
                                     double match_floor = kDefaultMatchFloor) {
  MatchResult m = best_match(d, desc_zone, clusters, reasoner);
  if (m.cluster >= 0 && m.score >= match_floor) {
    clusters[static_cast<std::size_t>(m.cluster)].members.push_back(id);
    return m;
  }
  const std::string label = reasoner.propose_label(d);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (clusters[i].label == label && clusters[i].zone == desc_zone) {
      clusters[i].members.push_back(id);
      return {static_cast<int>(i), m.score};
    }
  }
  clusters.push_back({label, desc_zone, {id}, d.actions, d.objects});
  return {static_cast<int>(clusters.size() - 1), m.cluster >= 0 ? m.score : 0.0};
}

// Sequential clustering of one zone's descriptions, in input order.
inline std::vector<ActivityCluster> seed_activity_clusters(const std::string& zone,
                                                           const std::vector<SceneDescription>& descs,
                                                           const Reasoner& reasoner,
                                                           double match_floor = kDefaultMatchFloor) {
  std::vector<ActivityCluster> clusters;
  for (std::size_t i = 0; i < descs.size(); ++i) match_description(descs[i], i, zone, clusters, reasoner, match_floor);
  return clusters;
}

struct Consolidation {
  ZoneMap zone_map;
  std::vector<ActivityCluster> clusters;           // all zones; labels unique
  std::vector<std::optional<std::size_t>> assigned;  // per input description
};

// Zones first, then activity clusters per zone. Labels that surface in more
// than one zone are qualified with the zone name.
inline Consolidation consolidate_activities(const std::vector<SceneDescription>& descs, const Reasoner& reasoner,
                                            double match_floor = kDefaultMatchFloor) {
  Consolidation out;
  out.zone_map = consolidate_locations(descs, reasoner);
  out.assigned.assign(descs.size(), std::nullopt);
  for (const auto& zone : out.zone_map.zones) {
    std::vector<SceneDescription> in_zone;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < descs.size(); ++i) {
      if (descs[i].empty || out.zone_map.zone_of(descs[i].location) != zone) continue;
      in_zone.push_back(descs[i]);
      ids.push_back(i);
    }
    auto clusters = seed_activity_clusters(zone, in_zone, reasoner, match_floor);
    for (auto& c : clusters) {
      for (auto& m : c.members) m = ids[m];
      out.clusters.push_back(std::move(c));
    }
  }
  std::map<std::string, int> label_count;
  for (const auto& c : out.clusters) ++label_count[c.label];
  for (auto& c : out.clusters)
    if (label_count[c.label] > 1) c.label += " (" + c.zone + ")";
  for (std::size_t k = 0; k < out.clusters.size(); ++k)
    for (auto m : out.clusters[k].members) out.assigned[m] = k;
  return out;
}

// ---------------------------------------------------------------------------
// Semantic profiles and similarity
// ---------------------------------------------------------------------------

inline void validate_profile(const SemanticProfile& p) {
  for (auto dim : kSemanticDimensions) {
    const std::string key(dim);
    auto it = p.dimensions.find(key);
    if (it == p.dimensions.end() || trim(it->second).empty())
      throw Error("semantic profile '" + p.label + "' lacks dimension " + key);
    auto e = p.embeddings.find(key);
    if (e == p.embeddings.end() || e->second.empty())
      throw Error("semantic profile '" + p.label + "' lacks embedding " + key);
    double n = 0.0;
    for (double x : e->second) n += x * x;
    if (std::abs(std::sqrt(n) - 1.0) > 1e-9)
      throw Error("semantic profile '" + p.label + "': embedding " + key + " is not unit length");
  }
}

inline SemanticProfile expand_semantics(const std::string& label, const ActivityCluster& context,
                                        const Reasoner& reasoner, const Embedder& embedder) {
  if (trim(label).empty()) throw Error("expand_semantics: empty label");
  SemanticProfile p;
  p.label = label;
  p.dimensions = reasoner.expand(label, context);
  for (auto dim : kSemanticDimensions) {
    const std::string key(dim);
    p.embeddings[key] = embedder.embed(p.dimensions[key]);
  }
  validate_profile(p);
  return p;
}

inline double floored_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("similarity: embedding dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  // sqrt(x * x) == x in IEEE arithmetic, so identical vectors give exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

inline double profile_similarity(const SemanticProfile& a, const SemanticProfile& b, const SimilarityWeights& w) {
  double s = 0.0;
  for (std::size_t d = 0; d < kSemanticDimensions.size(); ++d) {
    const std::string key(kSemanticDimensions[d]);
    s += w.w[d] * floored_cosine(a.embeddings.at(key), b.embeddings.at(key));
  }
  return std::clamp(s, 0.0, 1.0);
}

inline SimilarityMatrix similarity_matrix(const std::vector<SemanticProfile>& profiles,
                                          const SimilarityWeights& weights = {}) {
  if (profiles.empty()) throw Error("similarity_matrix: no profiles");
  SimilarityMatrix m;
  m.weights = weights;
  const std::size_t n = profiles.size();
  m.S.assign(n, std::vector<double>(n, 1.0));
  for (const auto& p : profiles) m.labels.push_back(p.label);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.S[i][j] = m.S[j][i] = profile_similarity(profiles[i], profiles[j], weights);
  return m;
}

// ---------------------------------------------------------------------------
// Granularity refinement
// ---------------------------------------------------------------------------

using Partition = std::vector<std::vector<std::size_t>>;  // blocks of label indices, canonical order

inline void canonicalize(Partition& p) {
  for (auto& b : p) std::sort(b.begin(), b.end());
  std::sort(p.begin(), p.end());
}

inline constexpr double kSimilarityTolerance = 1e-12;

// Complete-linkage agglomeration stopped once no pair of clusters has every
// cross pair at similarity >= 1 - lambda. Most similar pair first; ties by
// the lexicographically smallest (label, label) pair.
inline Partition refine_labels(const SimilarityMatrix& S, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("refine_labels: lambda must lie in [0, 1]");
  const std::size_t n = S.size();
  Partition blocks;
  for (std::size_t i = 0; i < n; ++i) blocks.push_back({i});
  auto smallest_label = [&](const std::vector<std::size_t>& b) {
    const std::string* best = &S.labels[b.front()];
    for (auto i : b)
      if (S.labels[i] < *best) best = &S.labels[i];
    return *best;
  };
  auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double m = 1.0;
    for (auto i : a)
      for (auto j : b) m = std::min(m, S.S[i][j]);
    return m;
  };
  const double need = 1.0 - lambda - kSimilarityTolerance;
  while (blocks.size() > 1) {
    double best = -1.0;
    std::pair<std::string, std::string> best_key;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      for (std::size_t b = a + 1; b < blocks.size(); ++b) {
        const double l = linkage(blocks[a], blocks[b]);
        auto la = smallest_label(blocks[a]), lb = smallest_label(blocks[b]);
        if (lb < la) std::swap(la, lb);
        std::pair<std::string, std::string> key{la, lb};
        if (l > best || (l == best && key < best_key)) {
          best = l;
          best_key = key;
          ba = a;
          bb = b;
        }
      }
    }
    if (best < need) break;
    blocks[ba].insert(blocks[ba].end(), blocks[bb].begin(), blocks[bb].end());
    blocks.erase(blocks.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  canonicalize(blocks);
  return blocks;
}

// Splits every block by a per-label group (e.g. zone), preserving order.
inline Partition split_by_group(const Partition& p, const std::vector<std::string>& group_of) {
  Partition out;
  for (const auto& b : p) {
    std::map<std::string, std::vector<std::size_t>> parts;
    for (auto i : b) parts[group_of[i]].push_back(i);
    for (auto& [g, v] : parts) out.push_back(std::move(v));
  }
  canonicalize(out);
  return out;
}

inline std::vector<std::string> name_merged_labels(const Partition& p, const std::vector<std::string>& labels,
                                                   const Reasoner& reasoner) {
  std::vector<std::string> names;
  std::set<std::string> used;
  for (const auto& b : p)
    if (b.size() == 1) used.insert(labels[b.front()]);
  for (const auto& b : p) {
    std::string name;
    if (b.size() == 1) {
      name = labels[b.front()];
    } else {
      std::vector<std::string> members;
      for (auto i : b) members.push_back(labels[i]);
      const std::string base = reasoner.name_group(members);
      name = base;
      for (int k = 2; used.count(name); ++k) name = base + " " + std::to_string(k);
      used.insert(name);
    }
    names.push_back(name);
  }
  return names;
}

struct LabelHierarchy {
  std::vector<std::string> zones;
  std::map<std::string, std::string> zone_assignment;  // raw location -> zone
  std::vector<std::string> base_labels;
  std::vector<std::string> base_zones;  // zone of each base label
  std::map<double, Partition> partitions;
  std::map<double, std::vector<std::string>> merged_names;

  const Partition& partition_at(double lambda) const {
    for (const auto& [l, p] : partitions)
      if (std::abs(l - lambda) < 1e-9) return p;
    std::string avail;
    for (const auto& [l, p] : partitions) avail += (avail.empty() ? "" : ", ") + format_double(l);
    throw Error("lambda " + format_double(lambda) + " not in hierarchy (available: " + avail + ")");
  }

  const std::vector<std::string>& names_at(double lambda) const {
    partition_at(lambda);
    for (const auto& [l, n] : merged_names)
      if (std::abs(l - lambda) < 1e-9) return n;
    throw Error("lambda missing from merged names");
  }

  // base label -> (merged label, zone) at lambda
  std::map<std::string, std::pair<std::string, std::string>> mapping_at(double lambda) const {
    const auto& p = partition_at(lambda);
    const auto& names = names_at(lambda);
    std::map<std::string, std::pair<std::string, std::string>> out;
    for (std::size_t k = 0; k < p.size(); ++k)
      for (auto i : p[k]) out[base_labels[i]] = {names[k], base_zones[i]};
    return out;
  }
};

inline const std::vector<double>& default_lambdas() {
  static const std::vector<double> l = {0.2, 0.3, 0.4};
  return l;
}

// Partitions at every lambda (ascending), split so that no merged label
// spans two zones.
inline LabelHierarchy build_hierarchy(const SimilarityMatrix& S, const std::vector<std::string>& base_zones,
                                      const std::vector<double>& lambdas, const Reasoner& reasoner) {
  if (!std::is_sorted(lambdas.begin(), lambdas.end())) throw Error("build_hierarchy: lambdas must be ascending");
  if (base_zones.size() != S.size()) throw Error("build_hierarchy: zone list does not match labels");
  LabelHierarchy h;
  h.base_labels = S.labels;
  h.base_zones = base_zones;
  std::set<std::string> zones(base_zones.begin(), base_zones.end());
  h.zones.assign(zones.begin(), zones.end());
  for (double l : lambdas) {
    Partition p = split_by_group(refine_labels(S, l), base_zones);
    h.merged_names[l] = name_merged_labels(p, S.labels, reasoner);
    h.partitions[l] = std::move(p);
  }
  return h;
}

inline constexpr int kHierarchyFormatVersion = 1;

inline std::string lambda_key(double l) { return format_fixed(l, 2); }

inline nlohmann::ordered_json hierarchy_to_json(const LabelHierarchy& h) {
  nlohmann::ordered_json j;
  j["format_version"] = kHierarchyFormatVersion;
  j["zones"] = h.zones;
  j["zone_assignment"] = h.zone_assignment;
  nlohmann::ordered_json base = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < h.base_labels.size(); ++i)
    base.push_back({{"label", h.base_labels[i]}, {"zone", h.base_zones[i]}});
  j["base_labels"] = base;
  nlohmann::ordered_json parts = nlohmann::ordered_json::object(), names = nlohmann::ordered_json::object();
  for (const auto& [l, p] : h.partitions) {
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (const auto& b : p) {
      nlohmann::ordered_json members = nlohmann::ordered_json::array();
      for (auto i : b) members.push_back(h.base_labels[i]);
      blocks.push_back(members);
    }
    parts[lambda_key(l)] = blocks;
    names[lambda_key(l)] = h.merged_names.at(l);
  }
  j["lambda_partitions"] = parts;
  j["merged_names"] = names;
  return j;
}

inline LabelHierarchy hierarchy_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kHierarchyFormatVersion)
    throw Error("label hierarchy: unsupported format_version");
  LabelHierarchy h;
  h.zones = j.at("zones").get<std::vector<std::string>>();
  h.zone_assignment = j.value("zone_assignment", std::map<std::string, std::string>{});
  std::map<std::string, std::size_t> index;
  for (const auto& b : j.at("base_labels")) {
    index[b.at("label").get<std::string>()] = h.base_labels.size();
    h.base_labels.push_back(b.at("label").get<std::string>());
    h.base_zones.push_back(b.at("zone").get<std::string>());
  }
  for (const auto& [key, blocks] : j.at("lambda_partitions").items()) {
    const double l = parse_double(key).value_or(-1.0);
    if (l < 0.0) throw Error("label hierarchy: bad lambda key '" + key + "'");
    Partition p;
    for (const auto& b : blocks) {
      std::vector<std::size_t> members;
      for (const auto& lbl : b) members.push_back(index.at(lbl.get<std::string>()));
      p.push_back(members);
    }
    h.partitions[l] = p;
    h.merged_names[l] = j.at("merged_names").at(key).get<std::vector<std::string>>();
  }
  return h;
}

inline void write_hierarchy(const LabelHierarchy& h, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << hierarchy_to_json(h).dump(2) << '\n';
}

inline LabelHierarchy read_hierarchy(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  try {
    return hierarchy_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(file.string() + ": " + e.what());
  }
}

}  // namespace organichar
