#pragma once

#include <map>
#include <set>

#include "organichar/common.hpp"

// Word-level knowledge used by the offline describer, reasoner and embedder.
// Nothing here knows about sessions or ground truth: it is a small kitchen
// vocabulary with paraphrases and synonym folding.

namespace organichar::lexicon {

struct ActivityEntry {
  std::string label;   // canonical name a reasoner would settle on
  std::string zone;
  std::string group;   // coarser family used for merged names
  std::vector<std::string> actions;               // paraphrases
  std::vector<std::vector<std::string>> objects;  // object sets seen with it
  // six semantic dimensions
  std::string action_type, object_text, location_text, purpose, access, relation;
};

inline const std::vector<ActivityEntry>& activities() {
  static const std::vector<ActivityEntry> table = {
      {"washing dishes with sponge", "sink area", "sink cleanup",
       {"washing dishes", "scrubbing plates", "cleaning dishes", "rinsing dishes", "washing a plate"},
       {{"sponge", "plate"}, {"sponge", "dishes"}, {"scrubber", "plates"}, {"sponge", "dish"}},
       "cleaning washing scrubbing", "sponge plate dish", "sink", "kitchen cleanup hygiene", "water tap basin",
       "washing hands cleanup"},
      {"washing hands with soap", "sink area", "sink cleanup",
       {"washing hands", "cleaning hands", "rinsing hands", "scrubbing hands"},
       {{"soap"}, {"hand soap"}, {"soap", "towel"}},
       "cleaning washing", "soap hands towel", "sink", "personal hygiene", "water tap basin",
       "washing dishes cleanup"},
      {"making coffee with machine", "coffee machine area", "drink preparation",
       {"making coffee", "brewing coffee", "preparing espresso", "making a latte"},
       {{"coffee machine", "mug"}, {"espresso machine", "cup"}, {"coffee maker", "mug"}},
       "preparing brewing drink", "coffee machine mug", "coffee station", "beverage preparation", "appliance",
       "preparing tea breakfast"},
      {"preparing tea with kettle", "coffee machine area", "drink preparation",
       {"preparing tea", "making tea", "brewing tea", "steeping tea"},
       {{"kettle", "cup"}, {"kettle", "mug"}, {"electric kettle", "teacup"}},
       "preparing brewing drink", "kettle teabag", "coffee station", "beverage preparation", "appliance",
       "making coffee breakfast"},
      {"making sandwich", "counter area", "food preparation",
       {"making a sandwich", "assembling a sandwich", "preparing a sandwich", "fixing a sandwich"},
       {{"bread", "knife"}, {"bread", "butter knife"}, {"bread slices", "knife"}},
       "preparing assembling food", "bread knife butter", "counter", "meal preparation", "countertop",
       "preparing cereal breakfast"},
      {"preparing cereal", "counter area", "food preparation",
       {"preparing cereal", "pouring cereal", "making a bowl of cereal", "serving cereal"},
       {{"bowl", "milk"}, {"cereal box", "bowl"}, {"bowl", "spoon", "milk"}},
       "preparing pouring food", "bowl cereal milk", "counter", "meal preparation", "countertop",
       "making sandwich breakfast"},
      {"eating breakfast", "dining table area", "table activity",
       {"eating breakfast", "having breakfast", "eating a meal", "having a morning meal"},
       {{"plate", "fork"}, {"bowl", "spoon"}, {"plate", "fork", "cup"}},
       "eating consuming", "plate fork food", "dining table", "meal nourishment", "seating chair",
       "reading newspaper"},
      {"reading newspaper", "dining table area", "table activity",
       {"reading the newspaper", "reading news", "browsing a newspaper", "skimming the paper"},
       {{"newspaper"}, {"newspaper", "cup"}, {"paper"}},
       "reading leisure", "newspaper pages", "dining table", "leisure information", "seating chair",
       "eating breakfast"},
  };
  return table;
}

struct ZoneEntry {
  std::string zone;
  std::vector<std::string> keywords;
  std::vector<std::string> paraphrases;
};

inline const std::vector<ZoneEntry>& zones() {
  static const std::vector<ZoneEntry> table = {
      {"sink area", {"sink", "basin"}, {"at sink", "by the sink", "near sink basin", "at the kitchen sink"}},
      {"coffee machine area",
       {"coffee", "espresso"},
       {"at coffee machine", "by the coffee station", "near the espresso machine", "at the coffee corner"}},
      {"counter area",
       {"counter", "countertop", "worktop"},
       {"at counter", "by the counter", "at the countertop", "near the kitchen counter"}},
      {"dining table area",
       {"table", "dining"},
       {"at dining table", "at the table", "seated at the table", "near the dining table"}},
  };
  return table;
}

inline const ActivityEntry* find_activity(std::string_view label) {
  const std::string l = to_lower(label);
  for (const auto& e : activities())
    if (e.label == l) return &e;
  return nullptr;
}

inline const ZoneEntry* find_zone(std::string_view zone) {
  const std::string z = to_lower(zone);
  for (const auto& e : zones())
    if (e.zone == z) return &e;
  return nullptr;
}

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> s = {"a",   "an",     "the",     "with",   "at",     "by",      "on",
                                          "in",  "near",   "of",      "some",   "to",     "using",   "his",
                                          "her", "their",  "person",  "someone", "and",   "morning", "electric",
                                          "box", "kitchen", "seated", "corner", "station", "area"};
  return s;
}

// Folds inflections and synonyms onto one token.
inline std::string fold(const std::string& w) {
  static const std::map<std::string, std::string> m = {
      {"washing", "wash"},     {"washes", "wash"},     {"scrub", "wash"},      {"scrubbing", "wash"},
      {"clean", "wash"},       {"cleaning", "wash"},   {"rinse", "wash"},      {"rinsing", "wash"},
      {"dishes", "dish"},      {"plate", "dish"},      {"plates", "dish"},     {"hands", "hand"},
      {"scrubber", "sponge"},  {"espresso", "coffee"}, {"latte", "coffee"},    {"maker", "machine"},
      {"mug", "cup"},          {"teacup", "cup"},      {"make", "prepare"},    {"making", "prepare"},
      {"preparing", "prepare"}, {"brew", "prepare"},   {"brewing", "prepare"}, {"steeping", "prepare"},
      {"steep", "prepare"},    {"fix", "prepare"},     {"fixing", "prepare"},  {"assemble", "prepare"},
      {"assembling", "prepare"}, {"pour", "prepare"},  {"pouring", "prepare"}, {"serve", "prepare"},
      {"serving", "prepare"},  {"slices", "bread"},    {"slice", "bread"},     {"eating", "eat"},
      {"having", "eat"},       {"eats", "eat"},        {"breakfast", "meal"},  {"reading", "read"},
      {"browsing", "read"},    {"skimming", "read"},   {"paper", "newspaper"}, {"news", "newspaper"},
      {"sandwiches", "sandwich"}, {"bowls", "bowl"},
  };
  if (auto it = m.find(w); it != m.end()) return it->second;
  return w;
}

// Content tokens of a phrase after stop-word removal and folding.
inline std::set<std::string> concept_tokens(std::string_view text) {
  std::set<std::string> out;
  for (const auto& t : tokenize(text)) {
    if (stopwords().count(t)) continue;
    out.insert(fold(t));
  }
  return out;
}

inline std::set<std::string> concept_tokens(const std::vector<std::string>& phrases) {
  std::set<std::string> out;
  for (const auto& p : phrases) {
    auto s = concept_tokens(p);
    out.insert(s.begin(), s.end());
  }
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// Zone a free-text location refers to, if any keyword is recognized.
inline std::optional<std::string> zone_of_location(std::string_view location) {
  const auto toks = tokenize(location);
  for (const auto& z : zones())
    for (const auto& k : z.keywords)
      if (std::find(toks.begin(), toks.end(), k) != toks.end()) return z.zone;
  return std::nullopt;
}

// Best lexicon activity for an action phrase set, by folded-token overlap.
inline const ActivityEntry* activity_of_actions(const std::vector<std::string>& actions) {
  const auto toks = concept_tokens(actions);
  const ActivityEntry* best = nullptr;
  double best_s = 0.0;
  for (const auto& e : activities()) {
    const double s = jaccard(toks, concept_tokens(e.actions));
    if (s > best_s) {
      best_s = s;
      best = &e;
    }
  }
  return best_s >= 0.5 ? best : nullptr;
}

}  // namespace organichar::lexicon
