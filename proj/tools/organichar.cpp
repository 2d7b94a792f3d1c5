#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "organichar/organichar.hpp"

namespace fs = std::filesystem;
using namespace organichar;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::string describer_url;
  std::string reasoner_url;
  std::string embedder_url;
  std::optional<double> http_timeout;
  std::optional<int> http_retries;
};

// defaults < config file < ORGANIC_* environment < command-line flags
PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig c;
  std::string file = g.config;
  if (file.empty())
    if (const char* e = std::getenv("ORGANIC_CONFIG"); e && *e) file = e;
  if (!file.empty()) c = load_config(file);
  c = apply_env_overrides(c);
  if (g.seed) c.seed = *g.seed;
  if (g.jobs) c.jobs = *g.jobs;
  if (!g.describer_url.empty()) c.describer = g.describer_url;
  if (!g.reasoner_url.empty()) c.reasoner = g.reasoner_url;
  if (!g.embedder_url.empty()) c.embedder = g.embedder_url;
  if (g.http_timeout) c.http.timeout_s = *g.http_timeout;
  if (g.http_retries) c.http.retries = *g.http_retries;
  c.validate();
  return c;
}

void write_json(const nlohmann::ordered_json& j, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(file.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

// A directory holding session subdirectories stands for all of them.
std::vector<fs::path> expand_sessions(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::exists(p / "meta.json") || !fs::is_directory(p)) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_directory() && fs::exists(e.path() / "meta.json")) subs.push_back(e.path());
    if (subs.empty()) throw Error(p.string() + ": not a session directory and holds no sessions");
    std::sort(subs.begin(), subs.end());
    out.insert(out.end(), subs.begin(), subs.end());
  }
  return out;
}

std::string pct(double x) { return format_fixed(100.0 * x, 1) + "%"; }

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string script;
  std::size_t demo = 0;
  std::size_t corpus = 0;
  std::string out;
};

void write_simulated(const ActivityScript& script, std::uint64_t seed, const fs::path& dir) {
  const Session s = run_stage("simulate", script.session_id, [&] { return generate_synthetic_session(script, seed); });
  run_stage("write", dir.string(), [&] {
    ensure_dir(dir);
    write_session(s, dir);
    std::ofstream out(dir / kScriptFile, std::ios::binary);
    if (!out) throw Error("cannot write script");
    write_script(script, out);
  });
  std::cout << dir.string() << ": " << format_fixed(s.duration_s, 1) << " s, " << script.steps.size()
            << " scripted steps\n";
}

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const auto cfg = resolve_config(g);
  const fs::path out(a.out);
  if (!a.script.empty()) {
    auto script = run_stage("load", a.script, [&] { return load_script(a.script); });
    write_simulated(script, sub_seed(cfg.seed, script.session_id), out);
  } else if (a.demo > 0) {
    write_simulated(demo_script(a.demo - 1, cfg.seed), sub_seed(cfg.seed, a.demo - 1), out);
  } else {
    const auto scripts = demo_corpus_scripts(a.corpus, cfg.seed);
    for (std::size_t i = 0; i < scripts.size(); ++i)
      write_simulated(scripts[i], sub_seed(cfg.seed, i), out / scripts[i].session_id);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// discover
// ---------------------------------------------------------------------------

struct DiscoverArgs {
  std::vector<std::string> sessions;
  std::string out;
};

nlohmann::ordered_json grid_to_json(const GridResult& g) {
  nlohmann::ordered_json j;
  j["best"] = {{"min_cluster_size", g.config.min_cluster_size},
               {"min_samples", g.config.min_samples},
               {"n_components", g.config.n_components},
               {"cluster_selection_epsilon", g.config.cluster_selection_epsilon}};
  j["score"] = g.score;
  j["n_clusters"] = g.clustering.n_clusters;
  j["noise_ratio"] = g.clustering.noise_ratio();
  j["rows"] = g.keys.size();
  nlohmann::ordered_json ev = nlohmann::ordered_json::array();
  for (const auto& p : g.evaluated)
    ev.push_back({{"min_cluster_size", p.config.min_cluster_size},
                  {"min_samples", p.config.min_samples},
                  {"n_components", p.config.n_components},
                  {"score", p.score},
                  {"n_clusters", p.n_clusters},
                  {"noise_ratio", p.noise_ratio}});
  j["evaluated"] = ev;
  return j;
}

int cmd_discover(const Globals& g, const DiscoverArgs& a) {
  const auto cfg = resolve_config(g);
  const auto corpus = load_corpus(expand_sessions(a.sessions), cfg);
  const auto describer = run_stage("annotate", "setup", [&] { return make_describer(cfg, corpus); });
  const auto reasoner = make_reasoner(cfg);
  const auto embedder = make_embedder(cfg);
  const auto r = run_discovery(corpus_view(corpus), cfg, *describer, *reasoner, *embedder);

  const fs::path out(a.out);
  run_stage("write", out.string(), [&] {
    ensure_dir(out / "keymoments");
    for (const auto& [m, ms] : r.key_moments.per_modality)
      write_key_moments_jsonl(ms, out / "keymoments" / (std::string(modality_name(m)) + ".jsonl"));
    write_key_moments_jsonl(r.key_moments.merged, out / "keymoments.jsonl");
    nlohmann::ordered_json grids = nlohmann::ordered_json::object();
    for (const auto& [m, gr] : r.key_moments.grids) grids[std::string(modality_name(m))] = grid_to_json(gr);
    write_json(grids, out / "clustering.json");
    write_descriptions_jsonl(r.descriptions, out / "descriptions.jsonl");
    write_annotations_jsonl(annotated_moments(r.labels), out / "annotations.jsonl");
    write_hierarchy(r.labels.hierarchy, out / "hierarchy.json");
    write_json(config_to_json(cfg), out / "config.json");

    nlohmann::ordered_json s;
    s["format_version"] = 1;
    s["sessions"] = corpus.size();
    s["key_moments"] = r.key_moments.merged.size();
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [m, ms] : r.key_moments.per_modality) per[std::string(modality_name(m))] = ms.size();
    s["key_moments_per_modality"] = per;
    s["annotated_fraction"] = r.key_moments.annotated_fraction;
    s["descriptions"] = r.descriptions.size();
    s["detection_rate"] = r.detection_rate;
    s["confident"] = r.labels.confident.size();
    s["base_labels"] = r.labels.hierarchy.base_labels;
    s["zones"] = r.labels.hierarchy.zones;
    nlohmann::ordered_json sizes = nlohmann::ordered_json::object();
    for (const auto& [l, p] : r.labels.hierarchy.partitions) sizes[lambda_key(l)] = p.size();
    s["labels_per_lambda"] = sizes;
    write_json(s, out / "summary.json");
  });

  std::cout << "sessions:           " << corpus.size() << '\n'
            << "key moments:        " << r.key_moments.merged.size() << '\n'
            << "annotated fraction: " << pct(r.key_moments.annotated_fraction) << '\n'
            << "detection rate:     " << pct(r.detection_rate) << '\n'
            << "confident:          " << r.labels.confident.size() << '\n'
            << "base labels:        " << r.labels.hierarchy.base_labels.size() << '\n';
  for (const auto& [l, p] : r.labels.hierarchy.partitions)
    std::cout << "labels at " << lambda_key(l) << ":      " << p.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> sessions;
  std::string discovery;
  std::string hierarchy;
  std::string annotations;
  double lambda = 0.4;
  std::string out;
  bool skip_eval = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto cfg = resolve_config(g);
  const fs::path disc(a.discovery);
  const fs::path hfile = a.hierarchy.empty() ? disc / "hierarchy.json" : fs::path(a.hierarchy);
  const fs::path afile = a.annotations.empty() ? disc / "annotations.jsonl" : fs::path(a.annotations);
  const auto hierarchy = run_stage("load", hfile.string(), [&] { return read_hierarchy(hfile); });
  const auto moments = run_stage("load", afile.string(), [&] { return read_annotations_jsonl(afile); });
  run_stage("train", "lambda", [&] { hierarchy.partition_at(a.lambda); });
  const auto corpus = load_corpus(expand_sessions(a.sessions), cfg);
  const auto view = corpus_view(corpus);
  const auto ds = run_stage("train/dataset", format_double(a.lambda),
                            [&] { return build_training_dataset(view, moments, hierarchy, a.lambda, cfg); });
  if (ds.size() == 0) throw StageError("train/dataset", format_double(a.lambda), "no labelled windows");

  const fs::path out(a.out);
  ensure_dir(out);
  const auto model = run_stage("train/fit", std::to_string(ds.size()) + " rows",
                               [&] { return train_zone_model(ds, ds.all_rows(), cfg.har, cfg.seed, a.lambda); });
  run_stage("write", (out / "model").string(), [&] {
    save_zone_model(model, out / "model");
    write_json(config_to_json(cfg), out / "model" / "pipeline.json");
  });

  std::cout << "rows:     " << ds.size() << '\n'
            << "sessions: " << ds.sessions().size() << '\n'
            << "zones:    " << model.zones.size() << '\n'
            << "zone ensemble: " << model.zone_classifier.spec.name() << " (cv "
            << format_fixed(model.zone_classifier.cv_score, 3) << ")\n";
  for (const auto& [z, e] : model.per_zone)
    std::cout << "  " << z << ": " << e.spec.name() << " (cv " << format_fixed(e.cv_score, 3) << ")\n";

  if (!a.skip_eval) {
    if (ds.sessions().size() < 2) throw StageError("train/loso", "dataset", "need at least two sessions");
    const auto report = run_stage("train/loso", std::to_string(ds.sessions().size()) + " sessions", [&] {
      return loso_cv(ds, zone_model_builder(cfg.har, a.lambda), cfg.seed, cfg.jobs);
    });
    run_stage("write", out.string(), [&] {
      auto j = report_to_json(report);
      j["lambda"] = a.lambda;
      j["rows"] = ds.size();
      write_json(j, out / "report.json");
      write_confusion_csv(report, out / "confusion.csv");
      write_fold_predictions_csv(report.predictions, out / "fold_predictions.csv");
    });
    std::cout << "LOSO balanced accuracy: " << format_fixed(report.balanced_accuracy, 4) << '\n'
              << "LOSO macro F1:          " << format_fixed(report.f1_macro, 4) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::string session;
  std::string out;
  std::string windows;
  double min_segment = 2.0;
};

int cmd_infer(const Globals& g, const InferArgs& a) {
  auto cfg = resolve_config(g);
  const fs::path mdir(a.model);
  const auto model = run_stage("load", mdir.string(), [&] { return load_zone_model(mdir); });
  if (fs::exists(mdir / "pipeline.json"))
    cfg.window = run_stage("load", (mdir / "pipeline.json").string(),
                           [&] { return config_from_json(read_json(mdir / "pipeline.json")).window; });
  const auto session = run_stage("load", a.session, [&] { return load_session(a.session); });
  const auto tables = run_stage("featurize", session.session_id, [&] { return featurize_session(session, cfg.window); });

  std::set<long long> seen;
  std::vector<WindowLabel> slots;
  for (const auto& [m, t] : tables)
    for (const auto& w : t.windows)
      if (w.valid && seen.insert(std::llround(w.t_s * 1000.0)).second) slots.push_back({w.t_s, {}, {}});
  std::sort(slots.begin(), slots.end(), [](const auto& x, const auto& y) { return x.t_s < y.t_s; });
  LabeledDataset ds;
  add_session_windows(ds, session.session_id, tables, slots);
  const auto inf = run_stage("infer", session.session_id, [&] { return model.infer(ds, ds.all_rows()); });
  std::vector<WindowPrediction> preds;
  for (std::size_t i = 0; i < inf.size(); ++i)
    if (inf[i].ok) preds.push_back({ds.rows[i].t_s, inf[i].zone, inf[i].activity, inf[i].confidence});
  if (preds.empty()) throw StageError("infer", session.session_id, "no window had usable features");
  const auto segs = run_stage("aggregate", session.session_id,
                              [&] { return aggregate_predictions(preds, a.min_segment, cfg.window.length_s); });
  run_stage("write", a.out, [&] {
    if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path());
    write_segments_csv(segs, a.out);
    if (!a.windows.empty()) {
      std::ofstream w(a.windows, std::ios::binary);
      if (!w) throw Error("cannot write " + a.windows);
      w << "t_s,zone,activity,confidence\n";
      for (const auto& p : preds)
        w << format_fixed(p.t_s, 3) << ",\"" << p.zone << "\",\"" << p.activity << "\"," << format_fixed(p.confidence, 6)
          << '\n';
    }
  });
  std::cout << session.session_id << ": " << preds.size() << " of " << ds.size() << " windows inferred, " << segs.size()
            << " segments\n";
  return 0;
}

// ---------------------------------------------------------------------------
// incremental
// ---------------------------------------------------------------------------

struct IncrementalArgs {
  std::vector<std::string> sessions;
  std::string out;
  std::string checkpoint;
  bool no_checkpoint = false;
  std::optional<double> floor;
  std::vector<double> sensitivity;
};

void print_trace(const IncrementalTrace& t) {
  std::printf("%-8s %-14s %8s %11s %9s %7s\n", "session", "id", "queries", "cumulative", "forward", "labels");
  for (const auto& r : t.records)
    std::printf("%-8zu %-14s %8zu %11zu %9s %7zu\n", r.session_index, r.session_id.c_str(), r.query_count,
                r.cumulative_annotations, r.forward_accuracy ? format_fixed(*r.forward_accuracy, 3).c_str() : "-",
                r.labels.size());
}

int cmd_incremental(const Globals& g, const IncrementalArgs& a) {
  auto cfg = resolve_config(g);
  if (a.floor) cfg.incremental.confidence_floor = *a.floor;
  cfg.validate();
  const auto corpus = load_corpus(expand_sessions(a.sessions), cfg);
  const auto describer = run_stage("annotate", "setup", [&] { return make_describer(cfg, corpus); });
  const auto reasoner = make_reasoner(cfg);
  const auto embedder = make_embedder(cfg);
  const fs::path out(a.out);
  ensure_dir(out);
  std::optional<fs::path> ckpt;
  if (!a.no_checkpoint) ckpt = a.checkpoint.empty() ? out / "checkpoint" : fs::path(a.checkpoint);
  const auto trace = run_incremental(corpus, cfg, *describer, *reasoner, *embedder, ckpt);
  run_stage("write", out.string(), [&] {
    write_trace_csv(trace, out / "trace.csv");
    write_trace_snapshots(trace, out / "snapshots.json");
    write_json(config_to_json(cfg), out / "config.json");
  });
  print_trace(trace);

  if (!a.sensitivity.empty()) {
    std::ofstream sens;
    run_stage("write", (out / "sensitivity.csv").string(), [&] {
      sens.open(out / "sensitivity.csv", std::ios::binary);
      if (!sens) throw Error("cannot write");
      sens << "confidence_floor,total_queries,final_forward_accuracy\n";
    });
    for (double f : a.sensitivity) {
      auto c = cfg;
      c.incremental.confidence_floor = f;
      c.validate();
      const auto d = make_describer(c, corpus);
      const auto t = run_stage("incremental/sensitivity", format_double(f),
                               [&] { return run_incremental(corpus, c, *d, *reasoner, *embedder); });
      std::optional<double> last;
      for (const auto& r : t.records)
        if (r.forward_accuracy) last = r.forward_accuracy;
      const std::size_t total = t.records.empty() ? 0 : t.records.back().cumulative_annotations;
      sens << format_double(f) << ',' << total << ',' << (last ? format_fixed(*last, 6) : std::string{}) << '\n';
      std::cout << "floor " << format_double(f) << ": " << total << " queries, final forward accuracy "
                << (last ? format_fixed(*last, 3) : std::string("-")) << '\n';
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> dirs;
};

int report_discovery(const fs::path& dir) {
  const auto s = read_json(dir / "summary.json");
  std::cout << "== discovery: " << dir.string() << '\n';
  std::printf("  %-22s %zu\n", "sessions", s.at("sessions").get<std::size_t>());
  std::printf("  %-22s %zu\n", "key moments", s.at("key_moments").get<std::size_t>());
  for (const auto& [m, n] : s.at("key_moments_per_modality").items())
    std::printf("    %-20s %zu\n", m.c_str(), n.get<std::size_t>());
  std::printf("  %-22s %s\n", "annotated fraction", pct(s.at("annotated_fraction").get<double>()).c_str());
  std::printf("  %-22s %s\n", "detection rate", pct(s.at("detection_rate").get<double>()).c_str());
  std::printf("  %-22s %zu\n", "confident", s.at("confident").get<std::size_t>());
  for (const auto& [l, n] : s.at("labels_per_lambda").items())
    std::printf("  labels at lambda %-5s %zu\n", l.c_str(), n.get<std::size_t>());
  return 0;
}

int report_training(const fs::path& dir) {
  const auto j = read_json(dir / "report.json");
  const auto preds = read_fold_predictions_csv(dir / "fold_predictions.csv");
  const auto re = evaluate_predictions(preds);
  std::cout << "== training: " << dir.string() << '\n';
  std::printf("  %-24s %.4f\n", "LOSO balanced accuracy", j.at("balanced_accuracy").get<double>());
  std::printf("  %-24s %.4f\n", "LOSO macro F1", j.at("f1_macro").get<double>());
  std::printf("  %-14s %6s %9s %9s\n", "session", "n", "accuracy", "bal.acc");
  for (const auto& [s, m] : j.at("per_session").items())
    std::printf("  %-14s %6zu %9.3f %9.3f\n", s.c_str(), m.at("n").get<std::size_t>(), m.at("accuracy").get<double>(),
                m.at("balanced_accuracy").get<double>());
  const bool same = re.labels == j.at("labels").get<std::vector<std::string>>() &&
                    re.confusion == j.at("confusion").get<Confusion>() &&
                    std::abs(re.balanced_accuracy - j.at("balanced_accuracy").get<double>()) < 1e-9;
  std::cout << "  confusion vs fold predictions: " << (same ? "consistent" : "MISMATCH") << '\n';
  return same ? 0 : 1;
}

int report_incremental(const fs::path& dir) {
  std::cout << "== incremental: " << dir.string() << '\n';
  std::ifstream in(dir / "trace.csv", std::ios::binary);
  if (!in) throw Error("cannot read trace.csv");
  std::string line;
  while (std::getline(in, line)) {
    std::string row;
    for (const auto& f : split(line, ',')) row += (row.empty() ? "" : " ") + std::string(14 - std::min<std::size_t>(14, f.size()), ' ') + f;
    std::cout << "  " << row << '\n';
  }
  if (fs::exists(dir / "sensitivity.csv")) {
    std::ifstream s(dir / "sensitivity.csv", std::ios::binary);
    std::cout << "  sensitivity:\n";
    while (std::getline(s, line)) std::cout << "    " << line << '\n';
  }
  return 0;
}

int cmd_report(const ReportArgs& a) {
  int rc = 0;
  for (const auto& d : a.dirs) {
    const fs::path dir(d);
    bool any = false;
    if (fs::exists(dir / "summary.json")) {
      rc |= run_stage("report", dir.string(), [&] { return report_discovery(dir); });
      any = true;
    }
    if (fs::exists(dir / "report.json")) {
      rc |= run_stage("report", dir.string(), [&] { return report_training(dir); });
      any = true;
    }
    if (fs::exists(dir / "trace.csv")) {
      rc |= run_stage("report", dir.string(), [&] { return report_incremental(dir); });
      any = true;
    }
    if (!any) throw StageError("report", dir.string(), "no discovery, training or incremental outputs found");
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"organichar: label discovery and activity recognition for multimodal home sensor sessions"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file (default: $ORGANIC_CONFIG)");
  app.add_option("--seed", g.seed, "root random seed (default: $ORGANIC_SEED or 7)");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--describer-url", g.describer_url, "scene describer endpoint (default: $ORGANIC_DESCRIBER_URL or mock)");
  app.add_option("--reasoner-url", g.reasoner_url, "reasoner endpoint (default: mock)");
  app.add_option("--embedder-url", g.embedder_url, "text embedder endpoint (default: mock)");
  app.add_option("--http-timeout", g.http_timeout, "HTTP timeout in seconds");
  app.add_option("--http-retries", g.http_retries, "HTTP retries");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate synthetic sessions");
  auto* o_script = s->add_option("--script", sim.script, "activity script file")->check(CLI::ExistingFile);
  auto* o_demo = s->add_option("--demo", sim.demo, "demo session number (1-based)")->check(CLI::PositiveNumber);
  auto* o_corpus = s->add_option("--corpus", sim.corpus, "number of demo sessions")->check(CLI::PositiveNumber);
  o_script->excludes(o_demo)->excludes(o_corpus);
  o_demo->excludes(o_corpus);
  s->add_option("--out", sim.out, "output directory")->required();

  DiscoverArgs disc;
  auto* d = app.add_subcommand("discover", "key moments, annotation and label discovery");
  d->add_option("sessions", disc.sessions, "session directories (or a directory of sessions)")->required();
  d->add_option("--out", disc.out, "output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the zone/activity model and run LOSO evaluation");
  t->add_option("sessions", tr.sessions, "session directories")->required();
  t->add_option("--discovery", tr.discovery, "discover output directory");
  t->add_option("--hierarchy", tr.hierarchy, "label hierarchy file (overrides --discovery)");
  t->add_option("--annotations", tr.annotations, "annotations file (overrides --discovery)");
  t->add_option("--lambda", tr.lambda, "label granularity")->capture_default_str();
  t->add_option("--out", tr.out, "output directory")->required();
  t->add_flag("--skip-eval", tr.skip_eval, "skip leave-one-session-out evaluation");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "label a session with a trained model");
  i->add_option("--model", inf.model, "model directory")->required();
  i->add_option("--session", inf.session, "session directory")->required();
  i->add_option("--out", inf.out, "segments CSV")->required();
  i->add_option("--windows", inf.windows, "optional per-window predictions CSV");
  i->add_option("--min-segment", inf.min_segment, "minimum segment length in seconds")->capture_default_str();

  IncrementalArgs inc;
  auto* n = app.add_subcommand("incremental", "session-by-session replay with selective annotation");
  n->add_option("sessions", inc.sessions, "session directories in replay order")->required();
  n->add_option("--out", inc.out, "output directory")->required();
  n->add_option("--checkpoint", inc.checkpoint, "checkpoint directory (default: <out>/checkpoint)");
  n->add_flag("--no-checkpoint", inc.no_checkpoint, "do not persist or resume");
  n->add_option("--floor", inc.floor, "confidence floor for re-querying");
  n->add_option("--sensitivity", inc.sensitivity, "extra confidence floors to replay");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "summarize discover/train/incremental outputs");
  r->add_option("dirs", rep.dirs, "output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (s->parsed()) {
      if (sim.script.empty() && sim.demo == 0 && sim.corpus == 0) {
        std::cerr << "simulate: one of --script, --demo or --corpus is required\n";
        return 2;
      }
      return cmd_simulate(g, sim);
    }
    if (d->parsed()) return cmd_discover(g, disc);
    if (t->parsed()) {
      if (tr.discovery.empty() && (tr.hierarchy.empty() || tr.annotations.empty())) {
        std::cerr << "train: --discovery or both --hierarchy and --annotations are required\n";
        return 2;
      }
      return cmd_train(g, tr);
    }
    if (i->parsed()) return cmd_infer(g, inf);
    if (n->parsed()) return cmd_incremental(g, inc);
    if (r->parsed()) return cmd_report(rep);
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
