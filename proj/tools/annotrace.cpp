// Command-line driver: ingest, OCR, annotate, evaluate, export, sample, serve.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>

#include "annotrace/annotate.hpp"
#include "annotrace/evaluate.hpp"
#include "annotrace/pipeline.hpp"
#include "annotrace/png.hpp"
#include "annotrace/scenario.hpp"
#include "annotrace/service.hpp"

namespace fs = std::filesystem;
using namespace annotrace;

namespace {

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

OcrConfig load_ocr_config(const std::string& path) {
  if (path.empty()) return {};
  return ocr_config_from_json(parse_json(read_text(path), path));
}

BinaryArtifactMap load_map_for(const fs::path& session, const std::string& override_path) {
  if (!override_path.empty()) return import_artifact_map(override_path);
  const auto bundle = load_bundle(session);
  const auto path = default_artifact_path(session, bundle.manifest());
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "artifact map " + path.string() + " not found");
  return import_artifact_map(path);
}

int cmd_ingest(const fs::path& dir) {
  const auto bundle = load_bundle(dir);
  const auto& m = bundle.manifest();
  int keyframes = 0;
  for (const auto& f : bundle.frames()) keyframes += f.kind == FrameKind::Keyframe ? 1 : 0;
  std::map<std::string, int> by_type;
  for (const auto& e : bundle.events()) ++by_type[std::string(event_type_name(e.data))];
  std::cout << "session   " << m.session_id << " (subject " << m.subject_pseudonym << ", binary " << m.binary_id
            << ")\n";
  std::cout << "span      " << format_clock(m.start) << " - " << format_clock(m.end) << "\n";
  std::cout << "frames    " << bundle.frame_count() << " (" << keyframes << " keyframes)\n";
  std::cout << "events   ";
  for (const auto& [type, n] : by_type) std::cout << " " << type << "=" << n;
  std::cout << "\n";
  const auto map_path = default_artifact_path(dir, m);
  if (fs::exists(map_path)) {
    const auto map = import_artifact_map(map_path);
    std::cout << "artifacts " << map.functions.size() << " functions, " << map.globals.size() << " globals, "
              << map.xrefs.size() << " xrefs\n";
  } else {
    std::cout << "artifacts missing (" << map_path.string() << ")\n";
  }
  return 0;
}

int cmd_ocr(const fs::path& dir, const std::string& backend_spec, const std::string& config, int threads) {
  const auto bundle = load_bundle(dir);
  const auto cfg = load_ocr_config(config);
  make_backend(backend_spec);
  std::vector<std::size_t> token_counts(static_cast<std::size_t>(bundle.frame_count()));
  parallel_chunks(token_counts.size(), threads, [&](std::size_t b, std::size_t e) {
    auto backend = make_backend(backend_spec);
    FrameReader reader(bundle);
    for (std::size_t i = b; i < e; ++i) {
      token_counts[i] = run_ocr(bundle, static_cast<int>(i), *backend, cfg, &reader).tokens.size();
    }
  });
  std::size_t total = 0;
  for (auto n : token_counts) total += n;
  std::cout << "ocr: " << token_counts.size() << " frames, " << total << " tokens\n";
  return 0;
}

int cmd_evaluate(const fs::path& dir, std::string groundtruth, const std::string& out) {
  const auto bundle = load_bundle(dir);
  if (groundtruth.empty()) groundtruth = (dir / "groundtruth.csv").string();
  const auto truth = load_groundtruth(groundtruth);
  const auto matches = load_matches(dir);
  std::map<int, const FrameMatchRecord*> by_frame;
  for (const auto& m : matches) by_frame[m.frame_index] = &m;

  DatasetCounts counts;
  counts.name = bundle.manifest().binary_id;
  BlockCounts blocks;
  blocks.subject = bundle.manifest().subject_pseudonym;
  for (const auto& g : truth) {
    auto it = by_frame.find(g.frame_index);
    if (it == by_frame.end()) {
      throw Error(ErrorKind::IndexOutOfRange, "ground truth names frame " + std::to_string(g.frame_index) +
                                                  " which has no match record");
    }
    const auto outcome = classify_function_outcome(it->second->match, g);
    counts.add(outcome, g.truth.has_value());
    // Block identification is scored only where the function label is right.
    if (outcome == EvalOutcome::CorrectLabel && g.truth && !g.blocks.empty()) {
      const auto [ok, n] = score_frame_blocks(g.blocks, it->second->blocks);
      blocks.correct += ok;
      blocks.total += n;
    }
  }
  const std::vector<DatasetCounts> datasets{counts};
  const auto report = summarize_function_eval(datasets);
  const std::vector<BlockCounts> subjects{blocks};
  const auto block_report = summarize_block_eval(subjects, report.overall_accuracy);

  std::cout << format_function_report(report);
  if (blocks.total > 0) std::cout << "\n" << format_block_report(block_report);
  Json j{{"functions", function_report_to_json(report)}, {"blocks", block_report_to_json(block_report)}};
  write_file_atomic(out.empty() ? dir / "eval.json" : fs::path(out), j.dump(2) + "\n");
  return 0;
}

int cmd_export(const fs::path& dir, bool scatter, bool timeline, const std::string& format,
               const std::string& artifacts, const std::string& out) {
  if (scatter == timeline) throw Error(ErrorKind::SchemaViolation, "choose exactly one of --scatter or --timeline");
  if (scatter) {
    emit(scatter_from_bundle(dir, load_map_for(dir, artifacts)), out);
    return 0;
  }
  const auto annotations = AnnotationLog(dir / "annotations.jsonl").current();
  if (format == "csv") emit(export_timeline_csv(annotations), out);
  else emit(export_timeline_jsonl(annotations), out);
  return 0;
}

int cmd_sample(const fs::path& root, int n, std::uint64_t seed, const std::string& exclude, const std::string& out) {
  std::vector<SampleFrames> sessions;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json")) continue;
    const auto m = manifest_from_json(parse_json(read_text(entry.path() / "manifest.json"), "manifest.json"));
    sessions.push_back({m.subject_pseudonym, m.session_id, m.frame_count});
  }
  ExclusionSet excluded;
  if (!exclude.empty()) excluded = parse_exclusions(read_text(exclude), exclude);
  emit(format_sample_csv(stratified_sample(sessions, n, seed, excluded)), out);
  return 0;
}

// Ground-truth template for the sampled frames of one session, prefilled
// with the current predictions for a labeller to correct.
int cmd_label(const fs::path& dir, const std::string& sample, const std::string& out) {
  const auto bundle = load_bundle(dir);
  const auto matches = load_matches(dir);
  std::vector<int> frames;
  if (sample.empty()) {
    for (const auto& m : matches) frames.push_back(m.frame_index);
  } else {
    const auto text = read_text(sample);
    std::size_t pos = text.find('\n');
    while (pos != std::string::npos && pos + 1 < text.size()) {
      const auto next = text.find('\n', pos + 1);
      const auto line = text.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
      pos = next;
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos) continue;
      if (line.substr(c1 + 1, c2 - c1 - 1) == bundle.manifest().session_id) frames.push_back(std::stoi(line.substr(c2 + 1)));
    }
  }
  std::vector<GroundTruthLabel> labels;
  for (int f : frames) {
    if (f < 0 || static_cast<std::size_t>(f) >= matches.size()) continue;
    GroundTruthLabel g;
    g.frame_index = f;
    if (matches[static_cast<std::size_t>(f)].match.function) {
      g.truth = matches[static_cast<std::size_t>(f)].match.function->entry;
      g.blocks = matches[static_cast<std::size_t>(f)].blocks;
    }
    labels.push_back(std::move(g));
  }
  emit(format_groundtruth_csv(labels), out.empty() ? (dir / "groundtruth.csv").string() : out);
  return 0;
}

int cmd_map(const fs::path& file) {
  const auto map = import_artifact_map(file);
  std::size_t blocks = 0;
  for (const auto& f : map.functions) blocks += f.blocks.size();
  std::cout << "binary    " << map.binary_id << "\n";
  std::cout << "functions " << map.functions.size() << "\n";
  std::cout << "blocks    " << blocks << "\n";
  std::cout << "globals   " << map.globals.size() << "\n";
  std::cout << "strings   " << map.strings.size() << "\n";
  std::cout << "xrefs     " << map.xrefs.size() << "\n";
  return 0;
}

int cmd_defaults(const fs::path& dir) {
  fs::create_directories(dir);
  write_file_atomic(dir / "patterns.json", patterns_to_json(default_patterns()).dump(2) + "\n");
  write_file_atomic(dir / "filters.json", default_filters_json().dump(2) + "\n");
  std::string stop = "# One symbol per line, already sanitized.\n";
  const auto stoplist = Stoplist::defaults();
  for (const auto& w : stoplist.words()) stop += w + "\n";
  write_file_atomic(dir / "stoplist.txt", stop);
  std::cout << "wrote patterns.json, filters.json, stoplist.txt to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"annotrace: annotate reverse-engineering sessions from screenshots and input logs"};
  app.require_subcommand(1);

  std::string session, backend = "mock", ocr_config, artifacts, filters, patterns, stoplist, out, groundtruth;
  std::string format = "jsonl", root = ".", bind = "127.0.0.1:8080", exclude, sample_file;
  int threads = 0, threshold = 85, n = 100;
  std::int64_t min_interval = 5000, max_gap = 10000;
  std::uint64_t seed = 1;
  bool scatter = false, timeline = false, no_blocks = false, json = false;

  auto* ingest = app.add_subcommand("ingest", "validate a session bundle and print a summary");
  ingest->add_option("session", session, "bundle directory")->required()->check(CLI::ExistingDirectory);

  auto* ocr = app.add_subcommand("ocr", "recognize text on every frame (cached under ocr/)");
  ocr->add_option("session", session, "bundle directory")->required()->check(CLI::ExistingDirectory);
  ocr->add_option("--backend", backend, "mock, mock+noise[:seed] or an engine executable");
  ocr->add_option("--config", ocr_config, "OCR config JSON")->check(CLI::ExistingFile);
  ocr->add_option("--threads", threads, "worker threads (0: all cores)");

  auto* annotate = app.add_subcommand("annotate", "run the full pipeline and append annotations");
  annotate->add_option("session", session, "bundle directory")->required()->check(CLI::ExistingDirectory);
  annotate->add_option("--threshold", threshold, "function match threshold 0..100")->check(CLI::Range(0, 100));
  annotate->add_option("--min-interval", min_interval, "drop function views shorter than this (ms)")
      ->check(CLI::NonNegativeNumber);
  annotate->add_option("--max-gap", max_gap, "bridge gaps up to this long (ms)")->check(CLI::NonNegativeNumber);
  annotate->add_option("--backend", backend, "OCR backend");
  annotate->add_option("--config", ocr_config, "OCR config JSON")->check(CLI::ExistingFile);
  annotate->add_option("--artifacts", artifacts, "artifact map (default artifacts/<binary_id>.json)");
  annotate->add_option("--filters", filters, "rectangle filters JSON")->check(CLI::ExistingFile);
  annotate->add_option("--patterns", patterns, "feature pattern table JSON")->check(CLI::ExistingFile);
  annotate->add_option("--stoplist", stoplist, "stoplist file")->check(CLI::ExistingFile);
  annotate->add_option("--threads", threads, "worker threads (0: all cores)");
  annotate->add_flag("--no-blocks", no_blocks, "skip basic-block matching");
  annotate->add_flag("--json", json, "print the pipeline report as JSON");

  auto* evaluate = app.add_subcommand("evaluate", "compare matches with ground truth");
  evaluate->add_option("session", session, "bundle directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--groundtruth", groundtruth, "groundtruth.csv (default <session>/groundtruth.csv)");
  evaluate->add_option("-o,--out", out, "machine-readable report (default <session>/eval.json)");

  auto* exp = app.add_subcommand("export", "write the timeline or scatter data");
  exp->add_option("session", session, "bundle directory")->required()->check(CLI::ExistingDirectory);
  exp->add_flag("--scatter", scatter, "t,function_ordinal CSV");
  exp->add_flag("--timeline", timeline, "current annotations");
  exp->add_option("--format", format, "timeline format")->check(CLI::IsMember({"jsonl", "csv"}));
  exp->add_option("--artifacts", artifacts, "artifact map for ordinals");
  exp->add_option("-o,--out", out, "output file (default stdout)");

  auto* sample = app.add_subcommand("sample", "draw frames per subject for manual labelling");
  sample->add_option("--root", root, "directory of bundles")->check(CLI::ExistingDirectory);
  sample->add_option("--n", n, "frames per subject")->required()->check(CLI::NonNegativeNumber);
  sample->add_option("--seed", seed, "generator seed")->required();
  sample->add_option("--exclude", exclude, "frames used during tuning (session_id,frame_index)")
      ->check(CLI::ExistingFile);
  sample->add_option("-o,--out", out, "output CSV (default stdout)");

  auto* label = app.add_subcommand("label", "write a ground-truth template prefilled with predictions");
  label->add_option("session", session, "bundle directory")->required()->check(CLI::ExistingDirectory);
  label->add_option("--sample", sample_file, "sample CSV from 'sample'")->check(CLI::ExistingFile);
  label->add_option("-o,--out", out, "output CSV (default <session>/groundtruth.csv)");

  auto* map_cmd = app.add_subcommand("map", "validate an artifact map and print its counts");
  std::string map_file;
  map_cmd->add_option("file", map_file, "artifact map JSON")->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "HTTP API for the review UI");
  serve->add_option("--root", root, "directory of bundles")->check(CLI::ExistingDirectory);
  serve->add_option("--bind", bind, "host:port");

  auto* demo = app.add_subcommand("demo", "write the demo session bundle");
  std::string demo_dir;
  demo->add_option("dir", demo_dir, "output directory")->required();

  auto* defaults = app.add_subcommand("defaults", "write the built-in pattern, filter and stoplist files");
  std::string defaults_dir;
  defaults->add_option("dir", defaults_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(session);
    if (*ocr) return cmd_ocr(session, backend, ocr_config, threads);
    if (*annotate) {
      PipelineConfig cfg;
      cfg.bundle = session;
      if (!artifacts.empty()) cfg.artifact_map = artifacts;
      cfg.backend = backend;
      cfg.ocr = load_ocr_config(ocr_config);
      cfg.match.threshold = threshold;
      cfg.consolidation = {min_interval, max_gap};
      if (!filters.empty()) cfg.filters = filters;
      if (!patterns.empty()) cfg.patterns = patterns;
      if (!stoplist.empty()) cfg.stoplist = stoplist;
      cfg.match_blocks = !no_blocks;
      cfg.parallelism = threads;
      const auto report = run_pipeline(cfg);
      if (json) {
        std::cout << report.to_json().dump(2) << "\n";
      } else {
        for (const auto& s : report.stages) {
          std::printf("%-10s %9.1f ms  %zu\n", s.name.c_str(), s.millis, s.count);
        }
        std::printf("%zu annotations (%zu new)\n", report.annotations.size(), report.appended);
      }
      return 0;
    }
    if (*evaluate) return cmd_evaluate(session, groundtruth, out);
    if (*exp) return cmd_export(session, scatter, timeline, format, artifacts, out);
    if (*sample) return cmd_sample(root, n, seed, exclude, out);
    if (*label) return cmd_label(session, sample_file, out);
    if (*map_cmd) return cmd_map(map_file);
    if (*serve) {
      const auto [host, port] = parse_bind_address(bind);
      Service service(root);
      service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << root << " on " << host << ":" << port << "\n";
      service.run();
      g_service = nullptr;
      return 0;
    }
    if (*demo) {
      write_scenario(demo_dir, demo_scenario());
      std::cout << "wrote demo bundle to " << demo_dir << "\n";
      return 0;
    }
    if (*defaults) return cmd_defaults(defaults_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
