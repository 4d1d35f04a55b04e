#include "annotrace/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "annotrace/png.hpp"

namespace annotrace {

namespace fs = std::filesystem;
namespace jf = json_field;

namespace {

std::string without_kind_prefix(const char* what) {
  std::string_view s(what);
  const auto colon = s.find(": ");
  return std::string(colon == std::string_view::npos ? s : s.substr(colon + 2));
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

class MatcherPool {
 public:
  std::shared_ptr<const FunctionMatcher> get(const std::shared_ptr<const SymbolIndex>& view) {
    std::lock_guard lock(mu_);
    auto& slot = pool_[view.get()];
    if (!slot) slot = std::make_shared<const FunctionMatcher>(view);
    return slot;
  }

 private:
  std::mutex mu_;
  std::map<const SymbolIndex*, std::shared_ptr<const FunctionMatcher>> pool_;
};

}  // namespace

StageError::StageError(std::string stage, const Error& cause)
    : Error(cause.kind(), stage + " stage: " + without_kind_prefix(cause.what())), stage_(std::move(stage)) {}

void parallel_chunks(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first;
  std::mutex mu;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------

Json frame_match_to_json(const FrameMatchRecord& r) {
  Json j;
  j["frame_index"] = r.frame_index;
  j["t"] = r.t.millis_utc;
  if (r.match.function) {
    j["function"] = format_address(r.match.function->entry);
    j["score"] = r.match.function->score;
    j["via"] = r.match.function->via_symbol;
    j["support"] = r.match.function->support;
  } else {
    j["function"] = nullptr;
    j["score"] = nullptr;
    j["via"] = nullptr;
    j["support"] = nullptr;
  }
  j["blocks"] = Json::array();
  for (auto b : r.blocks) j["blocks"].push_back(format_address(b));
  return j;
}

FrameMatchRecord frame_match_from_json(const Json& j, std::string_view where) {
  FrameMatchRecord r;
  r.frame_index = static_cast<int>(jf::integer(j, "frame_index", where));
  r.t = Timestamp{jf::integer(j, "t", where)};
  r.match.frame_index = r.frame_index;
  const auto& f = jf::require(j, "function", where);
  if (!f.is_null()) {
    r.match.function = FunctionLabel{parse_address(f, where), static_cast<int>(jf::integer(j, "score", where)),
                                     jf::string(j, "via", where), static_cast<int>(jf::integer(j, "support", where))};
  }
  for (const auto& b : jf::array(j, "blocks", where)) r.blocks.push_back(parse_address(b, where));
  return r;
}

std::vector<FrameMatchRecord> load_matches(const fs::path& bundle_root) {
  const auto path = bundle_root / "matches.jsonl";
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "no matches.jsonl in " + bundle_root.string() + "; run annotate first");
  const auto text = read_text(path);
  std::vector<FrameMatchRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const auto where = "matches.jsonl:" + std::to_string(line_no);
    out.push_back(frame_match_from_json(parse_json(line, where), where));
  }
  return out;
}

const StageTiming* PipelineReport::stage(std::string_view name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Json PipelineReport::to_json() const {
  Json j;
  j["session_id"] = session_id;
  j["consolidation"] = {{"min_interval_ms", consolidation.min_interval_ms}, {"max_gap_ms", consolidation.max_gap_ms}};
  j["stages"] = Json::array();
  for (const auto& s : stages) j["stages"].push_back({{"name", s.name}, {"millis", s.millis}, {"count", s.count}});
  j["annotations"] = annotations.size();
  j["appended"] = appended;
  j["renames"] = Json::array();
  for (const auto& r : renames) {
    j["renames"].push_back({{"t", r.t.millis_utc},
                            {"scope", to_string(r.scope)},
                            {"old", r.old_name},
                            {"new", r.new_name}});
  }
  return j;
}

fs::path default_artifact_path(const fs::path& bundle_root, const SessionManifest& m) {
  return bundle_root / "artifacts" / (m.binary_id + ".json");
}

ConsolidationConfig recorded_consolidation(const fs::path& bundle_root) {
  ConsolidationConfig cfg;
  const auto path = bundle_root / "pipeline.json";
  if (!fs::exists(path)) return cfg;
  const auto j = parse_json(read_text(path), "pipeline.json");
  if (j.contains("consolidation")) {
    const auto& c = j.at("consolidation");
    cfg.min_interval_ms = jf::integer(c, "min_interval_ms", "pipeline.json");
    cfg.max_gap_ms = jf::integer(c, "max_gap_ms", "pipeline.json");
  }
  return cfg;
}

std::string scatter_from_bundle(const fs::path& bundle_root, const BinaryArtifactMap& map,
                                const std::optional<ConsolidationConfig>& cfg) {
  const auto records = load_matches(bundle_root);
  std::vector<TimedMatch> timed;
  timed.reserve(records.size());
  for (const auto& r : records) timed.push_back({r.t, r.match});
  const auto intervals = consolidate_intervals(timed, cfg.value_or(recorded_consolidation(bundle_root)));
  return export_scatter_csv(intervals, timed, map);
}

// ---------------------------------------------------------------------------

PipelineReport run_pipeline(const PipelineConfig& cfg) {
  PipelineReport report;
  report.consolidation = cfg.consolidation;

  auto stage = [&](const std::string& name, auto&& body) {
    const auto start = std::chrono::steady_clock::now();
    std::size_t count = 0;
    try {
      count = body();
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(name, e);
    } catch (const std::exception& e) {
      throw StageError(name, Error(ErrorKind::IoFailure, e.what()));
    }
    const std::chrono::duration<double, std::milli> took = std::chrono::steady_clock::now() - start;
    report.stages.push_back({name, took.count(), count});
  };

  std::optional<SessionBundle> bundle;
  stage("ingest", [&] {
    bundle.emplace(load_bundle(cfg.bundle));
    report.session_id = bundle->manifest().session_id;
    return static_cast<std::size_t>(bundle->frame_count());
  });
  const auto& manifest = bundle->manifest();
  const auto n = static_cast<std::size_t>(bundle->frame_count());

  BinaryArtifactMap map;
  std::optional<SymbolTimeline> timeline;
  stage("artifacts", [&] {
    const auto path = cfg.artifact_map.value_or(default_artifact_path(cfg.bundle, manifest));
    if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "artifact map " + path.string() + " not found");
    map = import_artifact_map(path);
    const auto unstripped = path.parent_path() / (path.stem().string() + ".unstripped.json");
    if (fs::exists(unstripped)) attach_original_names(map, import_artifact_map(unstripped));
    auto stoplist = std::make_shared<const Stoplist>(cfg.stoplist ? Stoplist::from_file(*cfg.stoplist) : Stoplist::defaults());
    timeline.emplace(build_symbol_index(map, std::move(stoplist)));
    return map.functions.size();
  });

  std::vector<OcrFrame> ocr(n);
  std::vector<Timestamp> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = bundle->frame(static_cast<int>(i)).t;
  stage("ocr", [&] {
    make_backend(cfg.backend);  // fail early on an unknown or missing engine
    parallel_chunks(n, cfg.parallelism, [&](std::size_t b, std::size_t e) {
      auto backend = make_backend(cfg.backend);
      FrameReader reader(*bundle);
      for (std::size_t i = b; i < e; ++i) ocr[i] = run_ocr(*bundle, static_cast<int>(i), *backend, cfg.ocr, &reader);
    });
    return n;
  });

  std::vector<TypedWord> words;
  std::vector<ClickedToken> clicks;
  std::vector<FeatureSpan> spans;
  stage("events", [&] {
    words = aggregate_keystrokes(bundle->events(), cfg.keys);
    clicks = resolve_clicks(*bundle, ocr, cfg.clicks);
    const auto patterns = cfg.patterns ? load_patterns(*cfg.patterns) : default_patterns();
    std::vector<std::optional<FeatureWindow>> windows(n);
    for (std::size_t i = 0; i < n; ++i) windows[i] = detect_feature_window(ocr[i], patterns, manifest.tool_hint);
    spans = feature_spans(windows, times);
    return words.size() + clicks.size() + spans.size();
  });

  std::vector<Annotation> annotations;
  stage("renames", [&] {
    RenameInputs in{manifest.session_id, times, ocr, spans, words, clicks, cfg.match};
    auto renames = detect_renames(in, *timeline);
    annotations.insert(annotations.end(), renames.begin(), renames.end());
    report.renames.assign(timeline->renames().begin(), timeline->renames().end());
    return report.renames.size();
  });

  std::vector<TimedMatch> timed(n);
  stage("matching", [&] {
    MatcherPool pool;
    parallel_chunks(n, cfg.parallelism, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto matcher = pool.get(timeline->index_at(times[i]));
        timed[i] = {times[i], matcher->match(ocr[i], cfg.match)};
      }
    });
    return static_cast<std::size_t>(std::count_if(timed.begin(), timed.end(), [](const TimedMatch& m) {
      return m.match.is_function();
    }));
  });

  std::vector<std::vector<Address>> frame_blocks(n);
  stage("annotate", [&] {
    const auto intervals = consolidate_intervals(timed, cfg.consolidation);
    auto add = [&](std::vector<Annotation> v) { annotations.insert(annotations.end(), v.begin(), v.end()); };
    add(function_view_annotations(manifest.session_id, intervals, *timeline));
    add(annotate_navigation(manifest.session_id, clicks, intervals, map, spans, *timeline, cfg.navigation));
    add(annotate_feature_use(manifest.session_id, spans, words));

    if (cfg.match_blocks) {
      const Json doc = cfg.filters ? parse_json(read_text(*cfg.filters), cfg.filters->string()) : default_filters_json();
      const auto filters = filters_for_tool(doc, manifest.tool_hint);
      std::vector<std::vector<Annotation>> per_frame(n);
      parallel_chunks(n, cfg.parallelism, [&](std::size_t b, std::size_t e) {
        FrameReader reader(*bundle);
        for (std::size_t i = b; i < e; ++i) {
          const auto& label = timed[i].match.function;
          if (!label) continue;
          const auto* fn = map.find_function(label->entry);
          if (fn == nullptr) continue;
          const auto rects = detect_block_rects(reader.reconstruct(static_cast<int>(i)), filters);
          if (rects.empty()) continue;
          const auto bm = match_blocks(ocr[i], rects, *fn, cfg.block_accept_ratio);
          for (const auto& m : bm) {
            if (m.block) frame_blocks[i].push_back(m.block->block);
          }
          per_frame[i] = block_view_annotations(manifest.session_id, times[i], static_cast<int>(i), bm);
        }
      });
      for (auto& v : per_frame) add(std::move(v));
    }
    sort_annotations(annotations);
    return annotations.size();
  });

  stage("export", [&] {
    for (std::size_t i = 0; i < n; ++i) {
      report.matches.push_back({static_cast<int>(i), times[i], timed[i].match, frame_blocks[i]});
    }
    std::string lines;
    for (const auto& r : report.matches) lines += frame_match_to_json(r).dump() + "\n";
    write_file_atomic(cfg.bundle / "matches.jsonl", lines);
    AnnotationLog log(cfg.bundle / "annotations.jsonl");
    report.appended = log.append_new(annotations);
    report.annotations = annotations;
    return report.appended;
  });
  write_file_atomic(cfg.bundle / "pipeline.json", report.to_json().dump(2) + "\n");
  return report;
}

}  // namespace annotrace
