#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "annotrace/annotate.hpp"
#include "annotrace/artifacts.hpp"
#include "annotrace/error.hpp"
#include "annotrace/input_events.hpp"
#include "annotrace/matchers.hpp"
#include "annotrace/ocr.hpp"
#include "annotrace/session.hpp"

namespace annotrace {

struct PipelineConfig {
  std::filesystem::path bundle;
  /// Defaults to <bundle>/artifacts/<binary_id>.json.
  std::optional<std::filesystem::path> artifact_map;
  std::string backend = "mock";
  OcrConfig ocr;
  MatchOptions match;
  ConsolidationConfig consolidation;
  std::optional<std::filesystem::path> filters;
  std::optional<std::filesystem::path> patterns;
  std::optional<std::filesystem::path> stoplist;
  KeystrokeOptions keys;
  ClickOptions clicks;
  NavigationOptions navigation;
  bool match_blocks = true;
  double block_accept_ratio = 0.3;
  int parallelism = 0;  // 0: one worker per hardware thread
};

/// An error raised inside a pipeline stage; what() starts with the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageTiming {
  std::string name;
  double millis = 0;
  std::size_t count = 0;
};

/// Per-frame output of the matching stages, persisted as matches.jsonl.
struct FrameMatchRecord {
  int frame_index = 0;
  Timestamp t;
  FunctionMatch match;
  std::vector<Address> blocks;
  bool operator==(const FrameMatchRecord&) const = default;
};

Json frame_match_to_json(const FrameMatchRecord& r);
FrameMatchRecord frame_match_from_json(const Json& j, std::string_view where);
std::vector<FrameMatchRecord> load_matches(const std::filesystem::path& bundle_root);

struct PipelineReport {
  std::string session_id;
  std::vector<StageTiming> stages;
  std::vector<Annotation> annotations;  // this run's auto annotations, sorted
  std::vector<FrameMatchRecord> matches;
  std::vector<RenameEvent> renames;
  std::size_t appended = 0;  // records new to annotations.jsonl
  ConsolidationConfig consolidation;

  const StageTiming* stage(std::string_view name) const;
  Json to_json() const;
};

/// ingest -> artifacts -> ocr -> events -> renames -> matching -> annotate -> export.
/// Throws StageError naming the failing stage.
PipelineReport run_pipeline(const PipelineConfig& cfg);

/// Consolidation settings recorded by the last pipeline run, else defaults.
ConsolidationConfig recorded_consolidation(const std::filesystem::path& bundle_root);

/// Scatter CSV from matches.jsonl and the recorded consolidation settings.
std::string scatter_from_bundle(const std::filesystem::path& bundle_root, const BinaryArtifactMap& map,
                                const std::optional<ConsolidationConfig>& cfg = std::nullopt);

std::filesystem::path default_artifact_path(const std::filesystem::path& bundle_root, const SessionManifest& m);

/// Runs fn(begin, end) over contiguous chunks of [0, n) on up to `threads`
/// workers; rethrows the first exception after all workers finish.
void parallel_chunks(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace annotrace
