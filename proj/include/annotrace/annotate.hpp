#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annotrace/artifacts.hpp"
#include "annotrace/input_events.hpp"
#include "annotrace/json.hpp"
#include "annotrace/matchers.hpp"
#include "annotrace/timestamp.hpp"

namespace annotrace {

inline constexpr std::string_view kToolVersion = "annotrace 0.1.0";

enum class AnnotationKind { FunctionView, BlockView, Navigation, Rename, FeatureUse, Comment, TaskMark };
enum class AnnotationStatus { Suggested, Confirmed, Rejected, Manual };

std::string_view to_string(AnnotationKind k);
std::string_view to_string(AnnotationStatus s);
AnnotationKind annotation_kind_from_string(std::string_view s);  // throws SchemaViolation
AnnotationStatus annotation_status_from_string(std::string_view s);

struct Provenance {
  bool automatic = true;
  std::string who;  // tool version for auto, author id for human
  bool operator==(const Provenance&) const = default;
};

/// One record of the annotation log. Edits append a new revision with the
/// same id; `predecessor` names the revision it replaces ("<id>@<revision>").
struct Annotation {
  std::string id;
  int revision = 1;
  std::optional<std::string> predecessor;
  std::string session_id;
  AnnotationKind kind = AnnotationKind::Comment;
  Timestamp t_start;
  std::optional<Timestamp> t_end;
  Json payload = Json::object();
  AnnotationStatus status = AnnotationStatus::Suggested;
  Provenance provenance;

  bool operator==(const Annotation&) const = default;
};

/// Payload keys required for each kind, in canonical order.
std::span<const std::string_view> payload_keys(AnnotationKind kind);
/// Throws Error(SchemaViolation) when the payload keys differ from the
/// kind's fixed set or t_end precedes t_start.
void validate_annotation(const Annotation& a);

Json annotation_to_json(const Annotation& a);
Annotation annotation_from_json(const Json& j, std::string_view where);

/// Deterministic id for an auto annotation, derived from its content.
std::string auto_annotation_id(const Annotation& a);
Annotation make_auto_annotation(std::string session_id, AnnotationKind kind, Timestamp t_start,
                                std::optional<Timestamp> t_end, Json payload);

/// (t_start, t_end with points first, kind, id).
bool annotation_less(const Annotation& a, const Annotation& b);
void sort_annotations(std::vector<Annotation>& v);

// --- function intervals ----------------------------------------------------

struct ConsolidationConfig {
  std::int64_t min_interval_ms = 5000;
  std::int64_t max_gap_ms = 10000;
};

struct TimedMatch {
  Timestamp t;
  FunctionMatch match;
};

struct FunctionInterval {
  Address entry = 0;
  Timestamp t_start;
  Timestamp t_end;
  std::vector<std::size_t> samples;  // indices of the matches that make up the interval
  bool operator==(const FunctionInterval&) const = default;
};

/// Runs of equal labels; NoFunction runs removed; runs shorter than
/// min_interval dropped (unless it is 0); then neighbouring runs of the same
/// function merged when the gap between them is at most max_gap.
std::vector<FunctionInterval> consolidate_intervals(std::span<const TimedMatch> matches,
                                                    const ConsolidationConfig& cfg);

/// FunctionView annotations; display names come from the timeline view at
/// each interval's start.
std::vector<Annotation> build_function_intervals(const std::string& session_id, std::span<const TimedMatch> matches,
                                                 const ConsolidationConfig& cfg, const SymbolTimeline& timeline);
std::vector<Annotation> function_view_annotations(const std::string& session_id,
                                                  std::span<const FunctionInterval> intervals,
                                                  const SymbolTimeline& timeline);

// --- renames -----------------------------------------------------------------

struct RenameInputs {
  std::string session_id;
  std::span<const Timestamp> frame_times;
  std::span<const OcrFrame> ocr;
  std::span<const FeatureSpan> spans;
  std::span<const TypedWord> words;
  std::span<const ClickedToken> clicks;
  MatchOptions match;
  /// A click older than this (relative to the dialog) does not name the target.
  std::int64_t click_window_ms = 30000;
};

/// Sequential pass over rename-class feature spans. Appends a RenameEvent
/// to `timeline` for every resolvable rename; an unresolvable one yields a
/// suggested annotation with an empty old name and no event.
std::vector<Annotation> detect_renames(const RenameInputs& in, SymbolTimeline& timeline);

// --- navigation and feature use -------------------------------------------

struct NavigationOptions {
  std::int64_t double_click_window_ms = 5000;
  std::int64_t xref_window_ms = 15000;
  std::int64_t search_window_ms = 15000;
};

/// True for tokens like "References to X" / "xrefs to X", or a hex address
/// that is a cross-reference endpoint.
bool is_xref_token(std::string_view text, const BinaryArtifactMap& map);

/// Each function change (interval start) is attributed to at most one
/// navigation: double_click, then xref_click, then search, then the most
/// recent evidence strictly before the change.
std::vector<Annotation> annotate_navigation(const std::string& session_id, std::span<const ClickedToken> clicks,
                                            std::span<const FunctionInterval> intervals,
                                            const BinaryArtifactMap& map, std::span<const FeatureSpan> spans,
                                            const SymbolTimeline& timeline, const NavigationOptions& options = {});

std::vector<Annotation> annotate_feature_use(const std::string& session_id, std::span<const FeatureSpan> spans,
                                             std::span<const TypedWord> words);

/// Point annotations, one per matched block per frame.
std::vector<Annotation> block_view_annotations(const std::string& session_id, Timestamp t, int frame_index,
                                               std::span<const BlockMatch> matches);

// --- export ------------------------------------------------------------------

std::string export_timeline_jsonl(std::span<const Annotation> annotations);
std::vector<Annotation> import_timeline_jsonl(std::string_view text, std::string_view where);
/// Header t_start,t_end,kind,payload,status; payload as compact JSON.
std::string export_timeline_csv(std::span<const Annotation> annotations);

/// One row (t, ordinal) per match sample inside kept intervals; ordinal is
/// the function's 1-based rank by entry address.
std::string export_scatter_csv(std::span<const FunctionInterval> intervals, std::span<const TimedMatch> matches,
                               const BinaryArtifactMap& map);

// --- annotation log ----------------------------------------------------------

/// Append-only annotations.jsonl. Reads fold the log to the latest revision
/// of each id. Not internally synchronized; callers serialize writers.
class AnnotationLog {
 public:
  explicit AnnotationLog(std::filesystem::path file) : file_(std::move(file)) {}

  const std::filesystem::path& file() const { return file_; }
  std::vector<Annotation> records() const;
  /// Latest revision per id, sorted.
  std::vector<Annotation> current() const;
  std::optional<Annotation> find(const std::string& id) const;

  void append(const Annotation& a);
  /// Appends annotations whose id is not yet in the log; returns how many.
  std::size_t append_new(std::span<const Annotation> annotations);

 private:
  std::filesystem::path file_;
};

/// Latest revision per id from a record sequence, sorted.
std::vector<Annotation> fold_log(std::span<const Annotation> records);

}  // namespace annotrace
