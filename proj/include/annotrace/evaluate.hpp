#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "annotrace/artifacts.hpp"
#include "annotrace/json.hpp"
#include "annotrace/matchers.hpp"

namespace annotrace {

struct GroundTruthLabel {
  int frame_index = 0;
  std::optional<Address> truth;  // empty: no function on screen
  std::vector<Address> blocks;   // only with a function
  bool operator==(const GroundTruthLabel&) const = default;
};

/// groundtruth.csv: frame_index,truth,blocks with truth "none" or a hex
/// entry address and blocks as ';'-separated hex addresses.
std::vector<GroundTruthLabel> parse_groundtruth_csv(std::string_view text, std::string_view where);
std::vector<GroundTruthLabel> load_groundtruth(const std::filesystem::path& file);
std::string format_groundtruth_csv(std::span<const GroundTruthLabel> labels);

enum class EvalOutcome { CorrectLabel, WrongFunction, NoFunctionMiss, DetectedFunctionFalse };
std::string_view to_string(EvalOutcome o);

EvalOutcome classify_function_outcome(const FunctionMatch& pred, const GroundTruthLabel& truth);

/// Outcome counts of one dataset, split by whether the frame shows a function.
struct DatasetCounts {
  std::string name;
  int with_function = 0;
  int with_correct = 0;
  int wrong_function = 0;
  int no_function_miss = 0;
  int without_function = 0;
  int without_correct = 0;
  int detected_function_false = 0;

  int total() const { return with_function + without_function; }
  int correct() const { return with_correct + without_correct; }
  /// Throws SchemaViolation when subtotals do not add up.
  void check() const;
  /// `shows_function` is the ground truth side of the frame.
  void add(EvalOutcome o, bool shows_function);
  bool operator==(const DatasetCounts&) const = default;
};

/// Percentage of num/den rounded half up to one decimal.
double percent_1dp(double fraction);

struct EvalReport {
  std::vector<DatasetCounts> datasets;
  DatasetCounts pooled;
  double overall_accuracy = 0;  // fraction, unrounded

  double dataset_percent(std::size_t i) const;
  double overall_percent() const { return percent_1dp(overall_accuracy); }
};

EvalReport summarize_function_eval(std::span<const DatasetCounts> datasets);

struct BlockCounts {
  std::string subject;
  int correct = 0;
  int total = 0;
};

struct BlockReportRow {
  std::string subject;
  int correct = 0;
  int total = 0;
  double overall = 0;  // (correct / total) * function accuracy
};

struct BlockReport {
  std::vector<BlockReportRow> rows;
  BlockReportRow pooled;
  double function_accuracy = 0;
};

/// Each subject's block ratio is scaled by the dataset's pooled function
/// accuracy, not by a per-subject one.
BlockReport summarize_block_eval(std::span<const BlockCounts> subjects, double function_accuracy);

/// Block identifications of one frame: the union of truth and predicted
/// blocks is the denominator, the intersection the numerator.
std::pair<int, int> score_frame_blocks(std::span<const Address> truth, std::span<const Address> predicted);

std::string format_function_report(const EvalReport& r);
std::string format_block_report(const BlockReport& r);
Json function_report_to_json(const EvalReport& r);
Json block_report_to_json(const BlockReport& r);

struct SampleFrames {
  std::string subject;
  std::string session_id;
  int frame_count = 0;
};

struct SampleEntry {
  std::string subject;
  std::string session_id;
  int frame_index = 0;
  auto operator<=>(const SampleEntry&) const = default;
};

using ExclusionSet = std::set<std::pair<std::string, int>>;  // (session_id, frame_index)

/// Lines "session_id,frame_index"; '#' starts a comment.
ExclusionSet parse_exclusions(std::string_view text, std::string_view where);

/// Draws exactly `per_subject_n` frames per subject without replacement,
/// skipping excluded frames. The generator (mt19937_64) is seeded from
/// `seed` and the subject name, so results do not depend on input order.
/// Throws Error(InsufficientFrames).
std::vector<SampleEntry> stratified_sample(std::span<const SampleFrames> sessions, int per_subject_n,
                                           std::uint64_t seed, const ExclusionSet& excluded = {});

std::string format_sample_csv(std::span<const SampleEntry> sample);

}  // namespace annotrace
