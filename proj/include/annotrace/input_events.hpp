#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annotrace/image.hpp"
#include "annotrace/json.hpp"
#include "annotrace/ocr.hpp"
#include "annotrace/session.hpp"
#include "annotrace/timestamp.hpp"

namespace annotrace {

struct TypedWord {
  std::string text;
  Timestamp t_start;
  Timestamp t_end;
  bool operator==(const TypedWord&) const = default;
};

struct ClickedToken {
  Timestamp t;
  OcrToken token;
  int click_count = 1;
  int frame_index = 0;  // OCR frame the token was read from
  bool operator==(const ClickedToken&) const = default;
};

enum class Feature { RenameFunction, RenameLocal, EditLabel, DefineName, FindReferences, FindString, SearchFunctions, Other };

std::string_view to_string(Feature f);
/// Unknown names map to Feature::Other.
Feature feature_from_string(std::string_view name);
/// Features whose dialogs change a name.
bool is_rename_feature(Feature f);

struct FeatureWindow {
  int frame_index = 0;
  Feature feature = Feature::Other;
  std::string name;  // table name; differs from to_string(feature) only for Other
  BBox title_token_bbox;
  bool operator==(const FeatureWindow&) const = default;
};

struct FeaturePattern {
  std::string feature;  // feature name or a free-form label for Other
  std::vector<std::string> phrases;
  std::optional<std::string> tool_hint;
};

/// Ordered by priority, highest first.
using PatternTable = std::vector<FeaturePattern>;

PatternTable default_patterns();
Json patterns_to_json(const PatternTable& table);
PatternTable patterns_from_json(const Json& doc);
PatternTable load_patterns(const std::filesystem::path& file);

struct KeystrokeOptions {
  std::int64_t gap_ms = 2000;
};

enum class KeyClass { Char, Erase, Boundary, Dropped };

/// How aggregation treats one key event. Chords with ctrl/alt/meta are
/// dropped; shift is allowed.
KeyClass classify_key(const Keystroke& key);
/// The character a Char key contributes ("Space" is a blank).
char key_char(const Keystroke& key);

/// Combines keystrokes into words. Clicks in `events` act as word
/// boundaries; other event types are ignored.
std::vector<TypedWord> aggregate_keystrokes(std::span<const EventRecord> events, const KeystrokeOptions& options = {});

struct ClickOptions {
  std::int64_t staleness_ms = 2000;
  std::int64_t double_click_ms = 400;
  int radius = 12;
};

/// `ocr` holds one OcrFrame per bundle frame, indexed by frame index.
std::optional<ClickedToken> resolve_click(const EventRecord& click, const SessionBundle& bundle,
                                          std::span<const OcrFrame> ocr, const ClickOptions& options = {});

/// Resolves every click and folds two hits on the same token within the
/// double-click window into one ClickedToken with click_count 2.
std::vector<ClickedToken> resolve_clicks(const SessionBundle& bundle, std::span<const OcrFrame> ocr,
                                         const ClickOptions& options = {});

/// First pattern (table order) whose phrase appears as consecutive words at
/// the start of a text line, each word scoring >= 90 against the phrase
/// word. Entries with a tool_hint apply only when `tool` is unset or equal.
std::optional<FeatureWindow> detect_feature_window(const OcrFrame& frame, const PatternTable& patterns,
                                                   const std::optional<std::string>& tool = std::nullopt);

/// A feature observed on consecutive frames. `visible_until` extends to the
/// first later frame without the window (or the last frame's time).
struct FeatureSpan {
  Feature feature = Feature::Other;
  std::string name;
  int first_frame = 0;
  int last_frame = 0;
  Timestamp t_start;
  Timestamp t_end;
  Timestamp visible_until;
  bool operator==(const FeatureSpan&) const = default;
};

/// `windows[i]` is the detection for frame i; `times[i]` its capture time.
std::vector<FeatureSpan> feature_spans(std::span<const std::optional<FeatureWindow>> windows,
                                       std::span<const Timestamp> times);

/// Words overlapping [span.t_start, span.visible_until].
std::vector<TypedWord> words_during(const FeatureSpan& span, std::span<const TypedWord> words);

}  // namespace annotrace
