#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annotrace/artifacts.hpp"
#include "annotrace/image.hpp"
#include "annotrace/json.hpp"
#include "annotrace/ocr.hpp"

namespace annotrace {

/// Unit-cost edit distance (insert, delete, substitute) over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// round(100 * (1 - levenshtein / max length)), half up; two empty strings
/// score 100.
int similarity_score(std::string_view a, std::string_view b);

struct FunctionLabel {
  Address entry = 0;
  int score = 0;
  std::string via_symbol;
  int support = 0;  // distinct frame tokens at or above threshold for this function
  bool operator==(const FunctionLabel&) const = default;
};

/// Per-screenshot function identification; empty `function` means NoFunction.
struct FunctionMatch {
  int frame_index = 0;
  std::optional<FunctionLabel> function;

  bool is_function() const { return function.has_value(); }
  bool operator==(const FunctionMatch&) const = default;
};

struct MatchOptions {
  int threshold = 85;
  /// Stage-two candidates must share the first character and differ in
  /// length by at most this much.
  int length_band = 3;
  bool prune = true;
  /// The winner must own more than this share of all supporting tokens,
  /// exact and fuzzy; frames whose evidence is spread over many functions
  /// (string tables, symbol lists) are labelled NoFunction.
  double min_support_share = 0.5;
};

/// Distinct sanitized, non-stoplisted candidates from a frame: every token's
/// whole text plus its identifier pieces.
std::vector<std::string> frame_candidates(const OcrFrame& frame, const SymbolIndex& index);

/// Precomputed candidate buckets over one SymbolIndex view.
class FunctionMatcher {
 public:
  explicit FunctionMatcher(std::shared_ptr<const SymbolIndex> index);

  const SymbolIndex& index() const { return *index_; }
  FunctionMatch match(const OcrFrame& frame, const MatchOptions& options = {}) const;

 private:
  struct Key {
    std::string symbol;
    Address entry;
  };
  std::shared_ptr<const SymbolIndex> index_;
  std::map<char, std::vector<Key>> buckets_;
  std::vector<Key> all_;
};

/// Stage one: any exact key hit scores 100. Stage two: best fuzzy score over
/// pruned candidates, kept when >= threshold. Either winner must pass the
/// spread check over both stages' evidence. Ties: higher score, more
/// supporting tokens, lower entry address.
FunctionMatch match_function(const OcrFrame& frame, const SymbolIndex& index, const MatchOptions& options = {});

enum class RectFill { Node, Other };

struct ColorClass {
  Rgba rgb{255, 255, 255, 255};
  int tolerance = 0;  // per channel, inclusive
  RectFill fill_class = RectFill::Node;
  bool operator==(const ColorClass&) const = default;
};

struct RectFilters {
  std::vector<ColorClass> colors;
  int min_width = 24;
  int min_height = 10;
  int max_width = 4096;
  int max_height = 4096;
  bool operator==(const RectFilters&) const = default;
};

/// filters.json: {"<tool>": {node_colors:[{rgb:[r,g,b], tolerance, class}],
/// min_width, min_height, max_width, max_height}, ...}; "generic" is the
/// fallback entry.
Json default_filters_json();
RectFilters filters_for_tool(const Json& doc, const std::optional<std::string>& tool);

struct RectRegion {
  BBox bbox;
  RectFill fill_class = RectFill::Node;
  bool operator==(const RectRegion&) const = default;
};

/// Connected regions of node-coloured pixels whose bounding boxes pass the
/// size filters, sorted by (y, x).
std::vector<RectRegion> detect_block_rects(const Image& img, const RectFilters& filters);

struct BlockMatch {
  RectRegion rect;
  std::optional<BlockRef> block;
  std::size_t distance = 0;
  bool ambiguous = false;
  std::string screen_text;
};

/// Lowercase with whitespace runs collapsed to one space.
std::string normalize_block_text(std::string_view text);

/// Text of the tokens whose centres fall inside `box`, in reading order.
std::string text_in_rect(const OcrFrame& frame, const BBox& box);

/// Assigns node rectangles to the function's blocks by edit distance; a
/// candidate is accepted when distance <= accept_ratio * max(lengths).
/// Greedy by ascending distance; a block is reused only when all blocks
/// sharing its text are taken. Ties in distance mark the match ambiguous.
std::vector<BlockMatch> match_blocks(const OcrFrame& frame, std::span<const RectRegion> rects,
                                     const FunctionRecord& function, double accept_ratio = 0.3);

}  // namespace annotrace
