#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "annotrace/artifacts.hpp"
#include "annotrace/image.hpp"
#include "annotrace/ocr.hpp"
#include "annotrace/session.hpp"

namespace annotrace {

// Synthetic screens: flat panels, CFG node boxes and block glyphs standing
// in for text, plus the matching OCR sidecar tokens.

inline constexpr int kGlyphWidth = 5;
inline constexpr int kLineHeight = 10;

struct ScreenText {
  std::string text;
  int x = 0;
  int y = 0;
  BBox box() const { return {x, y, static_cast<int>(text.size()) * kGlyphWidth, kLineHeight}; }
};

struct Screen {
  std::vector<BBox> panels;  // dialogs and side windows
  std::vector<BBox> nodes;   // graph nodes; drawn white with a 1px border
  std::vector<ScreenText> texts;

  /// One text item per space-separated word, laid out from (x, y).
  void add_words(std::string_view line, int x, int y);
  void add_text(std::string text, int x, int y) { texts.push_back({std::move(text), x, y}); }
};

struct Palette {
  Rgba canvas{228, 230, 235, 255};
  Rgba panel{206, 210, 218, 255};
  Rgba node{255, 255, 255, 255};
  Rgba border{90, 90, 90, 255};
  Rgba ink{30, 30, 34, 255};
};

Image render_screen(const Screen& screen, int width, int height, const Palette& palette = {});
std::vector<OcrToken> screen_tokens(const Screen& screen);

struct ScenarioFrame {
  Timestamp t;
  Screen screen;
};

struct Scenario {
  SessionManifest manifest;
  int width = 400;
  int height = 280;
  std::vector<ScenarioFrame> frames;
  std::vector<EventRecord> events;  // time-sorted
  BinaryArtifactMap map;
};

/// Writes the bundle, the ocr_mock/ sidecars and artifacts/<binary_id>.json.
void write_scenario(const std::filesystem::path& dir, const Scenario& scenario);

/// A short Ghidra session: open a function by double click, rename it to
/// "main", relabel a global, follow a reference into a second function and
/// rename a local there.
Scenario demo_scenario();

/// UTC timestamp on the demo date.
Timestamp demo_time(int hour, int minute, int second, int millis = 0);

}  // namespace annotrace
