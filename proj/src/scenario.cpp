#include "annotrace/scenario.hpp"

#include <algorithm>
#include <functional>

#include "annotrace/error.hpp"
#include "annotrace/png.hpp"

namespace annotrace {

namespace fs = std::filesystem;

void Screen::add_words(std::string_view line, int x, int y) {
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ') {
      ++i;
      continue;
    }
    const auto j = std::min(line.find(' ', i), line.size());
    add_text(std::string(line.substr(i, j - i)), x + static_cast<int>(i) * kGlyphWidth, y);
    i = j;
  }
}

Image render_screen(const Screen& screen, int width, int height, const Palette& palette) {
  Image img(width, height, palette.canvas);
  const BBox frame{0, 0, width, height};
  auto clip = [&](BBox b) {
    const int x0 = std::max(b.x, 0), y0 = std::max(b.y, 0);
    const int x1 = std::min(b.right(), frame.right()), y1 = std::min(b.bottom(), frame.bottom());
    return BBox{x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
  };
  for (const auto& p : screen.panels) img.fill_rect(clip(p), palette.panel);
  for (const auto& n : screen.nodes) {
    img.fill_rect(clip(n), palette.border);
    img.fill_rect(clip({n.x + 1, n.y + 1, n.w - 2, n.h - 2}), palette.node);
  }
  for (const auto& t : screen.texts) {
    for (std::size_t i = 0; i < t.text.size(); ++i) {
      if (t.text[i] == ' ') continue;
      img.fill_rect(clip({t.x + static_cast<int>(i) * kGlyphWidth, t.y + 2, kGlyphWidth - 1, kLineHeight - 4}),
                    palette.ink);
    }
  }
  return img;
}

std::vector<OcrToken> screen_tokens(const Screen& screen) {
  std::vector<OcrToken> out;
  for (const auto& t : screen.texts) out.push_back({t.text, t.box(), 95.0});
  sort_tokens(out);
  return out;
}

void write_scenario(const fs::path& dir, const Scenario& scenario) {
  std::vector<CapturedFrame> frames;
  frames.reserve(scenario.frames.size());
  for (const auto& f : scenario.frames) {
    frames.push_back({f.t, render_screen(f.screen, scenario.width, scenario.height)});
  }
  write_bundle(dir, scenario.manifest, frames, scenario.events);
  fs::create_directories(dir / "ocr_mock");
  for (std::size_t i = 0; i < scenario.frames.size(); ++i) {
    const auto tokens = screen_tokens(scenario.frames[i].screen);
    write_file_atomic(dir / "ocr_mock" / (frame_stem(static_cast<int>(i)) + ".tsv"), format_token_table(tokens));
  }
  fs::create_directories(dir / "artifacts");
  write_file_atomic(dir / "artifacts" / (scenario.map.binary_id + ".json"),
                    artifact_map_to_json(scenario.map).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

Timestamp demo_time(int hour, int minute, int second, int millis) {
  constexpr std::int64_t kDay = 1683676800;  // 2023-05-10T00:00:00Z
  return Timestamp{(kDay + hour * 3600 + minute * 60 + second) * 1000 + millis};
}

namespace {

BinaryArtifactMap demo_map() {
  BinaryArtifactMap m;
  m.binary_id = "crackme-demo";
  m.functions = {
      {0x101000, "FUN_00101000", {{0x101000, {"ENDBR64", "SUB RSP,0x8", "MOV RAX,qword ptr [PTR___gmon_start___00103fe8]", "ADD RSP,0x8", "RET"}}}},
      {0x101230, "FUN_00101230", {{0x101230, {"PUSH RBP", "MOV RBP,RSP", "LEA RDI,[s_usage:_crackme_<key>_00102000]", "CALL puts", "POP RBP", "RET"}}}},
      {0x10ed40,
       "FUN_0010ed40",
       {{0x10ed40, {"PUSH RBP", "MOV RBP,RSP", "SUB RSP,0x40", "LEA RDI,[s_Enter_license_key_00102010]", "CALL puts"}},
        {0x10ed62, {"LEA RSI,[local_38]", "CALL read_line", "MOV EAX,dword ptr [DAT_00288bb]", "CMP EAX,0x1000"}},
        {0x10ed80, {"LEA RDI,[local_38]", "CALL FUN_001a3a20", "TEST EAX,EAX", "JZ LAB_0010eda0"}},
        {0x10eda0, {"LEA RDI,[s_Access_denied_00102030]", "CALL puts", "LEAVE", "RET"}}}},
      {0x1a3a20,
       "FUN_001a3a20",
       {{0x1a3a20, {"PUSH RBX", "MOV RBX,RDI", "XOR EAX,EAX", "MOVZX ECX,byte ptr [RBX]", "MOV bVar8, CL"}},
        {0x1a3a44, {"MOV EDX,dword ptr [DAT_00288bb]", "XOR EDX,ECX", "CMP EDX,0x5a17", "SETZ AL", "POP RBX", "RET"}}}},
      {0x1b0010, "FUN_001b0010", {{0x1b0010, {"PUSH RBP", "CALL FUN_00101230", "MOV EDI,0x1", "CALL exit"}}}},
      {0x1c2200, "FUN_001c2200", {{0x1c2200, {"MOV EAX,dword ptr [DAT_002a0040]", "SHL EAX,0x3", "RET"}}}},
  };
  m.globals = {{0x288bb, "DAT_00288bb", "undefined4"}, {0x2a0040, "DAT_002a0040", "undefined4"}};
  m.strings = {{0x102000, "usage: crackme <key>"}, {0x102010, "Enter license key"}, {0x102030, "Access denied"}};
  m.xrefs = {{0x10ed62, 0x288bb, XrefKind::Data},
             {0x1a3a44, 0x288bb, XrefKind::Data},
             {0x10ed80, 0x1a3a20, XrefKind::Call},
             {0x10ed40, 0x102010, XrefKind::String},
             {0x10eda0, 0x102030, XrefKind::String},
             {0x1b0010, 0x101230, XrefKind::Call}};
  return m;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

struct Typed {
  Timestamp first;
  int step_ms;
  std::string text;

  Timestamp last() const { return first + static_cast<std::int64_t>(text.size() - 1) * step_ms; }
  std::string prefix_at(Timestamp t) const {
    if (t < first) return {};
    const auto n = static_cast<std::size_t>((t - first) / step_ms) + 1;
    return text.substr(0, std::min(n, text.size()));
  }
};

struct Point {
  int x;
  int y;
};

Point center_of(const Screen& s, std::string_view text) {
  for (const auto& t : s.texts) {
    if (t.text == text) {
      const auto b = t.box();
      return {b.x + b.w / 2, b.y + b.h / 2};
    }
  }
  throw Error(ErrorKind::SchemaViolation, "demo: no text '" + std::string(text) + "' on screen");
}

}  // namespace

Scenario demo_scenario() {
  Scenario sc;
  sc.map = demo_map();
  sc.manifest.session_id = "demo-s1";
  sc.manifest.subject_pseudonym = "subject-01";
  sc.manifest.binary_id = sc.map.binary_id;
  sc.manifest.tool_hint = "ghidra";
  sc.manifest.start = demo_time(14, 37, 40);
  sc.manifest.end = demo_time(14, 40, 41);
  sc.manifest.capture_interval_ms = 1000;

  const Typed main_word{demo_time(14, 38, 5), 300, "main"};
  const Typed label_word{demo_time(14, 39, 58), 150, "keyplus0x1000"};
  const Typed local_word{demo_time(14, 40, 28, 600), 80, "license key"};
  const auto fn_renamed = demo_time(14, 38, 9, 800);
  const auto label_renamed = demo_time(14, 40, 2, 900);
  const auto local_renamed = demo_time(14, 40, 29, 700);

  auto in = [](Timestamp t, Timestamp a, Timestamp b) { return t >= a && t <= b; };

  auto listing = [&](Screen& s, const FunctionRecord& fn, const std::string& header, Timestamp t) {
    s.add_text(header, 10, 6);
    int y = 20;
    for (const auto& b : fn.blocks) {
      for (auto line : b.text_lines) {
        line = replace_all(line, "DAT_00288bb", t > label_renamed ? "keyplus0x1000" : "DAT_00288bb");
        line = replace_all(line, "bVar8", t > local_renamed ? "license key" : "bVar8");
        s.add_words(line, 10, y);
        y += 12;
      }
    }
  };
  auto dialog = [](Screen& s, const std::string& title, const std::string& field) {
    s.panels.push_back({208, 40, 188, 80});
    s.add_text(title, 214, 44);
    s.add_words(field, 214, 66);
    s.add_text("OK", 214, 100);
    s.add_text("Cancel", 240, 100);
  };

  const auto* ed40 = sc.map.find_function(0x10ed40);
  const auto* a3a20 = sc.map.find_function(0x1a3a20);

  std::vector<EventRecord> events;
  events.push_back({demo_time(14, 37, 40), WindowInfo{"CodeBrowser: crackme-demo", 0, 0, sc.width, sc.height, true}});

  for (int s = 0; s <= 180; ++s) {
    const Timestamp t = demo_time(14, 37, 40, 500) + static_cast<std::int64_t>(s) * 1000;
    Screen screen;
    if (t < demo_time(14, 37, 48, 500)) {
      screen.add_text("Functions", 10, 6);
      int y = 20;
      for (const char* name : {"FUN_00101000", "FUN_00101230", "FUN_0010ed40", "FUN_001A3A20", "FUN_001b0010", "FUN_001c2200"}) {
        screen.add_text(name, 16, y);
        y += 12;
      }
    } else if (t < demo_time(14, 40, 26, 500)) {
      listing(screen, *ed40, t > fn_renamed ? "main" : "FUN_0010ed40", t);
      if (in(t, demo_time(14, 37, 57, 500), demo_time(14, 38, 9, 500))) {
        const auto typed = main_word.prefix_at(t);
        dialog(screen, "Rename Function", typed.empty() ? "FUN_0010ed40" : typed);
      } else if (in(t, demo_time(14, 39, 54, 500), demo_time(14, 40, 2, 500))) {
        const auto typed = label_word.prefix_at(t);
        dialog(screen, "Edit Label", typed.empty() ? "DAT_00288bb" : typed);
      } else if (in(t, demo_time(14, 40, 11, 500), demo_time(14, 40, 12, 500))) {
        screen.panels.push_back({208, 130, 188, 50});
        screen.add_text("Copy", 214, 134);
        screen.add_text("Find References to keyplusOxl000", 214, 148);
        screen.add_text("Bookmark...", 214, 162);
      } else if (in(t, demo_time(14, 40, 15, 500), demo_time(14, 40, 18, 500))) {
        screen.panels.push_back({208, 130, 188, 50});
        screen.add_text("References to keyplus0x1000", 214, 134);
        screen.add_text("001a3a44", 214, 150);
        screen.add_text("READ", 264, 150);
      }
    } else {
      listing(screen, *a3a20, "FUN_001A3A20", t);
      if (in(t, demo_time(14, 40, 28, 500), demo_time(14, 40, 29, 500))) {
        const auto typed = local_word.prefix_at(t);
        dialog(screen, "Rename Local Variable", typed.empty() ? "bVar8" : typed);
      }
    }
    sc.frames.push_back({t, std::move(screen)});
  }

  auto frame_at = [&](Timestamp t) -> const Screen& {
    const Screen* last = &sc.frames.front().screen;
    for (const auto& f : sc.frames) {
      if (f.t > t) break;
      last = &f.screen;
    }
    return *last;
  };
  auto click = [&](Timestamp t, std::string_view text) {
    const auto p = center_of(frame_at(t), text);
    events.push_back({t, MouseClick{p.x, p.y, "left", 1}});
  };
  auto type = [&](const Typed& w) {
    for (std::size_t i = 0; i < w.text.size(); ++i) {
      const std::string key = w.text[i] == ' ' ? "Space" : std::string(1, w.text[i]);
      events.push_back({w.first + static_cast<std::int64_t>(i) * w.step_ms, Keystroke{key, {}}});
    }
  };
  auto key = [&](Timestamp t, std::string name) { events.push_back({t, Keystroke{std::move(name), {}}}); };

  click(demo_time(14, 37, 48, 100), "FUN_0010ed40");
  click(demo_time(14, 37, 48, 350), "FUN_0010ed40");
  type(main_word);
  key(fn_renamed, "Enter");
  click(demo_time(14, 39, 52), "[DAT_00288bb]");
  type(label_word);
  key(label_renamed, "Enter");
  click(demo_time(14, 40, 10), "[keyplus0x1000]");
  click(demo_time(14, 40, 13, 200), "Find References to keyplusOxl000");
  key(demo_time(14, 40, 25, 900), "Enter");
  click(demo_time(14, 40, 26, 800), "bVar8,");
  type(local_word);
  key(local_renamed, "Enter");
  for (int s = 0; s <= 180; s += 15) {
    events.push_back({demo_time(14, 37, 41) + static_cast<std::int64_t>(s) * 1000,
                      ProcessSample{{{"java", 18.0 + (s % 45) / 3.0, 734003200}, {"ghidraRun", 0.4, 5242880}}}});
  }
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  sc.events = std::move(events);
  return sc;
}

}  // namespace annotrace
