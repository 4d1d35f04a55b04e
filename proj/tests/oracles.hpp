#pragma once
// Independent reference implementations and fixture generators shared by the
// unit tests and the acceptance suite. Nothing here calls the code under test
// except plain data types and the image/bundle writers.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "annotrace/annotate.hpp"
#include "annotrace/artifacts.hpp"
#include "annotrace/image.hpp"
#include "annotrace/ocr.hpp"
#include "annotrace/session.hpp"

namespace oracle {

using namespace annotrace;
namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("annotrace-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// --- strings -----------------------------------------------------------------

/// Full-matrix Wagner-Fischer with no shortcuts.
inline std::size_t dp_levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  }
  return d[a.size()][b.size()];
}

/// 100 * (1 - d / L) rounded half up, computed in exact integer arithmetic
/// as floor((100 * (L - d) * 2 + L) / (2L)).
inline int dp_similarity(const std::string& a, const std::string& b) {
  const std::size_t len = std::max(a.size(), b.size());
  if (len == 0) return 100;
  const std::size_t d = dp_levenshtein(a, b);
  return static_cast<int>((200 * (len - d) + len) / (2 * len));
}

inline std::string random_string(std::mt19937_64& rng, std::size_t max_len, std::string_view alphabet = "abcde") {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(rng), ' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

// --- keystrokes --------------------------------------------------------------

enum class GenKind { Char, Erase, Boundary, Dropped, Click };

struct GenEvent {
  GenKind kind;
  std::int64_t t;
  char ch = 0;
};

struct KeySequence {
  std::vector<GenEvent> truth;
  std::vector<EventRecord> events;
};

/// Random typing with erases, boundaries, chords, navigation keys and
/// clicks. Gaps are drawn around `gap_ms` so both sides of the boundary and
/// the exact value occur.
inline KeySequence random_key_sequence(std::mt19937_64& rng, int n, std::int64_t gap_ms) {
  static const std::vector<std::string> boundaries = {"Enter", "Return", "Tab", "Escape"};
  static const std::vector<std::string> dropped = {"Shift", "Control", "Alt", "Left", "Right", "Up", "Down",
                                                   "F5",    "Home",    "End", "PageUp", "Meta"};
  KeySequence seq;
  std::int64_t t = 1'600'000'000'000;
  std::uniform_int_distribution<int> roll(0, 99);
  for (int i = 0; i < n; ++i) {
    const int gap_roll = roll(rng);
    if (gap_roll < 70) t += std::uniform_int_distribution<std::int64_t>(0, gap_ms / 4)(rng);
    else if (gap_roll < 80) t += gap_ms;
    else if (gap_roll < 85) t += gap_ms + 1;
    else t += std::uniform_int_distribution<std::int64_t>(gap_ms / 2, gap_ms * 2)(rng);

    const int k = roll(rng);
    GenEvent g{GenKind::Char, t};
    EventRecord e{Timestamp{t}, Keystroke{}};
    if (k < 55) {
      const std::string_view alphabet = "abcxyzAB01_.";
      g.ch = alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
      e.data = Keystroke{std::string(1, g.ch), roll(rng) < 10 ? std::vector<std::string>{"shift"}
                                                               : std::vector<std::string>{}};
    } else if (k < 62) {
      g.ch = ' ';
      e.data = Keystroke{"Space", {}};
    } else if (k < 75) {
      g.kind = GenKind::Erase;
      e.data = Keystroke{roll(rng) < 80 ? "Backspace" : "Delete", {}};
    } else if (k < 80) {
      g.kind = GenKind::Boundary;
      e.data = Keystroke{boundaries[std::uniform_int_distribution<std::size_t>(0, boundaries.size() - 1)(rng)], {}};
    } else if (k < 88) {
      g.kind = GenKind::Dropped;
      e.data = Keystroke{dropped[std::uniform_int_distribution<std::size_t>(0, dropped.size() - 1)(rng)], {}};
    } else if (k < 93) {
      g.kind = GenKind::Dropped;
      e.data = Keystroke{"c", {roll(rng) < 50 ? "ctrl" : "alt"}};
    } else {
      g.kind = GenKind::Click;
      e.data = MouseClick{10, 10, "left", 1};
    }
    seq.truth.push_back(g);
    seq.events.push_back(std::move(e));
  }
  return seq;
}

/// Split the stream into segments first, then replay each segment on a
/// character stack.
inline std::vector<TypedWord> simulate_typing(const std::vector<GenEvent>& truth, std::int64_t gap_ms) {
  std::vector<std::vector<GenEvent>> segments(1);
  for (const auto& g : truth) {
    if (g.kind == GenKind::Dropped) continue;
    if (g.kind == GenKind::Boundary || g.kind == GenKind::Click) {
      segments.emplace_back();
      continue;
    }
    if (!segments.back().empty() && g.t - segments.back().back().t > gap_ms) segments.emplace_back();
    segments.back().push_back(g);
  }
  std::vector<TypedWord> words;
  for (const auto& seg : segments) {
    std::vector<char> stack;
    std::int64_t first_char = -1;
    for (const auto& g : seg) {
      if (g.kind == GenKind::Char) {
        stack.push_back(g.ch);
        if (first_char < 0) first_char = g.t;
      } else if (!stack.empty()) {
        stack.pop_back();
      }
    }
    std::string text(stack.begin(), stack.end());
    while (!text.empty() && text.front() == ' ') text.erase(text.begin());
    while (!text.empty() && text.back() == ' ') text.pop_back();
    if (text.empty()) continue;
    words.push_back({text, Timestamp{first_char}, Timestamp{seg.back().t}});
  }
  return words;
}

// --- intervals ---------------------------------------------------------------

/// Random label sequence over a handful of functions with NoFunction gaps,
/// one sample per `step_ms` with occasional jitter.
inline std::vector<TimedMatch> random_label_sequence(std::mt19937_64& rng, int n, std::int64_t step_ms = 1000) {
  std::vector<TimedMatch> out;
  std::int64_t t = 0;
  std::optional<Address> label;
  std::uniform_int_distribution<int> roll(0, 99);
  for (int i = 0; i < n; ++i) {
    if (i == 0 || roll(rng) < 25) {
      const int pick = std::uniform_int_distribution<int>(0, 4)(rng);
      label = pick == 0 ? std::nullopt : std::optional<Address>(0x1000 * pick);
    }
    FunctionMatch m;
    m.frame_index = i;
    if (label) m.function = FunctionLabel{*label, 100, "x", 1};
    out.push_back({Timestamp{t}, m});
    t += step_ms + std::uniform_int_distribution<std::int64_t>(0, step_ms / 2)(rng);
  }
  return out;
}

struct Run {
  std::optional<Address> label;
  std::size_t first = 0;
  std::size_t last = 0;
};

inline std::vector<Run> label_runs(const std::vector<TimedMatch>& seq) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto label = seq[i].match.function ? std::optional<Address>(seq[i].match.function->entry) : std::nullopt;
    if (!runs.empty() && runs.back().label == label) runs.back().last = i;
    else runs.push_back({label, i, i});
  }
  return runs;
}

// --- artifact fixtures ---------------------------------------------------------

/// Two functions and one call reference.
inline BinaryArtifactMap two_function_map() {
  BinaryArtifactMap m;
  m.binary_id = "two";
  m.functions = {
      {0x1000, "FUN_00001000", {{0x1000, {"PUSH RBP", "CALL hashtableInsert", "RET"}}}},
      {0x2000, "hashtableInsert", {{0x2000, {"MOV EAX,dword ptr [RDI]", "LEA RSI,[bucket_table]", "RET"}}}},
  };
  m.xrefs = {{0x1000, 0x2000, XrefKind::Call}};
  return m;
}

// --- painted CFG screens -----------------------------------------------------

struct PaintedCfg {
  FunctionRecord function;
  Image image;
  OcrFrame ocr;
  std::vector<BBox> node_boxes;        // per block, before occlusion
  std::optional<std::size_t> occluded;  // block index hidden behind a dialog
  std::pair<std::size_t, std::size_t> duplicate_pair{0, 0};
};

inline constexpr int kCharW = 6;
inline constexpr int kRowH = 12;

/// Paints a graph view: white node boxes with a dark border, one glyph box
/// per character, and a grey dialog covering ~90% of one node. OCR tokens
/// are the words left visible.
inline PaintedCfg paint_cfg(std::mt19937_64& rng, int node_count) {
  static const std::vector<std::string> pool = {
      "PUSH RBP",          "MOV RBP,RSP",         "SUB RSP,0x20",        "MOV dword ptr [RBP + local_c],EDI",
      "CMP EAX,0x3f",      "JLE LAB_00101180",    "LEA RDI,[s_Wrong_key_00102004]", "CALL puts",
      "MOV EAX,0x0",       "XOR EDX,EDX",         "MOVZX EAX,byte ptr [RAX]",       "ADD dword ptr [RBP + local_10],0x1",
      "CALL strlen",       "TEST EAX,EAX",        "JNZ LAB_001011c2",    "MOV RDI,RAX",
      "LEA RAX,[DAT_00104010]", "SHL EAX,0x2",     "IMUL EAX,EAX,0x1f",   "CALL validate_serial"};
  PaintedCfg out;
  out.function.entry_address = 0x101100;
  out.function.name = "FUN_00101100";
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t next = 0;
  for (int b = 0; b < node_count; ++b) {
    BlockRecord block;
    block.address = 0x101100 + 0x20 * static_cast<Address>(b);
    const int lines = std::uniform_int_distribution<int>(2, 4)(rng);
    for (int l = 0; l < lines; ++l) block.text_lines.push_back(pool[order[next++ % order.size()]]);
    block.text_lines.front() += " ;" + std::to_string(b);  // keeps blocks distinct
    out.function.blocks.push_back(block);
  }
  // One pair of one-line blocks with identical text.
  const std::size_t da = static_cast<std::size_t>(node_count) - 2, db = static_cast<std::size_t>(node_count) - 1;
  out.function.blocks[da].text_lines = {"JMP LAB_00101200"};
  out.function.blocks[db].text_lines = {"JMP LAB_00101200"};
  out.duplicate_pair = {da, db};

  const int width = 900, height = 700;
  out.image = Image(width, height, Rgba{236, 236, 236, 255});
  std::vector<OcrToken> tokens;
  const int cols = 3;
  for (int b = 0; b < node_count; ++b) {
    const auto& block = out.function.blocks[static_cast<std::size_t>(b)];
    std::size_t longest = 0;
    for (const auto& l : block.text_lines) longest = std::max(longest, l.size());
    const int x = 20 + (b % cols) * 290, y = 20 + (b / cols) * 110;
    const BBox node{x, y, static_cast<int>(longest) * kCharW + 12, static_cast<int>(block.text_lines.size()) * kRowH + 10};
    out.node_boxes.push_back(node);
    out.image.fill_rect(node, Rgba{60, 60, 60, 255});
    out.image.fill_rect({node.x + 1, node.y + 1, node.w - 2, node.h - 2}, Rgba{255, 255, 255, 255});
  }
  // Choose a non-duplicate node to hide and paint the dialog over it after
  // the text, so only its left tenth stays visible.
  const std::size_t hidden = std::uniform_int_distribution<std::size_t>(0, da - 1)(rng);
  out.occluded = hidden;
  const BBox hb = out.node_boxes[hidden];
  const BBox dialog{hb.x + hb.w / 10, hb.y - 4, hb.w, hb.h + 8};

  for (std::size_t b = 0; b < out.function.blocks.size(); ++b) {
    const auto& box = out.node_boxes[b];
    int row = 0;
    for (const auto& line : out.function.blocks[b].text_lines) {
      const int ty = box.y + 5 + row * kRowH;
      std::size_t i = 0;
      while (i < line.size()) {
        if (line[i] == ' ') {
          ++i;
          continue;
        }
        const auto j = std::min(line.find(' ', i), line.size());
        const int tx = box.x + 6 + static_cast<int>(i) * kCharW;
        std::string word = line.substr(i, j - i);
        for (std::size_t c = 0; c < word.size(); ++c) {
          out.image.fill_rect({tx + static_cast<int>(c) * kCharW, ty + 2, kCharW - 1, kRowH - 4}, Rgba{20, 20, 20, 255});
        }
        // Words under the dialog are cut at its left edge.
        if (b == hidden) {
          const int visible = std::max(0, (dialog.x - tx) / kCharW);
          word = word.substr(0, std::min<std::size_t>(word.size(), static_cast<std::size_t>(visible)));
        }
        if (!word.empty()) {
          tokens.push_back({word, {tx, ty, static_cast<int>(word.size()) * kCharW, kRowH}, 96});
        }
        i = j;
      }
      ++row;
    }
  }
  out.image.fill_rect(dialog, Rgba{190, 192, 198, 255});
  sort_tokens(tokens);
  out.ocr.tokens = std::move(tokens);
  return out;
}

// --- synthetic matching corpus -------------------------------------------------

struct CorpusFrame {
  std::vector<std::string> lines;
  std::optional<Address> truth;
};

struct Corpus {
  BinaryArtifactMap map;
  std::vector<CorpusFrame> frames;
};

/// Fixture binary: functions whose blocks mix stoplisted instructions,
/// symbols shared across many functions and a few function-specific ones.
inline BinaryArtifactMap corpus_map(std::mt19937_64& rng, int functions) {
  static const std::vector<std::string> words = {"serial", "license", "bucket", "parse", "token", "cipher",
                                                 "buffer", "header",  "config", "verify", "window", "record",
                                                 "cursor", "packet",  "matrix", "digest", "socket", "stream"};
  static const std::vector<std::string> plain = {"PUSH RBP", "MOV RBP,RSP", "POP RBP", "RET", "XOR EAX,EAX",
                                                 "TEST EAX,EAX", "MOV EAX,EDX", "ADD RSP,0x8", "SUB RSP,0x8",
                                                 "MOV RDI,RAX", "LEAVE", "NOP"};
  static const std::vector<std::string> shared = {"CALL puts", "CALL malloc", "CALL free", "CALL strlen",
                                                  "MOV EAX,dword ptr [RBP + local_c]", "LEA RAX,[RBP + local_18]"};
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  BinaryArtifactMap m;
  m.binary_id = "corpus";
  for (int f = 0; f < functions; ++f) {
    const Address entry = 0x401000 + 0x400 * static_cast<Address>(f);
    char name[32];
    std::snprintf(name, sizeof name, "FUN_%08llx", static_cast<unsigned long long>(entry));
    FunctionRecord fn{entry, name, {}};
    const int blocks = std::uniform_int_distribution<int>(3, 5)(rng);
    for (int b = 0; b < blocks; ++b) {
      BlockRecord block{entry + 0x30 * static_cast<Address>(b), {}};
      const int lines = std::uniform_int_distribution<int>(4, 6)(rng);
      for (int l = 0; l < lines; ++l) {
        const int r = std::uniform_int_distribution<int>(0, 9)(rng);
        char buf[96];
        const auto tag = static_cast<unsigned long long>(entry + 0x10 * static_cast<Address>(b * 8 + l));
        if (r < 5) {
          block.text_lines.push_back(pick(plain));
        } else if (r < 7) {
          block.text_lines.push_back(pick(shared));
        } else if (r < 8) {
          std::snprintf(buf, sizeof buf, "LEA RDI,[s_%s_%s_%08llx]", pick(words).c_str(), pick(words).c_str(), tag);
          block.text_lines.push_back(buf);
        } else if (r < 9) {
          std::snprintf(buf, sizeof buf, "MOV EAX,dword ptr [DAT_%08llx]", tag + 0x100000);
          block.text_lines.push_back(buf);
        } else {
          std::snprintf(buf, sizeof buf, "CALL %s_%s_%llx", pick(words).c_str(), pick(words).c_str(), tag & 0xfff);
          block.text_lines.push_back(buf);
        }
      }
      fn.blocks.push_back(block);
    }
    m.functions.push_back(std::move(fn));
  }
  return m;
}

/// Screens of three kinds: a listing window over one function, a stoplist-
/// only view (registers, flags, hex dump) and a defined-strings table that
/// names string labels from many functions.
inline Corpus make_corpus(std::uint64_t seed, int frames, int functions = 24) {
  std::mt19937_64 rng(seed);
  Corpus c;
  c.map = corpus_map(rng, functions);
  static const std::vector<std::string> chrome = {"File Edit Analysis Navigation Search Window Help",
                                                  "Listing: corpus", "Decompile: none"};
  static const std::vector<std::string> stop_lines = {
      "RAX 0x0 RBX 0x1 RCX 0x7", "RDX RSI RDI RBP RSP", "EAX EBX ECX EDX", "MOV PUSH POP RET",
      "ZF CF SF OF", "XOR TEST CMP JMP", "R8 R9 R10 R11", "LEA CALL NOP LEAVE"};
  std::uniform_int_distribution<int> roll(0, 99);
  for (int i = 0; i < frames; ++i) {
    CorpusFrame frame;
    frame.lines = chrome;
    const int kind = roll(rng);
    if (kind < 65) {
      const auto& fn = c.map.functions[std::uniform_int_distribution<std::size_t>(0, c.map.functions.size() - 1)(rng)];
      std::vector<std::string> all;
      for (const auto& b : fn.blocks) all.insert(all.end(), b.text_lines.begin(), b.text_lines.end());
      const std::size_t window = std::min<std::size_t>(all.size(), 12);
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, all.size() - window)(rng);
      if (start == 0) frame.lines.push_back(fn.name);
      frame.lines.insert(frame.lines.end(), all.begin() + static_cast<std::ptrdiff_t>(start),
                         all.begin() + static_cast<std::ptrdiff_t>(start + window));
      // A listing window always shows something of its own; regenerate
      // windows that happen to hold only shared lines by adding the header.
      frame.truth = fn.entry_address;
      bool own = start == 0;
      for (std::size_t k = start; k < start + window && !own; ++k) {
        own = all[k].find("s_") != std::string::npos || all[k].find("DAT_") != std::string::npos ||
              (all[k].rfind("CALL ", 0) == 0 && all[k].find('_') != std::string::npos &&
               all[k].find("puts") == std::string::npos && all[k].find("malloc") == std::string::npos &&
               all[k].find("strlen") == std::string::npos && all[k].find("free") == std::string::npos);
      }
      if (!own) frame.lines.push_back(fn.name);
    } else if (kind < 82) {
      for (int l = 0; l < 10; ++l) {
        frame.lines.push_back(stop_lines[std::uniform_int_distribution<std::size_t>(0, stop_lines.size() - 1)(rng)]);
      }
    } else {
      frame.lines.push_back("Defined Strings");
      frame.lines.push_back("Location String Value String Representation Data Type");
      std::vector<std::size_t> fns(c.map.functions.size());
      for (std::size_t k = 0; k < fns.size(); ++k) fns[k] = k;
      std::shuffle(fns.begin(), fns.end(), rng);
      int rows = 0;
      for (std::size_t k = 0; k < fns.size() && rows < 10; ++k) {
        for (const auto& b : c.map.functions[fns[k]].blocks) {
          bool found = false;
          for (const auto& l : b.text_lines) {
            const auto p = l.find("[s_");
            if (p == std::string::npos) continue;
            const auto label = l.substr(p + 1, l.size() - p - 2);
            frame.lines.push_back("00" + label.substr(label.size() - 6) + " " + label + " ds");
            found = true;
            break;
          }
          if (found) {
            ++rows;
            break;
          }
        }
      }
    }
    c.frames.push_back(std::move(frame));
  }
  return c;
}

}  // namespace oracle
