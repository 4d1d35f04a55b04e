#include "annotrace/input_events.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "annotrace/error.hpp"
#include "annotrace/matchers.hpp"
#include "annotrace/png.hpp"

namespace annotrace {

namespace jf = json_field;

namespace {

constexpr std::array<std::string_view, 8> kFeatureNames = {
    "RenameFunction", "RenameLocal", "EditLabel", "DefineName", "FindReferences", "FindString", "SearchFunctions", "Other"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view to_string(Feature f) { return kFeatureNames[static_cast<std::size_t>(f)]; }

Feature feature_from_string(std::string_view name) {
  for (std::size_t i = 0; i + 1 < kFeatureNames.size(); ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  return Feature::Other;
}

bool is_rename_feature(Feature f) {
  return f == Feature::RenameFunction || f == Feature::RenameLocal || f == Feature::EditLabel ||
         f == Feature::DefineName;
}

// ---------------------------------------------------------------------------

PatternTable default_patterns() {
  return {
      {"RenameFunction", {"Rename Function"}, std::nullopt},
      {"RenameLocal", {"Rename Local Variable", "Rename Variable", "Rename Parameter"}, std::nullopt},
      {"EditLabel", {"Edit Label"}, std::nullopt},
      {"DefineName", {"Rename address"}, "ida"},
      {"DefineName", {"Rename Symbol"}, "binja"},
      {"DefineName", {"Define Name"}, std::nullopt},
      {"FindReferences", {"References to", "xrefs to"}, std::nullopt},
      {"FindString", {"Find String", "Search for Strings", "Text search"}, std::nullopt},
      {"SearchFunctions", {"Search for Functions", "Function Search", "Jump to function"}, std::nullopt},
  };
}

Json patterns_to_json(const PatternTable& table) {
  Json doc = Json::array();
  for (const auto& p : table) {
    Json e{{"feature", p.feature}, {"phrases", p.phrases}};
    if (p.tool_hint) e["tool_hint"] = *p.tool_hint;
    doc.push_back(std::move(e));
  }
  return doc;
}

PatternTable patterns_from_json(const Json& doc) {
  constexpr std::string_view where = "patterns.json";
  if (!doc.is_array()) throw Error(ErrorKind::SchemaViolation, "patterns.json: expected an array");
  PatternTable table;
  for (const auto& e : doc) {
    FeaturePattern p;
    p.feature = jf::string(e, "feature", where);
    for (const auto& ph : jf::array(e, "phrases", where)) {
      if (!ph.is_string() || ph.get<std::string>().empty()) {
        throw Error(ErrorKind::SchemaViolation, "patterns.json: phrases must be non-empty strings");
      }
      p.phrases.push_back(ph.get<std::string>());
    }
    if (e.contains("tool_hint") && !e.at("tool_hint").is_null()) p.tool_hint = jf::string(e, "tool_hint", where);
    table.push_back(std::move(p));
  }
  return table;
}

PatternTable load_patterns(const std::filesystem::path& file) {
  const auto bytes = read_file_bytes(file);
  return patterns_from_json(parse_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                       file.string()));
}

// ---------------------------------------------------------------------------

KeyClass classify_key(const Keystroke& key) {
  for (const auto& m : key.modifiers) {
    const auto l = lower(m);
    if (l == "ctrl" || l == "control" || l == "alt" || l == "meta" || l == "cmd" || l == "command" ||
        l == "super" || l == "win" || l == "altgr") {
      return KeyClass::Dropped;
    }
  }
  if (key.key.size() == 1) {
    const auto c = static_cast<unsigned char>(key.key[0]);
    return c >= 0x20 && c < 0x7f ? KeyClass::Char : KeyClass::Dropped;
  }
  const auto l = lower(key.key);
  if (l == "space") return KeyClass::Char;
  if (l == "backspace" || l == "delete" || l == "del") return KeyClass::Erase;
  if (l == "enter" || l == "return" || l == "tab" || l == "escape" || l == "esc") return KeyClass::Boundary;
  return KeyClass::Dropped;
}

char key_char(const Keystroke& key) { return key.key.size() == 1 ? key.key[0] : ' '; }

std::vector<TypedWord> aggregate_keystrokes(std::span<const EventRecord> events, const KeystrokeOptions& options) {
  std::vector<TypedWord> words;
  std::string buffer;
  bool open = false;
  std::optional<Timestamp> first_char;
  Timestamp last;

  auto flush = [&] {
    if (open) {
      const auto b = buffer.find_first_not_of(' ');
      if (b != std::string::npos && first_char) {
        const auto e = buffer.find_last_not_of(' ');
        words.push_back({buffer.substr(b, e - b + 1), *first_char, last});
      }
    }
    buffer.clear();
    open = false;
    first_char.reset();
  };

  for (const auto& ev : events) {
    if (std::holds_alternative<MouseClick>(ev.data)) {
      flush();
      continue;
    }
    const auto* key = std::get_if<Keystroke>(&ev.data);
    if (key == nullptr) continue;
    const auto cls = classify_key(*key);
    if (cls == KeyClass::Dropped) continue;
    if (cls == KeyClass::Boundary) {
      flush();
      continue;
    }
    if (open && ev.t - last > options.gap_ms) flush();
    open = true;
    last = ev.t;
    if (cls == KeyClass::Char) {
      buffer.push_back(key_char(*key));
      if (!first_char) first_char = ev.t;
    } else if (!buffer.empty()) {
      buffer.pop_back();
    }
  }
  flush();
  return words;
}

// ---------------------------------------------------------------------------

std::optional<ClickedToken> resolve_click(const EventRecord& click, const SessionBundle& bundle,
                                          std::span<const OcrFrame> ocr, const ClickOptions& options) {
  const auto* mc = std::get_if<MouseClick>(&click.data);
  if (mc == nullptr) return std::nullopt;
  const auto frames = bundle.frames();
  auto it = std::upper_bound(frames.begin(), frames.end(), click.t,
                             [](Timestamp t, const FrameRecord& r) { return t < r.t; });
  if (it == frames.begin()) return std::nullopt;
  const auto& rec = *std::prev(it);
  if (click.t - rec.t > options.staleness_ms) return std::nullopt;
  if (rec.index < 0 || static_cast<std::size_t>(rec.index) >= ocr.size()) return std::nullopt;
  auto token = token_at_point(ocr[static_cast<std::size_t>(rec.index)], mc->x, mc->y, options.radius);
  if (!token) return std::nullopt;
  return ClickedToken{click.t, std::move(*token), mc->click_count >= 2 ? 2 : 1, rec.index};
}

std::vector<ClickedToken> resolve_clicks(const SessionBundle& bundle, std::span<const OcrFrame> ocr,
                                         const ClickOptions& options) {
  std::vector<ClickedToken> out;
  for (const auto& ev : bundle.events()) {
    if (!std::holds_alternative<MouseClick>(ev.data)) continue;
    auto ct = resolve_click(ev, bundle, ocr, options);
    if (!ct) continue;
    if (!out.empty()) {
      auto& prev = out.back();
      if (prev.click_count == 1 && ct->t - prev.t <= options.double_click_ms && prev.token.text == ct->token.text &&
          prev.token.bbox == ct->token.bbox) {
        prev.click_count = 2;
        continue;
      }
    }
    out.push_back(std::move(*ct));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Word {
  std::string text;  // lowercased, edge punctuation trimmed
  BBox box;
};

std::vector<Word> frame_words(const OcrFrame& frame) {
  std::vector<Word> out;
  for (const auto& t : frame.tokens) {
    const auto& s = t.text;
    const double len = static_cast<double>(std::max<std::size_t>(s.size(), 1));
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      std::size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j > i) {
        std::size_t a = i, b = j;
        while (a < b && !std::isalnum(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && !std::isalnum(static_cast<unsigned char>(s[b - 1]))) --b;
        if (b > a) {
          const int x0 = t.bbox.x + static_cast<int>(std::floor(t.bbox.w * (static_cast<double>(i) / len)));
          const int x1 = t.bbox.x + static_cast<int>(std::ceil(t.bbox.w * (static_cast<double>(j) / len)));
          out.push_back({lower(std::string_view(s).substr(a, b - a)), BBox{x0, t.bbox.y, std::max(1, x1 - x0), t.bbox.h}});
        }
      }
      i = j;
    }
  }
  return out;
}

bool same_line(const BBox& a, const BBox& b) {
  const int ca = a.y + a.h / 2, cb = b.y + b.h / 2;
  return std::abs(ca - cb) * 2 <= std::max(a.h, b.h);
}

// Index of the word directly right of `i` on its line, if any.
std::optional<std::size_t> next_on_line(const std::vector<Word>& words, std::size_t i) {
  std::optional<std::size_t> best;
  const auto& a = words[i].box;
  for (std::size_t j = 0; j < words.size(); ++j) {
    if (j == i) continue;
    const auto& b = words[j].box;
    if (!same_line(a, b) || b.x < a.right() - 1 || b.x - a.right() > 2 * std::max(a.h, 1)) continue;
    if (!best || b.x < words[*best].box.x) best = j;
  }
  return best;
}

bool starts_line(const std::vector<Word>& words, std::size_t i) {
  const auto& a = words[i].box;
  for (std::size_t j = 0; j < words.size(); ++j) {
    if (j == i) continue;
    const auto& b = words[j].box;
    if (same_line(a, b) && b.right() <= a.x + 1 && a.x - b.right() <= 2 * std::max(a.h, 1)) return false;
  }
  return true;
}

std::vector<std::string> phrase_words(std::string_view phrase) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < phrase.size()) {
    while (i < phrase.size() && phrase[i] == ' ') ++i;
    std::size_t j = i;
    while (j < phrase.size() && phrase[j] != ' ') ++j;
    if (j > i) out.push_back(lower(phrase.substr(i, j - i)));
    i = j;
  }
  return out;
}

std::optional<BBox> find_phrase(const std::vector<Word>& words, const std::vector<std::string>& phrase) {
  if (phrase.empty()) return std::nullopt;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (similarity_score(words[i].text, phrase[0]) < 90 || !starts_line(words, i)) continue;
    BBox box = words[i].box;
    std::size_t cur = i;
    bool ok = true;
    for (std::size_t k = 1; k < phrase.size() && ok; ++k) {
      const auto next = next_on_line(words, cur);
      ok = next && similarity_score(words[*next].text, phrase[k]) >= 90;
      if (ok) {
        cur = *next;
        box = box.united(words[cur].box);
      }
    }
    if (ok) return box;
  }
  return std::nullopt;
}

}  // namespace

std::optional<FeatureWindow> detect_feature_window(const OcrFrame& frame, const PatternTable& patterns,
                                                   const std::optional<std::string>& tool) {
  const auto words = frame_words(frame);
  if (words.empty()) return std::nullopt;
  for (const auto& p : patterns) {
    if (p.tool_hint && tool && *p.tool_hint != *tool) continue;
    for (const auto& phrase : p.phrases) {
      if (auto box = find_phrase(words, phrase_words(phrase))) {
        return FeatureWindow{frame.frame_index, feature_from_string(p.feature), p.feature, *box};
      }
    }
  }
  return std::nullopt;
}

std::vector<FeatureSpan> feature_spans(std::span<const std::optional<FeatureWindow>> windows,
                                       std::span<const Timestamp> times) {
  if (windows.size() != times.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature_spans: windows and times differ in length");
  }
  std::vector<FeatureSpan> out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (!w) continue;
    if (!out.empty() && static_cast<std::size_t>(out.back().last_frame) + 1 == i && out.back().name == w->name) {
      out.back().last_frame = static_cast<int>(i);
      out.back().t_end = times[i];
    } else {
      out.push_back({w->feature, w->name, static_cast<int>(i), static_cast<int>(i), times[i], times[i], times[i]});
    }
  }
  for (auto& s : out) {
    const auto next = static_cast<std::size_t>(s.last_frame) + 1;
    s.visible_until = next < times.size() ? times[next] : s.t_end;
  }
  return out;
}

std::vector<TypedWord> words_during(const FeatureSpan& span, std::span<const TypedWord> words) {
  std::vector<TypedWord> out;
  for (const auto& w : words) {
    if (w.t_end >= span.t_start && w.t_start <= span.visible_until) out.push_back(w);
  }
  return out;
}

}  // namespace annotrace
