#include "annotrace/annotate.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "annotrace/error.hpp"
#include "annotrace/hash.hpp"

namespace annotrace {

namespace jf = json_field;

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"FunctionView", "BlockView", "Navigation", "Rename",
                                                        "FeatureUse",   "Comment",   "TaskMark"};
constexpr std::array<std::string_view, 4> kStatusNames = {"suggested", "confirmed", "rejected", "manual"};

constexpr std::array<std::string_view, 2> kFunctionViewKeys = {"entry", "display_name"};
constexpr std::array<std::string_view, 4> kBlockViewKeys = {"entry", "block", "frame_index", "ambiguous"};
constexpr std::array<std::string_view, 3> kNavigationKeys = {"mechanism", "from", "to"};
constexpr std::array<std::string_view, 3> kRenameKeys = {"scope", "old", "new"};
constexpr std::array<std::string_view, 2> kFeatureUseKeys = {"feature", "text"};
constexpr std::array<std::string_view, 1> kCommentKeys = {"text"};
constexpr std::array<std::string_view, 1> kTaskMarkKeys = {"label"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// Click text without surrounding brackets, commas and blanks.
std::string symbol_text(std::string_view s) {
  auto junk = [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isspace(u) || (std::ispunct(u) && c != '_' && c != '$' && c != '@');
  };
  while (!s.empty() && junk(s.front())) s.remove_prefix(1);
  while (!s.empty() && junk(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string csv_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string_view to_string(AnnotationKind k) { return kKindNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(AnnotationStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

AnnotationKind annotation_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) return static_cast<AnnotationKind>(i);
  }
  throw Error(ErrorKind::SchemaViolation, "unknown annotation kind '" + std::string(s) + "'");
}

AnnotationStatus annotation_status_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == s) return static_cast<AnnotationStatus>(i);
  }
  throw Error(ErrorKind::SchemaViolation, "unknown annotation status '" + std::string(s) + "'");
}

std::span<const std::string_view> payload_keys(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::FunctionView: return kFunctionViewKeys;
    case AnnotationKind::BlockView: return kBlockViewKeys;
    case AnnotationKind::Navigation: return kNavigationKeys;
    case AnnotationKind::Rename: return kRenameKeys;
    case AnnotationKind::FeatureUse: return kFeatureUseKeys;
    case AnnotationKind::Comment: return kCommentKeys;
    case AnnotationKind::TaskMark: return kTaskMarkKeys;
  }
  return {};
}

void validate_annotation(const Annotation& a) {
  const std::string where = "annotation " + a.id;
  if (a.id.empty()) throw Error(ErrorKind::SchemaViolation, "annotation: empty id");
  if (a.revision < 1) throw Error(ErrorKind::SchemaViolation, where + ": revision must be >= 1");
  if (a.t_end && *a.t_end < a.t_start) throw Error(ErrorKind::SchemaViolation, where + ": t_end precedes t_start");
  if (!a.payload.is_object()) throw Error(ErrorKind::SchemaViolation, where + ": payload must be an object");
  const auto keys = payload_keys(a.kind);
  if (a.payload.size() != keys.size()) {
    throw Error(ErrorKind::SchemaViolation, where + ": payload of " + std::string(to_string(a.kind)) + " needs " +
                                                std::to_string(keys.size()) + " keys");
  }
  for (auto k : keys) {
    if (!a.payload.contains(std::string(k))) {
      throw Error(ErrorKind::SchemaViolation, where + ": payload is missing '" + std::string(k) + "'");
    }
  }
}

Json annotation_to_json(const Annotation& a) {
  Json j;
  j["id"] = a.id;
  j["revision"] = a.revision;
  j["predecessor"] = a.predecessor ? Json(*a.predecessor) : Json(nullptr);
  j["session_id"] = a.session_id;
  j["kind"] = to_string(a.kind);
  j["t_start"] = a.t_start.millis_utc;
  j["t_end"] = a.t_end ? Json(a.t_end->millis_utc) : Json(nullptr);
  // Payload keys are written in the kind's canonical order.
  Json payload = Json::object();
  for (auto k : payload_keys(a.kind)) {
    const std::string key(k);
    if (a.payload.contains(key)) payload[key] = a.payload.at(key);
  }
  for (const auto& [k, v] : a.payload.items()) {
    if (!payload.contains(k)) payload[k] = v;
  }
  j["payload"] = std::move(payload);
  j["status"] = to_string(a.status);
  j["provenance"] = a.provenance.automatic ? Json{{"source", "auto"}, {"version", a.provenance.who}}
                                           : Json{{"source", "human"}, {"author", a.provenance.who}};
  return j;
}

Annotation annotation_from_json(const Json& j, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": expected an object");
  Annotation a;
  a.id = jf::string(j, "id", where);
  a.revision = static_cast<int>(jf::integer(j, "revision", where));
  if (j.contains("predecessor") && !j.at("predecessor").is_null()) a.predecessor = jf::string(j, "predecessor", where);
  a.session_id = jf::string(j, "session_id", where);
  a.kind = annotation_kind_from_string(jf::string(j, "kind", where));
  a.t_start = Timestamp{jf::integer(j, "t_start", where)};
  if (j.contains("t_end") && !j.at("t_end").is_null()) a.t_end = Timestamp{jf::integer(j, "t_end", where)};
  a.payload = jf::require(j, "payload", where);
  a.status = annotation_status_from_string(jf::string(j, "status", where));
  const auto& prov = jf::require(j, "provenance", where);
  const auto source = jf::string(prov, "source", where);
  if (source == "auto") {
    a.provenance = {true, jf::string(prov, "version", where)};
  } else if (source == "human") {
    a.provenance = {false, jf::string(prov, "author", where)};
  } else {
    throw Error(ErrorKind::SchemaViolation, std::string(where) + ": provenance source must be auto or human");
  }
  validate_annotation(a);
  return a;
}

std::string auto_annotation_id(const Annotation& a) {
  std::string key = a.session_id;
  key += '\n';
  key += to_string(a.kind);
  key += '\n' + std::to_string(a.t_start.millis_utc) + '\n';
  key += a.t_end ? std::to_string(a.t_end->millis_utc) : "-";
  key += '\n' + annotation_to_json(a)["payload"].dump();
  return "a-" + sha256_hex(key).substr(0, 16);
}

Annotation make_auto_annotation(std::string session_id, AnnotationKind kind, Timestamp t_start,
                                std::optional<Timestamp> t_end, Json payload) {
  Annotation a;
  a.session_id = std::move(session_id);
  a.kind = kind;
  a.t_start = t_start;
  a.t_end = t_end;
  a.payload = std::move(payload);
  a.status = AnnotationStatus::Suggested;
  a.provenance = {true, std::string(kToolVersion)};
  a.id = auto_annotation_id(a);
  return a;
}

bool annotation_less(const Annotation& a, const Annotation& b) {
  auto key = [](const Annotation& x) {
    return std::make_tuple(x.t_start, x.t_end.has_value(), x.t_end.value_or(Timestamp{}), x.kind, std::cref(x.id),
                           x.revision);
  };
  return key(a) < key(b);
}

void sort_annotations(std::vector<Annotation>& v) { std::stable_sort(v.begin(), v.end(), annotation_less); }

// ---------------------------------------------------------------------------

std::vector<FunctionInterval> consolidate_intervals(std::span<const TimedMatch> matches,
                                                    const ConsolidationConfig& cfg) {
  struct Run {
    std::optional<Address> label;
    FunctionInterval iv;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const auto& m = matches[i];
    std::optional<Address> label;
    if (m.match.function) label = m.match.function->entry;
    if (!runs.empty() && runs.back().label == label) {
      runs.back().iv.t_end = m.t;
      runs.back().iv.samples.push_back(i);
    } else {
      runs.push_back({label, FunctionInterval{label.value_or(0), m.t, m.t, {i}}});
    }
  }

  std::vector<FunctionInterval> out;
  for (auto& r : runs) {
    if (!r.label) continue;
    if (cfg.min_interval_ms > 0 && r.iv.t_end - r.iv.t_start < cfg.min_interval_ms) continue;
    if (!out.empty() && out.back().entry == r.iv.entry && r.iv.t_start - out.back().t_end <= cfg.max_gap_ms) {
      out.back().t_end = r.iv.t_end;
      out.back().samples.insert(out.back().samples.end(), r.iv.samples.begin(), r.iv.samples.end());
      continue;
    }
    out.push_back(std::move(r.iv));
  }
  return out;
}

std::vector<Annotation> function_view_annotations(const std::string& session_id,
                                                  std::span<const FunctionInterval> intervals,
                                                  const SymbolTimeline& timeline) {
  std::vector<Annotation> out;
  for (const auto& iv : intervals) {
    const auto view = timeline.index_at(iv.t_start);
    auto it = view->function_names.find(iv.entry);
    const std::string name = it != view->function_names.end() ? it->second : format_address(iv.entry);
    out.push_back(make_auto_annotation(session_id, AnnotationKind::FunctionView, iv.t_start, iv.t_end,
                                       Json{{"entry", format_address(iv.entry)}, {"display_name", name}}));
  }
  return out;
}

std::vector<Annotation> build_function_intervals(const std::string& session_id, std::span<const TimedMatch> matches,
                                                 const ConsolidationConfig& cfg, const SymbolTimeline& timeline) {
  const auto intervals = consolidate_intervals(matches, cfg);
  return function_view_annotations(session_id, intervals, timeline);
}

// ---------------------------------------------------------------------------

namespace {

std::optional<Address> context_function(const RenameInputs& in, const SymbolTimeline& timeline, Timestamp before) {
  constexpr int kLookback = 30;
  auto it = std::lower_bound(in.frame_times.begin(), in.frame_times.end(), before);
  int idx = static_cast<int>(it - in.frame_times.begin()) - 1;
  for (int n = 0; idx >= 0 && n < kLookback; --idx, ++n) {
    if (static_cast<std::size_t>(idx) >= in.ocr.size()) continue;
    const auto t = in.frame_times[static_cast<std::size_t>(idx)];
    FunctionMatcher matcher(timeline.index_at(t));
    const auto m = matcher.match(in.ocr[static_cast<std::size_t>(idx)], in.match);
    if (m.function) return m.function->entry;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Annotation> detect_renames(const RenameInputs& in, SymbolTimeline& timeline) {
  std::vector<Annotation> out;
  for (const auto& span : in.spans) {
    if (!is_rename_feature(span.feature)) continue;
    const auto words = words_during(span, in.words);
    if (words.empty()) continue;
    const TypedWord& word = words.back();
    const Timestamp typed_from = words.front().t_start;

    std::vector<const ClickedToken*> recent;
    for (auto it = in.clicks.rbegin(); it != in.clicks.rend(); ++it) {
      if (it->t >= typed_from) continue;
      if (span.t_start - it->t > in.click_window_ms) break;
      recent.push_back(&*it);
    }

    const auto view = timeline.index_at(typed_from);
    RenameEvent ev;
    ev.t = word.t_end;
    ev.new_name = word.text;
    bool resolved = false;

    auto name_of = [&](const std::map<Address, std::string>& names, Address a) {
      auto it = names.find(a);
      return it != names.end() ? it->second : format_address(a);
    };

    if (span.feature == Feature::RenameFunction) {
      ev.scope = RenameScope::Function;
      for (const auto* c : recent) {
        if (auto f = view->function_named(symbol_text(c->token.text))) {
          ev.old_name = name_of(view->function_names, *f);
          resolved = true;
          break;
        }
      }
      if (!resolved) {
        if (auto f = context_function(in, timeline, span.t_start)) {
          ev.old_name = name_of(view->function_names, *f);
          resolved = true;
        }
      }
    } else if (span.feature == Feature::RenameLocal) {
      ev.scope = RenameScope::Local;
      const auto ctx = context_function(in, timeline, span.t_start);
      if (ctx && !recent.empty() && !symbol_text(recent.front()->token.text).empty()) {
        ev.local_function = *ctx;
        ev.old_name = symbol_text(recent.front()->token.text);
        resolved = true;
      }
    } else if (!recent.empty()) {
      const auto text = symbol_text(recent.front()->token.text);
      if (auto g = view->global_named(text)) {
        ev.scope = RenameScope::Global;
        ev.old_name = name_of(view->global_names, *g);
        resolved = true;
      } else if (auto f = view->function_named(text)) {
        ev.scope = RenameScope::Function;
        ev.old_name = name_of(view->function_names, *f);
        resolved = true;
      } else if (auto ctx = context_function(in, timeline, span.t_start); ctx && !text.empty()) {
        ev.scope = RenameScope::Local;
        ev.local_function = *ctx;
        ev.old_name = text;
        resolved = true;
      }
    }

    if (resolved && sanitize_symbol(ev.old_name) != sanitize_symbol(ev.new_name)) {
      try {
        timeline.append(ev);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::AmbiguousTarget) throw;
        resolved = false;
      }
    }
    if (!resolved) ev.old_name.clear();
    out.push_back(make_auto_annotation(in.session_id, AnnotationKind::Rename, span.t_start, span.t_end,
                                       Json{{"scope", to_string(ev.scope)}, {"old", ev.old_name}, {"new", ev.new_name}}));
  }
  return out;
}

// ---------------------------------------------------------------------------

bool is_xref_token(std::string_view text, const BinaryArtifactMap& map) {
  const auto l = lower(text);
  if (l.find("references to") != std::string::npos || l.find("xrefs to") != std::string::npos ||
      l.find("reference to") != std::string::npos) {
    return true;
  }
  const std::string trimmed = trim(l);
  std::string_view hex = trimmed;
  if (hex.starts_with("0x")) hex.remove_prefix(2);
  if (hex.size() < 4 || hex.size() > 16) return false;
  if (!std::all_of(hex.begin(), hex.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
    return false;
  }
  return map.is_xref_endpoint(std::stoull(std::string(hex), nullptr, 16));
}

std::vector<Annotation> annotate_navigation(const std::string& session_id, std::span<const ClickedToken> clicks,
                                            std::span<const FunctionInterval> intervals,
                                            const BinaryArtifactMap& map, std::span<const FeatureSpan> spans,
                                            const SymbolTimeline& timeline, const NavigationOptions& options) {
  struct Evidence {
    int priority;
    Timestamp t;
    std::string_view mechanism;
    std::size_t source;  // click index, or clicks.size() + span index
  };
  std::set<std::size_t> used;
  std::vector<Annotation> out;
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& iv = intervals[k];
    const Timestamp change = iv.t_start;
    std::optional<Address> from;
    if (k > 0) from = intervals[k - 1].entry;
    if (from == iv.entry) continue;

    std::optional<Evidence> best;
    auto offer = [&](Evidence e) {
      if (used.contains(e.source)) return;
      if (!best || e.priority < best->priority || (e.priority == best->priority && e.t > best->t)) best = e;
    };
    for (std::size_t i = 0; i < clicks.size(); ++i) {
      const auto& c = clicks[i];
      if (c.t >= change) break;
      const auto age = change - c.t;
      if (c.click_count == 2 && age <= options.double_click_window_ms) {
        const auto target = timeline.index_at(c.t)->function_named(symbol_text(c.token.text));
        if (target == iv.entry) {
          offer({0, c.t, "double_click", i});
          continue;
        }
      }
      if (age <= options.xref_window_ms && is_xref_token(c.token.text, map)) offer({1, c.t, "xref_click", i});
    }
    for (std::size_t s = 0; s < spans.size(); ++s) {
      const auto& sp = spans[s];
      if (sp.feature != Feature::FindReferences && sp.feature != Feature::FindString &&
          sp.feature != Feature::SearchFunctions) {
        continue;
      }
      if (sp.t_start >= change || change - sp.t_end > options.search_window_ms) continue;
      offer({2, sp.t_start, "search", clicks.size() + s});
    }
    if (!best) continue;
    used.insert(best->source);
    out.push_back(make_auto_annotation(session_id, AnnotationKind::Navigation, best->t, std::nullopt,
                                       Json{{"mechanism", best->mechanism},
                                            {"from", from ? Json(format_address(*from)) : Json(nullptr)},
                                            {"to", format_address(iv.entry)}}));
  }
  return out;
}

std::vector<Annotation> annotate_feature_use(const std::string& session_id, std::span<const FeatureSpan> spans,
                                             std::span<const TypedWord> words) {
  std::vector<Annotation> out;
  for (const auto& sp : spans) {
    std::string text;
    for (const auto& w : words_during(sp, words)) {
      if (!text.empty()) text.push_back(' ');
      text += w.text;
    }
    out.push_back(make_auto_annotation(session_id, AnnotationKind::FeatureUse, sp.t_start, sp.t_end,
                                       Json{{"feature", sp.name}, {"text", text}}));
  }
  return out;
}

std::vector<Annotation> block_view_annotations(const std::string& session_id, Timestamp t, int frame_index,
                                               std::span<const BlockMatch> matches) {
  std::vector<Annotation> out;
  for (const auto& m : matches) {
    if (!m.block) continue;
    out.push_back(make_auto_annotation(session_id, AnnotationKind::BlockView, t, std::nullopt,
                                       Json{{"entry", format_address(m.block->function)},
                                            {"block", format_address(m.block->block)},
                                            {"frame_index", frame_index},
                                            {"ambiguous", m.ambiguous}}));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string export_timeline_jsonl(std::span<const Annotation> annotations) {
  std::vector<Annotation> sorted(annotations.begin(), annotations.end());
  sort_annotations(sorted);
  std::string out;
  for (const auto& a : sorted) out += annotation_to_json(a).dump() + "\n";
  return out;
}

std::vector<Annotation> import_timeline_jsonl(std::string_view text, std::string_view where) {
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string loc = std::string(where) + ":" + std::to_string(line_no);
    out.push_back(annotation_from_json(parse_json(line, loc), loc));
  }
  return out;
}

std::string export_timeline_csv(std::span<const Annotation> annotations) {
  std::vector<Annotation> sorted(annotations.begin(), annotations.end());
  sort_annotations(sorted);
  std::string out = "t_start,t_end,kind,payload,status\n";
  for (const auto& a : sorted) {
    out += std::to_string(a.t_start.millis_utc) + ",";
    if (a.t_end) out += std::to_string(a.t_end->millis_utc);
    out += ",";
    out += to_string(a.kind);
    out += "," + csv_quote(annotation_to_json(a)["payload"].dump()) + ",";
    out += to_string(a.status);
    out += "\n";
  }
  return out;
}

std::string export_scatter_csv(std::span<const FunctionInterval> intervals, std::span<const TimedMatch> matches,
                               const BinaryArtifactMap& map) {
  std::vector<std::pair<Timestamp, int>> rows;
  for (const auto& iv : intervals) {
    const int ordinal = map.function_rank(iv.entry);
    for (auto i : iv.samples) {
      if (i < matches.size()) rows.emplace_back(matches[i].t, ordinal);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out = "t,function_ordinal\n";
  for (const auto& [t, ord] : rows) out += std::to_string(t.millis_utc) + "," + std::to_string(ord) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Annotation> fold_log(std::span<const Annotation> records) {
  std::map<std::string, const Annotation*> latest;
  for (const auto& r : records) {
    auto& slot = latest[r.id];
    if (slot == nullptr || r.revision >= slot->revision) slot = &r;
  }
  std::vector<Annotation> out;
  out.reserve(latest.size());
  for (const auto& [id, a] : latest) out.push_back(*a);
  sort_annotations(out);
  return out;
}

std::vector<Annotation> AnnotationLog::records() const {
  std::error_code ec;
  if (!std::filesystem::exists(file_, ec)) return {};
  std::ifstream in(file_, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + file_.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return import_timeline_jsonl(ss.str(), file_.filename().string());
}

std::vector<Annotation> AnnotationLog::current() const {
  const auto recs = records();
  return fold_log(recs);
}

std::optional<Annotation> AnnotationLog::find(const std::string& id) const {
  std::optional<Annotation> found;
  for (auto& r : records()) {
    if (r.id == id && (!found || r.revision >= found->revision)) found = std::move(r);
  }
  return found;
}

void AnnotationLog::append(const Annotation& a) {
  validate_annotation(a);
  std::ofstream out(file_, std::ios::binary | std::ios::app);
  out << annotation_to_json(a).dump() << "\n";
  out.flush();
  if (!out) throw Error(ErrorKind::IoFailure, "cannot append to " + file_.string());
}

std::size_t AnnotationLog::append_new(std::span<const Annotation> annotations) {
  std::set<std::string> known;
  for (const auto& r : records()) known.insert(r.id);
  std::string chunk;
  std::size_t n = 0;
  for (const auto& a : annotations) {
    if (!known.insert(a.id).second) continue;
    validate_annotation(a);
    chunk += annotation_to_json(a).dump() + "\n";
    ++n;
  }
  if (n == 0) return 0;
  std::ofstream out(file_, std::ios::binary | std::ios::app);
  out << chunk;
  out.flush();
  if (!out) throw Error(ErrorKind::IoFailure, "cannot append to " + file_.string());
  return n;
}

}  // namespace annotrace
