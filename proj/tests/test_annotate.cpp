#include <doctest.h>

#include "annotrace/annotate.hpp"
#include "annotrace/input_events.hpp"
#include "oracles.hpp"

using namespace annotrace;
using oracle::TempDir;

namespace {

std::shared_ptr<const Stoplist> default_stoplist() { return std::make_shared<const Stoplist>(Stoplist::defaults()); }

TimedMatch at(std::int64_t t, std::optional<Address> f) {
  TimedMatch m{Timestamp{t}, {}};
  if (f) m.match.function = FunctionLabel{*f, 100, "s", 1};
  return m;
}

std::vector<TimedMatch> seconds(std::initializer_list<std::pair<std::int64_t, std::optional<Address>>> items) {
  std::vector<TimedMatch> out;
  for (const auto& [s, f] : items) out.push_back(at(s * 1000, f));
  return out;
}

BinaryArtifactMap rename_map() {
  BinaryArtifactMap m;
  m.binary_id = "r";
  m.functions = {{0x10ed40, "FUN_0010ed40", {{0x10ed40, {"PUSH RBP", "CALL read_line", "MOV EAX,dword ptr [DAT_00288bb]"}}}},
                 {0x1a3a20, "FUN_001a3a20", {{0x1a3a20, {"MOV bVar8, CL", "CMP EDX,0x5a17"}}}}};
  m.globals = {{0x288bb, "DAT_00288bb", "undefined4"}};
  m.xrefs = {{0x10ed40, 0x288bb, XrefKind::Data}, {0x1a3a20, 0x288bb, XrefKind::Data}};
  return m;
}

OcrFrame tokens(int index, std::initializer_list<const char*> words) {
  OcrFrame f;
  f.frame_index = index;
  int x = 0;
  for (const char* w : words) {
    f.tokens.push_back({w, {x, 10, 40, 10}, 90});
    x += 50;
  }
  return f;
}

Annotation sample(AnnotationKind kind, std::int64_t t0, std::optional<std::int64_t> t1, Json payload) {
  return make_auto_annotation("s", kind, Timestamp{t0}, t1 ? std::optional<Timestamp>(Timestamp{*t1}) : std::nullopt,
                              std::move(payload));
}

}  // namespace

TEST_CASE("annotation records") {
  const auto a = sample(AnnotationKind::FunctionView, 1000, 5000, Json{{"entry", "0x10"}, {"display_name", "f"}});
  CHECK(a.id.rfind("a-", 0) == 0);
  CHECK(a.status == AnnotationStatus::Suggested);
  CHECK(a.provenance.automatic);
  CHECK(a.provenance.who == kToolVersion);
  CHECK(auto_annotation_id(a) == a.id);
  CHECK(annotation_from_json(annotation_to_json(a), "t") == a);

  auto bad = a;
  bad.payload = Json{{"entry", "0x10"}};
  CHECK_THROWS_AS(validate_annotation(bad), Error);
  bad = a;
  bad.t_end = Timestamp{10};
  CHECK_THROWS_AS(validate_annotation(bad), Error);
  CHECK_THROWS_AS(annotation_kind_from_string("Nope"), Error);
  CHECK(annotation_status_from_string("confirmed") == AnnotationStatus::Confirmed);

  // Same content, same id; different content, different id.
  const auto b = sample(AnnotationKind::FunctionView, 1000, 5000, Json{{"entry", "0x10"}, {"display_name", "f"}});
  const auto c = sample(AnnotationKind::FunctionView, 1000, 5001, Json{{"entry", "0x10"}, {"display_name", "f"}});
  CHECK(a.id == b.id);
  CHECK(a.id != c.id);
}

TEST_CASE("sort order puts points first then kind order") {
  std::vector<Annotation> v{
      sample(AnnotationKind::FeatureUse, 1000, 2000, Json{{"feature", "EditLabel"}, {"text", "x"}}),
      sample(AnnotationKind::Rename, 1000, 2000, Json{{"scope", "global"}, {"old", "a"}, {"new", "x"}}),
      sample(AnnotationKind::Navigation, 1000, std::nullopt,
             Json{{"mechanism", "double_click"}, {"from", nullptr}, {"to", "0x10"}}),
      sample(AnnotationKind::Comment, 500, std::nullopt, Json{{"text", "hi"}}),
  };
  sort_annotations(v);
  CHECK(v[0].kind == AnnotationKind::Comment);
  CHECK(v[1].kind == AnnotationKind::Navigation);
  CHECK(v[2].kind == AnnotationKind::Rename);
  CHECK(v[3].kind == AnnotationKind::FeatureUse);
}

TEST_CASE("interval consolidation examples") {
  ConsolidationConfig cfg{5000, 10000};
  SUBCASE("a short NoFunction gap is bridged") {
    std::vector<TimedMatch> seq;
    for (int s = 0; s <= 10; ++s) seq.push_back(at(s * 1000, 0xA));
    seq.push_back(at(12000, std::nullopt));
    for (int s = 14; s <= 30; ++s) seq.push_back(at(s * 1000, 0xA));
    const auto iv = consolidate_intervals(seq, cfg);
    REQUIRE(iv.size() == 1);
    CHECK(iv[0].entry == 0xA);
    CHECK(iv[0].t_start == Timestamp{0});
    CHECK(iv[0].t_end == Timestamp{30000});
  }
  SUBCASE("a brief view is dropped") {
    const auto seq = seconds({{0, 0xA}, {1, 0xA}, {2, 0xA}, {3, 0xA}, {4, 0xA}, {5, 0xA}, {6, 0xB}, {7, 0xB},
                              {9, 0xB}, {10, 0xA}, {11, 0xA}, {12, 0xA}, {13, 0xA}, {14, 0xA}, {15, 0xA}});
    const auto iv = consolidate_intervals(seq, cfg);
    REQUIRE(iv.size() == 1);
    CHECK(iv[0].entry == 0xA);
    CHECK(iv[0].t_end == Timestamp{15000});
  }
  SUBCASE("min_interval zero keeps every run") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const auto seq = oracle::random_label_sequence(rng, 40);
      const auto iv = consolidate_intervals(seq, {0, 0});
      std::size_t function_runs = 0;
      for (const auto& r : oracle::label_runs(seq)) function_runs += r.label.has_value();
      REQUIRE(iv.size() == function_runs);
    }
  }
  SUBCASE("gaps above max_gap are not bridged") {
    const auto seq = seconds({{0, 0xA}, {6, 0xA}, {7, std::nullopt}, {30, 0xA}, {36, 0xA}});
    CHECK(consolidate_intervals(seq, cfg).size() == 2);
  }
}

TEST_CASE("function view annotations use names in effect at the interval start") {
  auto map = rename_map();
  SymbolTimeline tl(build_symbol_index(map, default_stoplist()));
  tl.append({Timestamp{20000}, RenameScope::Function, 0, "FUN_0010ed40", "main"});
  const auto seq = seconds({{0, 0x10ed40}, {10, 0x10ed40}, {11, std::nullopt}, {40, 0x1a3a20}, {50, 0x1a3a20},
                            {60, 0x10ed40}, {70, 0x10ed40}});
  const auto fv = build_function_intervals("s", seq, {5000, 10000}, tl);
  REQUIRE(fv.size() == 3);
  CHECK(fv[0].payload["display_name"] == "FUN_0010ed40");
  CHECK(fv[2].payload["display_name"] == "main");
  CHECK(fv[1].payload["entry"] == "0x1a3a20");
}

TEST_CASE("rename detection") {
  const auto map = rename_map();
  SymbolTimeline tl(build_symbol_index(map, default_stoplist()));
  const std::vector<Timestamp> times{Timestamp{0}, Timestamp{1000}, Timestamp{2000}, Timestamp{3000},
                                     Timestamp{4000}, Timestamp{5000}};
  const std::vector<OcrFrame> ocr{tokens(0, {"FUN_0010ed40", "read_line", "[DAT_00288bb]"}),
                                  tokens(1, {"FUN_0010ed40", "read_line", "[DAT_00288bb]"}),
                                  tokens(2, {"Rename", "Function", "FUN_0010ed40"}),
                                  tokens(3, {"Rename", "Function", "main"}),
                                  tokens(4, {"main", "read_line"}),
                                  tokens(5, {"main", "read_line"})};
  FeatureSpan span{Feature::RenameFunction, "RenameFunction", 2, 3, Timestamp{2000}, Timestamp{3000}, Timestamp{4000}};
  const std::vector<FeatureSpan> spans{span};
  const std::vector<TypedWord> words{{"main", Timestamp{2500}, Timestamp{2900}}};

  SUBCASE("function rename from the context function") {
    RenameInputs in{"s", times, ocr, spans, words, {}, {}, 30000};
    const auto out = detect_renames(in, tl);
    REQUIRE(out.size() == 1);
    CHECK(out[0].payload == Json{{"scope", "function"}, {"old", "FUN_0010ed40"}, {"new", "main"}});
    CHECK(out[0].t_start == Timestamp{2000});
    CHECK(out[0].t_end == Timestamp{3000});
    REQUIRE(tl.renames().size() == 1);
    CHECK(tl.renames()[0].t == Timestamp{2900});
    CHECK(tl.index_at(Timestamp{4000})->function_for("main") == std::optional<Address>(0x10ed40));
  }
  SUBCASE("global rename from a clicked label") {
    FeatureSpan label{Feature::EditLabel, "EditLabel", 2, 3, Timestamp{2000}, Timestamp{3000}, Timestamp{4000}};
    const std::vector<FeatureSpan> s2{label};
    const std::vector<TypedWord> w2{{"keyplus0x1000", Timestamp{2200}, Timestamp{2900}}};
    const std::vector<ClickedToken> clicks{{Timestamp{1500}, {"[DAT_00288bb]", {100, 10, 40, 10}, 90}, 1, 1}};
    RenameInputs in{"s", times, ocr, s2, w2, clicks, {}, 30000};
    const auto out = detect_renames(in, tl);
    REQUIRE(out.size() == 1);
    CHECK(out[0].payload == Json{{"scope", "global"}, {"old", "DAT_00288bb"}, {"new", "keyplus0x1000"}});
  }
  SUBCASE("no typed word, no annotation") {
    RenameInputs in{"s", times, ocr, spans, {}, {}, {}, 30000};
    CHECK(detect_renames(in, tl).empty());
    CHECK(tl.renames().empty());
  }
  SUBCASE("unresolvable target is kept as a suggestion without an event") {
    FeatureSpan label{Feature::EditLabel, "EditLabel", 2, 3, Timestamp{2000}, Timestamp{3000}, Timestamp{4000}};
    const std::vector<FeatureSpan> s2{label};
    RenameInputs in{"s", times, ocr, s2, words, {}, {}, 30000};
    const auto out = detect_renames(in, tl);
    REQUIRE(out.size() == 1);
    CHECK(out[0].payload["old"] == "");
    CHECK(tl.renames().empty());
  }
}

TEST_CASE("navigation attribution") {
  const auto map = rename_map();
  SymbolTimeline tl(build_symbol_index(map, default_stoplist()));
  std::vector<FunctionInterval> iv{{0x10ed40, Timestamp{10000}, Timestamp{60000}, {}},
                                   {0x1a3a20, Timestamp{80000}, Timestamp{90000}, {}}};
  SUBCASE("double click into a function") {
    const std::vector<ClickedToken> clicks{{Timestamp{8000}, {"FUN_0010ed40", {0, 0, 60, 10}, 90}, 2, 7}};
    const auto nav = annotate_navigation("s", clicks, iv, map, {}, tl);
    REQUIRE(nav.size() == 1);
    CHECK(nav[0].payload == Json{{"mechanism", "double_click"}, {"from", nullptr}, {"to", "0x10ed40"}});
    CHECK(nav[0].t_start == Timestamp{8000});
    CHECK_FALSE(nav[0].t_end.has_value());
  }
  SUBCASE("double click not followed by a change is ignored") {
    const std::vector<ClickedToken> clicks{{Timestamp{2000}, {"FUN_0010ed40", {0, 0, 60, 10}, 90}, 2, 1}};
    CHECK(annotate_navigation("s", clicks, iv, map, {}, tl).empty());
  }
  SUBCASE("reference click") {
    const std::vector<ClickedToken> clicks{{Timestamp{70000}, {"References", {0, 0, 60, 10}, 90}, 1, 69}};
    auto c2 = clicks;
    c2[0].token.text = "References to keyplusOxl000";
    const auto nav = annotate_navigation("s", c2, iv, map, {}, tl);
    REQUIRE(nav.size() == 1);
    CHECK(nav[0].payload["mechanism"] == "xref_click");
    CHECK(nav[0].payload["from"] == "0x10ed40");
    CHECK(nav[0].payload["to"] == "0x1a3a20");
  }
  SUBCASE("hex address that is an xref endpoint counts as a reference") {
    CHECK(is_xref_token("001a3a20", map));
    CHECK(is_xref_token("0x288bb", map));
    CHECK_FALSE(is_xref_token("00999999", map));
    CHECK(is_xref_token("xrefs to main", map));
  }
  SUBCASE("search window before the change") {
    const std::vector<FeatureSpan> spans{
        {Feature::SearchFunctions, "SearchFunctions", 70, 72, Timestamp{70000}, Timestamp{72000}, Timestamp{73000}}};
    const auto nav = annotate_navigation("s", {}, iv, map, spans, tl);
    REQUIRE(nav.size() == 1);
    CHECK(nav[0].payload["mechanism"] == "search");
  }
}

TEST_CASE("feature use annotations") {
  const std::vector<FeatureSpan> spans{
      {Feature::FindString, "FindString", 1, 2, Timestamp{1000}, Timestamp{2000}, Timestamp{3000}},
      {Feature::FindReferences, "FindReferences", 5, 6, Timestamp{5000}, Timestamp{6000}, Timestamp{7000}}};
  const std::vector<TypedWord> words{{"license", Timestamp{1200}, Timestamp{1800}}};
  const auto out = annotate_feature_use("s", spans, words);
  REQUIRE(out.size() == 2);
  CHECK(out[0].payload == Json{{"feature", "FindString"}, {"text", "license"}});
  CHECK(out[1].payload == Json{{"feature", "FindReferences"}, {"text", ""}});
  CHECK(annotate_feature_use("s", {}, words).empty());
}

TEST_CASE("timeline export") {
  std::vector<Annotation> v{
      sample(AnnotationKind::Comment, 500, std::nullopt, Json{{"text", "a, \"quoted\" note"}}),
      sample(AnnotationKind::FunctionView, 1000, 5000, Json{{"entry", "0x10"}, {"display_name", "f"}})};
  CHECK(export_timeline_csv({}) == "t_start,t_end,kind,payload,status\n");
  CHECK(export_timeline_jsonl({}).empty());
  const auto jsonl = export_timeline_jsonl(v);
  CHECK(export_timeline_jsonl(import_timeline_jsonl(jsonl, "t")) == jsonl);
  const auto csv = export_timeline_csv(v);
  CHECK(csv.find("500,,Comment,\"{\"\"text\"\":\"\"a, \\\"\"quoted\\\"\" note\"\"}\",suggested") != std::string::npos);
}

TEST_CASE("scatter export") {
  BinaryArtifactMap map;
  map.binary_id = "m";
  for (Address a : {0x100, 0x200, 0x300}) map.functions.push_back({a, "f", {{a, {"RET"}}}});
  SUBCASE("one interval") {
    const auto seq = seconds({{0, 0x300}, {1, 0x300}, {2, 0x300}});
    const auto iv = consolidate_intervals(seq, {0, 0});
    CHECK(export_scatter_csv(iv, seq, map) == "t,function_ordinal\n0,3\n1000,3\n2000,3\n");
  }
  SUBCASE("alternating") {
    const auto seq = seconds({{0, 0x100}, {1, 0x200}, {2, 0x100}, {3, 0x200}});
    const auto iv = consolidate_intervals(seq, {0, 0});
    CHECK(export_scatter_csv(iv, seq, map) == "t,function_ordinal\n0,1\n1000,2\n2000,1\n3000,2\n");
  }
  SUBCASE("empty") { CHECK(export_scatter_csv({}, {}, map) == "t,function_ordinal\n"); }
}

TEST_CASE("annotation log folds revisions") {
  TempDir dir;
  AnnotationLog log(dir / "annotations.jsonl");
  CHECK(log.records().empty());
  auto a = sample(AnnotationKind::FunctionView, 1000, 5000, Json{{"entry", "0x10"}, {"display_name", "f"}});
  log.append(a);
  auto b = a;
  b.revision = 2;
  b.predecessor = a.id + "@1";
  b.status = AnnotationStatus::Confirmed;
  b.provenance = {false, "rev-1"};
  log.append(b);
  CHECK(log.records().size() == 2);
  const auto cur = log.current();
  REQUIRE(cur.size() == 1);
  CHECK(cur[0].status == AnnotationStatus::Confirmed);
  CHECK(cur[0].provenance.who == "rev-1");
  CHECK(log.find(a.id)->revision == 2);
  CHECK_FALSE(log.find("nope").has_value());

  const auto c = sample(AnnotationKind::Comment, 10, std::nullopt, Json{{"text", "x"}});
  const std::vector<Annotation> batch{a, c};
  CHECK(log.append_new(batch) == 1);
  CHECK(log.append_new(batch) == 0);
  CHECK(log.current().size() == 2);
}
