// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "annotrace/evaluate.hpp"
#include "annotrace/input_events.hpp"
#include "annotrace/matchers.hpp"
#include "annotrace/pipeline.hpp"
#include "annotrace/scenario.hpp"
#include "oracles.hpp"
#include "reference_counts.hpp"

using namespace annotrace;
using oracle::TempDir;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  const char* name;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// --- evaluation arithmetic ----------------------------------------------------

Outcome evaluation_arithmetic() {
  Outcome o;
  std::ostringstream got;
  const auto counts = fixture::function_counts();
  const auto r = summarize_function_eval(counts);
  auto expect = [&](double value, double want) {
    got << fmt("%.1f ", value);
    if (std::abs(value - want) > 0.05) o.ok = false;
  };
  for (std::size_t i = 0; i < counts.size(); ++i) expect(r.dataset_percent(i), fixture::kFunctionPercent[i]);
  expect(r.overall_percent(), fixture::kFunctionTotalPercent);
  const auto blocks = fixture::block_counts();
  const auto b = summarize_block_eval(blocks, summarize_function_eval(std::vector{counts[0]}).overall_accuracy);
  for (std::size_t i = 0; i < b.rows.size(); ++i) expect(percent_1dp(b.rows[i].overall), fixture::kBlockPercent[i]);
  expect(percent_1dp(b.pooled.overall), fixture::kBlockTotalPercent);
  o.detail = got.str();
  return o;
}

// --- codec --------------------------------------------------------------------

Image random_image(std::mt19937_64& rng, int w, int h) {
  Image img(w, h);
  std::uniform_int_distribution<int> level(0, 3);
  for (auto& b : img.rgba()) b = static_cast<std::uint8_t>(level(rng) * 85);
  return img;
}

Outcome codec_round_trip() {
  std::mt19937_64 rng(1001);
  int bad_pairs = 0;
  for (int i = 0; i < 1000; ++i) {
    const int w = std::uniform_int_distribution<int>(1, 48)(rng);
    const int h = std::uniform_int_distribution<int>(1, 48)(rng);
    const auto a = random_image(rng, w, h);
    auto b = a;
    const int mode = i % 3;
    if (mode == 0) {
      b = random_image(rng, w, h);
    } else {
      const int edits = std::uniform_int_distribution<int>(0, mode == 1 ? 4 : w * h)(rng);
      for (int k = 0; k < edits; ++k) {
        const int x = std::uniform_int_distribution<int>(0, w - 1)(rng);
        const int y = std::uniform_int_distribution<int>(0, h - 1)(rng);
        const auto c = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
        b.set_pixel(x, y, {c, c, 7, 255});
      }
    }
    if (apply_patches(a, diff_frames(a, b)) != b) ++bad_pairs;
  }
  int bad_frames = 0;
  const int bundles = 5;
  for (int s = 0; s < bundles; ++s) {
    TempDir dir;
    std::vector<CapturedFrame> frames;
    Image cur(96, 64, Rgba{30, 30, 30, 255});
    for (int i = 0; i < 10; ++i) {
      const int rects = std::uniform_int_distribution<int>(0, 4)(rng);
      for (int r = 0; r < rects; ++r) {
        const int x = std::uniform_int_distribution<int>(0, 94)(rng);
        const int y = std::uniform_int_distribution<int>(0, 62)(rng);
        const int rw = std::uniform_int_distribution<int>(1, 96 - x)(rng);
        const int rh = std::uniform_int_distribution<int>(1, 64 - y)(rng);
        const auto c = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
        cur.fill_rect({x, y, rw, rh}, {c, static_cast<std::uint8_t>(255 - c), 90, 255});
      }
      frames.push_back({Timestamp{2000 + 1000 * i}, cur});
    }
    SessionManifest m;
    m.session_id = "codec-" + std::to_string(s);
    m.subject_pseudonym = "p";
    m.binary_id = "b";
    m.start = Timestamp{1000};
    m.end = Timestamp{20000};
    write_bundle(dir.path(), m, frames, {});
    const auto bundle = load_bundle(dir.path());
    for (int i = 0; i < 10; ++i) bad_frames += reconstruct_frame(bundle, i) != frames[static_cast<std::size_t>(i)].image;
  }
  return {bad_pairs == 0 && bad_frames == 0,
          fmt("1000 pairs, %.0f mismatched; %.0f bundles x 10 frames, %.0f mismatched", bad_pairs, bundles, bad_frames)};
}

// --- string oracle ------------------------------------------------------------

Outcome string_oracle() {
  std::mt19937_64 rng(2024);
  const std::string alphabet = "abcdeO0l1_x";
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = oracle::random_string(rng, 16, alphabet);
    const auto b = oracle::random_string(rng, 16, alphabet);
    if (levenshtein(a, b) != oracle::dp_levenshtein(a, b)) ++mismatches;
    if (similarity_score(a, b) != oracle::dp_similarity(a, b)) ++mismatches;
  }
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = oracle::random_string(rng, 10, alphabet);
    const auto b = oracle::random_string(rng, 10, alphabet);
    const auto c = oracle::random_string(rng, 10, alphabet);
    const auto ab = levenshtein(a, b), ba = levenshtein(b, a), bc = levenshtein(b, c), ac = levenshtein(a, c);
    if (levenshtein(a, a) != 0) ++violations;
    if (ab != ba) ++violations;
    if ((ab == 0) != (a == b)) ++violations;
    if (ac > ab + bc) ++violations;
    const int s = similarity_score(a, b);
    if (s != similarity_score(b, a) || s < 0 || s > 100) ++violations;
  }
  return {mismatches == 0 && violations == 0,
          fmt("10000 pairs, %.0f oracle mismatches; 10000 triples, %.0f axiom violations", mismatches, violations)};
}

// --- keystrokes ---------------------------------------------------------------

Outcome keystrokes() {
  std::mt19937_64 rng(77);
  int mismatches = 0, underflow_sequences = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t gap = i % 3 == 0 ? 500 : 2000;
    const auto seq = oracle::random_key_sequence(rng, 80, gap);
    // Count sequences where an erase hits an empty word.
    int depth = 0;
    bool underflow = false;
    for (const auto& e : seq.truth) {
      if (e.kind == oracle::GenKind::Char) ++depth;
      else if (e.kind == oracle::GenKind::Erase && depth == 0) underflow = true;
      else if (e.kind == oracle::GenKind::Erase) --depth;
      else if (e.kind == oracle::GenKind::Boundary || e.kind == oracle::GenKind::Click) depth = 0;
    }
    underflow_sequences += underflow;
    if (aggregate_keystrokes(seq.events, KeystrokeOptions{gap}) != oracle::simulate_typing(seq.truth, gap)) {
      ++mismatches;
    }
  }
  return {mismatches == 0 && underflow_sequences > 0,
          fmt("1000 sequences, %.0f mismatches, %.0f with backspace underflow", mismatches, underflow_sequences)};
}

// --- synthetic matching corpus ------------------------------------------------

Outcome matching_corpus() {
  const auto corpus = oracle::make_corpus(4242, 200);
  Scenario sc;
  sc.map = corpus.map;
  sc.width = 420;
  sc.height = 300;
  sc.manifest.session_id = "corpus";
  sc.manifest.subject_pseudonym = "synthetic";
  sc.manifest.binary_id = corpus.map.binary_id;
  sc.manifest.tool_hint = "ghidra";
  sc.manifest.start = Timestamp{0};
  for (std::size_t i = 0; i < corpus.frames.size(); ++i) {
    ScenarioFrame f{Timestamp{500 + 1000 * static_cast<std::int64_t>(i)}, {}};
    int y = 4;
    for (const auto& line : corpus.frames[i].lines) {
      f.screen.add_words(line, 6, y);
      y += 12;
    }
    sc.frames.push_back(std::move(f));
  }
  sc.manifest.end = Timestamp{1000 * static_cast<std::int64_t>(corpus.frames.size()) + 1000};
  TempDir dir;
  write_scenario(dir.path(), sc);
  const auto bundle = load_bundle(dir.path());

  NoiseConfig noise;
  noise.char_error_rate = 0.05;
  noise.drop_probability = 0.10;
  noise.seed = 99;
  NoisyOcrBackend backend(std::make_unique<MockOcrBackend>(), noise);
  const auto index = build_symbol_index(corpus.map, std::make_shared<const Stoplist>(Stoplist::defaults()));
  FrameReader reader(bundle);
  DatasetCounts counts{"corpus"};
  for (int i = 0; i < bundle.frame_count(); ++i) {
    const auto ocr = run_ocr(bundle, i, backend, OcrConfig{}, &reader);
    const auto& truth = corpus.frames[static_cast<std::size_t>(i)].truth;
    counts.add(classify_function_outcome(match_function(ocr, index), {i, truth, {}}), truth.has_value());
  }
  const double accuracy = static_cast<double>(counts.correct()) / counts.total();
  const double false_rate =
      counts.without_function == 0 ? 0.0 : static_cast<double>(counts.detected_function_false) / counts.without_function;
  std::ostringstream d;
  d << counts.total() << " frames: accuracy " << fmt("%.1f%%", 100 * accuracy) << " (wrong " << counts.wrong_function
    << ", missed " << counts.no_function_miss << "), DetectedFunction " << counts.detected_function_false << "/"
    << counts.without_function << fmt(" = %.1f%%", 100 * false_rate);
  return {accuracy >= 0.95 && false_rate <= 0.02 && counts.without_function > 0, d.str()};
}

// --- rename causality ---------------------------------------------------------

Outcome rename_causality() {
  TempDir dir;
  write_scenario(dir.path(), demo_scenario());
  PipelineConfig cfg;
  cfg.bundle = dir.path();
  const auto report = run_pipeline(cfg);
  const std::vector<std::pair<AnnotationKind, std::string>> expected = {
      {AnnotationKind::Navigation, R"({"mechanism":"double_click","from":null,"to":"0x10ed40"})"},
      {AnnotationKind::FunctionView, R"({"entry":"0x10ed40","display_name":"FUN_0010ed40"})"},
      {AnnotationKind::Rename, R"({"scope":"function","old":"FUN_0010ed40","new":"main"})"},
      {AnnotationKind::FeatureUse, R"({"feature":"RenameFunction","text":"main"})"},
      {AnnotationKind::Rename, R"({"scope":"global","old":"DAT_00288bb","new":"keyplus0x1000"})"},
      {AnnotationKind::FeatureUse, R"({"feature":"EditLabel","text":"keyplus0x1000"})"},
      {AnnotationKind::Navigation, R"({"mechanism":"xref_click","from":"0x10ed40","to":"0x1a3a20"})"},
      {AnnotationKind::FeatureUse, R"({"feature":"FindReferences","text":""})"},
      {AnnotationKind::FunctionView, R"({"entry":"0x1a3a20","display_name":"FUN_001a3a20"})"},
      {AnnotationKind::Rename, R"({"scope":"local","old":"bVar8","new":"license key"})"},
      {AnnotationKind::FeatureUse, R"({"feature":"RenameLocal","text":"license key"})"},
  };
  bool in_order = report.annotations.size() == expected.size();
  for (std::size_t i = 0; in_order && i < expected.size(); ++i) {
    in_order = report.annotations[i].kind == expected[i].first &&
               report.annotations[i].payload == Json::parse(expected[i].second);
  }
  std::optional<Timestamp> renamed;
  for (const auto& r : report.renames) {
    if (r.new_name == "main") renamed = r.t;
  }
  int before = 0, before_main = 0, after = 0, after_main = 0;
  for (const auto& m : report.matches) {
    if (!renamed || !m.match.function || m.match.function->entry != 0x10ed40) continue;
    const bool via_main = m.match.function->via_symbol == "main";
    if (m.t < *renamed) {
      ++before;
      before_main += via_main;
    } else {
      ++after;
      after_main += via_main;
    }
  }
  std::ostringstream d;
  d << report.annotations.size() << "/11 annotations" << (in_order ? " in order" : " NOT in expected order")
    << "; frames of 0x10ed40 via \"main\": before " << before_main << "/" << before << ", after " << after_main << "/"
    << after;
  return {in_order && renamed && before > 0 && after > 0 && before_main == 0 && after_main == after, d.str()};
}

// --- interval properties -----------------------------------------------------

bool contained(const FunctionInterval& iv, const std::vector<FunctionInterval>& in) {
  return std::any_of(in.begin(), in.end(), [&](const FunctionInterval& o) {
    return o.entry == iv.entry && o.t_start <= iv.t_start && iv.t_end <= o.t_end;
  });
}

Outcome interval_properties() {
  std::mt19937_64 rng(515);
  const std::int64_t gaps[] = {0, 1000, 2000, 3000, 5000, 10000, 30000};
  int overlap = 0, monotonicity = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto seq = oracle::random_label_sequence(rng, 120);
    const std::int64_t min_interval = std::uniform_int_distribution<int>(0, 6)(rng) * 1000;
    std::vector<FunctionInterval> prev;
    for (std::size_t g = 0; g < std::size(gaps); ++g) {
      const auto iv = consolidate_intervals(seq, {min_interval, gaps[g]});
      for (std::size_t k = 0; k + 1 < iv.size(); ++k) overlap += iv[k].t_end > iv[k + 1].t_start;
      for (const auto& x : iv) overlap += x.t_end < x.t_start;
      if (g > 0) {
        if (iv.size() > prev.size()) ++monotonicity;
        for (const auto& p : prev) monotonicity += !contained(p, iv);
      }
      prev = iv;
    }
  }
  return {overlap == 0 && monotonicity == 0,
          fmt("1000 sequences x 7 gaps: %.0f overlaps, %.0f monotonicity violations", overlap, monotonicity)};
}

// --- block matching ----------------------------------------------------------

std::optional<std::size_t> node_of(const BBox& rect, const std::vector<BBox>& nodes) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const int cx = rect.x + rect.w / 2, cy = rect.y + rect.h / 2;
    if (cx >= n.x && cx < n.x + n.w && cy >= n.y && cy < n.y + n.h) return i;
  }
  return std::nullopt;
}

Outcome block_matching() {
  std::mt19937_64 rng(808);
  const auto filters = filters_for_tool(default_filters_json(), std::nullopt);
  int nodes = 0, correct = 0, trials = 0, duplicates_flagged = 0, occluded_matched = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 3 + t % 6;
    const auto painted = oracle::paint_cfg(rng, n);
    const auto rects = detect_block_rects(painted.image, filters);
    const auto matches = match_blocks(painted.ocr, rects, painted.function);
    ++trials;
    nodes += n;
    std::map<std::size_t, const BlockMatch*> by_node;
    for (const auto& m : matches) {
      if (const auto k = node_of(m.rect.bbox, painted.node_boxes)) by_node[*k] = &m;
    }
    const auto [da, db] = painted.duplicate_pair;
    bool pair_flagged = true;
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
      const auto it = by_node.find(k);
      const BlockMatch* m = it == by_node.end() ? nullptr : it->second;
      const auto address = painted.function.blocks[k].address;
      if (k == *painted.occluded) {
        const bool unmatched = !m || !m->block;
        correct += unmatched;
        occluded_matched += !unmatched;
      } else if (k == da || k == db) {
        const bool ok = m && m->block &&
                        (m->block->block == painted.function.blocks[da].address ||
                         m->block->block == painted.function.blocks[db].address);
        correct += ok;
        pair_flagged = pair_flagged && m && m->ambiguous;
      } else {
        correct += m && m->block && m->block->block == address;
      }
    }
    const auto a = by_node.find(da), b = by_node.find(db);
    const bool distinct = a != by_node.end() && b != by_node.end() && a->second->block && b->second->block &&
                          a->second->block->block != b->second->block->block;
    duplicates_flagged += pair_flagged && distinct;
  }
  const double ratio = static_cast<double>(correct) / nodes;
  std::ostringstream d;
  d << trials << " screens, " << nodes << " nodes: " << fmt("%.1f%%", 100 * ratio) << " correct; duplicate pair flagged in "
    << duplicates_flagged << "/" << trials << "; occluded node matched in " << occluded_matched;
  return {ratio >= 0.90 && duplicates_flagged == trials && occluded_matched == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"evaluation arithmetic", 1, evaluation_arithmetic},
      {"codec round trip", 30, codec_round_trip},
      {"string-matching oracle", 30, string_oracle},
      {"keystroke aggregation", 0, keystrokes},
      {"synthetic matching corpus", 120, matching_corpus},
      {"rename causality", 0, rename_causality},
      {"interval consolidation properties", 0, interval_properties},
      {"block matching", 0, block_matching},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.ok = false;
      o.detail += fmt(" (over the %.0fs limit)", c.limit_seconds);
    }
    failed += !o.ok;
    std::printf("%s  %-34s %8.3fs  %s\n", o.ok ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
