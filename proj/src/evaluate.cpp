#include "annotrace/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "annotrace/error.hpp"
#include "annotrace/png.hpp"

namespace annotrace {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto l : split(text, '\n')) out.push_back(strip(l));
  return out;
}

int parse_int(std::string_view s, const std::string& where) {
  int v = 0;
  if (s.empty()) throw Error(ErrorKind::SchemaViolation, where + ": expected an integer");
  for (char c : s) {
    if (c < '0' || c > '9') throw Error(ErrorKind::SchemaViolation, where + ": expected an integer, got '" + std::string(s) + "'");
    v = v * 10 + (c - '0');
  }
  return v;
}

Address parse_hex(std::string_view s, const std::string& where) {
  return parse_address(Json(std::string(s)), where);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Uniform integer in [0, n) by rejection, independent of the standard
// library's distribution implementation.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  while (true) {
    const auto v = rng();
    if (v < limit) return v % n;
  }
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<GroundTruthLabel> parse_groundtruth_csv(std::string_view text, std::string_view where) {
  std::vector<GroundTruthLabel> out;
  const auto lines = lines_of(text);
  bool header_seen = false;
  std::set<int> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    const std::string loc = std::string(where) + ":" + std::to_string(i + 1);
    if (!header_seen) {
      header_seen = true;
      if (line == "frame_index,truth,blocks") continue;
      throw Error(ErrorKind::SchemaViolation, loc + ": expected header frame_index,truth,blocks");
    }
    const auto fields = split(line, ',');
    if (fields.size() != 3) throw Error(ErrorKind::SchemaViolation, loc + ": expected 3 fields");
    GroundTruthLabel g;
    g.frame_index = parse_int(strip(fields[0]), loc);
    if (!seen.insert(g.frame_index).second) {
      throw Error(ErrorKind::SchemaViolation, loc + ": duplicate frame " + std::to_string(g.frame_index));
    }
    const auto truth = strip(fields[1]);
    if (truth != "none") g.truth = parse_hex(truth, loc);
    const auto blocks = strip(fields[2]);
    if (!blocks.empty()) {
      if (!g.truth) throw Error(ErrorKind::SchemaViolation, loc + ": blocks listed for a frame without a function");
      for (auto b : split(blocks, ';')) g.blocks.push_back(parse_hex(strip(b), loc));
    }
    out.push_back(std::move(g));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  return out;
}

std::vector<GroundTruthLabel> load_groundtruth(const std::filesystem::path& file) {
  const auto bytes = read_file_bytes(file);
  return parse_groundtruth_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                               file.filename().string());
}

std::string format_groundtruth_csv(std::span<const GroundTruthLabel> labels) {
  std::string out = "frame_index,truth,blocks\n";
  for (const auto& g : labels) {
    out += std::to_string(g.frame_index) + "," + (g.truth ? format_address(*g.truth) : "none") + ",";
    for (std::size_t i = 0; i < g.blocks.size(); ++i) {
      if (i) out += ";";
      out += format_address(g.blocks[i]);
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(EvalOutcome o) {
  switch (o) {
    case EvalOutcome::CorrectLabel: return "CorrectLabel";
    case EvalOutcome::WrongFunction: return "WrongFunction";
    case EvalOutcome::NoFunctionMiss: return "NoFunctionMiss";
    case EvalOutcome::DetectedFunctionFalse: return "DetectedFunctionFalse";
  }
  return "?";
}

EvalOutcome classify_function_outcome(const FunctionMatch& pred, const GroundTruthLabel& truth) {
  if (truth.truth) {
    if (!pred.function) return EvalOutcome::NoFunctionMiss;
    return pred.function->entry == *truth.truth ? EvalOutcome::CorrectLabel : EvalOutcome::WrongFunction;
  }
  return pred.function ? EvalOutcome::DetectedFunctionFalse : EvalOutcome::CorrectLabel;
}

void DatasetCounts::add(EvalOutcome o, bool shows_function) {
  if (shows_function) {
    ++with_function;
    if (o == EvalOutcome::CorrectLabel) ++with_correct;
    else if (o == EvalOutcome::WrongFunction) ++wrong_function;
    else if (o == EvalOutcome::NoFunctionMiss) ++no_function_miss;
    else throw Error(ErrorKind::SchemaViolation, "outcome does not fit a frame that shows a function");
  } else {
    ++without_function;
    if (o == EvalOutcome::CorrectLabel) ++without_correct;
    else if (o == EvalOutcome::DetectedFunctionFalse) ++detected_function_false;
    else throw Error(ErrorKind::SchemaViolation, "outcome does not fit a frame without a function");
  }
}

void DatasetCounts::check() const {
  if (with_correct + wrong_function + no_function_miss != with_function) {
    throw Error(ErrorKind::SchemaViolation, name + ": with-function outcomes do not sum to the total");
  }
  if (without_correct + detected_function_false != without_function) {
    throw Error(ErrorKind::SchemaViolation, name + ": without-function outcomes do not sum to the total");
  }
}

double percent_1dp(double fraction) { return std::floor(fraction * 1000.0 + 0.5 + 1e-9) / 10.0; }

double EvalReport::dataset_percent(std::size_t i) const {
  const auto& d = datasets.at(i);
  return d.total() == 0 ? 0.0 : percent_1dp(static_cast<double>(d.correct()) / d.total());
}

EvalReport summarize_function_eval(std::span<const DatasetCounts> datasets) {
  EvalReport r;
  r.pooled.name = "total";
  for (const auto& d : datasets) {
    d.check();
    r.datasets.push_back(d);
    r.pooled.with_function += d.with_function;
    r.pooled.with_correct += d.with_correct;
    r.pooled.wrong_function += d.wrong_function;
    r.pooled.no_function_miss += d.no_function_miss;
    r.pooled.without_function += d.without_function;
    r.pooled.without_correct += d.without_correct;
    r.pooled.detected_function_false += d.detected_function_false;
  }
  r.overall_accuracy = r.pooled.total() == 0 ? 0.0 : static_cast<double>(r.pooled.correct()) / r.pooled.total();
  return r;
}

BlockReport summarize_block_eval(std::span<const BlockCounts> subjects, double function_accuracy) {
  BlockReport r;
  r.function_accuracy = function_accuracy;
  r.pooled.subject = "total";
  auto overall = [&](int c, int t) { return t == 0 ? 0.0 : static_cast<double>(c) / t * function_accuracy; };
  for (const auto& s : subjects) {
    r.rows.push_back({s.subject, s.correct, s.total, overall(s.correct, s.total)});
    r.pooled.correct += s.correct;
    r.pooled.total += s.total;
  }
  r.pooled.overall = overall(r.pooled.correct, r.pooled.total);
  return r;
}

std::pair<int, int> score_frame_blocks(std::span<const Address> truth, std::span<const Address> predicted) {
  std::set<Address> t(truth.begin(), truth.end()), p(predicted.begin(), predicted.end());
  int both = 0;
  for (auto a : t) both += p.contains(a) ? 1 : 0;
  std::set<Address> all = t;
  all.insert(p.begin(), p.end());
  return {both, static_cast<int>(all.size())};
}

std::string format_function_report(const EvalReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %6s %6s %8s %8s %8s %9s\n", "dataset", "with_fn", "correct",
                "wrong", "no_fn", "without", "correct", "detected", "accuracy");
  os << line;
  auto row = [&](const DatasetCounts& d) {
    const double pct = d.total() == 0 ? 0.0 : percent_1dp(static_cast<double>(d.correct()) / d.total());
    std::snprintf(line, sizeof line, "%-12s %8d %8d %6d %6d %8d %8d %8d %8s%%\n", d.name.c_str(), d.with_function,
                  d.with_correct, d.wrong_function, d.no_function_miss, d.without_function, d.without_correct,
                  d.detected_function_false, fixed1(pct).c_str());
    os << line;
  };
  for (const auto& d : r.datasets) row(d);
  row(r.pooled);
  return os.str();
}

std::string format_block_report(const BlockReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %9s\n", "subject", "correct", "total", "overall");
  os << line;
  auto row = [&](const BlockReportRow& b) {
    std::snprintf(line, sizeof line, "%-12s %8d %8d %8s%%\n", b.subject.c_str(), b.correct, b.total,
                  fixed1(percent_1dp(b.overall)).c_str());
    os << line;
  };
  for (const auto& b : r.rows) row(b);
  row(r.pooled);
  os << "overall = block ratio x pooled function accuracy " << fixed1(percent_1dp(r.function_accuracy)) << "%\n";
  return os.str();
}

Json function_report_to_json(const EvalReport& r) {
  auto counts = [](const DatasetCounts& d) {
    return Json{{"name", d.name},
                {"with_function", {{"total", d.with_function},
                                   {"correct", d.with_correct},
                                   {"wrong_function", d.wrong_function},
                                   {"no_function", d.no_function_miss}}},
                {"without_function", {{"total", d.without_function},
                                      {"correct", d.without_correct},
                                      {"detected_function", d.detected_function_false}}},
                {"total", d.total()},
                {"correct", d.correct()},
                {"accuracy", d.total() == 0 ? 0.0 : static_cast<double>(d.correct()) / d.total()}};
  };
  Json j;
  j["datasets"] = Json::array();
  for (const auto& d : r.datasets) j["datasets"].push_back(counts(d));
  j["total"] = counts(r.pooled);
  j["overall_accuracy"] = r.overall_accuracy;
  return j;
}

Json block_report_to_json(const BlockReport& r) {
  Json j;
  j["function_accuracy"] = r.function_accuracy;
  j["subjects"] = Json::array();
  for (const auto& b : r.rows) {
    j["subjects"].push_back({{"subject", b.subject}, {"correct", b.correct}, {"total", b.total}, {"overall", b.overall}});
  }
  j["total"] = {{"correct", r.pooled.correct}, {"total", r.pooled.total}, {"overall", r.pooled.overall}};
  return j;
}

// ---------------------------------------------------------------------------

ExclusionSet parse_exclusions(std::string_view text, std::string_view where) {
  ExclusionSet out;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    const std::string loc = std::string(where) + ":" + std::to_string(i + 1);
    const auto fields = split(line, ',');
    if (fields.size() != 2) throw Error(ErrorKind::SchemaViolation, loc + ": expected session_id,frame_index");
    out.emplace(std::string(strip(fields[0])), parse_int(strip(fields[1]), loc));
  }
  return out;
}

std::vector<SampleEntry> stratified_sample(std::span<const SampleFrames> sessions, int per_subject_n,
                                           std::uint64_t seed, const ExclusionSet& excluded) {
  if (per_subject_n < 0) throw Error(ErrorKind::InsufficientFrames, "negative sample size");
  std::map<std::string, std::vector<std::pair<std::string, int>>> pools;
  for (const auto& s : sessions) {
    auto& pool = pools[s.subject];
    for (int f = 0; f < s.frame_count; ++f) {
      if (!excluded.contains({s.session_id, f})) pool.emplace_back(s.session_id, f);
    }
  }
  std::vector<SampleEntry> out;
  for (auto& [subject, pool] : pools) {
    std::sort(pool.begin(), pool.end());
    if (static_cast<int>(pool.size()) < per_subject_n) {
      throw Error(ErrorKind::InsufficientFrames, "subject " + subject + " has " + std::to_string(pool.size()) +
                                                     " eligible frames, " + std::to_string(per_subject_n) + " requested");
    }
    const auto h = fnv1a(subject);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    std::mt19937_64 rng(seq);
    for (int i = 0; i < per_subject_n; ++i) {
      const auto j = static_cast<std::size_t>(i) + draw_below(rng, pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      out.push_back({subject, pool[static_cast<std::size_t>(i)].first, pool[static_cast<std::size_t>(i)].second});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_sample_csv(std::span<const SampleEntry> sample) {
  std::string out = "subject,session_id,frame_index\n";
  for (const auto& e : sample) out += e.subject + "," + e.session_id + "," + std::to_string(e.frame_index) + "\n";
  return out;
}

}  // namespace annotrace
