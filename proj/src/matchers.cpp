#include "annotrace/matchers.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>

#include "annotrace/error.hpp"

namespace annotrace {

namespace jf = json_field;

std::size_t levenshtein(std::string_view a, std::string_view b) {
  while (!a.empty() && !b.empty() && a.front() == b.front()) {
    a.remove_prefix(1);
    b.remove_prefix(1);
  }
  while (!a.empty() && !b.empty() && a.back() == b.back()) {
    a.remove_suffix(1);
    b.remove_suffix(1);
  }
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();

  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

int similarity_score(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 100;
  const std::size_t kept = longest - levenshtein(a, b);
  return static_cast<int>((200 * kept + longest) / (2 * longest));
}

// ---------------------------------------------------------------------------

std::vector<std::string> frame_candidates(const OcrFrame& frame, const SymbolIndex& index) {
  std::set<std::string> out;
  auto consider = [&](std::string_view raw) {
    auto s = sanitize_symbol(raw);
    if (!s.empty() && !index.is_stopword(s)) out.insert(std::move(s));
  };
  for (const auto& t : frame.tokens) {
    consider(t.text);
    for (const auto& piece : split_symbols(t.text)) consider(piece);
  }
  return {out.begin(), out.end()};
}

FunctionMatcher::FunctionMatcher(std::shared_ptr<const SymbolIndex> index) : index_(std::move(index)) {
  for (const auto& [sym, entry] : index_->symbol_to_function) {
    all_.push_back({sym, entry});
    buckets_[sym.front()].push_back({sym, entry});
  }
  auto by_symbol = [](const Key& l, const Key& r) { return l.symbol < r.symbol; };
  std::sort(all_.begin(), all_.end(), by_symbol);
  for (auto& [c, keys] : buckets_) std::sort(keys.begin(), keys.end(), by_symbol);
}

namespace {

struct Evidence {
  int best_score = -1;
  std::string via;
  std::set<std::string> supporting;
};

// `spread` holds every function's supporting tokens from both stages; the
// winner must own a strict majority (min_share) of them.
FunctionMatch pick(int frame_index, std::map<Address, Evidence>& evidence, int threshold, double min_share,
                   const std::map<Address, std::set<std::string>>& spread) {
  FunctionMatch result;
  result.frame_index = frame_index;
  const std::pair<const Address, Evidence>* winner = nullptr;
  for (const auto& kv : evidence) {
    if (winner == nullptr) {
      winner = &kv;
      continue;
    }
    const auto& w = winner->second;
    const auto& e = kv.second;
    // map iteration is by ascending entry, so strict comparisons keep the lowest entry on ties
    if (std::make_tuple(e.best_score, e.supporting.size()) > std::make_tuple(w.best_score, w.supporting.size())) {
      winner = &kv;
    }
  }
  if (winner == nullptr || winner->second.best_score < threshold) return result;
  const auto support = winner->second.supporting.size();
  std::size_t total = 0, own = 0;
  for (const auto& [entry, tokens] : spread) {
    total += tokens.size();
    if (entry == winner->first) own = tokens.size();
  }
  if (total > 0 && static_cast<double>(own) <= min_share * static_cast<double>(total)) return result;
  result.function = FunctionLabel{winner->first, winner->second.best_score, winner->second.via, static_cast<int>(support)};
  return result;
}

void note(Evidence& e, int score, const std::string& symbol, const std::string& token, int threshold) {
  if (score > e.best_score || (score == e.best_score && symbol < e.via)) {
    e.best_score = score;
    e.via = symbol;
  }
  if (score >= threshold) e.supporting.insert(token);
}

}  // namespace

FunctionMatch FunctionMatcher::match(const OcrFrame& frame, const MatchOptions& options) const {
  const auto candidates = frame_candidates(frame, *index_);

  std::map<Address, Evidence> exact;
  for (const auto& c : candidates) {
    if (auto it = index_->symbol_to_function.find(c); it != index_->symbol_to_function.end()) {
      note(exact[it->second], 100, c, c, options.threshold);
    }
  }

  // Fuzzy evidence always runs: it picks the label when nothing matches
  // exactly and otherwise feeds the spread check. For the spread each token
  // counts once, for its exact owner or its best fuzzy owners.
  std::map<Address, Evidence> fuzzy;
  std::map<Address, std::set<std::string>> spread;
  for (const auto& c : candidates) {
    if (auto it = index_->symbol_to_function.find(c); it != index_->symbol_to_function.end()) {
      spread[it->second].insert(c);
    }
  }
  for (const auto& c : candidates) {
    const std::vector<Key>* pool = &all_;
    if (options.prune) {
      auto it = buckets_.find(c.front());
      if (it == buckets_.end()) continue;
      pool = &it->second;
    }
    int best = -1;
    std::vector<Address> best_owners;
    for (const auto& key : *pool) {
      if (options.prune) {
        const auto diff = static_cast<long>(key.symbol.size()) - static_cast<long>(c.size());
        if (diff > options.length_band || -diff > options.length_band) continue;
      }
      const int score = similarity_score(c, key.symbol);
      note(fuzzy[key.entry], score, key.symbol, c, options.threshold);
      if (score > best) best_owners.clear();
      if (score >= best) {
        best = score;
        best_owners.push_back(key.entry);
      }
    }
    if (best >= options.threshold && !index_->symbol_to_function.contains(c)) {
      for (auto entry : best_owners) spread[entry].insert(c);
    }
  }

  if (!exact.empty()) {
    auto result = pick(frame.frame_index, exact, std::min(options.threshold, 100), options.min_support_share, spread);
    // Report the function's own name when it is on screen.
    if (result.function) {
      auto it = index_->function_names.find(result.function->entry);
      if (it != index_->function_names.end()) {
        const auto key = sanitize_symbol(it->second);
        if (exact.at(result.function->entry).supporting.contains(key)) result.function->via_symbol = key;
      }
    }
    return result;
  }
  return pick(frame.frame_index, fuzzy, options.threshold, options.min_support_share, spread);
}

FunctionMatch match_function(const OcrFrame& frame, const SymbolIndex& index, const MatchOptions& options) {
  // Non-owning alias; the matcher does not outlive this call.
  FunctionMatcher matcher(std::shared_ptr<const SymbolIndex>(std::shared_ptr<const SymbolIndex>{}, &index));
  return matcher.match(frame, options);
}

// ---------------------------------------------------------------------------

Json default_filters_json() {
  auto tool = [](std::array<int, 3> rgb, int tol) {
    return Json{{"node_colors", Json::array({Json{{"rgb", rgb}, {"tolerance", tol}, {"class", "node"}}})},
                {"min_width", 24},
                {"min_height", 10},
                {"max_width", 4096},
                {"max_height", 4096}};
  };
  Json doc;
  doc["generic"] = tool({255, 255, 255}, 6);
  doc["ida"] = tool({255, 255, 255}, 6);
  doc["ghidra"] = tool({255, 255, 255}, 6);
  doc["binja"] = tool({42, 42, 42}, 6);
  return doc;
}

RectFilters filters_for_tool(const Json& doc, const std::optional<std::string>& tool) {
  constexpr std::string_view where = "filters.json";
  if (!doc.is_object()) throw Error(ErrorKind::SchemaViolation, "filters.json: expected an object");
  const Json* entry = nullptr;
  if (tool && doc.contains(*tool)) entry = &doc.at(*tool);
  else if (doc.contains("generic")) entry = &doc.at("generic");
  else throw Error(ErrorKind::SchemaViolation, "filters.json: no entry for tool and no generic entry");

  RectFilters f;
  for (const auto& c : jf::array(*entry, "node_colors", where)) {
    ColorClass cc;
    const auto& rgb = jf::array(c, "rgb", where);
    if (rgb.size() != 3) throw Error(ErrorKind::SchemaViolation, "filters.json: rgb needs three components");
    for (int k = 0; k < 3; ++k) cc.rgb[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(rgb[static_cast<std::size_t>(k)].get<int>());
    cc.tolerance = static_cast<int>(jf::integer(c, "tolerance", where));
    if (c.contains("class")) cc.fill_class = jf::string(c, "class", where) == "node" ? RectFill::Node : RectFill::Other;
    f.colors.push_back(cc);
  }
  if (entry->contains("min_width")) f.min_width = static_cast<int>(jf::integer(*entry, "min_width", where));
  if (entry->contains("min_height")) f.min_height = static_cast<int>(jf::integer(*entry, "min_height", where));
  if (entry->contains("max_width")) f.max_width = static_cast<int>(jf::integer(*entry, "max_width", where));
  if (entry->contains("max_height")) f.max_height = static_cast<int>(jf::integer(*entry, "max_height", where));
  return f;
}

std::vector<RectRegion> detect_block_rects(const Image& img, const RectFilters& filters) {
  const int w = img.width(), h = img.height();
  const auto px = img.rgba();
  std::vector<int> cls(static_cast<std::size_t>(w) * h, -1);
  for (std::size_t i = 0; i < cls.size(); ++i) {
    for (std::size_t c = 0; c < filters.colors.size(); ++c) {
      const auto& cc = filters.colors[c];
      bool match = true;
      for (int k = 0; k < 3 && match; ++k) {
        match = std::abs(int{px[i * 4 + static_cast<std::size_t>(k)]} - int{cc.rgb[static_cast<std::size_t>(k)]}) <= cc.tolerance;
      }
      if (match) {
        cls[i] = static_cast<int>(c);
        break;
      }
    }
  }

  std::vector<RectRegion> out;
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    const int label = cls[static_cast<std::size_t>(start)];
    if (label < 0) continue;
    cls[static_cast<std::size_t>(start)] = -1;
    stack.push_back(start);
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      const int x = idx % w, y = idx / w;
      x0 = std::min(x0, x); x1 = std::max(x1, x);
      y0 = std::min(y0, y); y1 = std::max(y1, y);
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
        const auto ni = static_cast<std::size_t>(n[1] * w + n[0]);
        if (cls[ni] == label) {
          cls[ni] = -1;
          stack.push_back(static_cast<int>(ni));
        }
      }
    }
    const BBox box{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    if (box.w < filters.min_width || box.h < filters.min_height || box.w > filters.max_width ||
        box.h > filters.max_height) {
      continue;
    }
    out.push_back({box, filters.colors[static_cast<std::size_t>(label)].fill_class});
  }
  std::sort(out.begin(), out.end(), [](const RectRegion& a, const RectRegion& b) {
    return std::tie(a.bbox.y, a.bbox.x) < std::tie(b.bbox.y, b.bbox.x);
  });
  return out;
}

// ---------------------------------------------------------------------------

std::string normalize_block_text(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

std::string text_in_rect(const OcrFrame& frame, const BBox& box) {
  std::vector<const OcrToken*> inside;
  for (const auto& t : frame.tokens) {
    if (box.contains(t.bbox.x + t.bbox.w / 2, t.bbox.y + t.bbox.h / 2)) inside.push_back(&t);
  }
  std::sort(inside.begin(), inside.end(), [](const OcrToken* a, const OcrToken* b) {
    return a->bbox.y + a->bbox.h / 2 < b->bbox.y + b->bbox.h / 2;
  });
  // Group into lines: a token starts a new line when its centre lies below
  // the current line's box.
  std::vector<std::vector<const OcrToken*>> lines;
  int line_bottom = -1;
  for (const auto* t : inside) {
    const int cy = t->bbox.y + t->bbox.h / 2;
    if (lines.empty() || cy >= line_bottom) {
      lines.emplace_back();
      line_bottom = t->bbox.bottom();
    } else {
      line_bottom = std::max(line_bottom, t->bbox.bottom());
    }
    lines.back().push_back(t);
  }
  std::string out;
  for (auto& line : lines) {
    std::sort(line.begin(), line.end(), [](const OcrToken* a, const OcrToken* b) { return a->bbox.x < b->bbox.x; });
    for (const auto* t : line) {
      if (!out.empty()) out.push_back(' ');
      out += t->text;
    }
  }
  return normalize_block_text(out);
}

std::vector<BlockMatch> match_blocks(const OcrFrame& frame, std::span<const RectRegion> rects,
                                     const FunctionRecord& function, double accept_ratio) {
  std::vector<std::string> block_text;
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < function.blocks.size(); ++j) {
    std::string joined;
    for (const auto& line : function.blocks[j].text_lines) {
      if (!joined.empty()) joined.push_back(' ');
      joined += line;
    }
    block_text.push_back(normalize_block_text(joined));
    groups[block_text.back()].push_back(j);
  }

  struct Candidate {
    std::size_t distance;
    std::size_t rect;
    std::size_t block;
  };
  std::vector<BlockMatch> out;
  std::vector<Candidate> accepted;
  std::vector<std::vector<Candidate>> per_rect(rects.size());
  for (std::size_t i = 0; i < rects.size(); ++i) {
    BlockMatch m;
    m.rect = rects[i];
    m.screen_text = text_in_rect(frame, rects[i].bbox);
    if (rects[i].fill_class == RectFill::Node && !m.screen_text.empty()) {
      for (std::size_t j = 0; j < block_text.size(); ++j) {
        const auto d = levenshtein(m.screen_text, block_text[j]);
        const auto longest = std::max(m.screen_text.size(), block_text[j].size());
        if (static_cast<double>(d) <= accept_ratio * static_cast<double>(longest)) {
          accepted.push_back({d, i, j});
          per_rect[i].push_back({d, i, j});
        }
      }
    }
    out.push_back(std::move(m));
  }

  std::sort(accepted.begin(), accepted.end(), [&](const Candidate& a, const Candidate& b) {
    return std::make_tuple(a.distance, a.rect, function.blocks[a.block].address) <
           std::make_tuple(b.distance, b.rect, function.blocks[b.block].address);
  });
  std::vector<bool> rect_done(rects.size(), false);
  std::vector<bool> block_used(function.blocks.size(), false);
  for (const auto& c : accepted) {
    if (rect_done[c.rect]) continue;
    if (block_used[c.block]) {
      const auto& group = groups[block_text[c.block]];
      const bool exhausted = group.size() > 1 && std::all_of(group.begin(), group.end(), [&](std::size_t k) { return block_used[k]; });
      if (!exhausted) continue;
    }
    rect_done[c.rect] = true;
    block_used[c.block] = true;
    auto& m = out[c.rect];
    m.block = BlockRef{function.entry_address, function.blocks[c.block].address};
    m.distance = c.distance;
    const auto ties = std::count_if(per_rect[c.rect].begin(), per_rect[c.rect].end(),
                                    [&](const Candidate& o) { return o.distance == c.distance; });
    m.ambiguous = ties > 1 || groups[block_text[c.block]].size() > 1;
  }
  return out;
}

}  // namespace annotrace
