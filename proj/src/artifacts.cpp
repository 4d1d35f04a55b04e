#include "annotrace/artifacts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "annotrace/error.hpp"
#include "annotrace/hash.hpp"

namespace annotrace {

namespace fs = std::filesystem;
namespace jf = json_field;

// ---------------------------------------------------------------------------
// Artifact map

const FunctionRecord* BinaryArtifactMap::find_function(Address entry) const {
  auto it = std::lower_bound(functions.begin(), functions.end(), entry,
                             [](const FunctionRecord& f, Address a) { return f.entry_address < a; });
  return it != functions.end() && it->entry_address == entry ? &*it : nullptr;
}

const FunctionRecord* BinaryArtifactMap::function_owning_block(Address block) const {
  for (const auto& f : functions) {
    for (const auto& b : f.blocks) {
      if (b.address == block) return &f;
    }
  }
  return nullptr;
}

std::string BinaryArtifactMap::display_name(Address entry) const {
  if (auto it = original_names.find(entry); it != original_names.end()) return it->second;
  if (const auto* f = find_function(entry)) return f->name;
  return format_address(entry);
}

int BinaryArtifactMap::function_rank(Address entry) const {
  auto it = std::lower_bound(functions.begin(), functions.end(), entry,
                             [](const FunctionRecord& f, Address a) { return f.entry_address < a; });
  if (it == functions.end() || it->entry_address != entry) return 0;
  return static_cast<int>(it - functions.begin()) + 1;
}

bool BinaryArtifactMap::is_xref_endpoint(Address address) const {
  return std::any_of(xrefs.begin(), xrefs.end(), [&](const Xref& x) { return x.from == address || x.to == address; });
}

namespace {

std::string_view xref_kind_name(XrefKind k) {
  switch (k) {
    case XrefKind::Call: return "call";
    case XrefKind::Data: return "data";
    case XrefKind::String: return "string";
  }
  return "call";
}

}  // namespace

BinaryArtifactMap parse_artifact_map(const Json& doc) {
  constexpr std::string_view where = "artifact map";
  BinaryArtifactMap map;
  map.binary_id = jf::string(doc, "binary_id", where);

  std::map<Address, Address> block_owner;
  std::set<Address> known;
  for (const auto& fj : jf::array(doc, "functions", where)) {
    FunctionRecord f;
    f.entry_address = parse_address(jf::require(fj, "entry", where), "function entry");
    f.name = jf::string(fj, "name", where);
    if (f.name.empty()) {
      throw Error(ErrorKind::SchemaViolation, "function " + format_address(f.entry_address) + " has an empty name");
    }
    for (const auto& bj : jf::array(fj, "blocks", where)) {
      BlockRecord b;
      b.address = parse_address(jf::require(bj, "addr", where), "block addr");
      for (const auto& line : jf::array(bj, "lines", where)) {
        if (!line.is_string()) throw Error(ErrorKind::SchemaViolation, "block lines must be strings");
        b.text_lines.push_back(line.get<std::string>());
      }
      if (b.text_lines.empty()) {
        throw Error(ErrorKind::SchemaViolation, "block " + format_address(b.address) + " has no text lines");
      }
      if (auto [it, inserted] = block_owner.emplace(b.address, f.entry_address); !inserted) {
        throw Error(ErrorKind::DuplicateAddress, "block " + format_address(b.address) + " assigned to functions " +
                                                     format_address(it->second) + " and " +
                                                     format_address(f.entry_address));
      }
      known.insert(b.address);
      f.blocks.push_back(std::move(b));
    }
    std::sort(f.blocks.begin(), f.blocks.end(),
              [](const BlockRecord& a, const BlockRecord& b) { return a.address < b.address; });
    map.functions.push_back(std::move(f));
  }
  std::sort(map.functions.begin(), map.functions.end(),
            [](const FunctionRecord& a, const FunctionRecord& b) { return a.entry_address < b.entry_address; });
  for (std::size_t i = 1; i < map.functions.size(); ++i) {
    if (map.functions[i].entry_address == map.functions[i - 1].entry_address) {
      throw Error(ErrorKind::DuplicateAddress,
                  "function entry " + format_address(map.functions[i].entry_address) + " appears twice");
    }
  }
  for (const auto& f : map.functions) known.insert(f.entry_address);

  if (doc.contains("globals")) {
    for (const auto& gj : jf::array(doc, "globals", where)) {
      GlobalRecord g{parse_address(jf::require(gj, "addr", where), "global addr"), jf::string(gj, "name", where),
                     gj.contains("type") ? jf::string(gj, "type", where) : std::string()};
      known.insert(g.address);
      map.globals.push_back(std::move(g));
    }
  }
  if (doc.contains("strings")) {
    for (const auto& sj : jf::array(doc, "strings", where)) {
      StringRecord s{parse_address(jf::require(sj, "addr", where), "string addr"), jf::string(sj, "literal", where)};
      known.insert(s.address);
      map.strings.push_back(std::move(s));
    }
  }
  if (doc.contains("xrefs")) {
    for (const auto& xj : jf::array(doc, "xrefs", where)) {
      Xref x;
      x.from = parse_address(jf::require(xj, "from", where), "xref from");
      x.to = parse_address(jf::require(xj, "to", where), "xref to");
      const auto kind = jf::string(xj, "kind", where);
      if (kind == "call") x.kind = XrefKind::Call;
      else if (kind == "data") x.kind = XrefKind::Data;
      else if (kind == "string") x.kind = XrefKind::String;
      else throw Error(ErrorKind::SchemaViolation, "xref kind '" + kind + "' is not call, data or string");
      for (Address a : {x.from, x.to}) {
        if (!known.contains(a)) {
          throw Error(ErrorKind::DanglingXref, "xref " + format_address(x.from) + " -> " + format_address(x.to) +
                                                   ": " + format_address(a) + " is not a known address");
        }
      }
      map.xrefs.push_back(x);
    }
  }
  return map;
}

BinaryArtifactMap import_artifact_map(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_artifact_map(parse_json(ss.str(), file.filename().string()));
}

Json artifact_map_to_json(const BinaryArtifactMap& map) {
  Json doc;
  doc["binary_id"] = map.binary_id;
  Json functions = Json::array();
  for (const auto& f : map.functions) {
    Json blocks = Json::array();
    for (const auto& b : f.blocks) blocks.push_back(Json{{"addr", format_address(b.address)}, {"lines", b.text_lines}});
    functions.push_back(Json{{"entry", format_address(f.entry_address)}, {"name", f.name}, {"blocks", blocks}});
  }
  doc["functions"] = std::move(functions);
  Json globals = Json::array();
  for (const auto& g : map.globals) {
    globals.push_back(Json{{"addr", format_address(g.address)}, {"name", g.name}, {"type", g.type_name}});
  }
  doc["globals"] = std::move(globals);
  Json strings = Json::array();
  for (const auto& s : map.strings) strings.push_back(Json{{"addr", format_address(s.address)}, {"literal", s.literal}});
  doc["strings"] = std::move(strings);
  Json xrefs = Json::array();
  for (const auto& x : map.xrefs) {
    xrefs.push_back(Json{{"from", format_address(x.from)}, {"to", format_address(x.to)},
                         {"kind", std::string(xref_kind_name(x.kind))}});
  }
  doc["xrefs"] = std::move(xrefs);
  return doc;
}

void attach_original_names(BinaryArtifactMap& map, const BinaryArtifactMap& unstripped) {
  for (const auto& f : unstripped.functions) {
    if (map.find_function(f.entry_address)) map.original_names[f.entry_address] = f.name;
  }
}

// ---------------------------------------------------------------------------
// Symbols

namespace {

constexpr std::string_view kToolPrefixes[] = {"dword_", "qword_", "byte_", "word_", "fun_", "dat_", "lab_",
                                              "sub_",   "loc_",   "off_",  "unk_"};

bool is_edge_junk(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::ispunct(u) || std::isspace(u);
}

bool is_symbol_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '$' || c == '@' || c == '.' || u >= 0x80;
}

}  // namespace

std::string sanitize_symbol(std::string_view raw) {
  std::string s;
  s.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      pending_space = !s.empty();
      continue;
    }
    if (pending_space) s.push_back(' ');
    pending_space = false;
    s.push_back(static_cast<char>(std::tolower(u)));
  }

  for (;;) {
    const std::string before = s;
    std::size_t b = 0, e = s.size();
    while (b < e && is_edge_junk(s[b])) ++b;
    while (e > b && is_edge_junk(s[e - 1])) --e;
    s = s.substr(b, e - b);
    for (auto prefix : kToolPrefixes) {
      if (s.starts_with(prefix)) {
        s.erase(0, prefix.size());
        break;
      }
    }
    if (s == before) break;
  }
  return s;
}

std::vector<std::string> split_symbols(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (is_symbol_char(c)) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Stoplist::Stoplist(std::span<const std::string> words) {
  for (const auto& w : words) {
    auto s = sanitize_symbol(w);
    if (!s.empty()) words_.insert(std::move(s));
  }
}

Stoplist Stoplist::defaults() {
  static const std::vector<std::string> kWords = [] {
    std::vector<std::string> w = {
        // x86 / x86-64 mnemonics
        "mov", "movzx", "movsx", "movsxd", "movabs", "movs", "movsb", "movsd", "movss", "movaps", "movups", "movdqa",
        "movdqu", "movq", "movd", "lea", "push", "pop", "call", "ret", "retn", "leave", "enter", "jmp", "je", "jne",
        "jz", "jnz", "ja", "jae", "jb", "jbe", "jg", "jge", "jl", "jle", "js", "jns", "jo", "jno", "jp", "jnp", "cmp",
        "test", "add", "adc", "sub", "sbb", "imul", "mul", "div", "idiv", "inc", "dec", "neg", "not", "and", "or",
        "xor", "shl", "shr", "sar", "sal", "rol", "ror", "nop", "int", "int3", "syscall", "hlt", "cdq", "cqo", "cdqe",
        "cwde", "cbw", "sete", "setne", "setz", "setnz", "setg", "setl", "seta", "setb", "cmove", "cmovne", "cmovz",
        "cmovnz", "cmovg", "cmovl", "cmova", "cmovb", "pxor", "xorps", "endbr64", "endbr32", "rep", "repne", "stosb",
        "stosd", "stosq", "scasb", "bswap", "xchg", "cmpxchg", "bt", "bts", "btr",
        // ARM / AArch64 mnemonics
        "ldr", "ldrb", "ldrh", "ldrsb", "ldrsh", "ldrsw", "str", "strb", "strh", "ldp", "stp", "ldm", "stm", "ldur",
        "stur", "b", "bl", "bx", "blx", "br", "blr", "cbz", "cbnz", "tbz", "tbnz", "beq", "bne", "bgt", "blt", "bge",
        "ble", "bhi", "bls", "bcs", "bcc", "bmi", "bpl", "cmn", "tst", "teq", "mvn", "rsb", "orr", "eor", "bic",
        "lsl", "lsr", "asr", "mla", "mls", "udiv", "sdiv", "movw", "movt", "movk", "adr", "adrp", "csel", "cset",
        "csinc", "sxtw", "uxtb", "uxth",
        // registers
        "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "rip", "eax", "ebx", "ecx", "edx", "esi", "edi",
        "ebp", "esp", "eip", "ax", "bx", "cx", "dx", "si", "di", "bp", "sp", "al", "ah", "bl", "bh", "cl", "ch",
        "dl", "dh", "sil", "dil", "bpl", "spl", "cs", "ds", "es", "fs", "gs", "ss", "lr", "pc", "fp", "xzr", "wzr",
        "cpsr",
        // directives, operand sizes and tool keywords
        "byte", "word", "dword", "qword", "xmmword", "ptr", "offset", "short", "near", "far", "db", "dw", "dd", "dq",
        "align", "section", "segment", "text", "data", "bss", "rodata", "extern", "public", "proc", "endp", "assume",
        "undefined", "undefined1", "undefined2", "undefined4", "undefined8", "void", "char", "long", "uint", "ulong",
        "ushort", "uchar", "bool", "return", "if", "else", "while", "for", "do", "goto", "thunk", "xref", "xrefs",
        "entry", "ram", "code", "stack", "var", "arg", "local", "param"};
    for (int i = 8; i <= 15; ++i) {
      for (const char* suffix : {"", "d", "w", "b"}) w.push_back("r" + std::to_string(i) + suffix);
    }
    for (int i = 0; i <= 15; ++i) {
      w.push_back("r" + std::to_string(i));
      w.push_back("xmm" + std::to_string(i));
      w.push_back("ymm" + std::to_string(i));
      w.push_back("s" + std::to_string(i));
      w.push_back("d" + std::to_string(i));
    }
    for (int i = 0; i <= 30; ++i) {
      w.push_back("x" + std::to_string(i));
      w.push_back("w" + std::to_string(i));
    }
    return w;
  }();
  return Stoplist(kWords);
}

Stoplist Stoplist::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (!sanitize_symbol(line).empty()) words.push_back(line);
  }
  return Stoplist(words);
}

std::string Stoplist::fingerprint() const {
  std::string joined;
  for (const auto& w : words_) {
    joined += w;
    joined += '\n';
  }
  return sha256_hex(joined);
}

// ---------------------------------------------------------------------------
// Index

std::optional<Address> SymbolIndex::function_for(std::string_view sanitized) const {
  if (auto it = symbol_to_function.find(std::string(sanitized)); it != symbol_to_function.end()) return it->second;
  return std::nullopt;
}

std::optional<Address> SymbolIndex::function_named(std::string_view name) const {
  const auto key = sanitize_symbol(name);
  if (key.empty()) return std::nullopt;
  for (const auto& [entry, n] : function_names) {
    if (sanitize_symbol(n) == key) return entry;
  }
  return std::nullopt;
}

std::optional<Address> SymbolIndex::global_named(std::string_view name) const {
  const auto key = sanitize_symbol(name);
  if (key.empty()) return std::nullopt;
  for (const auto& [addr, n] : global_names) {
    if (sanitize_symbol(n) == key) return addr;
  }
  return std::nullopt;
}

namespace {

void add_line_symbols(std::string_view line, const Stoplist& stoplist, std::set<std::string>& out) {
  for (const auto& piece : split_symbols(line)) {
    auto s = sanitize_symbol(piece);
    if (!s.empty() && !stoplist.contains(s)) out.insert(std::move(s));
  }
}

}  // namespace

std::set<std::string> function_symbols(const FunctionRecord& fn, const Stoplist& stoplist) {
  std::set<std::string> out;
  add_line_symbols(fn.name, stoplist, out);
  for (const auto& b : fn.blocks) {
    for (const auto& line : b.text_lines) add_line_symbols(line, stoplist, out);
  }
  return out;
}

SymbolIndex build_symbol_index(const BinaryArtifactMap& map, std::shared_ptr<const Stoplist> stoplist) {
  if (!stoplist) stoplist = std::make_shared<const Stoplist>();
  SymbolIndex index;
  index.stoplist = stoplist;
  index.stoplist_fingerprint = stoplist->fingerprint();

  std::unordered_map<std::string, std::set<Address>> fn_owners;
  std::unordered_map<std::string, std::vector<BlockRef>> block_owners;
  for (const auto& f : map.functions) {
    index.function_names[f.entry_address] = f.name;
    for (const auto& s : function_symbols(f, *stoplist)) fn_owners[s].insert(f.entry_address);
    for (const auto& b : f.blocks) {
      std::set<std::string> syms;
      for (const auto& line : b.text_lines) add_line_symbols(line, *stoplist, syms);
      for (const auto& s : syms) block_owners[s].push_back({f.entry_address, b.address});
    }
  }
  for (const auto& g : map.globals) index.global_names[g.address] = g.name;

  for (auto& [sym, owners] : fn_owners) {
    if (owners.size() == 1) index.symbol_to_function.emplace(sym, *owners.begin());
  }
  for (auto& [sym, owners] : block_owners) {
    if (owners.size() == 1) index.symbol_to_block.emplace(sym, owners.front());
  }
  return index;
}

// ---------------------------------------------------------------------------
// Renames

std::string_view to_string(RenameScope scope) {
  switch (scope) {
    case RenameScope::Function: return "function";
    case RenameScope::Global: return "global";
    case RenameScope::Local: return "local";
  }
  return "function";
}

bool rename_resolves(const SymbolIndex& index, const RenameEvent& ev) {
  const auto key = sanitize_symbol(ev.old_name);
  if (key.empty()) return false;
  switch (ev.scope) {
    case RenameScope::Function:
      return index.function_named(ev.old_name).has_value() || index.symbol_to_function.contains(key);
    case RenameScope::Global:
      return index.global_named(ev.old_name).has_value() || index.symbol_to_function.contains(key) ||
             index.symbol_to_block.contains(key);
    case RenameScope::Local:
      return index.function_names.contains(ev.local_function);
  }
  return false;
}

namespace {

template <typename Map, typename Value>
void place_key(Map& m, const std::string& key, const Value& value, const SymbolIndex& index) {
  if (key.empty() || index.is_stopword(key)) return;
  auto [it, inserted] = m.emplace(key, value);
  if (!inserted && !(it->second == value)) m.erase(it);  // now shared: non-discriminative
}

// OCR splits a multi-word name into tokens, so each piece is indexed as well.
template <typename Map, typename Value>
void place_pieces(Map& m, std::string_view name, const Value& value, const SymbolIndex& index) {
  const auto pieces = split_symbols(name);
  if (pieces.size() < 2) return;
  for (const auto& piece : pieces) place_key(m, sanitize_symbol(piece), value, index);
}

}  // namespace

SymbolIndex apply_rename(const SymbolIndex& index, const RenameEvent& ev) {
  SymbolIndex out = index;
  const auto old_key = sanitize_symbol(ev.old_name);
  const auto new_key = sanitize_symbol(ev.new_name);
  if (old_key == new_key) return out;

  std::optional<Address> moved_fn;
  if (auto it = out.symbol_to_function.find(old_key); it != out.symbol_to_function.end()) {
    if (ev.scope != RenameScope::Local || it->second == ev.local_function) {
      moved_fn = it->second;
      out.symbol_to_function.erase(it);
    }
  }
  std::optional<BlockRef> moved_block;
  if (auto it = out.symbol_to_block.find(old_key); it != out.symbol_to_block.end()) {
    if (ev.scope != RenameScope::Local || it->second.function == ev.local_function) {
      moved_block = it->second;
      out.symbol_to_block.erase(it);
    }
  }

  switch (ev.scope) {
    case RenameScope::Function: {
      const auto entry = index.function_named(ev.old_name);
      const auto target = entry ? entry : moved_fn;
      if (target) {
        out.function_names[*target] = ev.new_name;
        if (!new_key.empty() && !out.is_stopword(new_key)) out.symbol_to_function[new_key] = *target;
        place_pieces(out.symbol_to_function, ev.new_name, *target, out);
      }
      break;
    }
    case RenameScope::Global: {
      if (const auto addr = index.global_named(ev.old_name)) out.global_names[*addr] = ev.new_name;
      if (moved_fn) {
        place_key(out.symbol_to_function, new_key, *moved_fn, out);
        place_pieces(out.symbol_to_function, ev.new_name, *moved_fn, out);
      }
      break;
    }
    case RenameScope::Local: {
      place_key(out.symbol_to_function, new_key, moved_fn.value_or(ev.local_function), out);
      place_pieces(out.symbol_to_function, ev.new_name, moved_fn.value_or(ev.local_function), out);
      break;
    }
  }
  if (moved_block) {
    place_key(out.symbol_to_block, new_key, *moved_block, out);
    place_pieces(out.symbol_to_block, ev.new_name, *moved_block, out);
  }
  return out;
}

SymbolTimeline::SymbolTimeline(SymbolIndex base) {
  snapshots_.push_back(std::make_shared<const SymbolIndex>(std::move(base)));
}

void SymbolTimeline::append(RenameEvent ev) {
  if (!renames_.empty() && ev.t < renames_.back().t) {
    throw Error(ErrorKind::SchemaViolation, "rename at " + format_clock(ev.t) + " precedes the previous rename");
  }
  const auto& current = *snapshots_.back();
  if (!rename_resolves(current, ev)) {
    throw Error(ErrorKind::AmbiguousTarget, "'" + ev.old_name + "' does not resolve at " + format_clock(ev.t));
  }
  snapshots_.push_back(std::make_shared<const SymbolIndex>(apply_rename(current, ev)));
  renames_.push_back(std::move(ev));
}

std::shared_ptr<const SymbolIndex> SymbolTimeline::index_at(Timestamp t) const {
  auto it = std::upper_bound(renames_.begin(), renames_.end(), t,
                             [](Timestamp value, const RenameEvent& r) { return value < r.t; });
  return snapshots_[static_cast<std::size_t>(it - renames_.begin())];
}

}  // namespace annotrace
