#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "annotrace/json.hpp"
#include "annotrace/timestamp.hpp"

namespace annotrace {

using Address = std::uint64_t;

struct BlockRecord {
  Address address = 0;
  std::vector<std::string> text_lines;  // disassembly as the tool renders it
  bool operator==(const BlockRecord&) const = default;
};

struct FunctionRecord {
  Address entry_address = 0;
  std::string name;
  std::vector<BlockRecord> blocks;  // sorted by address
  bool operator==(const FunctionRecord&) const = default;
};

struct GlobalRecord {
  Address address = 0;
  std::string name;
  std::string type_name;
  bool operator==(const GlobalRecord&) const = default;
};

struct StringRecord {
  Address address = 0;
  std::string literal;
  bool operator==(const StringRecord&) const = default;
};

enum class XrefKind { Call, Data, String };

struct Xref {
  Address from = 0;
  Address to = 0;
  XrefKind kind = XrefKind::Call;
  bool operator==(const Xref&) const = default;
};

/// Ground-truth structure of one challenge binary.
struct BinaryArtifactMap {
  std::string binary_id;
  std::vector<FunctionRecord> functions;  // sorted by entry address
  std::vector<GlobalRecord> globals;
  std::vector<StringRecord> strings;
  std::vector<Xref> xrefs;
  /// Names from an unstripped build, keyed by function entry; used only for
  /// display.
  std::map<Address, std::string> original_names;

  const FunctionRecord* find_function(Address entry) const;
  const FunctionRecord* function_owning_block(Address block) const;
  /// Original name when known, else the tool name.
  std::string display_name(Address entry) const;
  /// 1-based rank of a function entry in ascending address order; 0 if unknown.
  int function_rank(Address entry) const;
  /// True when `address` is the source or target of any cross-reference.
  bool is_xref_endpoint(Address address) const;
};

/// Validates and loads an interchange document. Throws
/// Error(SchemaViolation), Error(DuplicateAddress) or Error(DanglingXref).
BinaryArtifactMap parse_artifact_map(const Json& doc);
BinaryArtifactMap import_artifact_map(const std::filesystem::path& file);
Json artifact_map_to_json(const BinaryArtifactMap& map);
/// Copies function names from an unstripped build (matched by entry).
void attach_original_names(BinaryArtifactMap& map, const BinaryArtifactMap& unstripped);

/// Canonical symbol key: lowercased, tool prefixes (FUN_, DAT_, sub_, …)
/// stripped, edge punctuation trimmed, inner whitespace collapsed. Idempotent.
std::string sanitize_symbol(std::string_view raw);

/// Raw identifier-like pieces of a rendered line or OCR token.
std::vector<std::string> split_symbols(std::string_view text);

/// Non-discriminative symbols (mnemonics, registers, directives), stored
/// sanitized.
class Stoplist {
 public:
  Stoplist() = default;
  explicit Stoplist(std::span<const std::string> words);

  static Stoplist defaults();
  /// One word per line; '#' starts a comment.
  static Stoplist from_file(const std::filesystem::path& path);

  bool contains(std::string_view sanitized) const { return words_.contains(std::string(sanitized)); }
  std::size_t size() const { return words_.size(); }
  const std::set<std::string>& words() const { return words_; }
  std::string fingerprint() const;

 private:
  std::set<std::string> words_;
};

struct BlockRef {
  Address function = 0;
  Address block = 0;
  bool operator==(const BlockRef&) const = default;
};

/// Sanitized symbol lookups for one point in time.
struct SymbolIndex {
  std::unordered_map<std::string, Address> symbol_to_function;
  std::unordered_map<std::string, BlockRef> symbol_to_block;
  std::string stoplist_fingerprint;
  std::shared_ptr<const Stoplist> stoplist;
  /// Current raw names, updated by renames.
  std::map<Address, std::string> function_names;
  std::map<Address, std::string> global_names;

  std::optional<Address> function_for(std::string_view sanitized) const;
  std::optional<Address> function_named(std::string_view raw_or_sanitized) const;
  std::optional<Address> global_named(std::string_view raw_or_sanitized) const;
  bool is_stopword(std::string_view sanitized) const { return stoplist && stoplist->contains(sanitized); }
};

/// Symbols found in exactly one function (block) map to it; shared and
/// stoplisted symbols are left out. A function's own name counts as part of
/// its rendered text.
SymbolIndex build_symbol_index(const BinaryArtifactMap& map, std::shared_ptr<const Stoplist> stoplist);

/// The sanitized, stoplist-filtered symbol set of a function's rendered text.
std::set<std::string> function_symbols(const FunctionRecord& fn, const Stoplist& stoplist);

enum class RenameScope { Function, Global, Local };

std::string_view to_string(RenameScope scope);

struct RenameEvent {
  Timestamp t;
  RenameScope scope = RenameScope::Function;
  Address local_function = 0;  // owning function for Local scope
  std::string old_name;
  std::string new_name;
  bool operator==(const RenameEvent&) const = default;
};

/// True when `ev.old_name` names something `index` knows about.
bool rename_resolves(const SymbolIndex& index, const RenameEvent& ev);

/// The index after one rename. Artifact identities never change; only keys
/// move. Old keys stop resolving, new keys resolve to the same artifact.
SymbolIndex apply_rename(const SymbolIndex& index, const RenameEvent& ev);

/// Base index plus time-sorted renames, with an immutable snapshot per
/// rename so views can be shared across threads.
class SymbolTimeline {
 public:
  explicit SymbolTimeline(SymbolIndex base);

  const SymbolIndex& base() const { return *snapshots_.front(); }
  std::span<const RenameEvent> renames() const { return renames_; }

  /// Throws Error(AmbiguousTarget) when the old name does not resolve at
  /// `ev.t`, and Error(SchemaViolation) when `ev.t` precedes the last rename.
  void append(RenameEvent ev);

  /// View reflecting every rename with event time <= t.
  std::shared_ptr<const SymbolIndex> index_at(Timestamp t) const;

 private:
  std::vector<RenameEvent> renames_;
  std::vector<std::shared_ptr<const SymbolIndex>> snapshots_;  // [k] = after k renames
};

}  // namespace annotrace
