#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "annotrace/image.hpp"
#include "annotrace/json.hpp"
#include "annotrace/timestamp.hpp"

namespace annotrace {

struct SessionManifest {
  std::string session_id;
  std::string subject_pseudonym;
  std::string binary_id;
  std::optional<std::string> tool_hint;
  Timestamp start;
  Timestamp end;
  int frame_count = 0;
  int capture_interval_ms = 1000;

  bool operator==(const SessionManifest&) const = default;
};

enum class FrameKind { Keyframe, Patch };

struct FrameRecord {
  int index = 0;
  Timestamp t;
  FrameKind kind = FrameKind::Keyframe;
  int width = 0;   // keyframes only
  int height = 0;  // keyframes only
  std::vector<BBox> patches;  // patch frames only, in region-file order

  bool operator==(const FrameRecord&) const = default;
};

struct Keystroke {
  std::string key;
  std::vector<std::string> modifiers;
  bool operator==(const Keystroke&) const = default;
};

struct MouseClick {
  int x = 0;
  int y = 0;
  std::string button = "left";
  int click_count = 1;
  bool operator==(const MouseClick&) const = default;
};

struct WindowInfo {
  std::string title;
  int x = 0, y = 0, w = 0, h = 0;
  bool focused = false;
  bool operator==(const WindowInfo&) const = default;
};

struct ProcessEntry {
  std::string name;
  double cpu_pct = 0;
  std::int64_t mem_bytes = 0;
  bool operator==(const ProcessEntry&) const = default;
};

struct ProcessSample {
  std::vector<ProcessEntry> processes;
  bool operator==(const ProcessSample&) const = default;
};

struct Comment {
  std::string text;
  bool operator==(const Comment&) const = default;
};

using EventData = std::variant<Keystroke, MouseClick, WindowInfo, ProcessSample, Comment>;

struct EventRecord {
  Timestamp t;
  EventData data;
  bool operator==(const EventRecord&) const = default;
};

/// Wire name of an event variant: key, click, window, proc or comment.
std::string_view event_type_name(const EventData& data);

Json manifest_to_json(const SessionManifest& m);
SessionManifest manifest_from_json(const Json& j);
Json frame_record_to_json(const FrameRecord& r);
FrameRecord frame_record_from_json(const Json& j, std::string_view where);
Json event_to_json(const EventRecord& e);
EventRecord event_from_json(const Json& j, std::string_view where);

/// Canonical file contents; load_bundle followed by these reproduces the
/// on-disk bytes of a canonical bundle.
std::string serialize_manifest(const SessionManifest& m);
std::string serialize_frame_record(const FrameRecord& r);
std::string serialize_events(std::span<const EventRecord> events);

std::string frame_stem(int index);  // zero-padded "NNNNNN"

/// An immutable, loaded session directory. Frame pixels are read lazily.
class SessionBundle {
 public:
  SessionBundle(std::filesystem::path root, SessionManifest manifest, std::vector<FrameRecord> frames,
                std::vector<EventRecord> events);
  SessionBundle(SessionBundle&&) noexcept;
  SessionBundle& operator=(SessionBundle&&) noexcept;
  ~SessionBundle();

  const std::filesystem::path& root() const { return root_; }
  const SessionManifest& manifest() const { return manifest_; }
  std::span<const FrameRecord> frames() const { return frames_; }
  std::span<const EventRecord> events() const { return events_; }
  int frame_count() const { return static_cast<int>(frames_.size()); }
  const FrameRecord& frame(int index) const;

  /// Index of the keyframe at or before `index`.
  int keyframe_for(int index) const;
  /// Screen size in effect for a frame (size of its keyframe).
  std::pair<int, int> frame_size(int index) const;

  Image load_keyframe(int index) const;
  std::vector<PatchRegion> load_patches(int index) const;

 private:
  friend Image reconstruct_frame(const SessionBundle& bundle, int index);
  struct Memo;

  std::filesystem::path root_;
  SessionManifest manifest_;
  std::vector<FrameRecord> frames_;
  std::vector<EventRecord> events_;
  std::vector<int> keyframe_of_;
  std::unique_ptr<Memo> memo_;
};

/// Parses and validates a bundle directory. Throws Error(MissingFile),
/// Error(SchemaViolation) or Error(UnsortedEvents).
SessionBundle load_bundle(const std::filesystem::path& dir);

/// Keyframe at or before `index` with all later patches applied in order.
/// Memoizes the latest result inside the bundle (serialized by a mutex).
/// Throws Error(IndexOutOfRange) or Error(CorruptPatch).
Image reconstruct_frame(const SessionBundle& bundle, int index);

/// Reconstruction with caller-owned memoization, for concurrent readers.
class FrameReader {
 public:
  explicit FrameReader(const SessionBundle& bundle) : bundle_(&bundle) {}
  Image reconstruct(int index);

 private:
  const SessionBundle* bundle_;
  int cached_index_ = -1;
  Image cached_;
};

struct CapturedFrame {
  Timestamp t;
  Image image;
};

struct EncodeOptions {
  /// A keyframe replaces a patch frame whose patch PNG bytes exceed this
  /// fraction of the full-frame PNG.
  double keyframe_byte_ratio = 0.6;
  int max_keyframe_interval = 100;
};

/// Writes a canonical bundle (manifest, frames, events). frame_count in the
/// manifest is set from `frames`.
void write_bundle(const std::filesystem::path& dir, SessionManifest manifest, std::span<const CapturedFrame> frames,
                  std::span<const EventRecord> events, const EncodeOptions& options = {});

/// Rewrites events.jsonl canonically; events must already be time-sorted.
void write_events(const std::filesystem::path& dir, std::span<const EventRecord> events);

}  // namespace annotrace
