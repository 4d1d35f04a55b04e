#include "annotrace/session.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include "annotrace/error.hpp"
#include "annotrace/png.hpp"

namespace annotrace {

namespace fs = std::filesystem;
namespace jf = json_field;

std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

namespace {

std::string region_name(int index, int region) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.%02d.png", index, region);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  out << content;
}

}  // namespace

std::string_view event_type_name(const EventData& data) {
  struct Visitor {
    std::string_view operator()(const Keystroke&) const { return "key"; }
    std::string_view operator()(const MouseClick&) const { return "click"; }
    std::string_view operator()(const WindowInfo&) const { return "window"; }
    std::string_view operator()(const ProcessSample&) const { return "proc"; }
    std::string_view operator()(const Comment&) const { return "comment"; }
  };
  return std::visit(Visitor{}, data);
}

Json manifest_to_json(const SessionManifest& m) {
  Json j;
  j["session_id"] = m.session_id;
  j["subject_pseudonym"] = m.subject_pseudonym;
  j["binary_id"] = m.binary_id;
  j["tool_hint"] = m.tool_hint ? Json(*m.tool_hint) : Json(nullptr);
  j["start"] = m.start.millis_utc;
  j["end"] = m.end.millis_utc;
  j["frame_count"] = m.frame_count;
  j["capture_interval_ms"] = m.capture_interval_ms;
  return j;
}

SessionManifest manifest_from_json(const Json& j) {
  constexpr std::string_view where = "manifest.json";
  SessionManifest m;
  m.session_id = jf::string(j, "session_id", where);
  m.subject_pseudonym = jf::string(j, "subject_pseudonym", where);
  m.binary_id = jf::string(j, "binary_id", where);
  if (auto it = j.find("tool_hint"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorKind::SchemaViolation, "manifest.json: field 'tool_hint' must be a string");
    m.tool_hint = it->get<std::string>();
  }
  m.start = Timestamp{jf::integer(j, "start", where)};
  m.end = Timestamp{jf::integer(j, "end", where)};
  m.frame_count = static_cast<int>(jf::integer(j, "frame_count", where));
  m.capture_interval_ms = static_cast<int>(jf::integer(j, "capture_interval_ms", where));
  if (m.start.millis_utc < 0) throw Error(ErrorKind::SchemaViolation, "manifest.json: field 'start' is negative");
  if (m.start > m.end) throw Error(ErrorKind::SchemaViolation, "manifest.json: field 'start' is after 'end'");
  if (m.frame_count < 0) throw Error(ErrorKind::SchemaViolation, "manifest.json: field 'frame_count' is negative");
  return m;
}

Json frame_record_to_json(const FrameRecord& r) {
  Json j;
  j["index"] = r.index;
  j["t"] = r.t.millis_utc;
  if (r.kind == FrameKind::Keyframe) {
    j["kind"] = "keyframe";
    j["width"] = r.width;
    j["height"] = r.height;
  } else {
    j["kind"] = "patch";
    Json regions = Json::array();
    for (const auto& b : r.patches) regions.push_back(Json{{"x", b.x}, {"y", b.y}, {"width", b.w}, {"height", b.h}});
    j["regions"] = std::move(regions);
  }
  return j;
}

FrameRecord frame_record_from_json(const Json& j, std::string_view where) {
  FrameRecord r;
  r.index = static_cast<int>(jf::integer(j, "index", where));
  r.t = Timestamp{jf::integer(j, "t", where)};
  const auto kind = jf::string(j, "kind", where);
  if (kind == "keyframe") {
    r.kind = FrameKind::Keyframe;
    r.width = static_cast<int>(jf::integer(j, "width", where));
    r.height = static_cast<int>(jf::integer(j, "height", where));
    if (r.width <= 0 || r.height <= 0) {
      throw Error(ErrorKind::SchemaViolation, std::string(where) + ": keyframe size must be positive");
    }
  } else if (kind == "patch") {
    r.kind = FrameKind::Patch;
    for (const auto& reg : jf::array(j, "regions", where)) {
      BBox b{static_cast<int>(jf::integer(reg, "x", where)), static_cast<int>(jf::integer(reg, "y", where)),
             static_cast<int>(jf::integer(reg, "width", where)), static_cast<int>(jf::integer(reg, "height", where))};
      if (b.x < 0 || b.y < 0 || b.w <= 0 || b.h <= 0) {
        throw Error(ErrorKind::SchemaViolation, std::string(where) + ": region has negative origin or empty size");
      }
      r.patches.push_back(b);
    }
  } else {
    throw Error(ErrorKind::SchemaViolation, std::string(where) + ": field 'kind' must be keyframe or patch");
  }
  return r;
}

Json event_to_json(const EventRecord& e) {
  Json j;
  j["t"] = e.t.millis_utc;
  j["type"] = std::string(event_type_name(e.data));
  std::visit(
      [&j](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Keystroke>) {
          j["key"] = d.key;
          j["modifiers"] = d.modifiers;
        } else if constexpr (std::is_same_v<T, MouseClick>) {
          j["x"] = d.x;
          j["y"] = d.y;
          j["button"] = d.button;
          j["click_count"] = d.click_count;
        } else if constexpr (std::is_same_v<T, WindowInfo>) {
          j["title"] = d.title;
          j["x"] = d.x;
          j["y"] = d.y;
          j["w"] = d.w;
          j["h"] = d.h;
          j["focused"] = d.focused;
        } else if constexpr (std::is_same_v<T, ProcessSample>) {
          Json procs = Json::array();
          for (const auto& p : d.processes) {
            procs.push_back(Json{{"name", p.name}, {"cpu_pct", p.cpu_pct}, {"mem_bytes", p.mem_bytes}});
          }
          j["processes"] = std::move(procs);
        } else {
          j["text"] = d.text;
        }
      },
      e.data);
  return j;
}

EventRecord event_from_json(const Json& j, std::string_view where) {
  EventRecord e;
  e.t = Timestamp{jf::integer(j, "t", where)};
  const auto type = jf::string(j, "type", where);
  if (type == "key") {
    Keystroke k;
    k.key = jf::string(j, "key", where);
    if (auto it = j.find("modifiers"); it != j.end()) {
      if (!it->is_array()) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": field 'modifiers' must be an array");
      for (const auto& m : *it) {
        if (!m.is_string()) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": modifier must be a string");
        k.modifiers.push_back(m.get<std::string>());
      }
    }
    e.data = std::move(k);
  } else if (type == "click") {
    MouseClick c;
    c.x = static_cast<int>(jf::integer(j, "x", where));
    c.y = static_cast<int>(jf::integer(j, "y", where));
    c.button = jf::string(j, "button", where);
    c.click_count = static_cast<int>(jf::integer(j, "click_count", where));
    if (c.click_count < 1) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": field 'click_count' must be >= 1");
    e.data = std::move(c);
  } else if (type == "window") {
    WindowInfo w;
    w.title = jf::string(j, "title", where);
    w.x = static_cast<int>(jf::integer(j, "x", where));
    w.y = static_cast<int>(jf::integer(j, "y", where));
    w.w = static_cast<int>(jf::integer(j, "w", where));
    w.h = static_cast<int>(jf::integer(j, "h", where));
    w.focused = jf::boolean(j, "focused", where);
    e.data = std::move(w);
  } else if (type == "proc") {
    ProcessSample p;
    for (const auto& entry : jf::array(j, "processes", where)) {
      p.processes.push_back({jf::string(entry, "name", where), jf::number(entry, "cpu_pct", where),
                             jf::integer(entry, "mem_bytes", where)});
    }
    e.data = std::move(p);
  } else if (type == "comment") {
    e.data = Comment{jf::string(j, "text", where)};
  } else {
    throw Error(ErrorKind::SchemaViolation, std::string(where) + ": unknown event type '" + type + "'");
  }
  return e;
}

std::string serialize_manifest(const SessionManifest& m) { return manifest_to_json(m).dump(2) + "\n"; }

std::string serialize_frame_record(const FrameRecord& r) { return frame_record_to_json(r).dump() + "\n"; }

std::string serialize_events(std::span<const EventRecord> events) {
  std::string out;
  for (const auto& e : events) {
    out += event_to_json(e).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SessionBundle::Memo {
  std::mutex mutex;
  int index = -1;
  Image image;
};

SessionBundle::SessionBundle(fs::path root, SessionManifest manifest, std::vector<FrameRecord> frames,
                             std::vector<EventRecord> events)
    : root_(std::move(root)),
      manifest_(std::move(manifest)),
      frames_(std::move(frames)),
      events_(std::move(events)),
      memo_(std::make_unique<Memo>()) {
  keyframe_of_.resize(frames_.size());
  int last = 0;
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (frames_[i].kind == FrameKind::Keyframe) last = static_cast<int>(i);
    keyframe_of_[i] = last;
  }
}

SessionBundle::SessionBundle(SessionBundle&&) noexcept = default;
SessionBundle& SessionBundle::operator=(SessionBundle&&) noexcept = default;
SessionBundle::~SessionBundle() = default;

const FrameRecord& SessionBundle::frame(int index) const {
  if (index < 0 || index >= frame_count()) {
    throw Error(ErrorKind::IndexOutOfRange,
                "frame " + std::to_string(index) + " not in [0, " + std::to_string(frame_count()) + ")");
  }
  return frames_[static_cast<std::size_t>(index)];
}

int SessionBundle::keyframe_for(int index) const {
  frame(index);
  return keyframe_of_[static_cast<std::size_t>(index)];
}

std::pair<int, int> SessionBundle::frame_size(int index) const {
  const auto& kf = frames_[static_cast<std::size_t>(keyframe_for(index))];
  return {kf.width, kf.height};
}

Image SessionBundle::load_keyframe(int index) const {
  const auto& rec = frame(index);
  if (rec.kind != FrameKind::Keyframe) {
    throw Error(ErrorKind::CorruptPatch, "frame " + std::to_string(index) + " is not a keyframe");
  }
  auto img = decode_png(read_file_bytes(root_ / "frames" / (frame_stem(index) + ".kf.png")));
  if (img.width() != rec.width || img.height() != rec.height) {
    throw Error(ErrorKind::CorruptPatch, "keyframe " + std::to_string(index) + " size disagrees with its record");
  }
  return img;
}

std::vector<PatchRegion> SessionBundle::load_patches(int index) const {
  const auto& rec = frame(index);
  std::vector<PatchRegion> out;
  for (std::size_t r = 0; r < rec.patches.size(); ++r) {
    const auto path = root_ / "frames" / region_name(index, static_cast<int>(r));
    Image px;
    try {
      px = decode_png(read_file_bytes(path));
    } catch (const Error& e) {
      throw Error(ErrorKind::CorruptPatch, path.string() + ": " + e.what());
    }
    const auto& box = rec.patches[r];
    if (px.width() != box.w || px.height() != box.h) {
      throw Error(ErrorKind::CorruptPatch, path.string() + ": raster size disagrees with region metadata");
    }
    out.push_back({box.x, box.y, std::move(px)});
  }
  return out;
}

namespace {

Image reconstruct_from(const SessionBundle& bundle, int index, int cached_index, const Image* cached) {
  const int kf = bundle.keyframe_for(index);
  int from;
  Image img;
  if (cached != nullptr && cached_index >= kf && cached_index <= index) {
    from = cached_index + 1;
    img = *cached;
  } else {
    img = bundle.load_keyframe(kf);
    from = kf + 1;
  }
  for (int i = from; i <= index; ++i) {
    const auto patches = bundle.load_patches(i);
    try {
      img = apply_patches(img, patches);
    } catch (const Error& e) {
      throw Error(ErrorKind::CorruptPatch, "frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return img;
}

}  // namespace

Image reconstruct_frame(const SessionBundle& bundle, int index) {
  bundle.frame(index);
  std::lock_guard lock(bundle.memo_->mutex);
  auto& memo = *bundle.memo_;
  if (memo.index == index) return memo.image;
  Image img = reconstruct_from(bundle, index, memo.index, memo.index >= 0 ? &memo.image : nullptr);
  memo.index = index;
  memo.image = img;
  return img;
}

Image FrameReader::reconstruct(int index) {
  bundle_->frame(index);
  if (cached_index_ == index) return cached_;
  cached_ = reconstruct_from(*bundle_, index, cached_index_, cached_index_ >= 0 ? &cached_ : nullptr);
  cached_index_ = index;
  return cached_;
}

// ---------------------------------------------------------------------------

SessionBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingFile, dir.string() + " is not a directory");
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(ErrorKind::MissingFile, manifest_path.string());
  auto manifest = manifest_from_json(parse_json(read_text(manifest_path), "manifest.json"));

  const auto frames_dir = dir / "frames";
  if (!fs::is_directory(frames_dir)) throw Error(ErrorKind::MissingFile, frames_dir.string());

  static const std::regex kRecord(R"((\d{6})\.(kf|patch)\.json)");
  std::map<int, fs::path> records;
  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    const auto name = entry.path().filename().string();
    names.insert(name);
    std::smatch m;
    if (std::regex_match(name, m, kRecord)) {
      const int idx = std::stoi(m[1].str());
      if (!records.emplace(idx, entry.path()).second) {
        throw Error(ErrorKind::SchemaViolation, "frame index " + std::to_string(idx) + " has both keyframe and patch records");
      }
    }
  }

  for (int expected = 0; expected < manifest.frame_count; ++expected) {
    if (!records.contains(expected)) {
      throw Error(ErrorKind::SchemaViolation, "frames: missing frame index " + std::to_string(expected));
    }
  }
  if (static_cast<int>(records.size()) != manifest.frame_count) {
    throw Error(ErrorKind::SchemaViolation, "frames: " + std::to_string(records.size()) +
                                                " frame records on disk but manifest frame_count is " +
                                                std::to_string(manifest.frame_count));
  }

  std::vector<FrameRecord> frames;
  frames.reserve(records.size());
  int cur_w = 0, cur_h = 0;
  for (const auto& [idx, path] : records) {
    const auto where = "frames/" + path.filename().string();
    auto rec = frame_record_from_json(parse_json(read_text(path), where), where);
    if (rec.index != idx) throw Error(ErrorKind::SchemaViolation, where + ": field 'index' disagrees with file name");
    const bool is_kf = path.filename().string().find(".kf.") != std::string::npos;
    if (is_kf != (rec.kind == FrameKind::Keyframe)) {
      throw Error(ErrorKind::SchemaViolation, where + ": field 'kind' disagrees with file name");
    }
    if (idx == 0 && rec.kind != FrameKind::Keyframe) {
      throw Error(ErrorKind::SchemaViolation, "frames: frame 0 must be a keyframe");
    }
    if (rec.t < manifest.start || rec.t > manifest.end) {
      throw Error(ErrorKind::SchemaViolation, where + ": field 't' outside session [start, end]");
    }
    if (!frames.empty() && rec.t < frames.back().t) {
      throw Error(ErrorKind::SchemaViolation, where + ": frame time precedes frame " + std::to_string(idx - 1));
    }
    if (rec.kind == FrameKind::Keyframe) {
      if (!names.contains(frame_stem(idx) + ".kf.png")) {
        throw Error(ErrorKind::MissingFile, (frames_dir / (frame_stem(idx) + ".kf.png")).string());
      }
      cur_w = rec.width;
      cur_h = rec.height;
    } else {
      for (std::size_t r = 0; r < rec.patches.size(); ++r) {
        const auto& b = rec.patches[r];
        if (b.right() > cur_w || b.bottom() > cur_h) {
          throw Error(ErrorKind::SchemaViolation, where + ": region " + std::to_string(r) + " exceeds frame bounds");
        }
        if (!names.contains(region_name(idx, static_cast<int>(r)))) {
          throw Error(ErrorKind::MissingFile, (frames_dir / region_name(idx, static_cast<int>(r))).string());
        }
      }
    }
    frames.push_back(std::move(rec));
  }

  const auto events_path = dir / "events.jsonl";
  if (!fs::exists(events_path)) throw Error(ErrorKind::MissingFile, events_path.string());
  std::vector<EventRecord> events;
  {
    std::istringstream in(read_text(events_path));
    std::string line;
    int lineno = 0;
    const int screen_w = frames.empty() ? 0 : frames.front().width;
    const int screen_h = frames.empty() ? 0 : frames.front().height;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto where = "events.jsonl:" + std::to_string(lineno);
      auto ev = event_from_json(parse_json(line, where), where);
      if (ev.t < manifest.start || ev.t > manifest.end) {
        throw Error(ErrorKind::SchemaViolation, where + ": field 't' outside session [start, end]");
      }
      if (!events.empty() && ev.t < events.back().t) {
        throw Error(ErrorKind::UnsortedEvents, where + ": event precedes its predecessor");
      }
      if (const auto* click = std::get_if<MouseClick>(&ev.data); click != nullptr && !frames.empty()) {
        if (click->x < 0 || click->y < 0 || click->x >= screen_w || click->y >= screen_h) {
          throw Error(ErrorKind::SchemaViolation, where + ": click outside screen bounds");
        }
      }
      events.push_back(std::move(ev));
    }
  }

  return SessionBundle(dir, std::move(manifest), std::move(frames), std::move(events));
}

// ---------------------------------------------------------------------------

void write_events(const fs::path& dir, std::span<const EventRecord> events) {
  write_text(dir / "events.jsonl", serialize_events(events));
}

void write_bundle(const fs::path& dir, SessionManifest manifest, std::span<const CapturedFrame> frames,
                  std::span<const EventRecord> events, const EncodeOptions& options) {
  fs::create_directories(dir / "frames");
  manifest.frame_count = static_cast<int>(frames.size());

  const Image* prev = nullptr;
  int since_keyframe = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& cur = frames[i];
    const int idx = static_cast<int>(i);
    FrameRecord rec;
    rec.index = idx;
    rec.t = cur.t;

    bool keyframe = prev == nullptr || prev->width() != cur.image.width() || prev->height() != cur.image.height() ||
                    since_keyframe + 1 >= options.max_keyframe_interval;
    std::vector<std::vector<std::uint8_t>> region_pngs;
    std::vector<std::uint8_t> full_png;
    if (!keyframe) {
      const auto patches = diff_frames(*prev, cur.image);
      std::size_t patch_bytes = 0;
      for (const auto& p : patches) {
        region_pngs.push_back(encode_png(p.pixels));
        patch_bytes += region_pngs.back().size();
        rec.patches.push_back(p.bbox());
      }
      full_png = encode_png(cur.image);
      if (static_cast<double>(patch_bytes) > options.keyframe_byte_ratio * static_cast<double>(full_png.size())) {
        keyframe = true;
      }
    }

    const auto stem = frame_stem(idx);
    if (keyframe) {
      if (full_png.empty()) full_png = encode_png(cur.image);
      rec.kind = FrameKind::Keyframe;
      rec.width = cur.image.width();
      rec.height = cur.image.height();
      rec.patches.clear();
      write_file_bytes(dir / "frames" / (stem + ".kf.png"), full_png);
      write_text(dir / "frames" / (stem + ".kf.json"), serialize_frame_record(rec));
      since_keyframe = 0;
    } else {
      rec.kind = FrameKind::Patch;
      for (std::size_t r = 0; r < region_pngs.size(); ++r) {
        write_file_bytes(dir / "frames" / region_name(idx, static_cast<int>(r)), region_pngs[r]);
      }
      write_text(dir / "frames" / (stem + ".patch.json"), serialize_frame_record(rec));
      ++since_keyframe;
    }
    prev = &cur.image;
  }

  write_text(dir / "manifest.json", serialize_manifest(manifest));
  write_events(dir, events);
}

}  // namespace annotrace
