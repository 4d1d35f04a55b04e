#include "annotrace/ocr.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <tuple>

#include <unistd.h>

#include "annotrace/error.hpp"
#include "annotrace/hash.hpp"
#include "annotrace/png.hpp"
#include "annotrace/subprocess.hpp"

namespace annotrace {

namespace fs = std::filesystem;
namespace jf = json_field;

namespace {

std::string_view threshold_name(ThresholdMode m) {
  switch (m) {
    case ThresholdMode::None: return "none";
    case ThresholdMode::Otsu: return "otsu";
    case ThresholdMode::Fixed: return "fixed";
  }
  return "none";
}

std::string_view segmentation_name(SegmentationHint s) {
  switch (s) {
    case SegmentationHint::Sparse: return "sparse";
    case SegmentationHint::Block: return "block";
    case SegmentationHint::Line: return "line";
  }
  return "sparse";
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::uint8_t luma(const std::uint8_t* p) {
  return static_cast<std::uint8_t>((299 * p[0] + 587 * p[1] + 114 * p[2] + 500) / 1000);
}

}  // namespace

Json ocr_config_to_json(const OcrConfig& cfg) {
  Json j;
  j["upscale_factor"] = cfg.upscale_factor;
  j["grayscale"] = cfg.grayscale;
  j["threshold"] = std::string(threshold_name(cfg.threshold));
  if (cfg.threshold == ThresholdMode::Fixed) j["threshold_value"] = cfg.fixed_threshold;
  j["char_whitelist"] = cfg.char_whitelist ? Json(*cfg.char_whitelist) : Json(nullptr);
  j["segmentation_hint"] = std::string(segmentation_name(cfg.segmentation));
  return j;
}

OcrConfig ocr_config_from_json(const Json& j) {
  constexpr std::string_view where = "ocr config";
  OcrConfig cfg;
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "ocr config: expected an object");
  if (j.contains("upscale_factor")) cfg.upscale_factor = static_cast<int>(jf::integer(j, "upscale_factor", where));
  if (cfg.upscale_factor < 1) throw Error(ErrorKind::SchemaViolation, "ocr config: upscale_factor must be >= 1");
  if (j.contains("grayscale")) cfg.grayscale = jf::boolean(j, "grayscale", where);
  if (j.contains("threshold")) {
    const auto t = jf::string(j, "threshold", where);
    if (t == "none") cfg.threshold = ThresholdMode::None;
    else if (t == "otsu") cfg.threshold = ThresholdMode::Otsu;
    else if (t == "fixed") cfg.threshold = ThresholdMode::Fixed;
    else throw Error(ErrorKind::SchemaViolation, "ocr config: unknown threshold '" + t + "'");
  }
  if (j.contains("threshold_value")) cfg.fixed_threshold = static_cast<int>(jf::integer(j, "threshold_value", where));
  if (auto it = j.find("char_whitelist"); it != j.end() && !it->is_null()) {
    cfg.char_whitelist = jf::string(j, "char_whitelist", where);
  }
  if (j.contains("segmentation_hint")) {
    const auto s = jf::string(j, "segmentation_hint", where);
    if (s == "sparse") cfg.segmentation = SegmentationHint::Sparse;
    else if (s == "block") cfg.segmentation = SegmentationHint::Block;
    else if (s == "line") cfg.segmentation = SegmentationHint::Line;
    else throw Error(ErrorKind::SchemaViolation, "ocr config: unknown segmentation_hint '" + s + "'");
  }
  return cfg;
}

std::string config_fingerprint(std::string_view backend_id, const OcrConfig& cfg) {
  return sha256_hex(std::string(backend_id) + "\n" + ocr_config_to_json(cfg).dump());
}

int otsu_threshold(std::span<const std::uint64_t, 256> histogram) {
  std::uint64_t total = 0;
  double weighted_sum = 0;
  int occupied = 0, only_level = 0;
  for (int i = 0; i < 256; ++i) {
    total += histogram[i];
    weighted_sum += static_cast<double>(i) * static_cast<double>(histogram[i]);
    if (histogram[i] != 0) {
      ++occupied;
      only_level = i;
    }
  }
  if (occupied <= 1) return only_level;

  double best_var = -1, sum_bg = 0;
  std::uint64_t w_bg = 0;
  int best = 0;
  for (int t = 0; t < 256; ++t) {
    w_bg += histogram[t];
    if (w_bg == 0) continue;
    const std::uint64_t w_fg = total - w_bg;
    if (w_fg == 0) break;
    sum_bg += static_cast<double>(t) * static_cast<double>(histogram[t]);
    const double mean_bg = sum_bg / static_cast<double>(w_bg);
    const double mean_fg = (weighted_sum - sum_bg) / static_cast<double>(w_fg);
    const double between = static_cast<double>(w_bg) * static_cast<double>(w_fg) * (mean_bg - mean_fg) * (mean_bg - mean_fg);
    if (between > best_var) {
      best_var = between;
      best = t;
    }
  }
  return best;
}

Image preprocess_image(const Image& img, const OcrConfig& cfg) {
  const int f = std::max(1, cfg.upscale_factor);
  Image out;
  if (f == 1) {
    out = img;
  } else {
    out = Image(img.width() * f, img.height() * f);
    const auto src = img.rgba();
    auto dst = out.rgba();
    const std::size_t dst_w = static_cast<std::size_t>(out.width());
    for (int y = 0; y < out.height(); ++y) {
      const std::size_t sy = static_cast<std::size_t>(y / f);
      for (int x = 0; x < out.width(); ++x) {
        const std::size_t sx = static_cast<std::size_t>(x / f);
        std::copy_n(&src[(sy * img.width() + sx) * 4], 4, &dst[(y * dst_w + x) * 4]);
      }
    }
  }

  const bool binarize = cfg.threshold != ThresholdMode::None;
  if (!cfg.grayscale && !binarize) return out;

  auto px = out.rgba();
  const std::size_t n = static_cast<std::size_t>(out.width()) * out.height();
  std::vector<std::uint8_t> gray(n);
  std::array<std::uint64_t, 256> hist{};
  for (std::size_t i = 0; i < n; ++i) {
    gray[i] = luma(&px[i * 4]);
    ++hist[gray[i]];
  }
  int level = -1;
  if (cfg.threshold == ThresholdMode::Otsu) level = otsu_threshold(hist);
  if (cfg.threshold == ThresholdMode::Fixed) level = cfg.fixed_threshold;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t v = level < 0 ? gray[i] : (gray[i] > level ? 255 : 0);
    px[i * 4] = px[i * 4 + 1] = px[i * 4 + 2] = v;
    px[i * 4 + 3] = 255;
  }
  return out;
}

std::vector<OcrToken> parse_token_table(std::string_view tsv, std::string_view where) {
  std::vector<OcrToken> out;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < tsv.size()) {
    auto nl = tsv.find('\n', pos);
    if (nl == std::string_view::npos) nl = tsv.size();
    std::string_view line = tsv.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    auto fail = [&](std::string_view what) {
      throw Error(ErrorKind::BackendFailure,
                  std::string(where) + ":" + std::to_string(lineno) + ": " + std::string(what));
    };
    if (fields.size() != 6) fail("expected 6 tab-separated fields");
    int nums[4];
    for (int k = 0; k < 4; ++k) {
      const auto f = fields[static_cast<std::size_t>(k + 1)];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), nums[k]);
      if (ec != std::errc() || p != f.data() + f.size()) fail("non-integer box field");
    }
    double conf = 0;
    try {
      std::size_t used = 0;
      const std::string c(fields[5]);
      conf = std::stod(c, &used);
      if (used != c.size()) fail("bad confidence");
    } catch (const std::logic_error&) {
      fail("bad confidence");
    }
    out.push_back({std::string(fields[0]), {nums[0], nums[1], nums[2], nums[3]}, conf});
  }
  return out;
}

std::string format_token_table(std::span<const OcrToken> tokens) {
  std::ostringstream os;
  for (const auto& t : tokens) {
    os << t.text << '\t' << t.bbox.x << '\t' << t.bbox.y << '\t' << t.bbox.w << '\t' << t.bbox.h << '\t'
       << t.confidence << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<OcrToken> MockOcrBackend::recognize(const OcrRequest& request) {
  const auto path = request.bundle.root() / "ocr_mock" / (frame_stem(request.frame_index) + ".tsv");
  if (!fs::exists(path)) return {};
  const auto bytes = read_file_bytes(path);
  auto tokens = parse_token_table(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                  path.filename().string());
  const int f = std::max(1, request.config.upscale_factor);
  for (auto& t : tokens) t.bbox = {t.bbox.x * f, t.bbox.y * f, t.bbox.w * f, t.bbox.h * f};
  return tokens;
}

ProcessOcrBackend::ProcessOcrBackend(std::string engine) : engine_(std::move(engine)) {}

std::string ProcessOcrBackend::id() const { return "process:" + fs::path(engine_).filename().string(); }

std::vector<OcrToken> ProcessOcrBackend::recognize(const OcrRequest& request) {
  const auto exe = find_executable(engine_);
  if (!exe) throw Error(ErrorKind::BackendUnavailable, "OCR engine '" + engine_ + "' not found");

  static std::atomic<std::uint64_t> counter{0};
  const auto stem = "annotrace-ocr-" + std::to_string(::getpid()) + "-" +
                    std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "-" +
                    std::to_string(counter++);
  const auto dir = fs::temp_directory_path();
  const auto png_path = dir / (stem + ".png");
  const auto cfg_path = dir / (stem + ".json");
  write_file_bytes(png_path, encode_png(request.preprocessed));
  {
    std::ofstream out(cfg_path);
    out << ocr_config_to_json(request.config).dump() << "\n";
  }

  ProcessResult result;
  try {
    result = run_process({*exe, png_path.string(), cfg_path.string()});
  } catch (...) {
    fs::remove(png_path);
    fs::remove(cfg_path);
    throw;
  }
  fs::remove(png_path);
  fs::remove(cfg_path);
  if (result.exit_code != 0) {
    throw Error(ErrorKind::BackendFailure, engine_ + " exited with status " + std::to_string(result.exit_code));
  }
  return parse_token_table(result.stdout_text, engine_);
}

std::string inject_char_noise(std::string_view text, const NoiseConfig& cfg, std::mt19937_64& rng) {
  static constexpr std::string_view kAlnum = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::string out(text);
  for (auto& c : out) {
    if (coin(rng) >= cfg.char_error_rate) continue;
    char replacement = 0;
    for (const auto& [a, b] : cfg.confusions) {
      if (c == a) { replacement = b; break; }
      if (c == b) { replacement = a; break; }
    }
    if (replacement == 0) {
      do {
        replacement = kAlnum[rng() % kAlnum.size()];
      } while (replacement == c);
    }
    c = replacement;
  }
  return out;
}

NoisyOcrBackend::NoisyOcrBackend(std::unique_ptr<OcrBackend> inner, NoiseConfig cfg)
    : inner_(std::move(inner)), cfg_(std::move(cfg)) {}

std::string NoisyOcrBackend::id() const {
  std::ostringstream os;
  os << inner_->id() << "+noise(" << cfg_.char_error_rate << "," << cfg_.drop_probability << "," << cfg_.seed << ")";
  return os.str();
}

std::vector<OcrToken> NoisyOcrBackend::recognize(const OcrRequest& request) {
  auto tokens = inner_->recognize(request);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                    static_cast<std::uint32_t>(request.frame_index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<OcrToken> out;
  for (auto& t : tokens) {
    if (coin(rng) < cfg_.drop_probability) continue;
    t.text = inject_char_noise(t.text, cfg_, rng);
    out.push_back(std::move(t));
  }
  return out;
}

std::unique_ptr<OcrBackend> make_backend(const std::string& name) {
  if (name == "mock") return std::make_unique<MockOcrBackend>();
  if (name.rfind("mock+noise", 0) == 0) {
    NoiseConfig cfg;
    if (const auto colon = name.find(':'); colon != std::string::npos) cfg.seed = std::stoull(name.substr(colon + 1));
    return std::make_unique<NoisyOcrBackend>(std::make_unique<MockOcrBackend>(), cfg);
  }
  if (!find_executable(name)) throw Error(ErrorKind::BackendUnavailable, "OCR engine '" + name + "' not found");
  return std::make_unique<ProcessOcrBackend>(name);
}

// ---------------------------------------------------------------------------

Json ocr_frame_to_json(const OcrFrame& frame) {
  Json j;
  j["frame_index"] = frame.frame_index;
  j["backend_id"] = frame.backend_id;
  j["config_fingerprint"] = frame.config_fingerprint;
  Json tokens = Json::array();
  for (const auto& t : frame.tokens) {
    tokens.push_back(Json{{"text", t.text}, {"x", t.bbox.x}, {"y", t.bbox.y}, {"w", t.bbox.w}, {"h", t.bbox.h},
                          {"confidence", t.confidence}});
  }
  j["tokens"] = std::move(tokens);
  return j;
}

OcrFrame ocr_frame_from_json(const Json& j, std::string_view where) {
  OcrFrame f;
  f.frame_index = static_cast<int>(jf::integer(j, "frame_index", where));
  f.backend_id = jf::string(j, "backend_id", where);
  f.config_fingerprint = jf::string(j, "config_fingerprint", where);
  for (const auto& t : jf::array(j, "tokens", where)) {
    f.tokens.push_back({jf::string(t, "text", where),
                        {static_cast<int>(jf::integer(t, "x", where)), static_cast<int>(jf::integer(t, "y", where)),
                         static_cast<int>(jf::integer(t, "w", where)), static_cast<int>(jf::integer(t, "h", where))},
                        jf::number(t, "confidence", where)});
  }
  return f;
}

fs::path ocr_cache_path(const fs::path& bundle_root, int frame_index) {
  return bundle_root / "ocr" / (frame_stem(frame_index) + ".json");
}

std::optional<OcrFrame> load_cached_ocr(const fs::path& bundle_root, int frame_index) {
  const auto path = ocr_cache_path(bundle_root, frame_index);
  if (!fs::exists(path)) return std::nullopt;
  const auto bytes = read_file_bytes(path);
  const auto where = "ocr/" + path.filename().string();
  return ocr_frame_from_json(parse_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), where),
                             where);
}

void sort_tokens(std::vector<OcrToken>& tokens) {
  std::stable_sort(tokens.begin(), tokens.end(), [](const OcrToken& a, const OcrToken& b) {
    return std::tie(a.bbox.y, a.bbox.x) < std::tie(b.bbox.y, b.bbox.x);
  });
}

OcrFrame run_ocr(const SessionBundle& bundle, int frame_index, OcrBackend& backend, const OcrConfig& cfg,
                 FrameReader* reader) {
  if (cfg.upscale_factor < 1) throw Error(ErrorKind::SchemaViolation, "upscale_factor must be >= 1");
  bundle.frame(frame_index);
  const auto backend_id = backend.id();
  const auto fingerprint = config_fingerprint(backend_id, cfg);
  if (auto cached = load_cached_ocr(bundle.root(), frame_index);
      cached && cached->backend_id == backend_id && cached->config_fingerprint == fingerprint &&
      cached->frame_index == frame_index) {
    return *cached;
  }

  const Image original = reader ? reader->reconstruct(frame_index) : reconstruct_frame(bundle, frame_index);
  const Image pre = preprocess_image(original, cfg);
  auto raw = backend.recognize(OcrRequest{bundle, frame_index, pre, cfg});

  const int f = cfg.upscale_factor;
  const int fw = original.width(), fh = original.height();
  OcrFrame frame;
  frame.frame_index = frame_index;
  frame.backend_id = backend_id;
  frame.config_fingerprint = fingerprint;
  for (auto& t : raw) {
    auto text = trim(t.text);
    if (text.empty()) continue;
    BBox b{t.bbox.x / f, t.bbox.y / f, std::max(1, t.bbox.w / f), std::max(1, t.bbox.h / f)};
    b.x = std::clamp(b.x, 0, fw - 1);
    b.y = std::clamp(b.y, 0, fh - 1);
    b.w = std::min(b.w, fw - b.x);
    b.h = std::min(b.h, fh - b.y);
    frame.tokens.push_back({std::move(text), b, std::clamp(t.confidence, 0.0, 100.0)});
  }
  sort_tokens(frame.tokens);

  fs::create_directories(bundle.root() / "ocr");
  write_file_atomic(ocr_cache_path(bundle.root(), frame_index), ocr_frame_to_json(frame).dump() + "\n");
  return frame;
}

std::optional<OcrToken> token_at_point(const OcrFrame& frame, int x, int y, int radius) {
  const OcrToken* best = nullptr;
  for (const auto& t : frame.tokens) {
    if (t.bbox.contains(x, y) && (best == nullptr || t.bbox.area() < best->bbox.area())) best = &t;
  }
  if (best != nullptr) return *best;

  double best_d2 = static_cast<double>(radius) * radius;
  for (const auto& t : frame.tokens) {
    // Distance to the nearest pixel of the box.
    const double dx = std::max({t.bbox.x - x, 0, x - (t.bbox.right() - 1)});
    const double dy = std::max({t.bbox.y - y, 0, y - (t.bbox.bottom() - 1)});
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2 || (d2 == best_d2 && best != nullptr && t.bbox.area() < best->bbox.area()) ||
        (d2 == best_d2 && best == nullptr)) {
      best_d2 = d2;
      best = &t;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

}  // namespace annotrace
