#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annotrace/image.hpp"
#include "annotrace/json.hpp"
#include "annotrace/session.hpp"

namespace annotrace {

/// A recognized piece of on-screen text. `bbox` is in original screenshot
/// coordinates, never in upscaled ones.
struct OcrToken {
  std::string text;
  BBox bbox;
  double confidence = 0;  // 0..100

  bool operator==(const OcrToken&) const = default;
};

struct OcrFrame {
  int frame_index = 0;
  std::vector<OcrToken> tokens;  // sorted by (y, x)
  std::string backend_id;
  std::string config_fingerprint;

  bool operator==(const OcrFrame&) const = default;
};

enum class ThresholdMode { None, Otsu, Fixed };
enum class SegmentationHint { Sparse, Block, Line };

struct OcrConfig {
  int upscale_factor = 2;
  bool grayscale = false;
  ThresholdMode threshold = ThresholdMode::None;
  int fixed_threshold = 128;  // used with ThresholdMode::Fixed
  std::optional<std::string> char_whitelist;
  SegmentationHint segmentation = SegmentationHint::Sparse;

  bool operator==(const OcrConfig&) const = default;
};

Json ocr_config_to_json(const OcrConfig& cfg);
OcrConfig ocr_config_from_json(const Json& j);
/// SHA-256 over the backend id and the canonical config.
std::string config_fingerprint(std::string_view backend_id, const OcrConfig& cfg);

/// Nearest-neighbour upscale, then optional grayscale and binarization.
/// Identity for upscale 1 with grayscale and thresholding off.
Image preprocess_image(const Image& img, const OcrConfig& cfg);

/// Otsu's threshold over a 256-bin histogram; pixels above it are foreground.
/// A histogram with a single occupied level returns that level, so the whole
/// image maps to background.
int otsu_threshold(std::span<const std::uint64_t, 256> histogram);

/// Parses the engine adapter's stdout: text<TAB>x<TAB>y<TAB>w<TAB>h<TAB>conf per
/// line. Throws Error(BackendFailure) on malformed rows.
std::vector<OcrToken> parse_token_table(std::string_view tsv, std::string_view where);
std::string format_token_table(std::span<const OcrToken> tokens);

struct OcrRequest {
  const SessionBundle& bundle;
  int frame_index;
  const Image& preprocessed;
  const OcrConfig& config;
};

/// An OCR engine. Returned boxes are in preprocessed (upscaled) coordinates.
class OcrBackend {
 public:
  virtual ~OcrBackend() = default;
  virtual std::string id() const = 0;
  virtual std::vector<OcrToken> recognize(const OcrRequest& request) = 0;
};

/// Reads `<bundle>/ocr_mock/NNNNNN.tsv` sidecars written in original
/// coordinates and scales them as a real engine would see them. A missing
/// sidecar means a frame with no text.
class MockOcrBackend : public OcrBackend {
 public:
  std::string id() const override { return "mock"; }
  std::vector<OcrToken> recognize(const OcrRequest& request) override;
};

/// External engine behind the subprocess contract
/// argv = [engine, png_path, config_path], stdout = token table.
class ProcessOcrBackend : public OcrBackend {
 public:
  explicit ProcessOcrBackend(std::string engine);
  std::string id() const override;
  std::vector<OcrToken> recognize(const OcrRequest& request) override;

 private:
  std::string engine_;
};

struct NoiseConfig {
  double char_error_rate = 0.05;
  double drop_probability = 0.10;
  std::uint64_t seed = 1;
  /// Confusable pairs, applied in both directions.
  std::vector<std::pair<char, char>> confusions = {{'O', '0'}, {'l', '1'}, {'I', 'l'}};
};

/// Perturbs one string: each character is corrupted with probability
/// `char_error_rate`, using its confusion partner when it has one and a
/// random alphanumeric otherwise.
std::string inject_char_noise(std::string_view text, const NoiseConfig& cfg, std::mt19937_64& rng);

/// Wraps another backend and corrupts its tokens; deterministic per
/// (seed, frame index).
class NoisyOcrBackend : public OcrBackend {
 public:
  NoisyOcrBackend(std::unique_ptr<OcrBackend> inner, NoiseConfig cfg);
  std::string id() const override;
  std::vector<OcrToken> recognize(const OcrRequest& request) override;

 private:
  std::unique_ptr<OcrBackend> inner_;
  NoiseConfig cfg_;
};

/// "mock", "mock+noise[:seed]" or an engine program name/path.
std::unique_ptr<OcrBackend> make_backend(const std::string& name);

Json ocr_frame_to_json(const OcrFrame& frame);
OcrFrame ocr_frame_from_json(const Json& j, std::string_view where);
std::filesystem::path ocr_cache_path(const std::filesystem::path& bundle_root, int frame_index);
std::optional<OcrFrame> load_cached_ocr(const std::filesystem::path& bundle_root, int frame_index);

/// Recognizes one frame, mapping boxes back to original coordinates (divide
/// by the upscale factor, rounding down; sizes at least 1px; clamped to the
/// frame). Reads and writes the ocr/ cache; a cached frame with the same
/// backend and fingerprint is returned without running the engine.
/// `reader` lets concurrent callers bring their own reconstruction memo.
OcrFrame run_ocr(const SessionBundle& bundle, int frame_index, OcrBackend& backend, const OcrConfig& cfg,
                 FrameReader* reader = nullptr);

/// Token under a click: the smallest-area box containing the point, else the
/// token whose box is nearest within `radius` pixels.
std::optional<OcrToken> token_at_point(const OcrFrame& frame, int x, int y, int radius = 12);

/// Stable sort by (y, x); the order every OcrFrame is stored in.
void sort_tokens(std::vector<OcrToken>& tokens);

}  // namespace annotrace
