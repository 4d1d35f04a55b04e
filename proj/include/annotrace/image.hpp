#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace annotrace {

using Rgba = std::array<std::uint8_t, 4>;

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long long area() const { return static_cast<long long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool intersects(const BBox& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  BBox united(const BBox& o) const;

  bool operator==(const BBox&) const = default;
};

/// 8-bit RGBA raster, row-major, 4 bytes per pixel.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgba fill = {0, 0, 0, 255});
  Image(int width, int height, std::vector<std::uint8_t> rgba);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  std::span<const std::uint8_t> rgba() const { return rgba_; }
  std::span<std::uint8_t> rgba() { return rgba_; }

  Rgba pixel(int x, int y) const;
  void set_pixel(int x, int y, Rgba value);
  void fill_rect(const BBox& box, Rgba value);

  /// Copy of the w×h region at (x, y); the region must lie inside the image.
  Image crop(const BBox& box) const;
  /// Copies `src` onto this image with its top-left corner at (x, y).
  void blit(const Image& src, int x, int y);

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> rgba_;
};

/// One changed rectangle of a differential frame.
struct PatchRegion {
  int x = 0;
  int y = 0;
  Image pixels;

  int width() const { return pixels.width(); }
  int height() const { return pixels.height(); }
  BBox bbox() const { return {x, y, pixels.width(), pixels.height()}; }

  bool operator==(const PatchRegion&) const = default;
};

/// Returns `base` with every patch raster copied in order. Throws
/// Error(OutOfBounds) when a patch leaves the base image.
Image apply_patches(const Image& base, std::span<const PatchRegion> patches);

/// Changed regions between two equally sized images: bounding rectangles of
/// the 8-connected components of differing pixels, merged while they overlap,
/// sorted by (y, x). Throws Error(DimensionMismatch).
std::vector<PatchRegion> diff_frames(const Image& prev, const Image& next);

}  // namespace annotrace
