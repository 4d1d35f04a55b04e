#include "annotrace/image.hpp"

#include <algorithm>
#include <cstring>
#include <tuple>

#include "annotrace/error.hpp"

namespace annotrace {

BBox BBox::united(const BBox& o) const {
  const int nx = std::min(x, o.x);
  const int ny = std::min(y, o.y);
  return {nx, ny, std::max(right(), o.right()) - nx, std::max(bottom(), o.bottom()) - ny};
}

Image::Image(int width, int height, Rgba fill) : width_(width), height_(height) {
  rgba_.resize(static_cast<std::size_t>(width) * height * 4);
  for (std::size_t i = 0; i < rgba_.size(); i += 4) std::memcpy(&rgba_[i], fill.data(), 4);
}

Image::Image(int width, int height, std::vector<std::uint8_t> rgba)
    : width_(width), height_(height), rgba_(std::move(rgba)) {
  if (width < 0 || height < 0 || rgba_.size() != static_cast<std::size_t>(width) * height * 4) {
    throw Error(ErrorKind::DimensionMismatch, "raster length does not equal width*height*4");
  }
}

Rgba Image::pixel(int x, int y) const {
  const auto* p = &rgba_[(static_cast<std::size_t>(y) * width_ + x) * 4];
  return {p[0], p[1], p[2], p[3]};
}

void Image::set_pixel(int x, int y, Rgba value) {
  std::memcpy(&rgba_[(static_cast<std::size_t>(y) * width_ + x) * 4], value.data(), 4);
}

void Image::fill_rect(const BBox& box, Rgba value) {
  const int x0 = std::max(0, box.x), y0 = std::max(0, box.y);
  const int x1 = std::min(width_, box.right()), y1 = std::min(height_, box.bottom());
  for (int yy = y0; yy < y1; ++yy)
    for (int xx = x0; xx < x1; ++xx) set_pixel(xx, yy, value);
}

Image Image::crop(const BBox& box) const {
  if (box.x < 0 || box.y < 0 || box.right() > width_ || box.bottom() > height_) {
    throw Error(ErrorKind::OutOfBounds, "crop rectangle outside image");
  }
  Image out(box.w, box.h);
  const std::size_t row = static_cast<std::size_t>(box.w) * 4;
  for (int yy = 0; yy < box.h; ++yy) {
    std::memcpy(&out.rgba_[yy * row], &rgba_[(static_cast<std::size_t>(box.y + yy) * width_ + box.x) * 4], row);
  }
  return out;
}

void Image::blit(const Image& src, int x, int y) {
  if (x < 0 || y < 0 || x + src.width_ > width_ || y + src.height_ > height_) {
    throw Error(ErrorKind::OutOfBounds, "patch at (" + std::to_string(x) + "," + std::to_string(y) + ") size " +
                                            std::to_string(src.width_) + "x" + std::to_string(src.height_) +
                                            " exceeds " + std::to_string(width_) + "x" + std::to_string(height_));
  }
  const std::size_t row = static_cast<std::size_t>(src.width_) * 4;
  for (int yy = 0; yy < src.height_; ++yy) {
    std::memcpy(&rgba_[(static_cast<std::size_t>(y + yy) * width_ + x) * 4], &src.rgba_[yy * row], row);
  }
}

Image apply_patches(const Image& base, std::span<const PatchRegion> patches) {
  Image out = base;
  for (const auto& p : patches) out.blit(p.pixels, p.x, p.y);
  return out;
}

namespace {

std::vector<BBox> changed_components(const Image& prev, const Image& next) {
  const int w = prev.width(), h = prev.height();
  const auto a = prev.rgba(), b = next.rgba();
  std::vector<std::uint8_t> changed(static_cast<std::size_t>(w) * h, 0);
  for (std::size_t i = 0; i < changed.size(); ++i) {
    changed[i] = std::memcmp(&a[i * 4], &b[i * 4], 4) != 0;
  }

  std::vector<BBox> boxes;
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (!changed[start]) continue;
    changed[start] = 0;
    stack.push_back(start);
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      const int px = idx % w, py = idx / w;
      x0 = std::min(x0, px); x1 = std::max(x1, px);
      y0 = std::min(y0, py); y1 = std::max(y1, py);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = px + dx, ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int n = ny * w + nx;
          if (changed[n]) {
            changed[n] = 0;
            stack.push_back(n);
          }
        }
      }
    }
    boxes.push_back({x0, y0, x1 - x0 + 1, y1 - y0 + 1});
  }
  return boxes;
}

void merge_overlapping(std::vector<BBox>& boxes) {
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < boxes.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        if (boxes[i].intersects(boxes[j])) {
          boxes[i] = boxes[i].united(boxes[j]);
          boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
          break;
        }
      }
    }
  }
}

}  // namespace

std::vector<PatchRegion> diff_frames(const Image& prev, const Image& next) {
  if (prev.width() != next.width() || prev.height() != next.height()) {
    throw Error(ErrorKind::DimensionMismatch, "frames differ in size");
  }
  auto boxes = changed_components(prev, next);
  merge_overlapping(boxes);
  std::sort(boxes.begin(), boxes.end(),
            [](const BBox& l, const BBox& r) { return std::tie(l.y, l.x) < std::tie(r.y, r.x); });

  std::vector<PatchRegion> out;
  out.reserve(boxes.size());
  for (const auto& box : boxes) out.push_back({box.x, box.y, next.crop(box)});
  return out;
}

}  // namespace annotrace
