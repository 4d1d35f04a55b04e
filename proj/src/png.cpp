#include "annotrace/png.hpp"

#include <png.h>

#include <fstream>
#include <iterator>
#include <thread>

#include "annotrace/error.hpp"

namespace annotrace {

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width());
  desc.height = static_cast<png_uint_32>(image.height());
  desc.format = PNG_FORMAT_RGBA;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.rgba().data(), 0, nullptr)) {
    throw Error(ErrorKind::IoFailure, std::string("png sizing failed: ") + desc.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.rgba().data(), 0, nullptr)) {
    throw Error(ErrorKind::IoFailure, std::string("png encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::CorruptPatch, std::string("png header: ") + desc.message);
  }
  desc.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> raster(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, raster.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw Error(ErrorKind::CorruptPatch, std::string("png body: ") + desc.message);
  }
  return Image(static_cast<int>(desc.width), static_cast<int>(desc.height), std::move(raster));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(reinterpret_cast<std::uintptr_t>(&content)) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "rename " + tmp.string() + ": " + ec.message());
}

}  // namespace annotrace
