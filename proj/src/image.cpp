#include "ctcn/image.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ctcn {

Image::Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill)
    : height(h), width(w), channels(c), pixels(h * w * c, fill) {
  if (h == 0 || w == 0) throw std::invalid_argument("image extents must be positive");
  if (c != 1 && c != 3) throw std::invalid_argument("image channels must be 1 or 3");
}

namespace {

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageIoError(fmt::format("{}: {}", path.string(), img.message));
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image out(img.height, img.width, color ? 3 : 1);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError(fmt::format("{}: {}", path.string(), msg));
  }
  return out;
}

// Netpbm header token, skipping whitespace and '#' comments.
std::size_t next_header_value(const std::string& data, std::size_t& pos, const std::filesystem::path& path) {
  for (;;) {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
  if (start == pos) throw ImageIoError(path.string() + ": malformed PPM header");
  return std::stoul(data.substr(start, pos - start));
}

Image read_pnm(const std::filesystem::path& path, const std::string& data) {
  const std::size_t channels = data[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  const std::size_t w = next_header_value(data, pos, path);
  const std::size_t h = next_header_value(data, pos, path);
  const std::size_t maxval = next_header_value(data, pos, path);
  if (maxval == 0 || maxval > 255) throw ImageIoError(path.string() + ": only 8-bit PPM is supported");
  if (w == 0 || h == 0) throw ImageIoError(path.string() + ": zero image extent");
  ++pos;  // single whitespace byte before the raster
  const std::size_t need = w * h * channels;
  if (data.size() < pos + need) throw ImageIoError(path.string() + ": truncated PPM raster");
  Image out(h, w, channels);
  for (std::size_t i = 0; i < need; ++i) {
    const auto v = static_cast<unsigned char>(data[pos + i]);
    out.pixels[i] = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  }
  return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(data.data()), 0, 8) == 0) return read_png(path);
  if (data.size() >= 2 && data[0] == 'P' && (data[1] == '6' || data[1] == '5')) return read_pnm(path, data);
  throw ImageIoError(path.string() + ": unsupported image format (expected PNG or binary PPM)");
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw ImageIoError(fmt::format("{}: {}", path.string(), img.message));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError("cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  Image out(image.height, image.width, 1);
  for (std::size_t i = 0; i < image.height * image.width; ++i) {
    const double y = 0.299 * image.pixels[3 * i] + 0.587 * image.pixels[3 * i + 1] + 0.114 * image.pixels[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::min(255.0, y)));
  }
  return out;
}

}  // namespace ctcn
