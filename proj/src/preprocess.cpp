#include "ctcn/preprocess.hpp"

#include "ctcn/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace ctcn {

namespace {

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Reflect-101 index (…2 1 | 0 1 2 … n-1 | n-2 …).
std::size_t reflect101(long i, std::size_t n) {
  if (n == 1) return 0;
  const long m = static_cast<long>(n);
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

using Plane = std::vector<std::uint8_t>;

Plane clahe_plane(const Plane& src, std::size_t H, std::size_t W, const ClaheConfig& cfg) {
  const std::size_t ty = cfg.tiles_y, tx = cfg.tiles_x;
  const std::size_t th = (H + ty - 1) / ty, tw = (W + tx - 1) / tx;
  const double tile_pixels = static_cast<double>(th * tw);
  const double limit = cfg.clip_limit * tile_pixels / 256.0;

  std::vector<std::array<double, 256>> luts(ty * tx);
  for (std::size_t a = 0; a < ty; ++a)
    for (std::size_t b = 0; b < tx; ++b) {
      std::array<double, 256> hist{};
      for (std::size_t y = a * th; y < (a + 1) * th; ++y)
        for (std::size_t x = b * tw; x < (b + 1) * tw; ++x)
          hist[src[reflect101(static_cast<long>(y), H) * W + reflect101(static_cast<long>(x), W)]] += 1.0;
      double excess = 0.0;
      for (auto& h : hist)
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      const double share = excess / 256.0;
      auto& lut = luts[a * tx + b];
      double cdf = 0.0;
      for (std::size_t v = 0; v < 256; ++v) {
        cdf += hist[v] + share;
        lut[v] = std::min(255.0, cdf * 255.0 / tile_pixels);
      }
    }

  Plane out(H * W);
  for (std::size_t y = 0; y < H; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(th) - 0.5;
    const long y0 = static_cast<long>(std::floor(fy));
    const double wy = fy - static_cast<double>(y0);
    const std::size_t a0 = static_cast<std::size_t>(std::clamp(y0, 0L, static_cast<long>(ty) - 1));
    const std::size_t a1 = static_cast<std::size_t>(std::clamp(y0 + 1, 0L, static_cast<long>(ty) - 1));
    for (std::size_t x = 0; x < W; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(tw) - 0.5;
      const long x0 = static_cast<long>(std::floor(fx));
      const double wx = fx - static_cast<double>(x0);
      const std::size_t b0 = static_cast<std::size_t>(std::clamp(x0, 0L, static_cast<long>(tx) - 1));
      const std::size_t b1 = static_cast<std::size_t>(std::clamp(x0 + 1, 0L, static_cast<long>(tx) - 1));
      const std::uint8_t p = src[y * W + x];
      const double top = (1.0 - wx) * luts[a0 * tx + b0][p] + wx * luts[a0 * tx + b1][p];
      const double bottom = (1.0 - wx) * luts[a1 * tx + b0][p] + wx * luts[a1 * tx + b1][p];
      out[y * W + x] = clamp_u8((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

double sample_bilinear(const Image& img, double sy, double sx, std::size_t c) {
  sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double wy = sy - static_cast<double>(y0), wx = sx - static_cast<double>(x0);
  const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
  const double bottom = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
  return (1.0 - wy) * top + wy * bottom;
}

Image rotate90_cw(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(x, img.height - 1 - y, c) = img.at(y, x, c);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out = img;
  const std::size_t row = img.width * img.channels;
  for (std::size_t y = 0; y < img.height; ++y)
    std::copy_n(img.pixels.begin() + static_cast<long>((img.height - 1 - y) * row), row,
                out.pixels.begin() + static_cast<long>(y * row));
  return out;
}

}  // namespace

Image clahe(const Image& image, const ClaheConfig& config) {
  if (!(config.clip_limit > 0.0))
    throw ParameterError(fmt::format("clahe: clip_limit must be positive, got {}", config.clip_limit));
  if (config.tiles_y == 0 || config.tiles_x == 0) throw ParameterError("clahe: tile grid must be at least 1x1");
  const std::size_t H = image.height, W = image.width;
  if (image.channels == 1) {
    Image out = image;
    out.pixels = clahe_plane(image.pixels, H, W, config);
    return out;
  }
  // Luma/chroma split (ITU-R 601); only luma is equalized.
  std::vector<double> Y(H * W), Cb(H * W), Cr(H * W);
  Plane luma(H * W);
  for (std::size_t i = 0; i < H * W; ++i) {
    const double r = image.pixels[3 * i], g = image.pixels[3 * i + 1], b = image.pixels[3 * i + 2];
    Y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    Cb[i] = (b - Y[i]) * 0.564;
    Cr[i] = (r - Y[i]) * 0.713;
    luma[i] = clamp_u8(Y[i]);
  }
  const Plane eq = clahe_plane(luma, H, W, config);
  Image out = image;
  for (std::size_t i = 0; i < H * W; ++i) {
    const double y = eq[i];
    out.pixels[3 * i] = clamp_u8(y + 1.403 * Cr[i]);
    out.pixels[3 * i + 1] = clamp_u8(y - 0.344 * Cb[i] - 0.714 * Cr[i]);
    out.pixels[3 * i + 2] = clamp_u8(y + 1.773 * Cb[i]);
  }
  return out;
}

Image sharpen(const Image& image) {
  Image out = image;
  const std::size_t H = image.height, W = image.width;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t up = reflect101(static_cast<long>(y) - 1, H), down = reflect101(static_cast<long>(y) + 1, H);
      const std::size_t left = reflect101(static_cast<long>(x) - 1, W), right = reflect101(static_cast<long>(x) + 1, W);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const int v = 5 * image.at(y, x, c) - image.at(up, x, c) - image.at(down, x, c) - image.at(y, left, c) -
                      image.at(y, right, c);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  return out;
}

Image resize(const Image& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ParameterError("resize: target extents must be >= 1");
  if (height == image.height && width == image.width) return image;
  Image out(height, width, image.channels);
  const double ry = static_cast<double>(image.height) / static_cast<double>(height);
  const double rx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        out.at(y, x, c) = clamp_u8(sample_bilinear(image, (static_cast<double>(y) + 0.5) * ry - 0.5,
                                                   (static_cast<double>(x) + 0.5) * rx - 0.5, c));
  return out;
}

void validate(const AugmentSpec& spec, std::size_t height, std::size_t width) {
  if (spec.rotation_degrees != 0 && spec.rotation_degrees != 90 && spec.rotation_degrees != 180 &&
      spec.rotation_degrees != 270)
    throw ParameterError(fmt::format("augment: rotation {} not in {{0, 90, 180, 270}}", spec.rotation_degrees));
  if (!(spec.scale >= 0.8 && spec.scale <= 1.2))
    throw ParameterError(fmt::format("augment: scale {} outside [0.8, 1.2]", spec.scale));
  if (std::abs(spec.translate_y) >= static_cast<int>(height) || std::abs(spec.translate_x) >= static_cast<int>(width))
    throw ParameterError("augment: translation must be smaller than the image extents");
  const auto& c = spec.crop;
  if (c.height != 0 || c.width != 0)
    if (c.height == 0 || c.width == 0 || c.top + c.height > height || c.left + c.width > width)
      throw ParameterError("augment: crop window outside the image");
}

AugmentSpec random_augment_spec(Rng& rng, std::size_t height, std::size_t width) {
  AugmentSpec s;
  s.flip_h = rng.bernoulli(0.5);
  s.flip_v = rng.bernoulli(0.5);
  s.rotation_degrees = 90 * static_cast<int>(rng.index(4));
  s.scale = rng.uniform(0.8, 1.2);
  const int max_ty = static_cast<int>(height / 10), max_tx = static_cast<int>(width / 10);
  s.translate_y = static_cast<int>(rng.index(static_cast<std::size_t>(2 * max_ty + 1))) - max_ty;
  s.translate_x = static_cast<int>(rng.index(static_cast<std::size_t>(2 * max_tx + 1))) - max_tx;
  const auto min_h = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(height)));
  const auto min_w = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(width)));
  s.crop.height = min_h + rng.index(height - min_h + 1);
  s.crop.width = min_w + rng.index(width - min_w + 1);
  s.crop.top = rng.index(height - s.crop.height + 1);
  s.crop.left = rng.index(width - s.crop.width + 1);
  return s;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
  return out;
}

Image apply_augment(const Image& image, const AugmentSpec& spec) {
  const std::size_t H = image.height, W = image.width;
  validate(spec, H, W);
  Image img = image;
  if (spec.crop.height != 0) {
    Image window(spec.crop.height, spec.crop.width, img.channels);
    for (std::size_t y = 0; y < spec.crop.height; ++y)
      for (std::size_t x = 0; x < spec.crop.width; ++x)
        for (std::size_t c = 0; c < img.channels; ++c)
          window.at(y, x, c) = img.at(spec.crop.top + y, spec.crop.left + x, c);
    img = resize(window, H, W);
  }
  if (spec.flip_h) img = flip_horizontal(img);
  if (spec.flip_v) img = flip_vertical(img);
  for (int r = 0; r < spec.rotation_degrees / 90; ++r) img = rotate90_cw(img);
  if (img.height != H) img = resize(img, H, W);
  if (spec.scale != 1.0 || spec.translate_y != 0 || spec.translate_x != 0) {
    Image moved(H, W, img.channels);
    const double cy = (static_cast<double>(H) - 1.0) / 2.0, cx = (static_cast<double>(W) - 1.0) / 2.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double sy = cy + (static_cast<double>(y) - cy - spec.translate_y) / spec.scale;
        const double sx = cx + (static_cast<double>(x) - cx - spec.translate_x) / spec.scale;
        for (std::size_t c = 0; c < img.channels; ++c) moved.at(y, x, c) = clamp_u8(sample_bilinear(img, sy, sx, c));
      }
    img = std::move(moved);
  }
  return img;
}

std::vector<LabeledImage> augment_balance(const std::vector<LabeledImage>& dataset, const Rng& rng) {
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int l = dataset[i].label;
    if (l != 0 && l != 1) throw DatasetError(fmt::format("augment_balance: sample '{}' has label {}", dataset[i].id, l));
    by_label[l].push_back(i);
  }
  for (int l = 0; l < 2; ++l)
    if (by_label[l].empty()) throw DatasetError(fmt::format("augment_balance: class {} has no samples", l));

  std::vector<LabeledImage> out = dataset;
  const int minority = by_label[0].size() < by_label[1].size() ? 0 : 1;
  const auto& sources = by_label[minority];
  const std::size_t deficit = by_label[1 - minority].size() - sources.size();
  out.reserve(dataset.size() + deficit);
  for (std::size_t k = 0; k < deficit; ++k) {
    Rng r = rng.derive("augment", k);
    const LabeledImage& src = dataset[sources[r.index(sources.size())]];
    const AugmentSpec spec = random_augment_spec(r, src.image.height, src.image.width);
    out.push_back({fmt::format("{}#aug{}", src.id, k), apply_augment(src.image, spec), minority});
  }
  return out;
}

}  // namespace ctcn
