#include "ctcn/toy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace ctcn {

Image blob_image(int label, std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  const double radius = label == 1 ? rng.uniform(0.22, 0.32) * s : rng.uniform(0.10, 0.19) * s;
  const double cy = s / 2 + rng.uniform(-0.12, 0.12) * s;
  const double cx = s / 2 + rng.uniform(-0.12, 0.12) * s;
  const double background = rng.uniform(20, 60);
  const double foreground = rng.uniform(150, 230);
  Image img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      const double v = (std::hypot(dy, dx) <= radius ? foreground : background) + 12.0 * rng.normal();
      img.pixels[y * size + x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return img;
}

void write_blob_dataset(const std::filesystem::path& root, std::size_t count0, std::size_t count1, std::uint64_t seed,
                        std::size_t size) {
  const Rng base(seed);
  for (int label : {0, 1}) {
    const auto dir = root / (label == 1 ? "all" : "hem");
    std::filesystem::create_directories(dir);
    const std::size_t n = label == 1 ? count1 : count0;
    for (std::size_t k = 0; k < n; ++k) {
      Rng rng = base.derive("blob", 2 * k + static_cast<std::size_t>(label));
      write_png(dir / fmt::format("{:05}.png", k), blob_image(label, size, rng));
    }
  }
}

}  // namespace ctcn
