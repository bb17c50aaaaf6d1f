#pragma once

#include "ctcn/image.hpp"
#include "ctcn/rng.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClaheConfig {
  double clip_limit = 2.0;
  std::size_t tiles_y = 8;
  std::size_t tiles_x = 8;
};

/// Contrast-limited adaptive histogram equalization. Each bin of a tile
/// histogram is capped at clip_limit * tile_pixels / 256, the excess is spread
/// uniformly over all bins, and per-tile mappings are blended bilinearly.
/// Extents that are not a multiple of the tile grid are reflect-padded.
/// Color images are equalized on luma only.
Image clahe(const Image& image, const ClaheConfig& config = {});

/// 3x3 sharpen [[0,-1,0],[-1,5,-1],[0,-1,0]] with reflect-101 borders,
/// clamped to [0, 255].
Image sharpen(const Image& image);

/// Bilinear resampling (pixel-center aligned, edge clamped).
Image resize(const Image& image, std::size_t height, std::size_t width);

struct CropWindow {
  std::size_t top = 0, left = 0, height = 0, width = 0;  // height == 0: no crop
};

/// One traditional augmentation draw. apply_augment keeps the image extents.
struct AugmentSpec {
  bool flip_h = false;
  bool flip_v = false;
  int rotation_degrees = 0;  // 0, 90, 180 or 270
  double scale = 1.0;        // [0.8, 1.2]
  int translate_y = 0;       // pixels
  int translate_x = 0;
  CropWindow crop;
};

/// Throws ParameterError when a field is outside its documented range.
void validate(const AugmentSpec& spec, std::size_t height, std::size_t width);

AugmentSpec random_augment_spec(Rng& rng, std::size_t height, std::size_t width);

/// Crop (resized back), flips, rotation, scaling about the center, then
/// translation; uncovered pixels replicate the nearest edge.
Image apply_augment(const Image& image, const AugmentSpec& spec);

Image flip_horizontal(const Image& image);

struct LabeledImage {
  std::string id;
  Image image;
  int label = 0;
};

/// Grows the minority class with augmented copies of its own images until
/// both classes have the same count. The originals come first, in input order.
/// Sample k of the synthesized set draws from rng.derive("augment", k).
std::vector<LabeledImage> augment_balance(const std::vector<LabeledImage>& dataset, const Rng& rng);

}  // namespace ctcn
