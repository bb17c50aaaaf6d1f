#pragma once

#include "ctcn/config.hpp"
#include "ctcn/grafr.hpp"
#include "ctcn/preprocess.hpp"

#include <vector>

namespace ctcn {

/// GMod and SMod weights plus the linear logistic head used only to train them.
struct Extractor {
  GModConfig gmod_config;
  SModConfig smod_config;
  GModParams gmod;
  SModParams smod;
  Tensor head;       // (global + spatial) x 1
  Tensor head_bias;  // 1

  static Extractor init(const GModConfig& gmod, const SModConfig& smod, Rng& rng);

  std::size_t global_dim() const { return gmod_config.embed_dim; }
  std::size_t spatial_dim() const;

  std::vector<Tensor> trainable() const;
  /// gmod.*, smod.*, extractor.head.{weight,bias}
  std::vector<NamedTensor> named() const;
  static Extractor from_records(const GModConfig& gmod, const SModConfig& smod,
                                const std::vector<NamedTensor>& records);
};

/// [h, w, c] intensities scaled to [0, 1]. The channel count must match `channels`.
Tensor image_tensor(const Image& image, std::size_t channels);

/// [b, global + spatial] for a batch of images: the class token of GMod next to
/// SMod applied to the grid of the remaining GMod tokens.
Tensor extract_batch(const std::vector<const Image*>& images, Extractor& extractor, Rng& rng, bool training);

/// Mini-batch gradient descent of every extractor weight through the linear
/// head on BCE. Batches are reshuffled each epoch. Returns per-epoch mean loss.
std::vector<double> train_extractor(Extractor& extractor, const std::vector<LabeledImage>& data,
                                    const ExtractorTraining& config, Rng& rng);

struct ExtractedFeatures {
  FeatureMatrix global;
  FeatureMatrix spatial;
};

/// Inference-mode features for every image, in order.
ExtractedFeatures extract_features(Extractor& extractor, const std::vector<LabeledImage>& data);

}  // namespace ctcn
