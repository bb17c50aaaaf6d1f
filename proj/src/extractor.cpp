#include "ctcn/extractor.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace ctcn {

Extractor Extractor::init(const GModConfig& gmod, const SModConfig& smod, Rng& rng) {
  gmod.validate();
  Extractor e;
  e.gmod_config = gmod;
  e.smod_config = smod;
  Rng g = rng.derive("gmod.init"), s = rng.derive("smod.init"), h = rng.derive("head.init");
  e.gmod = GModParams::init(gmod, g);
  e.smod = SModParams::init(gmod.embed_dim, smod, s);
  const std::size_t in = e.global_dim() + e.spatial_dim();
  e.head = Tensor({in, 1});
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : e.head.mutable_values()) v = std * h.normal();
  e.head_bias = Tensor::zeros({1});
  return e;
}

std::size_t Extractor::spatial_dim() const {
  auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(gmod_config.tokens()))));
  for (std::size_t i = 0; i < smod_config.filters.size(); ++i)
    if (g >= 2) g /= 2;
  return smod_config.filters.back() * g * g;
}

std::vector<Tensor> Extractor::trainable() const {
  auto out = gmod.trainable();
  for (auto& t : smod.trainable()) out.push_back(t);
  out.push_back(head);
  out.push_back(head_bias);
  return out;
}

std::vector<NamedTensor> Extractor::named() const {
  auto out = gmod.named();
  for (auto& r : smod.named()) out.push_back(r);
  out.push_back({"extractor.head.weight", head});
  out.push_back({"extractor.head.bias", head_bias});
  return out;
}

Extractor Extractor::from_records(const GModConfig& gmod, const SModConfig& smod,
                                  const std::vector<NamedTensor>& records) {
  Extractor e;
  e.gmod_config = gmod;
  e.smod_config = smod;
  e.gmod = GModParams::from_records(gmod, records);
  e.smod = SModParams::from_records(gmod.embed_dim, smod, records);
  e.head = find_record(records, "extractor.head.weight").clone();
  e.head_bias = find_record(records, "extractor.head.bias").clone();
  return e;
}

Tensor image_tensor(const Image& image, std::size_t channels) {
  const Image& src = image.channels == 3 && channels == 1 ? to_grayscale(image) : image;
  if (src.channels != channels)
    throw DataError(fmt::format("extractor: image has {} channels, model expects {}", image.channels, channels));
  Eigen::VectorXd v(static_cast<Eigen::Index>(src.pixels.size()));
  for (std::size_t i = 0; i < src.pixels.size(); ++i) v[static_cast<Eigen::Index>(i)] = src.pixels[i] / 255.0;
  return Tensor({src.height, src.width, src.channels}, std::move(v));
}

Tensor extract_batch(const std::vector<const Image*>& images, Extractor& extractor, Rng& rng, bool training) {
  const auto& cfg = extractor.gmod_config;
  std::vector<Tensor> globals, grids;
  for (const Image* img : images) {
    if (img->height != cfg.height || img->width != cfg.width)
      throw DimensionError(fmt::format("extractor: image is {}x{}, model expects {}x{}", img->height, img->width,
                                       cfg.height, cfg.width));
    Tensor enc = gmod_encode(image_tensor(*img, cfg.channels), cfg, extractor.gmod);
    globals.push_back(reshape(slice_rows(enc, 0, 1), {cfg.embed_dim}));
    grids.push_back(token_grid(slice_rows(enc, 1, cfg.tokens())));
  }
  Tensor spatial = smod_forward(stack(grids), extractor.smod_config, extractor.smod, rng, training);
  return concat_cols({stack(globals), spatial});
}

std::vector<double> train_extractor(Extractor& extractor, const std::vector<LabeledImage>& data,
                                    const ExtractorTraining& config, Rng& rng) {
  if (config.batch == 0) throw ParameterError("extractor: batch must be positive");
  auto weights = extractor.trainable();
  for (auto& w : weights) w.set_requires_grad(true);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> trace;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t count = std::min(config.batch, order.size() - begin);
      std::vector<const Image*> images;
      Eigen::VectorXd y(static_cast<Eigen::Index>(count));
      for (std::size_t k = 0; k < count; ++k) {
        images.push_back(&data[order[begin + k]].image);
        y[static_cast<Eigen::Index>(k)] = data[order[begin + k]].label;
      }
      Tensor f = extract_batch(images, extractor, rng, true);
      Tensor logits = reshape(add_bias(matmul(f, extractor.head), extractor.head_bias), {count});
      Tensor loss = bce_with_logits(logits, y);
      total += loss.item() * static_cast<double>(count);
      backward(loss);
      for (auto& w : weights) {
        if (w.has_grad()) w.mutable_values() -= config.learning_rate * w.grad();
        w.zero_grad();
      }
    }
    trace.push_back(total / static_cast<double>(order.size()));
  }
  for (auto& w : weights) w.set_requires_grad(false);
  return trace;
}

ExtractedFeatures extract_features(Extractor& extractor, const std::vector<LabeledImage>& data) {
  const auto dg = static_cast<Eigen::Index>(extractor.global_dim());
  const auto ds = static_cast<Eigen::Index>(extractor.spatial_dim());
  ExtractedFeatures out{FeatureMatrix(static_cast<Eigen::Index>(data.size()), dg),
                        FeatureMatrix(static_cast<Eigen::Index>(data.size()), ds)};
  Rng unused(0);
  for (std::size_t begin = 0; begin < data.size(); begin += 32) {
    const std::size_t count = std::min<std::size_t>(32, data.size() - begin);
    std::vector<const Image*> images;
    for (std::size_t k = 0; k < count; ++k) images.push_back(&data[begin + k].image);
    Tensor f = extract_batch(images, extractor, unused, false);
    auto m = f.matrix();
    out.global.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) = m.leftCols(dg);
    out.spatial.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) = m.rightCols(ds);
  }
  return out;
}

}  // namespace ctcn
