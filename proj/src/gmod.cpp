#include "ctcn/gmod.hpp"

#include "ctcn/ops.hpp"

#include <fmt/format.h>

#include <cmath>

namespace ctcn {

namespace {

using Vec = Eigen::VectorXd;

// out[k] = in[source[k]]
std::vector<std::size_t> patch_order(std::size_t h, std::size_t w, std::size_t c, std::size_t p) {
  std::vector<std::size_t> source;
  source.reserve(h * w * c);
  for (std::size_t py = 0; py < h / p; ++py)
    for (std::size_t px = 0; px < w / p; ++px)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) source.push_back(((py * p + y) * w + px * p + x) * c + ch);
  return source;
}

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.mutable_values()) v = rng.truncated_normal(0.02);
  return t;
}

std::string block_name(std::size_t i, const char* tensor) { return fmt::format("gmod.block{}.{}", i, tensor); }

}  // namespace

void GModConfig::validate() const {
  if (patch == 0 || height % patch != 0 || width % patch != 0)
    throw ParameterError(fmt::format("gmod: patch {} must divide {}x{}", patch, height, width));
  if (heads == 0 || embed_dim % heads != 0)
    throw ParameterError(fmt::format("gmod: {} heads do not divide embed_dim {}", heads, embed_dim));
  if (channels == 0 || embed_dim == 0 || depth == 0 || mlp_hidden == 0)
    throw ParameterError("gmod: extents must be positive");
}

GModParams GModParams::init(const GModConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.embed_dim;
  GModParams p;
  p.projection = init_matrix(config.patch_len(), d, rng);
  p.position = init_matrix(config.tokens() + 1, d, rng);
  p.cls = Tensor::zeros({1, d});
  for (std::size_t l = 0; l < config.depth; ++l) {
    TransformerBlockParams b;
    b.ln1_gamma = Tensor::ones({d});
    b.ln1_beta = Tensor::zeros({d});
    b.wq = init_matrix(d, d, rng);
    b.wk = init_matrix(d, d, rng);
    b.wv = init_matrix(d, d, rng);
    b.wo = init_matrix(d, d, rng);
    b.ln2_gamma = Tensor::ones({d});
    b.ln2_beta = Tensor::zeros({d});
    b.fc1 = init_matrix(d, config.mlp_hidden, rng);
    b.fc1_bias = Tensor::zeros({config.mlp_hidden});
    b.fc2 = init_matrix(config.mlp_hidden, d, rng);
    b.fc2_bias = Tensor::zeros({d});
    p.blocks.push_back(std::move(b));
  }
  p.final_gamma = Tensor::ones({d});
  p.final_beta = Tensor::zeros({d});
  return p;
}

std::vector<NamedTensor> GModParams::named() const {
  std::vector<NamedTensor> out{{"gmod.embed.projection", projection},
                               {"gmod.embed.position", position},
                               {"gmod.embed.cls", cls}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    for (auto [name, t] : {std::pair{"ln1_gamma", b.ln1_gamma}, {"ln1_beta", b.ln1_beta}, {"wq", b.wq},
                           {"wk", b.wk}, {"wv", b.wv}, {"wo", b.wo}, {"ln2_gamma", b.ln2_gamma},
                           {"ln2_beta", b.ln2_beta}, {"fc1", b.fc1}, {"fc1_bias", b.fc1_bias}, {"fc2", b.fc2},
                           {"fc2_bias", b.fc2_bias}})
      out.push_back({block_name(i, name), t});
  }
  out.push_back({"gmod.final.gamma", final_gamma});
  out.push_back({"gmod.final.beta", final_beta});
  return out;
}

std::vector<Tensor> GModParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& r : named()) out.push_back(r.tensor);
  return out;
}

GModParams GModParams::from_records(const GModConfig& config, const std::vector<NamedTensor>& records) {
  Rng unused(0);
  GModParams p = init(config, unused);
  for (auto& slot : p.named()) {
    const Tensor& stored = find_record(records, slot.name);
    if (stored.shape() != slot.tensor.shape())
      throw FormatError(fmt::format("{}: stored shape {} does not match config {}", slot.name,
                                    shape_string(stored.shape()), shape_string(slot.tensor.shape())));
    Tensor target = slot.tensor;
    target.mutable_values() = stored.values();
  }
  return p;
}

Tensor patchify(const Tensor& image, std::size_t p) {
  if (image.rank() != 3) throw DimensionError("patchify: expected [h, w, c], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (p == 0 || h % p != 0 || w % p != 0)
    throw DimensionError(fmt::format("patchify: patch {} does not divide {}x{}", p, h, w));
  auto source = patch_order(h, w, c, p);
  Vec out(image.size());
  for (std::size_t k = 0; k < source.size(); ++k) out[static_cast<Eigen::Index>(k)] = image[source[k]];
  return make_result({(h * w) / (p * p), p * p * c}, std::move(out), {image}, "patchify",
                     [source = std::move(source)](const Vec& g, std::vector<Vec*>& gs) {
                       if (!gs[0]) return;
                       for (std::size_t k = 0; k < source.size(); ++k)
                         (*gs[0])[static_cast<Eigen::Index>(source[k])] += g[static_cast<Eigen::Index>(k)];
                     });
}

Tensor unpatchify(const Tensor& patches, std::size_t h, std::size_t w, std::size_t c, std::size_t p) {
  if (p == 0 || h % p != 0 || w % p != 0 || patches.shape() != Shape{(h * w) / (p * p), p * p * c})
    throw DimensionError("unpatchify: " + shape_string(patches.shape()) + " does not tile the image");
  auto source = patch_order(h, w, c, p);
  Vec out(patches.size());
  for (std::size_t k = 0; k < source.size(); ++k) out[static_cast<Eigen::Index>(source[k])] = patches[k];
  return Tensor({h, w, c}, std::move(out));
}

Tensor embed(const Tensor& patches, const GModParams& params) {
  const Tensor tokens = matmul(patches, params.projection);
  const Tensor z = concat_rows({params.cls, tokens});
  if (z.shape() != params.position.shape())
    throw DimensionError(fmt::format("embed: {} tokens vs positional table {}", shape_string(z.shape()),
                                     shape_string(params.position.shape())));
  return add(z, params.position);
}

Tensor self_attention(const Tensor& tokens, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  const Tensor q = matmul(tokens, wq);
  const Tensor k = matmul(tokens, wk);
  const Tensor v = matmul(tokens, wv);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(wk.dim(1)));
  return matmul(softmax(scale(matmul(q, transpose(k)), scale_factor)), v);
}

Tensor msa(const Tensor& tokens, const TransformerBlockParams& block, std::size_t heads) {
  const std::size_t d = block.wq.dim(1);
  if (heads == 0 || d % heads != 0)
    throw ParameterError(fmt::format("msa: {} heads do not divide {}", heads, d));
  const std::size_t dk = d / heads;
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h)
    outs.push_back(self_attention(tokens, slice_cols(block.wq, h * dk, dk), slice_cols(block.wk, h * dk, dk),
                                  slice_cols(block.wv, h * dk, dk)));
  return matmul(heads == 1 ? outs[0] : concat_cols(outs), block.wo);
}

Tensor transformer_block(const Tensor& z, const TransformerBlockParams& block, std::size_t heads) {
  const Tensor attended = add(msa(layernorm(z, block.ln1_gamma, block.ln1_beta), block, heads), z);
  const Tensor hidden = gelu(add_bias(matmul(layernorm(attended, block.ln2_gamma, block.ln2_beta), block.fc1),
                                      block.fc1_bias));
  return add(add_bias(matmul(hidden, block.fc2), block.fc2_bias), attended);
}

Tensor gmod_encode(const Tensor& image, const GModConfig& config, const GModParams& params) {
  if (image.shape() != Shape{config.height, config.width, config.channels})
    throw DimensionError(fmt::format("gmod: image {} does not match config [{}x{}x{}]", shape_string(image.shape()),
                                     config.height, config.width, config.channels));
  Tensor z = embed(patchify(image, config.patch), params);
  for (const auto& block : params.blocks) z = transformer_block(z, block, config.heads);
  return layernorm(z, params.final_gamma, params.final_beta);
}

Tensor gmod_forward(const Tensor& image, const GModConfig& config, const GModParams& params) {
  return reshape(slice_rows(gmod_encode(image, config, params), 0, 1), {config.embed_dim});
}

}  // namespace ctcn
