#pragma once

#include "ctcn/rng.hpp"
#include "ctcn/tensor.hpp"
#include "ctcn/tensor_io.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace ctcn {

/// Transformer geometry. Invariants: patch divides height and width,
/// heads divides embed_dim.
struct GModConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t patch = 4;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;

  std::size_t tokens() const { return (height * width) / (patch * patch); }
  std::size_t patch_len() const { return patch * patch * channels; }
  /// Throws ParameterError on a violated invariant.
  void validate() const;
};

struct TransformerBlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, wk, wv;  // d x d; head h owns columns [h*d_K, (h+1)*d_K)
  Tensor wo;          // d x d
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1, fc1_bias;  // d x mlp, mlp
  Tensor fc2, fc2_bias;  // mlp x d, d
};

struct GModParams {
  Tensor projection;  // (p^2 c) x d
  Tensor position;    // (n+1) x d
  Tensor cls;         // 1 x d
  std::vector<TransformerBlockParams> blocks;
  Tensor final_gamma, final_beta;

  /// Truncated normal (std 0.02) projections; zero biases and class token;
  /// unit layer-norm gains.
  static GModParams init(const GModConfig& config, Rng& rng);

  std::vector<Tensor> trainable() const;
  /// Names follow gmod.<block>.<tensor>.
  std::vector<NamedTensor> named() const;
  static GModParams from_records(const GModConfig& config, const std::vector<NamedTensor>& records);
};

/// [h, w, c] image -> [n, p*p*c]; patches in row-major patch order, each
/// flattened row-major over (row, col, channel).
Tensor patchify(const Tensor& image, std::size_t patch);
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width, std::size_t channels,
                  std::size_t patch);

/// [class; patches * E] + E_pos.
Tensor embed(const Tensor& patches, const GModParams& params);

/// softmax(Q K^T / sqrt(d_K)) V with Q = tokens * wq, and so on. d_K is the
/// column count of wk.
Tensor self_attention(const Tensor& tokens, const Tensor& wq, const Tensor& wk, const Tensor& wv);

/// Concatenated per-head attention followed by the output projection.
Tensor msa(const Tensor& tokens, const TransformerBlockParams& block, std::size_t heads);

/// Pre-norm residual attention then pre-norm residual GeLU MLP.
Tensor transformer_block(const Tensor& z, const TransformerBlockParams& block, std::size_t heads);

/// All n+1 tokens after the final layer norm.
Tensor gmod_encode(const Tensor& image, const GModConfig& config, const GModParams& params);

/// Class-token row of gmod_encode, shape [d].
Tensor gmod_forward(const Tensor& image, const GModConfig& config, const GModParams& params);

}  // namespace ctcn
