#pragma once

#include "ctcn/ops.hpp"
#include "ctcn/tensor_io.hpp"

#include <cstddef>
#include <vector>

namespace ctcn {

struct SModConfig {
  std::vector<std::size_t> filters{32, 64, 128, 256, 256};
  double dropout = 0.2;
  double bn_eps = 1e-5;
};

/// One SFL block. The convolution has no bias; batchnorm beta plays that role.
struct SflParams {
  Tensor kernels;  // f x c x 3 x 3
  Tensor gamma, beta;
  BatchNormState state;
};

struct SModParams {
  std::vector<SflParams> blocks;

  /// He-normal kernels, unit gamma, zero beta.
  static SModParams init(std::size_t in_channels, const SModConfig& config, Rng& rng);

  std::vector<Tensor> trainable() const;
  /// smod.block<i>.{kernels,gamma,beta,running_mean,running_var}
  std::vector<NamedTensor> named() const;
  static SModParams from_records(std::size_t in_channels, const SModConfig& config,
                                 const std::vector<NamedTensor>& records);
};

/// [n, d] tokens (class token excluded) -> [d, sqrt(n), sqrt(n)]; channel k
/// at (i, j) is token i*sqrt(n)+j.
Tensor token_grid(const Tensor& tokens);

/// conv3x3 same -> batchnorm -> ReLU -> maxpool 2x2 -> dropout, on [b, c, h, w].
/// With pool == false the pooling stage is the identity; with pool == true a
/// spatial extent below 2 is a DimensionError.
Tensor sfl_block(const Tensor& map, SflParams& params, const SModConfig& config, Rng& rng, bool training,
                 bool pool = true);

/// Five SFL blocks, then a row-major flatten to [b, features]. Pooling is
/// skipped for a block whose input has a spatial extent of 1. Accepts [c, h, w]
/// as a batch of one.
Tensor smod_forward(const Tensor& map, const SModConfig& config, SModParams& params, Rng& rng, bool training);

}  // namespace ctcn
