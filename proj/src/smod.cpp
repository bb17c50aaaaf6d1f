#include "ctcn/smod.hpp"

#include <fmt/format.h>

#include <cmath>

namespace ctcn {

SModParams SModParams::init(std::size_t in_channels, const SModConfig& config, Rng& rng) {
  SModParams p;
  std::size_t c = in_channels;
  for (std::size_t f : config.filters) {
    SflParams b{Tensor({f, c, 3, 3}), Tensor::ones({f}), Tensor::zeros({f}), BatchNormState(f)};
    const double std = std::sqrt(2.0 / static_cast<double>(c * 9));
    for (auto& v : b.kernels.mutable_values()) v = std * rng.normal();
    p.blocks.push_back(std::move(b));
    c = f;
  }
  return p;
}

std::vector<Tensor> SModParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks) out.insert(out.end(), {b.kernels, b.gamma, b.beta});
  return out;
}

std::vector<NamedTensor> SModParams::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const auto f = static_cast<std::size_t>(b.gamma.size());
    out.push_back({fmt::format("smod.block{}.kernels", i), b.kernels});
    out.push_back({fmt::format("smod.block{}.gamma", i), b.gamma});
    out.push_back({fmt::format("smod.block{}.beta", i), b.beta});
    out.push_back({fmt::format("smod.block{}.running_mean", i), Tensor({f}, b.state.running_mean)});
    out.push_back({fmt::format("smod.block{}.running_var", i), Tensor({f}, b.state.running_var)});
  }
  return out;
}

SModParams SModParams::from_records(std::size_t in_channels, const SModConfig& config,
                                    const std::vector<NamedTensor>& records) {
  Rng unused(0);
  SModParams p = init(in_channels, config, unused);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    auto load = [&](const char* name, const Shape& shape) -> const Eigen::VectorXd& {
      const Tensor& t = find_record(records, fmt::format("smod.block{}.{}", i, name));
      if (t.shape() != shape)
        throw FormatError(fmt::format("smod.block{}.{}: stored shape {} does not match config {}", i, name,
                                      shape_string(t.shape()), shape_string(shape)));
      return t.values();
    };
    const Shape f{b.gamma.size()};
    b.kernels.mutable_values() = load("kernels", b.kernels.shape());
    b.gamma.mutable_values() = load("gamma", f);
    b.beta.mutable_values() = load("beta", f);
    b.state.running_mean = load("running_mean", f);
    b.state.running_var = load("running_var", f);
  }
  return p;
}

Tensor token_grid(const Tensor& tokens) {
  if (tokens.rank() != 2) throw DimensionError("token_grid: expected [n, d], got " + shape_string(tokens.shape()));
  const std::size_t n = tokens.dim(0), d = tokens.dim(1);
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  if (g * g != n) throw DimensionError(fmt::format("token_grid: {} tokens do not form a square grid", n));
  return reshape(transpose(tokens), {d, g, g});
}

Tensor sfl_block(const Tensor& map, SflParams& params, const SModConfig& config, Rng& rng, bool training,
                 bool pool) {
  if (map.rank() != 4) throw DimensionError("sfl_block: expected [b, c, h, w], got " + shape_string(map.shape()));
  if (pool && (map.dim(2) < 2 || map.dim(3) < 2))
    throw DimensionError("sfl_block: spatial extent below 2 in " + shape_string(map.shape()));
  Tensor x = relu(batchnorm(conv2d(map, params.kernels, Padding::same), params.gamma, params.beta, config.bn_eps,
                            params.state, training));
  if (pool) x = maxpool2d(x);
  return dropout(x, config.dropout, rng, training);
}

Tensor smod_forward(const Tensor& map, const SModConfig& config, SModParams& params, Rng& rng, bool training) {
  if (map.rank() != 3 && map.rank() != 4)
    throw DimensionError("smod_forward: expected [b, c, h, w], got " + shape_string(map.shape()));
  Tensor x = map.rank() == 3 ? reshape(map, {1, map.dim(0), map.dim(1), map.dim(2)}) : map;
  for (auto& block : params.blocks) {
    const bool pool = x.dim(2) >= 2 && x.dim(3) >= 2;
    x = sfl_block(x, block, config, rng, training, pool);
  }
  const std::size_t b = x.dim(0);
  return reshape(x, {b, x.size() / b});
}

}  // namespace ctcn
