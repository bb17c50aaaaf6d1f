#pragma once

#include "ctcn/rng.hpp"
#include "ctcn/tensor.hpp"

#include <vector>

namespace ctcn {

// Elementwise arithmetic. Shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

/// Adds a length-n vector to every length-n row of `a` (last axis).
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Stacks equal-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

enum class Padding { same, valid };

/// 3x3 cross-correlation, input [b,c,h,w], kernels [f,c,3,3], stride 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding padding);

/// 2x2 max pooling with stride 2 over the two trailing axes of [b,c,h,w].
/// Gradient goes to the first maximum in row-major window order.
Tensor maxpool2d(const Tensor& input);

struct BatchNormState {
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  double momentum = 0.1;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels))),
        running_var(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(channels))) {}
};

/// Per-channel normalization of [b,c,h,w] (or [b,c]) over every axis but the
/// channel axis. Training mode uses batch statistics and updates `state`;
/// inference mode uses the running statistics.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                 BatchNormState& state, bool training);

/// Standardizes each row over the last axis, then applies gamma/beta.
Tensor layernorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Softmax over the last axis.
Tensor softmax(const Tensor& input);

enum class Activation { relu, gelu, sigmoid };
Tensor activation(const Tensor& input, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor gelu(const Tensor& x) { return activation(x, Activation::gelu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }

/// Inverted dropout. Identity when `training` is false or rate is 0.
Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training);

/// Single-channel 1-D convolution with "same" zero padding.
/// input [b,l], kernels [f,k] (k odd), bias [f] -> [b,f,l].
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// Mean binary cross-entropy computed from logits; targets in {0,1}.
Tensor bce_with_logits(const Tensor& logits, const Eigen::VectorXd& targets);

}  // namespace ctcn
