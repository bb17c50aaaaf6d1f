#pragma once

#include "ctcn/grafr.hpp"
#include "ctcn/ops.hpp"
#include "ctcn/tensor_io.hpp"

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ctcn {

struct HDLCConfig {
  std::size_t filters = 128;
  std::vector<std::size_t> widths{512, 256, 128, 64, 32, 1};  // six layers, last is 1
  void validate() const;
};

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // out
};

struct HDLCParams {
  Tensor kernels;  // filters x 3
  Tensor conv_bias;
  std::vector<DenseLayer> dense;

  /// He-normal weights, zero biases.
  static HDLCParams init(std::size_t features, const HDLCConfig& config, Rng& rng);

  std::size_t input_dim() const { return dense.front().weight.dim(0) / kernels.dim(0); }
  std::vector<Tensor> trainable() const;
  /// hdlc.conv.{kernels,bias}, hdlc.dense<i>.{weight,bias}
  std::vector<NamedTensor> named() const;
  static HDLCParams from_records(const std::vector<NamedTensor>& records);
};

/// [b, d] -> [b] logits: conv1d (same padding) -> ReLU -> flatten -> five
/// ReLU dense layers -> final linear unit.
Tensor hdlc_logits(const Tensor& features, const HDLCParams& params);

/// sigmoid(hdlc_logits) for a batch [b, d] or a single vector [d].
Tensor hdlc_forward(const Tensor& features, const HDLCParams& params);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch = 32;
};

/// Mini-batch gradient descent on mean BCE. Samples are reshuffled every epoch
/// with a Fisher-Yates pass over rng. Returns the mean loss of each epoch.
std::vector<double> train_hdlc(HDLCParams& params, const FeatureMatrix& x, const std::vector<int>& y,
                               const TrainConfig& config, Rng& rng);

/// Probabilities for every row of x, in batches.
std::vector<double> predict(const HDLCParams& params, const FeatureMatrix& x);

/// Per-column standardization fitted on training rows; zero spread maps to 1.
struct FeatureScaler {
  Eigen::RowVectorXd mean, scale;

  static FeatureScaler fit(const FeatureMatrix& x);
  FeatureMatrix apply(const FeatureMatrix& x) const;
};

/// Everything needed to score raw extracted features: scaler, column mask, model.
struct Classifier {
  FeatureScaler scaler;
  std::vector<bool> mask;
  HDLCParams model;

  std::vector<double> predict(const FeatureMatrix& raw) const;
  std::vector<NamedTensor> named() const;
  static Classifier from_records(const std::vector<NamedTensor>& records);
};

/// Selected columns, in order.
FeatureMatrix select_columns(const FeatureMatrix& x, const std::vector<bool>& mask);

}  // namespace ctcn
