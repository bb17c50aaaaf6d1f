#include "ctcn/hdlc.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace ctcn {

namespace {

void he_normal(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.mutable_values()) v = std * rng.normal();
}

Tensor rows_tensor(const FeatureMatrix& x) {
  return Tensor({static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols())},
                Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()));
}

}  // namespace

void HDLCConfig::validate() const {
  if (filters == 0) throw ParameterError("hdlc: filters must be positive");
  if (widths.size() != 6) throw ParameterError(fmt::format("hdlc: need six dense widths, got {}", widths.size()));
  if (widths.back() != 1) throw ParameterError("hdlc: the last dense layer must have one unit");
  for (auto w : widths)
    if (w == 0) throw ParameterError("hdlc: dense widths must be positive");
}

HDLCParams HDLCParams::init(std::size_t features, const HDLCConfig& config, Rng& rng) {
  config.validate();
  if (features < 3) throw DimensionError(fmt::format("hdlc: need at least 3 features, got {}", features));
  HDLCParams p;
  p.kernels = Tensor({config.filters, 3});
  he_normal(p.kernels, 3, rng);
  p.conv_bias = Tensor::zeros({config.filters});
  std::size_t in = config.filters * features;
  for (auto out : config.widths) {
    DenseLayer layer{Tensor({in, out}), Tensor::zeros({out})};
    he_normal(layer.weight, in, rng);
    p.dense.push_back(std::move(layer));
    in = out;
  }
  return p;
}

std::vector<Tensor> HDLCParams::trainable() const {
  std::vector<Tensor> out{kernels, conv_bias};
  for (const auto& l : dense) out.insert(out.end(), {l.weight, l.bias});
  return out;
}

std::vector<NamedTensor> HDLCParams::named() const {
  std::vector<NamedTensor> out{{"hdlc.conv.kernels", kernels}, {"hdlc.conv.bias", conv_bias}};
  for (std::size_t i = 0; i < dense.size(); ++i) {
    out.push_back({fmt::format("hdlc.dense{}.weight", i), dense[i].weight});
    out.push_back({fmt::format("hdlc.dense{}.bias", i), dense[i].bias});
  }
  return out;
}

HDLCParams HDLCParams::from_records(const std::vector<NamedTensor>& records) {
  HDLCParams p;
  p.kernels = find_record(records, "hdlc.conv.kernels").clone();
  p.conv_bias = find_record(records, "hdlc.conv.bias").clone();
  for (std::size_t i = 0; i < 6; ++i)
    p.dense.push_back({find_record(records, fmt::format("hdlc.dense{}.weight", i)).clone(),
                       find_record(records, fmt::format("hdlc.dense{}.bias", i)).clone()});
  return p;
}

Tensor hdlc_logits(const Tensor& features, const HDLCParams& params) {
  if (features.rank() != 2) throw DimensionError("hdlc: expected [b, d], got " + shape_string(features.shape()));
  if (features.dim(1) < 3) throw DimensionError(fmt::format("hdlc: need at least 3 features, got {}", features.dim(1)));
  const std::size_t b = features.dim(0);
  Tensor x = relu(conv1d(features, params.kernels, params.conv_bias));
  x = reshape(x, {b, x.size() / b});
  for (std::size_t i = 0; i < params.dense.size(); ++i) {
    x = add_bias(matmul(x, params.dense[i].weight), params.dense[i].bias);
    if (i + 1 < params.dense.size()) x = relu(x);
  }
  return reshape(x, {b});
}

Tensor hdlc_forward(const Tensor& features, const HDLCParams& params) {
  if (features.rank() == 1) return sigmoid(hdlc_logits(reshape(features, {1, features.dim(0)}), params));
  return sigmoid(hdlc_logits(features, params));
}

std::vector<double> train_hdlc(HDLCParams& params, const FeatureMatrix& x, const std::vector<int>& y,
                               const TrainConfig& config, Rng& rng) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()))
    throw DataError(fmt::format("train: {} rows vs {} labels", x.rows(), y.size()));
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (positives == 0 || positives == static_cast<long>(y.size()))
    throw TrainingError("train: both classes must be present");
  if (config.batch == 0) throw ParameterError("train: batch must be positive");
  auto weights = params.trainable();
  for (auto& w : weights) w.set_requires_grad(true);

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> trace;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t count = std::min(config.batch, order.size() - begin);
      FeatureMatrix xb(static_cast<Eigen::Index>(count), x.cols());
      Eigen::VectorXd yb(static_cast<Eigen::Index>(count));
      for (std::size_t k = 0; k < count; ++k) {
        xb.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(order[begin + k]));
        yb[static_cast<Eigen::Index>(k)] = y[order[begin + k]];
      }
      Tensor loss = bce_with_logits(hdlc_logits(rows_tensor(xb), params), yb);
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

std::vector<double> predict(const HDLCParams& params, const FeatureMatrix& x) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index begin = 0; begin < x.rows(); begin += 64) {
    const Eigen::Index count = std::min<Eigen::Index>(64, x.rows() - begin);
    Tensor p = hdlc_forward(rows_tensor(x.middleRows(begin, count)), params);
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p[i]);
  }
  return out;
}

FeatureScaler FeatureScaler::fit(const FeatureMatrix& x) {
  FeatureScaler s;
  s.mean = x.colwise().mean();
  s.scale = ((x.rowwise() - s.mean).array().square().colwise().mean()).sqrt();
  s.scale = (s.scale.array() > 1e-12).select(s.scale, 1.0);
  return s;
}

FeatureMatrix FeatureScaler::apply(const FeatureMatrix& x) const {
  if (x.cols() != mean.size())
    throw DimensionError(fmt::format("scaler: fitted on {} columns, got {}", mean.size(), x.cols()));
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

FeatureMatrix select_columns(const FeatureMatrix& x, const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != x.cols())
    throw DimensionError(fmt::format("mask of {} bits for {} columns", mask.size(), x.cols()));
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) cols.push_back(static_cast<Eigen::Index>(j));
  return x(Eigen::all, cols);
}

std::vector<double> Classifier::predict(const FeatureMatrix& raw) const {
  return ctcn::predict(model, select_columns(scaler.apply(raw), mask));
}

std::vector<NamedTensor> Classifier::named() const {
  const auto d = static_cast<std::size_t>(scaler.mean.size());
  Eigen::VectorXd m(static_cast<Eigen::Index>(mask.size()));
  for (std::size_t j = 0; j < mask.size(); ++j) m[static_cast<Eigen::Index>(j)] = mask[j] ? 1.0 : 0.0;
  std::vector<NamedTensor> out{{"hdlc.scaler.mean", Tensor({d}, scaler.mean.transpose())},
                               {"hdlc.scaler.scale", Tensor({d}, scaler.scale.transpose())},
                               {"hdlc.mask", Tensor({mask.size()}, m)}};
  for (auto& r : model.named()) out.push_back(r);
  return out;
}

Classifier Classifier::from_records(const std::vector<NamedTensor>& records) {
  Classifier c;
  c.scaler.mean = find_record(records, "hdlc.scaler.mean").values().transpose();
  c.scaler.scale = find_record(records, "hdlc.scaler.scale").values().transpose();
  for (double v : find_record(records, "hdlc.mask").values()) c.mask.push_back(v != 0.0);
  c.model = HDLCParams::from_records(records);
  return c;
}

}  // namespace ctcn
