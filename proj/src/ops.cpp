#include "ctcn/ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctcn {

namespace {

using Vec = Eigen::VectorXd;
using Idx = Eigen::Index;
using Grads = std::vector<Vec*>;

Idx ix(std::size_t v) { return static_cast<Idx>(v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a.shape()),
                                     shape_string(b.shape())));
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank)
    throw DimensionError(fmt::format("{}: expected rank {}, got {}", op, rank, shape_string(a.shape())));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_result(a.shape(), a.values() + b.values(), {a, b}, "add", [](const Vec& g, Grads& gs) {
    if (gs[0]) *gs[0] += g;
    if (gs[1]) *gs[1] += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.shape(), a.values() - b.values(), {a, b}, "sub", [](const Vec& g, Grads& gs) {
    if (gs[0]) *gs[0] += g;
    if (gs[1]) *gs[1] -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.shape(), a.values().cwiseProduct(b.values()), {a, b}, "mul",
                     [a, b](const Vec& g, Grads& gs) {
                       if (gs[0]) *gs[0] += g.cwiseProduct(b.values());
                       if (gs[1]) *gs[1] += g.cwiseProduct(a.values());
                     });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result(a.shape(), a.values() * factor, {a}, "scale", [factor](const Vec& g, Grads& gs) {
    if (gs[0]) *gs[0] += g * factor;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t n = bias.size();
  if (a.shape().back() != n)
    throw DimensionError(fmt::format("add_bias: bias length {} does not match last axis of {}", n,
                                     shape_string(a.shape())));
  const std::size_t rows = a.size() / n;
  Vec out = a.values();
  RowMap(out.data(), ix(rows), ix(n)).rowwise() += bias.values().transpose();
  return make_result(a.shape(), std::move(out), {a, bias}, "add_bias", [rows, n](const Vec& g, Grads& gs) {
    if (gs[0]) *gs[0] += g;
    if (gs[1]) *gs[1] += ConstRowMap(g.data(), ix(rows), ix(n)).colwise().sum().transpose();
  });
}

Tensor sum(const Tensor& a) {
  const Idx n = ix(a.size());
  return make_result(Shape{1}, Vec::Constant(1, a.values().sum()), {a}, "sum", [n](const Vec& g, Grads& gs) {
    if (gs[0]) gs[0]->array() += g[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError(fmt::format("reshape: cannot view {} as {}", shape_string(a.shape()), shape_string(shape)));
  return make_result(std::move(shape), a.values(), {a}, "reshape", [](const Vec& g, Grads& gs) {
    if (gs[0]) *gs[0] += g;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Vec out(a.size());
  RowMap(out.data(), ix(n), ix(m)) = a.matrix().transpose();
  return make_result(Shape{n, m}, std::move(out), {a}, "transpose", [m, n](const Vec& g, Grads& gs) {
    if (gs[0]) RowMap(gs[0]->data(), ix(m), ix(n)) += ConstRowMap(g.data(), ix(n), ix(m)).transpose();
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError(fmt::format("matmul: incompatible shapes {} and {}", shape_string(a.shape()),
                                     shape_string(b.shape())));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Vec out(ix(m * n));
  RowMap(out.data(), ix(m), ix(n)).noalias() = a.matrix() * b.matrix();
  return make_result(Shape{m, n}, std::move(out), {a, b}, "matmul", [a, b, m, k, n](const Vec& g, Grads& gs) {
    ConstRowMap G(g.data(), ix(m), ix(n));
    if (gs[0]) RowMap(gs[0]->data(), ix(m), ix(k)).noalias() += G * b.matrix().transpose();
    if (gs[1]) RowMap(gs[1]->data(), ix(k), ix(n)).noalias() += a.matrix().transpose() * G;
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (count == 0 || begin + count > m)
    throw DimensionError(fmt::format("slice_rows: rows [{}, {}) out of range for {}", begin, begin + count,
                                     shape_string(a.shape())));
  Vec out = a.values().segment(ix(begin * n), ix(count * n));
  return make_result(Shape{count, n}, std::move(out), {a}, "slice_rows", [begin, count, n](const Vec& g, Grads& gs) {
    if (gs[0]) gs[0]->segment(ix(begin * n), ix(count * n)) += g;
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (count == 0 || begin + count > n)
    throw DimensionError(fmt::format("slice_cols: cols [{}, {}) out of range for {}", begin, begin + count,
                                     shape_string(a.shape())));
  Vec out(ix(m * count));
  RowMap(out.data(), ix(m), ix(count)) = a.matrix().middleCols(ix(begin), ix(count));
  return make_result(Shape{m, count}, std::move(out), {a}, "slice_cols",
                     [begin, count, m, n](const Vec& g, Grads& gs) {
                       if (gs[0])
                         RowMap(gs[0]->data(), ix(m), ix(n)).middleCols(ix(begin), ix(count)) +=
                             ConstRowMap(g.data(), ix(m), ix(count));
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n)
      throw DimensionError(fmt::format("concat_rows: column mismatch {} vs {}", shape_string(parts.front().shape()),
                                       shape_string(p.shape())));
    rows += p.dim(0);
  }
  Vec out(ix(rows * n));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    out.segment(ix(off), ix(p.size())) = p.values();
    off += p.size();
  }
  return make_result(Shape{rows, n}, std::move(out), parts, "concat_rows", [offsets](const Vec& g, Grads& gs) {
    for (std::size_t i = 0; i < gs.size(); ++i)
      if (gs[i]) *gs[i] += g.segment(ix(offsets[i]), gs[i]->size());
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m)
      throw DimensionError(fmt::format("concat_cols: row mismatch {} vs {}", shape_string(parts.front().shape()),
                                       shape_string(p.shape())));
    cols += p.dim(1);
  }
  Vec out(ix(m * cols));
  RowMap O(out.data(), ix(m), ix(cols));
  std::vector<std::size_t> offsets, widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    widths.push_back(p.dim(1));
    O.middleCols(ix(off), ix(p.dim(1))) = p.matrix();
    off += p.dim(1);
  }
  return make_result(Shape{m, cols}, std::move(out), parts, "concat_cols",
                     [offsets, widths, m, cols](const Vec& g, Grads& gs) {
                       ConstRowMap G(g.data(), ix(m), ix(cols));
                       for (std::size_t i = 0; i < gs.size(); ++i)
                         if (gs[i])
                           RowMap(gs[i]->data(), ix(m), ix(widths[i])) += G.middleCols(ix(offsets[i]), ix(widths[i]));
                     });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape& inner = parts.front().shape();
  const std::size_t each = parts.front().size();
  Vec out(ix(each * parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].shape() != inner)
      throw DimensionError(fmt::format("stack: shape mismatch {} vs {}", shape_string(inner),
                                       shape_string(parts[i].shape())));
    out.segment(ix(i * each), ix(each)) = parts[i].values();
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return make_result(std::move(shape), std::move(out), parts, "stack", [each](const Vec& g, Grads& gs) {
    for (std::size_t i = 0; i < gs.size(); ++i)
      if (gs[i]) *gs[i] += g.segment(ix(i * each), ix(each));
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = kernels.dim(0);
  if (kernels.dim(2) != 3 || kernels.dim(3) != 3)
    throw DimensionError("conv2d: kernels must be 3x3, got " + shape_string(kernels.shape()));
  if (kernels.dim(1) != C)
    throw DimensionError(fmt::format("conv2d: input channels {} do not match kernel channels {} (input {}, kernels {})",
                                     C, kernels.dim(1), shape_string(input.shape()), shape_string(kernels.shape())));
  const std::size_t pad = padding == Padding::same ? 1 : 0;
  if (pad == 0 && (H < 3 || W < 3))
    throw DimensionError("conv2d: valid padding needs spatial extents >= 3, got " + shape_string(input.shape()));
  const std::size_t Ho = H + 2 * pad - 2, Wo = W + 2 * pad - 2;
  const std::size_t K = C * 9, P = Ho * Wo;

  auto cols = std::make_shared<std::vector<RowMatrix>>(B, RowMatrix::Zero(ix(K), ix(P)));
  const double* x = input.values().data();
  for (std::size_t b = 0; b < B; ++b) {
    RowMatrix& col = (*cols)[b];
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < 3; ++ki)
        for (std::size_t kj = 0; kj < 3; ++kj) {
          const Idx r = ix((c * 3 + ki) * 3 + kj);
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy + ki) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long jx = static_cast<long>(ox + kj) - static_cast<long>(pad);
              if (jx < 0 || jx >= static_cast<long>(W)) continue;
              col(r, ix(oy * Wo + ox)) = x[((b * C + c) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(jx)];
            }
          }
        }
  }
  ConstRowMap Kmat(kernels.values().data(), ix(F), ix(K));
  Vec out(ix(B * F * P));
  for (std::size_t b = 0; b < B; ++b) RowMap(out.data() + b * F * P, ix(F), ix(P)).noalias() = Kmat * (*cols)[b];

  return make_result(
      Shape{B, F, Ho, Wo}, std::move(out), {input, kernels}, "conv2d",
      [kernels, cols, B, C, H, W, F, K, P, Ho, Wo, pad](const Vec& g, Grads& gs) {
        ConstRowMap Kmat(kernels.values().data(), ix(F), ix(K));
        for (std::size_t b = 0; b < B; ++b) {
          ConstRowMap G(g.data() + b * F * P, ix(F), ix(P));
          if (gs[1]) RowMap(gs[1]->data(), ix(F), ix(K)).noalias() += G * (*cols)[b].transpose();
          if (!gs[0]) continue;
          RowMatrix dcol = Kmat.transpose() * G;
          double* dx = gs[0]->data();
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < 3; ++ki)
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const Idx r = ix((c * 3 + ki) * 3 + kj);
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                  const long iy = static_cast<long>(oy + ki) - static_cast<long>(pad);
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const long jx = static_cast<long>(ox + kj) - static_cast<long>(pad);
                    if (jx < 0 || jx >= static_cast<long>(W)) continue;
                    dx[((b * C + c) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(jx)] +=
                        dcol(r, ix(oy * Wo + ox));
                  }
                }
              }
        }
      });
}

Tensor maxpool2d(const Tensor& input) {
  if (input.rank() < 2) throw DimensionError("maxpool2d: need at least 2 axes, got " + shape_string(input.shape()));
  const std::size_t H = input.shape()[input.rank() - 2], W = input.shape().back();
  if (H < 2 || W < 2) throw DimensionError("maxpool2d: spatial extents must be >= 2, got " + shape_string(input.shape()));
  const std::size_t planes = input.size() / (H * W);
  const std::size_t Ho = H / 2, Wo = W / 2;
  Shape shape = input.shape();
  shape[shape.size() - 2] = Ho;
  shape.back() = Wo;

  Vec out(ix(planes * Ho * Wo));
  auto argmax = std::make_shared<std::vector<std::size_t>>(planes * Ho * Wo);
  const double* x = input.values().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (p * H + 2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t i = (p * H + 2 * oy + dy) * W + 2 * ox + dx;
            if (x[i] > x[best]) best = i;
          }
        const std::size_t o = (p * Ho + oy) * Wo + ox;
        out[ix(o)] = x[best];
        (*argmax)[o] = best;
      }
  return make_result(std::move(shape), std::move(out), {input}, "maxpool2d", [argmax](const Vec& g, Grads& gs) {
    if (!gs[0]) return;
    for (std::size_t o = 0; o < argmax->size(); ++o) (*gs[0])[ix((*argmax)[o])] += g[ix(o)];
  });
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps, BatchNormState& state,
                 bool training) {
  if (input.rank() < 2) throw DimensionError("batchnorm: need [b,c,...], got " + shape_string(input.shape()));
  const std::size_t B = input.dim(0), C = input.dim(1);
  const std::size_t S = input.size() / (B * C);
  if (gamma.size() != C || beta.size() != C)
    throw DimensionError(fmt::format("batchnorm: gamma/beta length must be {} for input {}", C,
                                     shape_string(input.shape())));
  if (state.running_mean.size() == 0) state = BatchNormState(C);
  if (static_cast<std::size_t>(state.running_mean.size()) != C)
    throw DimensionError("batchnorm: running statistics have the wrong channel count");
  if (training && B < 2)
    throw ParameterError(fmt::format("batchnorm: insufficient batch, training mode needs b >= 2 (got {})", B));

  const double* x = input.values().data();
  Vec mu(ix(C)), inv_std(ix(C));
  if (training) {
    const double N = static_cast<double>(B * S);
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < S; ++k) s += x[(b * C + c) * S + k];
      const double m = s / N;
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < S; ++k) {
          const double d = x[(b * C + c) * S + k] - m;
          v += d * d;
        }
      v /= N;
      mu[ix(c)] = m;
      inv_std[ix(c)] = 1.0 / std::sqrt(v + eps);
      const double unbiased = N > 1 ? v * N / (N - 1.0) : v;
      state.running_mean[ix(c)] = (1.0 - state.momentum) * state.running_mean[ix(c)] + state.momentum * m;
      state.running_var[ix(c)] = (1.0 - state.momentum) * state.running_var[ix(c)] + state.momentum * unbiased;
    }
  } else {
    mu = state.running_mean;
    inv_std = (state.running_var.array() + eps).rsqrt().matrix();
  }

  auto xhat = std::make_shared<Vec>(input.size());
  Vec out(ix(input.size()));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < S; ++k) {
        const std::size_t i = (b * C + c) * S + k;
        const double h = (x[i] - mu[ix(c)]) * inv_std[ix(c)];
        (*xhat)[ix(i)] = h;
        out[ix(i)] = gamma[c] * h + beta[c];
      }

  return make_result(input.shape(), std::move(out), {input, gamma, beta}, "batchnorm",
                     [gamma, xhat, inv_std, B, C, S, training](const Vec& g, Grads& gs) {
                       const double N = static_cast<double>(B * S);
                       for (std::size_t c = 0; c < C; ++c) {
                         double sum_g = 0.0, sum_gx = 0.0;
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t k = 0; k < S; ++k) {
                             const std::size_t i = (b * C + c) * S + k;
                             sum_g += g[ix(i)];
                             sum_gx += g[ix(i)] * (*xhat)[ix(i)];
                           }
                         if (gs[1]) (*gs[1])[ix(c)] += sum_gx;
                         if (gs[2]) (*gs[2])[ix(c)] += sum_g;
                         if (!gs[0]) continue;
                         const double gm = gamma[c], is = inv_std[ix(c)];
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t k = 0; k < S; ++k) {
                             const std::size_t i = (b * C + c) * S + k;
                             if (training)
                               (*gs[0])[ix(i)] +=
                                   gm * is * (g[ix(i)] - sum_g / N - (*xhat)[ix(i)] * sum_gx / N);
                             else
                               (*gs[0])[ix(i)] += gm * is * g[ix(i)];
                           }
                       }
                     });
}

Tensor layernorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = input.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError(fmt::format("layernorm: gamma/beta length must be {} for input {}", d,
                                     shape_string(input.shape())));
  const std::size_t rows = input.size() / d;
  auto xhat = std::make_shared<Vec>(input.size());
  auto inv_std = std::make_shared<Vec>(ix(rows));
  Vec out(ix(input.size()));
  const double* x = input.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += x[r * d + j];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (x[r * d + j] - m) * (x[r * d + j] - m);
    v /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(v + eps);
    (*inv_std)[ix(r)] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (x[r * d + j] - m) * is;
      (*xhat)[ix(r * d + j)] = h;
      out[ix(r * d + j)] = gamma[j] * h + beta[j];
    }
  }
  return make_result(input.shape(), std::move(out), {input, gamma, beta}, "layernorm",
                     [gamma, xhat, inv_std, rows, d](const Vec& g, Grads& gs) {
                       const double D = static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double sum_dh = 0.0, sum_dhx = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const Idx i = ix(r * d + j);
                           const double dh = g[i] * gamma[j];
                           sum_dh += dh;
                           sum_dhx += dh * (*xhat)[i];
                           if (gs[1]) (*gs[1])[ix(j)] += g[i] * (*xhat)[i];
                           if (gs[2]) (*gs[2])[ix(j)] += g[i];
                         }
                         if (!gs[0]) continue;
                         const double is = (*inv_std)[ix(r)];
                         for (std::size_t j = 0; j < d; ++j) {
                           const Idx i = ix(r * d + j);
                           (*gs[0])[i] += is * (g[i] * gamma[j] - sum_dh / D - (*xhat)[i] * sum_dhx / D);
                         }
                       }
                     });
}

Tensor softmax(const Tensor& input) {
  const std::size_t d = input.shape().back();
  const std::size_t rows = input.size() / d;
  auto y = std::make_shared<Vec>(input.size());
  const double* x = input.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * d];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[r * d + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = std::exp(x[r * d + j] - mx);
      (*y)[ix(r * d + j)] = e;
      s += e;
    }
    for (std::size_t j = 0; j < d; ++j) (*y)[ix(r * d + j)] /= s;
  }
  Vec out = *y;
  return make_result(input.shape(), std::move(out), {input}, "softmax", [y, rows, d](const Vec& g, Grads& gs) {
    if (!gs[0]) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[ix(r * d + j)] * (*y)[ix(r * d + j)];
      for (std::size_t j = 0; j < d; ++j) {
        const Idx i = ix(r * d + j);
        (*gs[0])[i] += (*y)[i] * (g[i] - dot);
      }
    }
  });
}

namespace {

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor activation(const Tensor& input, Activation kind) {
  const Vec& x = input.values();
  Vec out(x.size());
  switch (kind) {
    case Activation::relu:
      out = x.cwiseMax(0.0);
      return make_result(input.shape(), std::move(out), {input}, "relu", [input](const Vec& g, Grads& gs) {
        if (gs[0]) *gs[0] += (input.values().array() > 0.0).select(g.array(), 0.0).matrix();
      });
    case Activation::gelu:
      for (Idx i = 0; i < x.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      return make_result(input.shape(), std::move(out), {input}, "gelu", [input](const Vec& g, Grads& gs) {
        if (!gs[0]) return;
        const Vec& x = input.values();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (Idx i = 0; i < x.size(); ++i) {
          const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
          (*gs[0])[i] += g[i] * (cdf + x[i] * pdf);
        }
      });
    case Activation::sigmoid: {
      for (Idx i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(x[i]);
      auto y = std::make_shared<Vec>(out);
      return make_result(input.shape(), std::move(out), {input}, "sigmoid", [y](const Vec& g, Grads& gs) {
        if (gs[0]) *gs[0] += g.cwiseProduct(y->cwiseProduct((1.0 - y->array()).matrix()));
      });
    }
  }
  throw ParameterError("unknown activation");
}

Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError(fmt::format("dropout: rate {} outside [0, 1)", rate));
  if (!training || rate == 0.0) return input;
  auto mask = std::make_shared<Vec>(input.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Idx i = 0; i < mask->size(); ++i) (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return make_result(input.shape(), input.values().cwiseProduct(*mask), {input}, "dropout",
                     [mask](const Vec& g, Grads& gs) {
                       if (gs[0]) *gs[0] += g.cwiseProduct(*mask);
                     });
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require_rank(input, 2, "conv1d");
  require_rank(kernels, 2, "conv1d kernels");
  const std::size_t B = input.dim(0), L = input.dim(1), F = kernels.dim(0), K = kernels.dim(1);
  if (K % 2 == 0) throw DimensionError("conv1d: kernel length must be odd, got " + shape_string(kernels.shape()));
  if (bias.size() != F) throw DimensionError("conv1d: bias length must equal filter count");
  const long half = static_cast<long>(K / 2);

  auto cols = std::make_shared<std::vector<RowMatrix>>(B, RowMatrix::Zero(ix(K), ix(L)));
  const double* x = input.values().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < L; ++i) {
        const long j = static_cast<long>(i + k) - half;
        if (j >= 0 && j < static_cast<long>(L)) (*cols)[b](ix(k), ix(i)) = x[b * L + static_cast<std::size_t>(j)];
      }
  ConstRowMap Wm(kernels.values().data(), ix(F), ix(K));
  Vec out(ix(B * F * L));
  for (std::size_t b = 0; b < B; ++b) {
    RowMap O(out.data() + b * F * L, ix(F), ix(L));
    O.noalias() = Wm * (*cols)[b];
    O.colwise() += bias.values();
  }
  return make_result(Shape{B, F, L}, std::move(out), {input, kernels, bias}, "conv1d",
                     [kernels, cols, B, L, F, K, half](const Vec& g, Grads& gs) {
                       ConstRowMap Wm(kernels.values().data(), ix(F), ix(K));
                       for (std::size_t b = 0; b < B; ++b) {
                         ConstRowMap G(g.data() + b * F * L, ix(F), ix(L));
                         if (gs[1]) RowMap(gs[1]->data(), ix(F), ix(K)).noalias() += G * (*cols)[b].transpose();
                         if (gs[2]) *gs[2] += G.rowwise().sum();
                         if (!gs[0]) continue;
                         RowMatrix dcol = Wm.transpose() * G;
                         for (std::size_t k = 0; k < K; ++k)
                           for (std::size_t i = 0; i < L; ++i) {
                             const long j = static_cast<long>(i + k) - half;
                             if (j >= 0 && j < static_cast<long>(L))
                               (*gs[0])[ix(b * L + static_cast<std::size_t>(j))] += dcol(ix(k), ix(i));
                           }
                       }
                     });
}

Tensor bce_with_logits(const Tensor& logits, const Eigen::VectorXd& targets) {
  if (static_cast<std::size_t>(targets.size()) != logits.size())
    throw DimensionError(fmt::format("bce_with_logits: {} targets for logits {}", targets.size(),
                                     shape_string(logits.shape())));
  const Vec& z = logits.values();
  const double n = static_cast<double>(z.size());
  double loss = 0.0;
  for (Idx i = 0; i < z.size(); ++i)
    loss += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  Vec t = targets;
  return make_result(Shape{1}, Vec::Constant(1, loss / n), {logits}, "bce_with_logits",
                     [logits, t, n](const Vec& g, Grads& gs) {
                       if (!gs[0]) return;
                       const Vec& z = logits.values();
                       for (Idx i = 0; i < z.size(); ++i) (*gs[0])[i] += g[0] * (sigmoid_scalar(z[i]) - t[i]) / n;
                     });
}

}  // namespace ctcn
