#include "ctcn/gmod.hpp"
#include "ctcn/ops.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace ctcn;
using ctcn::testing::gradcheck;
using ctcn::testing::random_tensor;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat cols(const Mat& a, std::size_t begin, std::size_t n) {
  Mat out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i].assign(a[i].begin() + long(begin), a[i].begin() + long(begin + n));
  return out;
}

Mat ln(const Mat& x, const Tensor& g, const Tensor& b) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mu = 0, var = 0;
    for (double v : x[i]) mu += v;
    mu /= double(x[i].size());
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= double(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j) out[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return out;
}

Mat attention(const Mat& x, const Mat& wq, const Mat& wk, const Mat& wv) {
  Mat q = mm(x, wq), k = mm(x, wk), v = mm(x, wv);
  const std::size_t t = x.size(), dk = wk[0].size();
  Mat out(t, std::vector<double>(v[0].size(), 0.0));
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> s(t);
    double mx = -1e300, z = 0;
    for (std::size_t j = 0; j < t; ++j) {
      s[j] = 0;
      for (std::size_t c = 0; c < dk; ++c) s[j] += q[i][c] * k[j][c];
      s[j] /= std::sqrt(double(dk));
      mx = std::max(mx, s[j]);
    }
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t c = 0; c < v[0].size(); ++c) out[i][c] += s[j] / z * v[j][c];
  }
  return out;
}

std::vector<double> reference_forward(const Tensor& image, const GModConfig& cfg, const GModParams& p) {
  const std::size_t P = cfg.patch, d = cfg.embed_dim, dk = d / cfg.heads;
  Mat patches;
  for (std::size_t py = 0; py < cfg.height / P; ++py)
    for (std::size_t px = 0; px < cfg.width / P; ++px) {
      std::vector<double> row;
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x)
          for (std::size_t c = 0; c < cfg.channels; ++c)
            row.push_back(image[((py * P + y) * cfg.width + px * P + x) * cfg.channels + c]);
      patches.push_back(row);
    }
  Mat z = mm(patches, to_mat(p.projection));
  z.insert(z.begin(), to_mat(p.cls)[0]);
  Mat pos = to_mat(p.position);
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) z[i][j] += pos[i][j];
  for (const auto& b : p.blocks) {
    Mat x = ln(z, b.ln1_gamma, b.ln1_beta);
    Mat concat(z.size());
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Mat head = attention(x, cols(to_mat(b.wq), h * dk, dk), cols(to_mat(b.wk), h * dk, dk),
                           cols(to_mat(b.wv), h * dk, dk));
      for (std::size_t i = 0; i < z.size(); ++i) concat[i].insert(concat[i].end(), head[i].begin(), head[i].end());
    }
    Mat a = mm(concat, to_mat(b.wo));
    for (std::size_t i = 0; i < z.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) a[i][j] += z[i][j];
    Mat hdn = mm(ln(a, b.ln2_gamma, b.ln2_beta), to_mat(b.fc1));
    for (auto& row : hdn)
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double u = row[j] + b.fc1_bias[j];
        row[j] = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
      }
    Mat o = mm(hdn, to_mat(b.fc2));
    for (std::size_t i = 0; i < z.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) z[i][j] = o[i][j] + b.fc2_bias[j] + a[i][j];
  }
  return ln(z, p.final_gamma, p.final_beta)[0];
}

GModConfig toy_config() {
  GModConfig c;
  c.height = c.width = 32;
  c.channels = 1;
  c.patch = 8;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_hidden = 32;
  return c;
}

// Larger-than-default weights so that attention is far from uniform.
GModParams random_params(const GModConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  GModParams p = GModParams::init(cfg, rng);
  for (auto& t : p.trainable())
    for (auto& v : Tensor(t).mutable_values()) v = rng.uniform(-0.5, 0.5);
  return p;
}

}  // namespace

TEST_CASE("patchify") {
  Rng rng(1);
  Tensor img = random_tensor({32, 32, 3}, rng);
  Tensor p = patchify(img, 4);
  CHECK(p.shape() == Shape{64, 48});
  CHECK(unpatchify(p, 32, 32, 3, 4).values() == img.values());
  Tensor single = patchify(img, 32);
  CHECK(single.shape() == Shape{1, 32 * 32 * 3});
  CHECK(single.values() == img.values());
  CHECK_THROWS_AS(patchify(img, 5), DimensionError);
  // second patch starts at column 4 of row 0
  CHECK(p[48] == img[4 * 3]);
}

TEST_CASE("embed") {
  GModConfig cfg = toy_config();
  cfg.patch = 4;
  cfg.embed_dim = 48;
  cfg.channels = 3;
  cfg.heads = 1;
  Rng rng(2);
  GModParams p = GModParams::init(cfg, rng);
  p.position.mutable_values().setZero();
  Tensor patches = Tensor::zeros({64, 48});
  CHECK((embed(patches, p).values().array() == 0.0).all());
  p.projection.mutable_matrix() = RowMatrix::Identity(48, 48);
  patches = random_tensor({64, 48}, rng);
  Tensor z = embed(patches, p);
  CHECK(z.shape() == Shape{65, 48});
  CHECK((z.matrix().bottomRows(64) - patches.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(embed(random_tensor({10, 48}, rng), p), DimensionError);
}

TEST_CASE("self_attention") {
  Rng rng(3);
  Tensor wq = random_tensor({4, 4}, rng), wk = random_tensor({4, 4}, rng), wv = random_tensor({4, 4}, rng);
  SUBCASE("single token returns its value row") {
    Tensor t = random_tensor({1, 4}, rng);
    Tensor out = self_attention(t, wq, wk, wv);
    CHECK((out.matrix() - t.matrix() * wv.matrix()).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("identical tokens give identical rows") {
    Tensor row = random_tensor({1, 4}, rng);
    Tensor out = self_attention(concat_rows({row, row}), wq, wk, wv);
    CHECK(out.matrix().row(0) == out.matrix().row(1));
  }
  SUBCASE("matches scalar evaluation") {
    Tensor t = random_tensor({3, 4}, rng, 2.0);
    Mat ref = attention(to_mat(t), to_mat(wq), to_mat(wk), to_mat(wv));
    Tensor out = self_attention(t, wq, wk, wv);
    double worst = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(ref[i][j] - out[i * 4 + j]));
    CHECK(worst < 1e-12);
  }
  SUBCASE("attention weights are row-stochastic") {
    Tensor t = random_tensor({6, 4}, rng, 3.0);
    Tensor w = softmax(scale(matmul(matmul(t, wq), transpose(matmul(t, wk))), 0.5));
    for (Eigen::Index i = 0; i < 6; ++i) {
      CHECK(std::abs(w.matrix().row(i).sum() - 1.0) < 1e-9);
      CHECK(w.matrix().row(i).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("msa and transformer block") {
  GModConfig cfg = toy_config();
  GModParams p = random_params(cfg, 4);
  Rng rng(5);
  Tensor z = random_tensor({17, 16}, rng);
  const auto& b = p.blocks[0];
  SUBCASE("one head is the output projection of plain attention") {
    Tensor one = msa(z, b, 1);
    Tensor ref = matmul(self_attention(z, b.wq, b.wk, b.wv), b.wo);
    CHECK(one.values() == ref.values());
    CHECK(msa(z, b, 4).shape() == Shape{17, 16});
    CHECK_THROWS_AS(msa(z, b, 3), ParameterError);
  }
  SUBCASE("permuting tokens permutes attention output") {
    Tensor swapped = concat_rows({slice_rows(z, 0, 3), slice_rows(z, 5, 1), slice_rows(z, 4, 1),
                                  slice_rows(z, 3, 1), slice_rows(z, 6, 11)});
    Tensor a = msa(z, b, 2), s = msa(swapped, b, 2);
    CHECK((a.matrix().row(3) - s.matrix().row(5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.matrix().row(5) - s.matrix().row(3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.matrix().row(0) - s.matrix().row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero output projections make the block an identity") {
    TransformerBlockParams zeroed = b;
    zeroed.wo = Tensor::zeros({16, 16});
    zeroed.fc2 = Tensor::zeros({32, 16});
    zeroed.fc2_bias = Tensor::zeros({16});
    CHECK(transformer_block(z, zeroed, 2).values() == z.values());
  }
  SUBCASE("two stacked blocks pass finite differences") {
    Tensor x = random_tensor({5, 16}, rng);
    std::vector<Tensor> params{x};
    for (const auto& blk : p.blocks)
      for (auto t : {blk.wq, blk.wk, blk.wv, blk.wo, blk.fc1, blk.fc1_bias, blk.fc2, blk.ln1_gamma, blk.ln2_beta})
        params.push_back(t);
    Tensor w = random_tensor({5, 16}, rng);
    auto loss = [&] { return sum(mul(transformer_block(transformer_block(x, p.blocks[0], 2), p.blocks[1], 2), w)); };
    CHECK(gradcheck(loss, params) < 1e-4);
  }
}

TEST_CASE("gmod_forward") {
  GModConfig cfg = toy_config();
  GModParams p = random_params(cfg, 6);
  Rng rng(7);
  Tensor img = random_tensor({32, 32, 1}, rng);
  SUBCASE("matches a straight-line scalar implementation") {
    Tensor f = gmod_forward(img, cfg, p);
    CHECK(f.shape() == Shape{16});
    auto ref = reference_forward(img, cfg, p);
    double worst = 0;
    for (std::size_t j = 0; j < 16; ++j) worst = std::max(worst, std::abs(ref[j] - f[j]));
    CHECK(worst < 1e-10);
  }
  SUBCASE("deterministic and content independent in length") {
    CHECK(gmod_forward(img, cfg, p).values() == gmod_forward(img.clone(), cfg, p).values());
    CHECK(gmod_forward(Tensor::zeros({32, 32, 1}), cfg, p).size() == 16);
    CHECK_THROWS_AS(gmod_forward(Tensor::zeros({16, 32, 1}), cfg, p), DimensionError);
  }
  SUBCASE("without positions the readout ignores patch order") {
    p.position.mutable_values().setZero();
    Tensor patches = patchify(img, 8);
    Tensor shuffled = concat_rows({slice_rows(patches, 9, 7), slice_rows(patches, 0, 9)});
    Tensor a = gmod_forward(img, cfg, p);
    Tensor b = gmod_forward(unpatchify(shuffled, 32, 32, 1, 8), cfg, p);
    CHECK((a.values() - b.values()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("end-to-end gradient") {
    GModConfig small = cfg;
    small.height = small.width = 16;
    GModParams q = random_params(small, 8);
    Tensor im = random_tensor({16, 16, 1}, rng);
    Tensor w = random_tensor({16}, rng);
    CHECK(gradcheck([&] { return sum(mul(gmod_forward(im, small, q), w)); }, q.trainable()) < 1e-4);
  }
  SUBCASE("persisted parameters reload bit-identically") {
    std::stringstream buf;
    write_container(buf, p.named());
    GModParams back = GModParams::from_records(cfg, read_container(buf));
    auto a = p.named(), b = back.named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(a[i].tensor.values() == b[i].tensor.values());
    }
    CHECK(a[3].name == "gmod.block0.ln1_gamma");
  }
}
