#include "ctcn/smod.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace ctcn;
using ctcn::testing::gradcheck;
using ctcn::testing::random_tensor;

namespace {

// Conv, batchnorm, ReLU, pool and dropout for one channel in, one filter out, evaluated pixel by pixel.
// Batch statistics use the biased variance; inference uses the running ones.
std::vector<double> reference_sfl(const std::vector<double>& x, std::size_t batch, std::size_t h, std::size_t w,
                                  const Tensor& k, double gamma, double beta, bool training) {
  std::vector<double> conv(batch * h * w, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const long y = long(i) + di, xx = long(j) + dj;
            if (y < 0 || xx < 0 || y >= long(h) || xx >= long(w)) continue;
            conv[(b * h + i) * w + j] += k[std::size_t((di + 1) * 3 + dj + 1)] * x[(b * h + std::size_t(y)) * w + std::size_t(xx)];
          }
  double mu = 0.0, var = 1.0;
  if (training) {
    mu = 0.0;
    for (double v : conv) mu += v;
    mu /= double(conv.size());
    var = 0.0;
    for (double v : conv) var += (v - mu) * (v - mu);
    var /= double(conv.size());
  }
  for (auto& v : conv) v = std::max(0.0, (v - mu) / std::sqrt(var + 1e-5) * gamma + beta);
  std::vector<double> out;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i + 1 < h; i += 2)
      for (std::size_t j = 0; j + 1 < w; j += 2)
        out.push_back(std::max({conv[(b * h + i) * w + j], conv[(b * h + i) * w + j + 1],
                                conv[(b * h + i + 1) * w + j], conv[(b * h + i + 1) * w + j + 1]}));
  return out;
}

}  // namespace

TEST_CASE("token_grid") {
  Rng rng(1);
  Tensor tokens = random_tensor({64, 16}, rng);
  Tensor grid = token_grid(tokens);
  CHECK(grid.shape() == Shape{16, 8, 8});
  // channel 3 at (2, 5) is token 21
  CHECK(grid[(3 * 8 + 2) * 8 + 5] == tokens[21 * 16 + 3]);
  Tensor back = transpose(reshape(grid, {16, 64}));
  CHECK(back.values() == tokens.values());
  Tensor flat = token_grid(Tensor(Shape{9, 4}, 2.5));
  CHECK((flat.values().array() == 2.5).all());
  CHECK_THROWS_AS(token_grid(Tensor::ones({8, 4})), DimensionError);
}

TEST_CASE("sfl_block") {
  SModConfig cfg;
  Rng rng(2);
  SUBCASE("extents halve and channels become f") {
    SModParams p = SModParams::init(32, cfg, rng);
    Tensor out = sfl_block(random_tensor({2, 32, 8, 8}, rng), p.blocks[0], cfg, rng, true);
    CHECK(out.shape() == Shape{2, 32, 4, 4});
  }
  SUBCASE("zero input gives zero output") {
    SModParams p = SModParams::init(3, cfg, rng);
    for (bool training : {true, false}) {
      Tensor out = sfl_block(Tensor::zeros({2, 3, 4, 4}), p.blocks[0], cfg, rng, training);
      CHECK((out.values().array() == 0.0).all());
    }
  }
  SUBCASE("matches the scalar pipeline") {
    SModConfig one = cfg;
    one.filters = {1};
    one.dropout = 0.0;
    for (bool training : {false, true}) {
      SModParams p = SModParams::init(1, one, rng);
      p.blocks[0].gamma.mutable_values()[0] = 1.3;
      p.blocks[0].beta.mutable_values()[0] = 0.2;
      Tensor x = random_tensor({2, 1, 4, 4}, rng);
      std::vector<double> xs(x.values().data(), x.values().data() + x.size());
      auto ref = reference_sfl(xs, 2, 4, 4, p.blocks[0].kernels, 1.3, 0.2, training);
      Tensor out = sfl_block(x, p.blocks[0], one, rng, training);
      REQUIRE(out.size() == ref.size());
      double worst = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - out[i]));
      CHECK(worst < 1e-12);
    }
  }
  SUBCASE("pooling a unit extent is an error") {
    SModParams p = SModParams::init(2, cfg, rng);
    CHECK_THROWS_AS(sfl_block(Tensor::ones({2, 2, 1, 4}), p.blocks[0], cfg, rng, true), DimensionError);
    CHECK(sfl_block(Tensor::ones({2, 2, 1, 1}), p.blocks[0], cfg, rng, true, false).shape() == Shape{2, 32, 1, 1});
  }
}

TEST_CASE("smod_forward") {
  SModConfig cfg;
  Rng rng(3);
  SUBCASE("channel and spatial ladder") {
    SModParams p = SModParams::init(64, cfg, rng);
    Tensor x = random_tensor({2, 64, 32, 32}, rng);
    Tensor cur = x;
    const std::size_t channels[] = {32, 64, 128, 256, 256}, extents[] = {16, 8, 4, 2, 1};
    for (std::size_t i = 0; i < 5; ++i) {
      cur = sfl_block(cur, p.blocks[i], cfg, rng, true);
      CHECK(cur.dim(1) == channels[i]);
      CHECK(cur.dim(2) == extents[i]);
    }
    CHECK(smod_forward(x, cfg, p, rng, true).shape() == Shape{2, 256});
  }
  SUBCASE("small maps skip pooling at unit extent") {
    SModParams p = SModParams::init(16, cfg, rng);
    Tensor out = smod_forward(random_tensor({16, 8, 8}, rng), cfg, p, rng, false);
    CHECK(out.shape() == Shape{1, 256});
  }
  SUBCASE("inference is deterministic and ignores dropout") {
    SModParams p = SModParams::init(4, cfg, rng);
    Tensor x = random_tensor({3, 4, 8, 8}, rng);
    smod_forward(x, cfg, p, rng, true);  // moves the running statistics
    Rng a(10), b(11);
    CHECK(smod_forward(x, cfg, p, a, false).values() == smod_forward(x, cfg, p, b, false).values());
  }
  SUBCASE("gradient through two blocks") {
    SModConfig small;
    small.filters = {3, 4};
    small.dropout = 0.0;
    SModParams p = SModParams::init(2, small, rng);
    Tensor x = random_tensor({3, 2, 4, 4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    auto params = p.trainable();
    params.push_back(x);
    CHECK(gradcheck([&] { return sum(mul(smod_forward(x, small, p, rng, true), w)); }, params) < 1e-4);
  }
  SUBCASE("persisted parameters, including running statistics, reload bit-identically") {
    SModParams p = SModParams::init(4, cfg, rng);
    smod_forward(random_tensor({2, 4, 8, 8}, rng), cfg, p, rng, true);
    std::stringstream buf;
    write_container(buf, p.named());
    SModParams back = SModParams::from_records(4, cfg, read_container(buf));
    auto a = p.named(), b = back.named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].tensor.values() == b[i].tensor.values());
  }
}
