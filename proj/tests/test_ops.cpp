#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "qrestore/ops.hpp"
#include "qrestore/rng.hpp"

using namespace qrestore;

namespace {

// Independent direct-loop convolution used as the oracle for the
// im2col/GEMM implementation.
std::vector<double> conv_ref(const std::vector<double>& x, int64_t B,
                             int64_t Cin, int64_t H, int64_t W,
                             const std::vector<double>& w, int64_t Cout,
                             int64_t k, int stride, int pad, int groups,
                             const std::vector<double>* bias) {
  const int64_t Ho = (H + 2 * pad - k) / stride + 1;
  const int64_t Wo = (W + 2 * pad - k) / stride + 1;
  const int64_t Cg = Cin / groups;
  const int64_t Cog = Cout / groups;
  std::vector<double> out(B * Cout * Ho * Wo, 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oc = 0; oc < Cout; ++oc) {
      const int64_t g = oc / Cog;
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          double acc = bias ? (*bias)[oc] : 0.0;
          for (int64_t ic = 0; ic < Cg; ++ic)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x[((b * Cin + g * Cg + ic) * H + iy) * W + ix] *
                       w[((oc * Cg + ic) * k + ky) * k + kx];
              }
          out[((b * Cout + oc) * Ho + oy) * Wo + ox] = acc;
        }
    }
  return out;
}

Tensor rand_t(Shape s, Rng& rng, bool rg = false) {
  return Tensor::uniform(std::move(s), -1.0, 1.0, rng, rg);
}

}  // namespace

TEST_CASE("elementwise values and broadcasting") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::from_data({3}, {10, 20, 30});

  Tensor s = add(a, row);
  CHECK(s.shape() == Shape{2, 3});
  CHECK(s.data()[0] == 11.0);
  CHECK(s.data()[5] == 36.0);

  Tensor col = Tensor::from_data({2, 1}, {100, 200});
  Tensor m = mul(a, col);
  CHECK(m.data()[2] == 300.0);
  CHECK(m.data()[3] == 800.0);

  Tensor d = div(a, Tensor::from_data({3}, {2, 2, 2}));
  CHECK(d.data()[4] == 2.5);

  CHECK(sub(a, a).data()[3] == 0.0);
  CHECK_THROWS_AS(add(a, Tensor::zeros({4})), std::invalid_argument);
}

TEST_CASE("division guards against tiny divisors") {
  Tensor a = Tensor::from_data({2}, {1.0, 1.0});
  Tensor b = Tensor::from_data({2}, {1.0, 1e-13});
  CHECK_THROWS_AS(div(a, b), std::domain_error);
}

TEST_CASE("pow domain and values") {
  Tensor a = Tensor::from_data({3}, {0.0, 0.25, 4.0});
  Tensor p = pow(a, 0.5);
  CHECK(p.data()[0] == 0.0);
  CHECK(p.data()[1] == 0.5);
  CHECK(p.data()[2] == 2.0);
  Tensor neg_base = Tensor::from_data({1}, {-1.0});
  CHECK_THROWS_AS(pow(neg_base, 0.5), std::domain_error);
  CHECK(pow(neg_base, 2.0).data()[0] == 1.0);  // integral exponent is fine
}

TEST_CASE("unary activation values at known points") {
  Tensor x = Tensor::from_data({5}, {-2.0, -0.5, 0.0, 0.5, 1.0});

  Tensor r = relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[4] == 1.0);

  Tensor sg = sigmoid(x);
  CHECK(sg.data()[2] == 0.5);
  CHECK(sg.data()[4] == doctest::Approx(0.7310585786300049).epsilon(1e-14));

  Tensor sp = softplus(x);
  CHECK(sp.data()[2] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // softplus(x) - softplus(-x) = x
  CHECK(sp.data()[4] - softplus(neg(x)).data()[4] == doctest::Approx(1.0));

  // gelu(1) = 0.5 * (1 + erf(1/sqrt 2)) = Phi(1) = 0.841344746...
  Tensor g = gelu(x);
  CHECK(g.data()[4] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(g.data()[2] == 0.0);

  Tensor c = clamp(x, -1.0, 0.5);
  CHECK(c.data()[0] == -1.0);
  CHECK(c.data()[4] == 0.5);
  CHECK(c.data()[1] == -0.5);

  CHECK(qrestore::sqrt(Tensor::from_data({1}, {9.0})).data()[0] == 3.0);
  CHECK_THROWS_AS(qrestore::sqrt(Tensor::from_data({1}, {-1.0})),
                  std::domain_error);
  CHECK(qrestore::abs(Tensor::from_data({2}, {-3.0, 2.0})).data()[0] == 3.0);
}

TEST_CASE("reductions") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(sum(a).item() == 10.0);
  CHECK(mean(a).item() == 2.5);
  CHECK(sum(a).dim() == 0);
}

TEST_CASE("shape ops round trip") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});

  Tensor r = reshape(a, {3, 2});
  CHECK(r.data()[3] == 4.0);
  CHECK_THROWS_AS(reshape(a, {4, 2}), std::invalid_argument);

  Tensor t = transpose2d(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.data()[0] == 1.0);
  CHECK(t.data()[1] == 4.0);
  CHECK(t.data()[4] == 3.0);

  Tensor s = slice(a, 1, 1, 2);
  CHECK(s.shape() == Shape{2, 2});
  CHECK(s.data()[0] == 2.0);
  CHECK(s.data()[3] == 6.0);
  CHECK_THROWS_AS(slice(a, 1, 2, 2), std::invalid_argument);

  Tensor c = concat({slice(a, 1, 0, 1), slice(a, 1, 1, 2)}, 1);
  CHECK(c.shape() == a.shape());
  for (int i = 0; i < 6; ++i) CHECK(c.data()[i] == a.data()[i]);

  Tensor c0 = concat({a, a}, 0);
  CHECK(c0.shape() == Shape{4, 3});
  CHECK(c0.data()[8] == 3.0);
}

TEST_CASE("upsample and avgpool are inverses on constant blocks") {
  Tensor a = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor up = upsample_nearest(a, 2);
  CHECK(up.shape() == Shape{1, 1, 4, 4});
  CHECK(up.data()[0] == 1.0);
  CHECK(up.data()[3] == 2.0);
  CHECK(up.data()[15] == 4.0);
  Tensor down = avgpool(up, 2);
  for (int i = 0; i < 4; ++i) CHECK(down.data()[i] == a.data()[i]);

  Tensor p = avgpool(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}), 2);
  CHECK(p.shape() == Shape{1, 1, 1, 1});
  CHECK(p.data()[0] == 2.5);
  CHECK_THROWS_AS(avgpool(a, 3), std::invalid_argument);
}

TEST_CASE("matmul against hand-computed values") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.data()[0] == 58.0);
  CHECK(c.data()[1] == 64.0);
  CHECK(c.data()[2] == 139.0);
  CHECK(c.data()[3] == 154.0);

  // matmul_nt(a, b^T layout) must agree with matmul
  Tensor bt = transpose2d(b);
  Tensor c2 = matmul_nt(a, bt);
  for (int i = 0; i < 4; ++i) CHECK(c2.data()[i] == doctest::Approx(c.data()[i]));

  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("linear matches matmul plus bias") {
  Rng rng(11);
  Tensor x = rand_t({5, 4}, rng);
  Tensor w = rand_t({3, 4}, rng);
  Tensor b = rand_t({3}, rng);
  Tensor y = linear(x, w, b);
  Tensor ref = add(matmul_nt(x, w), b);
  REQUIRE(y.shape() == Shape{5, 3});
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-14));
}

TEST_CASE("conv2d agrees with the direct-loop oracle") {
  Rng rng(23);
  struct Case {
    int64_t B, Cin, H, W, Cout, k;
    int stride, pad, groups;
    bool bias;
  };
  const Case cases[] = {
      {1, 1, 5, 5, 1, 3, 1, 1, 1, true},
      {2, 3, 8, 7, 4, 3, 1, 1, 1, true},
      {1, 4, 9, 9, 6, 3, 2, 1, 2, true},
      {1, 4, 6, 6, 4, 3, 1, 1, 4, false},  // depthwise
      {2, 2, 7, 9, 3, 1, 1, 0, 1, true},   // 1x1
      {1, 3, 10, 10, 2, 7, 4, 3, 1, false},
      {1, 8, 6, 6, 8, 3, 2, 1, 4, true},
  };
  for (const auto& cs : cases) {
    CAPTURE(cs.Cin);
    CAPTURE(cs.k);
    CAPTURE(cs.groups);
    Tensor x = rand_t({cs.B, cs.Cin, cs.H, cs.W}, rng);
    Tensor w = rand_t({cs.Cout, cs.Cin / cs.groups, cs.k, cs.k}, rng);
    Tensor b;
    std::vector<double> bias_vec;
    if (cs.bias) {
      b = rand_t({cs.Cout}, rng);
      bias_vec.assign(b.data().begin(), b.data().end());
    }
    Tensor y = conv2d(x, w, b, cs.stride, cs.pad, cs.groups);
    const auto ref = conv_ref(
        {x.data().begin(), x.data().end()}, cs.B, cs.Cin, cs.H, cs.W,
        {w.data().begin(), w.data().end()}, cs.Cout, cs.k, cs.stride, cs.pad,
        cs.groups, cs.bias ? &bias_vec : nullptr);
    REQUIRE(y.numel() == static_cast<int64_t>(ref.size()));
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("grouped conv equals independent per-group convs bit-identically") {
  Rng rng(31);
  const int64_t B = 1, Cin = 8, H = 6, W = 6, Cout = 8, k = 3;
  const int groups = 4;
  const int64_t Cg = Cin / groups, Cog = Cout / groups;
  Tensor x = rand_t({B, Cin, H, W}, rng);
  Tensor w = rand_t({Cout, Cg, k, k}, rng);
  Tensor b = rand_t({Cout}, rng);

  Tensor grouped = conv2d(x, w, b, 1, 1, groups);

  std::vector<Tensor> parts;
  for (int g = 0; g < groups; ++g) {
    Tensor xg = slice(x, 1, g * Cg, Cg);
    Tensor wg = slice(w, 0, g * Cog, Cog);
    Tensor bg = slice(b, 0, g * Cog, Cog);
    parts.push_back(conv2d(xg, wg, bg, 1, 1, 1));
  }
  Tensor stacked = concat(parts, 1);
  REQUIRE(stacked.shape() == grouped.shape());
  for (int64_t i = 0; i < grouped.numel(); ++i)
    CHECK(grouped.data()[i] == stacked.data()[i]);  // bit-identical
}

TEST_CASE("conv2d validates shapes") {
  Tensor x = Tensor::zeros({1, 3, 5, 5});
  Tensor w = Tensor::zeros({4, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w, {}, 1, 0, 2), std::invalid_argument);  // groups
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({4, 2, 3, 3})),
                  std::invalid_argument);  // Cin mismatch
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({4, 3, 7, 7})),
                  std::invalid_argument);  // kernel larger than input
  CHECK_THROWS_AS(conv2d(x, w, Tensor::zeros({5})), std::invalid_argument);
}

TEST_CASE("softmax rows are normalised and stable") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 1000, 1001, 1002});
  Tensor y = softmax(a, 1);
  for (int r = 0; r < 2; ++r) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += y.data()[r * 3 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  // shift invariance: both rows have the same relative pattern
  for (int c = 0; c < 3; ++c)
    CHECK(y.data()[c] == doctest::Approx(y.data()[3 + c]).epsilon(1e-12));
  CHECK(y.data()[2] == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))).epsilon(1e-12));

  Tensor bad = Tensor::from_data({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(softmax(bad, 0), std::domain_error);
  Tensor inf_in =
      Tensor::from_data({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(softmax(inf_in, 0), std::domain_error);
}

TEST_CASE("softmax along a middle axis") {
  Rng rng(5);
  Tensor a = rand_t({2, 4, 3}, rng);
  Tensor y = softmax(a, 1);
  for (int o = 0; o < 2; ++o)
    for (int in = 0; in < 3; ++in) {
      double s = 0.0;
      for (int m = 0; m < 4; ++m) s += y.data()[(o * 4 + m) * 3 + in];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}
