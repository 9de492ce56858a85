#include <cmath>
#include <vector>

#include "doctest.h"
#include "qrestore/metrics.hpp"
#include "qrestore/qlayers.hpp"
#include "qrestore/quaternion.hpp"
#include "qrestore/rng.hpp"

using namespace qrestore;

namespace {

Image smooth_image(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(0, y, x) = 0.3 + 0.4 * std::sin(0.2 * x) * std::sin(0.15 * y);
      img.at(1, y, x) = 0.5 + 0.3 * std::cos(0.17 * (x + y));
      img.at(2, y, x) = 0.4 + 0.35 * std::sin(0.12 * x + 0.21 * y);
    }
  }
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Image add_noise(const Image& img, double amp, uint64_t seed) {
  Rng rng(seed);
  Image out = img;
  for (auto& v : out.data) v = std::clamp(v + rng.uniform(-amp, amp), 0.0, 1.0);
  return out;
}

// Straight-line reference: per non-overlapping 8x8 window, quaternion means,
// variances (mean squared deviation magnitude) and the magnitude of the
// quaternion covariance sum(x_d * conj(y_d))/n, composed into the two-term
// similarity and averaged.
double qssim_reference(const QImage& a, const QImage& b) {
  const int win = 8;
  const int wy = a.height / win, wx = a.width / win;
  const double c1 = 4e-4, c2 = 3.6e-3;
  double total = 0.0;
  for (int by = 0; by < wy; ++by) {
    for (int bx = 0; bx < wx; ++bx) {
      Quat mu_a{}, mu_b{};
      for (int y = 0; y < win; ++y) {
        for (int x = 0; x < win; ++x) {
          const int yy = by * win + y, xx = bx * win + x;
          mu_a = mu_a + Quat{a.at(0, yy, xx), a.at(1, yy, xx),
                             a.at(2, yy, xx), a.at(3, yy, xx)};
          mu_b = mu_b + Quat{b.at(0, yy, xx), b.at(1, yy, xx),
                             b.at(2, yy, xx), b.at(3, yy, xx)};
        }
      }
      const double inv_n = 1.0 / (win * win);
      mu_a = inv_n * mu_a;
      mu_b = inv_n * mu_b;
      double var_a = 0.0, var_b = 0.0;
      Quat cov{};
      for (int y = 0; y < win; ++y) {
        for (int x = 0; x < win; ++x) {
          const int yy = by * win + y, xx = bx * win + x;
          const Quat da = Quat{a.at(0, yy, xx), a.at(1, yy, xx),
                               a.at(2, yy, xx), a.at(3, yy, xx)} -
                          mu_a;
          const Quat db = Quat{b.at(0, yy, xx), b.at(1, yy, xx),
                               b.at(2, yy, xx), b.at(3, yy, xx)} -
                          mu_b;
          var_a += norm_sq(da);
          var_b += norm_sq(db);
          cov = cov + hamilton(da, conjugate(db));
        }
      }
      var_a *= inv_n;
      var_b *= inv_n;
      cov = inv_n * cov;
      const double ma2 = norm_sq(mu_a), mb2 = norm_sq(mu_b);
      const double lum = (2.0 * std::sqrt(ma2 * mb2) + c1) / (ma2 + mb2 + c1);
      const double str = (2.0 * norm(cov) + c2) / (var_a + var_b + c2);
      total += lum * str;
    }
  }
  return std::clamp(total / (wy * wx), 0.0, 1.0);
}

}  // namespace

TEST_CASE("qssim of an image with itself is exactly one") {
  const Image img = smooth_image(32, 32);
  const QImage q = encode(img);
  CHECK(qssim(q, q) == 1.0);  // bitwise, not approximate

  // the same holds for a noisy image compared with itself
  const QImage qn = encode(add_noise(img, 0.2, 9));
  CHECK(qssim(qn, qn) == 1.0);
}

TEST_CASE("qssim is symmetric") {
  const Image img = smooth_image(32, 32);
  const QImage a = encode(img);
  const QImage b = encode(add_noise(img, 0.05, 11));
  CHECK(std::fabs(qssim(a, b) - qssim(b, a)) < 1e-12);
}

TEST_CASE("qssim matches an independent per-window reference") {
  const Image img = smooth_image(40, 48);
  const QImage a = encode(img);
  for (double amp : {0.02, 0.1, 0.3}) {
    const QImage b = encode(add_noise(img, amp, 13));
    CHECK(qssim(a, b) == doctest::Approx(qssim_reference(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("qssim decreases strictly with noise amplitude") {
  const Image img = smooth_image(32, 32);
  const QImage a = encode(img);
  double prev = 1.0;
  for (double amp : {0.01, 0.05, 0.1, 0.2}) {
    const double v = qssim(a, encode(add_noise(img, amp, 17)));
    CHECK(v < prev);
    CHECK(v > 0.0);
    prev = v;
  }
}

TEST_CASE("qssim and scalar ssim agree on grayscale images") {
  // grayscale pixels encode as v*(1+i+j+k); with the x4-scaled stabilising
  // constants the quaternion score reduces to the scalar one as long as
  // every window's covariance is positive.
  Image img(32, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double v = 0.35 + 0.3 * std::sin(0.3 * x) * std::cos(0.25 * y);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
    }
  }
  Image distorted = img;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      // mild positively-correlated distortion keeps window covariance > 0
      const double v = std::clamp(0.9 * img.at(0, y, x) + 0.03, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) distorted.at(c, y, x) = v;
    }
  }
  const QImage a = encode(img), b = encode(distorted);
  CHECK(qssim(a, b) == doctest::Approx(ssim(a, b)).epsilon(1e-6));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ssim stays within [-1, 1] and penalises distortion") {
  const Image img = smooth_image(32, 32);
  const QImage a = encode(img);
  const QImage b = encode(add_noise(img, 0.25, 19));
  const double v = ssim(a, b);
  CHECK(v <= 1.0);
  CHECK(v >= -1.0);
  CHECK(v < 1.0);
}

TEST_CASE("psnr worked examples") {
  Image a(8, 8), b(8, 8);
  for (auto& v : a.data) v = 0.5;
  for (auto& v : b.data) v = 0.6;  // uniform difference 0.1 -> MSE 0.01
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

  for (auto& v : b.data) v = 0.5;
  CHECK(psnr(a, b) == 100.0);  // identical images cap at 100 dB

  // half the pixels differ by 0.2: MSE = 0.02, psnr = 10*log10(50)
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      if ((y + x) % 2 == 0) {
        for (int c = 0; c < 3; ++c) b.at(c, y, x) = 0.7;
      }
    }
  }
  CHECK(psnr(a, b) ==
        doctest::Approx(10.0 * std::log10(50.0)).epsilon(1e-12));
}

TEST_CASE("qssim loss is one minus qssim with an exact zero at equality") {
  const Image img = smooth_image(32, 32);
  const Tensor a = tensor_from_qimage(encode(img));
  const Tensor b = tensor_from_qimage(encode(add_noise(img, 0.1, 23)));
  const Tensor l_same = qssim_loss(a, a);
  CHECK(l_same.item() == 0.0);
  const Tensor l_diff = qssim_loss(a, b);
  const double q = qssim(encode(img), encode(add_noise(img, 0.1, 23)));
  CHECK(l_diff.item() == doctest::Approx(1.0 - q).epsilon(1e-12));
  CHECK(l_diff.item() > 0.0);
}

TEST_CASE("qssim rejects images smaller than one window") {
  const Image img = smooth_image(6, 6);
  const QImage q = encode(img);
  CHECK_THROWS_AS(qssim(q, q), std::invalid_argument);
}

TEST_CASE("qssim crops trailing pixels to whole windows") {
  // 36x41 crops to 32x40: the result equals the metric on the cropped pair
  const Image img = smooth_image(36, 41);
  const Image noisy = add_noise(img, 0.05, 29);
  auto crop = [](const Image& src, int h, int w) {
    Image out(h, w);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, y, x);
      }
    }
    return out;
  };
  const double full = qssim(encode(img), encode(noisy));
  const double cropped =
      qssim(encode(crop(img, 32, 40)), encode(crop(noisy, 32, 40)));
  CHECK(full == cropped);
}
