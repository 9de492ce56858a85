#include "qrestore/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "qrestore/qlayers.hpp"

namespace qrestore {

namespace {

// Hamilton product x * conj(y), evaluated per pixel on component planes.
// The terms of each imaginary component are paired as differences of
// products that are bitwise equal when x and y carry equal values, so the
// self-correlation's imaginary parts vanish exactly.
std::array<Tensor, 4> quat_corr(const std::array<Tensor, 4>& x,
                                const std::array<Tensor, 4>& y) {
  return {
      (x[0] * y[0] + x[1] * y[1]) + (x[2] * y[2] + x[3] * y[3]),
      (x[1] * y[0] - x[0] * y[1]) + (x[3] * y[2] - x[2] * y[3]),
      (x[2] * y[0] - x[0] * y[2]) + (x[1] * y[3] - x[3] * y[1]),
      (x[3] * y[0] - x[0] * y[3]) + (x[2] * y[1] - x[1] * y[2]),
  };
}

std::array<Tensor, 4> split_components(const Tensor& t) {
  return {slice(t, 1, 0, 1), slice(t, 1, 1, 1), slice(t, 1, 2, 1),
          slice(t, 1, 3, 1)};
}

// |q|^2 of a component array, paired for reproducible association.
Tensor norm_sq(const std::array<Tensor, 4>& q) {
  return (q[0] * q[0] + q[1] * q[1]) + (q[2] * q[2] + q[3] * q[3]);
}

}  // namespace

Tensor qssim_t(const Tensor& gt, const Tensor& rec, const QssimParams& p) {
  if (gt.dim() != 4 || gt.size(1) != 4 || rec.dim() != 4 || rec.size(1) != 4) {
    throw std::invalid_argument("qssim: expected [B,4,H,W] image tensors");
  }
  if (gt.shape() != rec.shape()) {
    throw std::invalid_argument("qssim: image dimensions differ");
  }
  const int win = p.window;
  const int64_t h = gt.size(2) / win * win;
  const int64_t w = gt.size(3) / win * win;
  if (h == 0 || w == 0) {
    throw std::invalid_argument("qssim: images smaller than one window");
  }
  Tensor g = gt, r = rec;
  if (h != gt.size(2)) {
    g = slice(g, 2, 0, h);
    r = slice(r, 2, 0, h);
  }
  if (w != gt.size(3)) {
    g = slice(g, 3, 0, w);
    r = slice(r, 3, 0, w);
  }

  const Tensor mu_g = avgpool(g, win);
  const Tensor mu_r = avgpool(r, win);
  const Tensor dev_g = g - upsample_nearest(mu_g, win);
  const Tensor dev_r = r - upsample_nearest(mu_r, win);

  const auto dg = split_components(dev_g);
  const auto dr = split_components(dev_r);

  // Variance = windowed mean of |dev|^2, routed through the same
  // cross-correlation code as the covariance so that identical inputs give
  // bitwise-identical variance and covariance.
  const Tensor sig2_g = avgpool(quat_corr(dg, dg)[0], win);
  const Tensor sig2_r = avgpool(quat_corr(dr, dr)[0], win);

  const auto cross = quat_corr(dg, dr);
  std::array<Tensor, 4> cov;
  for (int c = 0; c < 4; ++c) cov[c] = avgpool(cross[c], win);
  const Tensor cov_mag = sqrt(norm_sq(cov));

  const Tensor mg2_g = norm_sq(split_components(mu_g));
  const Tensor mg2_r = norm_sq(split_components(mu_r));

  // sqrt of the product (not product of sqrts): sqrt(m*m) == m exactly.
  const Tensor lum = div(2.0 * sqrt(mg2_g * mg2_r) + p.c1,
                         mg2_g + mg2_r + p.c1);
  const Tensor str = div(2.0 * cov_mag + p.c2, sig2_g + sig2_r + p.c2);
  return clamp(mean(lum * str), 0.0, 1.0);
}

Tensor qssim_loss(const Tensor& gt, const Tensor& rec, const QssimParams& p) {
  return add(neg(qssim_t(gt, rec, p)), 1.0);
}

double qssim(const QImage& gt, const QImage& rec, const QssimParams& p) {
  NoGradGuard ng;
  return qssim_t(tensor_from_qimage(gt), tensor_from_qimage(rec), p).item();
}

double ssim(const QImage& gt, const QImage& rec) {
  if (gt.height != rec.height || gt.width != rec.width) {
    throw std::invalid_argument("ssim: image dimensions differ");
  }
  constexpr int kWin = 8;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int64_t wh = gt.height / kWin, ww = gt.width / kWin;
  if (wh == 0 || ww == 0) {
    throw std::invalid_argument("ssim: images smaller than one window");
  }
  const double* a = gt.data.data();   // luma plane
  const double* b = rec.data.data();
  const double inv_n = 1.0 / (kWin * kWin);
  double total = 0.0;
  for (int64_t wy = 0; wy < wh; ++wy) {
    for (int64_t wx = 0; wx < ww; ++wx) {
      double sa = 0.0, sb = 0.0;
      for (int y = 0; y < kWin; ++y) {
        for (int x = 0; x < kWin; ++x) {
          const int64_t i = (wy * kWin + y) * gt.width + wx * kWin + x;
          sa += a[i];
          sb += b[i];
        }
      }
      const double mu_a = sa * inv_n, mu_b = sb * inv_n;
      double va = 0.0, vb = 0.0, cab = 0.0;
      for (int y = 0; y < kWin; ++y) {
        for (int x = 0; x < kWin; ++x) {
          const int64_t i = (wy * kWin + y) * gt.width + wx * kWin + x;
          const double da = a[i] - mu_a, db = b[i] - mu_b;
          va += da * da;
          vb += db * db;
          cab += da * db;
        }
      }
      va *= inv_n;
      vb *= inv_n;
      cab *= inv_n;
      const double lum = (2.0 * (mu_a * mu_b) + kC1) /
                         ((mu_a * mu_a + mu_b * mu_b) + kC1);
      const double str = (2.0 * cab + kC2) / ((va + vb) + kC2);
      total += lum * str;
    }
  }
  return total / static_cast<double>(wh * ww);
}

namespace {

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return 100.0;
  return std::min(10.0 * std::log10(1.0 / mse), 100.0);
}

}  // namespace

double psnr(const Image& gt, const Image& rec) {
  if (gt.height != rec.height || gt.width != rec.width) {
    throw std::invalid_argument("psnr: image dimensions differ");
  }
  double se = 0.0;
  for (size_t i = 0; i < gt.data.size(); ++i) {
    const double d = gt.data[i] - rec.data[i];
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(gt.data.size()));
}

double psnr(const QImage& gt, const QImage& rec) {
  if (gt.height != rec.height || gt.width != rec.width) {
    throw std::invalid_argument("psnr: image dimensions differ");
  }
  const size_t n = gt.plane_size();
  double se = 0.0;
  for (int c = 1; c < 4; ++c) {
    const double* a = gt.data.data() + c * n;
    const double* b = rec.data.data() + c * n;
    for (size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      se += d * d;
    }
  }
  return psnr_from_mse(se / static_cast<double>(3 * n));
}

}  // namespace qrestore
