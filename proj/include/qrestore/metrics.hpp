#pragma once

#include "qrestore/ops.hpp"
#include "qrestore/qimage.hpp"

namespace qrestore {

// Stabilizers follow the usual (k*L)^2 convention. The quaternion encoding
// of a unit-range image has magnitude up to 2 (a gray pixel v maps to
// (v,v,v,v)), so the quaternion metric uses L = 2; the scalar SSIM on the
// luma plane keeps L = 1.
struct QssimParams {
  int window = 8;
  double c1 = 0.0004;  // (0.01 * 2)^2
  double c2 = 0.0036;  // (0.03 * 2)^2
};

// Differentiable quaternion structural similarity over non-overlapping
// windows of two [B,4,H,W] image tensors. Per window, with componentwise
// means mu, squared-norm variances sigma^2 and the magnitude of the mean
// Hamilton cross-correlation of deviations as covariance:
//   (2*|mu_g|*|mu_r| + c1)/(|mu_g|^2 + |mu_r|^2 + c1)
//   * (2*|cov| + c2)/(sigma_g^2 + sigma_r^2 + c2),
// averaged over windows. Arranged so qssim(a,a) == 1.0 exactly: the
// imaginary covariance components cancel pairwise, the variance shares the
// covariance code path, and |mu_g|*|mu_r| is computed as sqrt of the
// product. Trailing rows/columns that do not fill a window are ignored.
Tensor qssim_t(const Tensor& gt, const Tensor& rec,
               const QssimParams& params = {});

// Training loss: 1 - qssim_t. Zero iff the images agree per-window.
Tensor qssim_loss(const Tensor& gt, const Tensor& rec,
                  const QssimParams& params = {});

// Metric flavours on plain images.
double qssim(const QImage& gt, const QImage& rec,
             const QssimParams& params = {});

// Standard single-scale SSIM on the luma plane: 8x8 non-overlapping
// windows, biased moments, signed covariance, c1=(0.01)^2, c2=(0.03)^2.
double ssim(const QImage& gt, const QImage& rec);

// 10*log10(1/MSE) over the RGB planes, capped at 100 dB (MSE == 0 included).
double psnr(const Image& gt, const Image& rec);
double psnr(const QImage& gt, const QImage& rec);

}  // namespace qrestore
