#pragma once

#include <vector>

#include "qrestore/qimage.hpp"
#include "qrestore/qlayers.hpp"

namespace qrestore {

struct DecompParams {
  double gamma_t = 0.5;  // texture exponent
  double gamma_s = 1.5;  // structure exponent
  int omega = 3;         // local patch side for the structure mean
  double eps = 1e-3;     // structure floor (division guard)
  double t_max = 10.0;   // texture ceiling
};

struct DecompResult {
  QImage S;               // grayscale structure component in [eps, 1]
  QImage T;               // texture component in [0, t_max]
  std::vector<double> G;  // guidance map, H*W row-major
};

// |grad| of the luma plane: central differences with replicated borders.
std::vector<double> gradient_magnitude(const QImage& I);

// G = |grad I|^gamma_t per pixel.
std::vector<double> guidance_map(const QImage& I, double gamma_t);

// S0 = mean over the omega x omega patch of |grad I|^gamma_s, clamped to
// [eps, 1]. Borders replicate.
std::vector<double> structure_map(const QImage& I, double gamma_s, int omega,
                                  double eps);

// T0 = I / S0 per RGB plane, clamped to [0, t_max], luma regenerated.
QImage texture_init(const QImage& I, const std::vector<double>& S0,
                    double t_max);

// Full initial decomposition: guidance, structure, then texture.
DecompResult decompose(const QImage& I, const DecompParams& p = {});

// Scalar reference recomposition S*T on RGB planes (clamped to [0,1], luma
// regenerated); inverse of texture_init where no clamp fired.
QImage recompose(const QImage& S, const QImage& T);

// Three-layer quaternion refinement CNN: 3x3 qconv, ReLU, 3x3 qconv, ReLU,
// 3x3 qconv, sigmoid. One instance each for the structure and texture paths.
struct DNet {
  QConv2d c1, c2, c3;

  DNet() = default;
  DNet(int hidden, bool quaternion, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [B,4,H,W] -> [B,4,H,W] in (0,1)
  QImage refine(const QImage& x) const;   // convenience, no tape
  void collect(const std::string& prefix, ParamList& out);
};

}  // namespace qrestore
