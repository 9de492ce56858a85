#include "qrestore/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrestore {

namespace {
inline int clamp_idx(int v, int hi) { return std::min(std::max(v, 0), hi); }
}  // namespace

std::vector<double> gradient_magnitude(const QImage& I) {
  const int H = I.height, W = I.width;
  std::vector<double> g(static_cast<size_t>(H) * W);
  const double* L = I.data.data();  // luma plane
  for (int y = 0; y < H; ++y) {
    const int ym = clamp_idx(y - 1, H - 1), yp = clamp_idx(y + 1, H - 1);
    for (int x = 0; x < W; ++x) {
      const int xm = clamp_idx(x - 1, W - 1), xp = clamp_idx(x + 1, W - 1);
      const double gx = 0.5 * (L[y * W + xp] - L[y * W + xm]);
      const double gy = 0.5 * (L[yp * W + x] - L[ym * W + x]);
      g[y * W + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return g;
}

std::vector<double> guidance_map(const QImage& I, double gamma_t) {
  if (gamma_t <= 0.0)
    throw std::invalid_argument("guidance_map: gamma_t must be positive");
  std::vector<double> g = gradient_magnitude(I);
  for (double& v : g) v = std::pow(v, gamma_t);
  return g;
}

std::vector<double> structure_map(const QImage& I, double gamma_s, int omega,
                                  double eps) {
  if (gamma_s <= 0.0 || eps <= 0.0)
    throw std::invalid_argument("structure_map: gamma_s and eps must be positive");
  if (omega < 1 || omega % 2 == 0)
    throw std::invalid_argument("structure_map: omega must be odd and >= 1");
  const int H = I.height, W = I.width;
  std::vector<double> g = gradient_magnitude(I);
  for (double& v : g) v = std::pow(v, gamma_s);
  std::vector<double> s(g.size());
  const int r = omega / 2;
  const double inv_n = 1.0 / (static_cast<double>(omega) * omega);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = clamp_idx(y + dy, H - 1);
        for (int dx = -r; dx <= r; ++dx)
          acc += g[yy * W + clamp_idx(x + dx, W - 1)];
      }
      s[y * W + x] = std::min(std::max(acc * inv_n, eps), 1.0);
    }
  return s;
}

QImage texture_init(const QImage& I, const std::vector<double>& S0,
                    double t_max) {
  const int H = I.height, W = I.width;
  if (S0.size() != static_cast<size_t>(H) * W)
    throw std::invalid_argument("texture_init: structure map size mismatch");
  QImage T(H, W);
  const size_t n = I.plane_size();
  for (int c = 1; c < 4; ++c)
    for (size_t i = 0; i < n; ++i) {
      const double v = I.data[c * n + i] / S0[i];
      T.data[c * n + i] = std::min(std::max(v, 0.0), t_max);
    }
  regenerate_luma(T);
  return T;
}

DecompResult decompose(const QImage& I, const DecompParams& p) {
  DecompResult r;
  r.G = guidance_map(I, p.gamma_t);
  std::vector<double> s0 = structure_map(I, p.gamma_s, p.omega, p.eps);
  r.T = texture_init(I, s0, p.t_max);
  // structure as a grayscale quaternion image (R=G=B=S0, luma regenerated)
  r.S = QImage(I.height, I.width);
  const size_t n = r.S.plane_size();
  for (int c = 1; c < 4; ++c)
    for (size_t i = 0; i < n; ++i) r.S.data[c * n + i] = s0[i];
  regenerate_luma(r.S);
  return r;
}

QImage recompose(const QImage& S, const QImage& T) {
  if (S.height != T.height || S.width != T.width)
    throw std::invalid_argument("recompose: dimension mismatch");
  QImage out(S.height, S.width);
  const size_t n = out.plane_size();
  for (int c = 1; c < 4; ++c)
    for (size_t i = 0; i < n; ++i) {
      const double v = S.data[c * n + i] * T.data[c * n + i];
      out.data[c * n + i] = std::min(std::max(v, 0.0), 1.0);
    }
  regenerate_luma(out);
  return out;
}

// --------------------------------------------------------------------- DNet

DNet::DNet(int hidden, bool quaternion, Rng& rng)
    : c1(1, hidden, 3, 1, 1, quaternion, rng),
      c2(hidden, hidden, 3, 1, 1, quaternion, rng),
      c3(hidden, 1, 3, 1, 1, quaternion, rng) {}

Tensor DNet::forward(const Tensor& x) const {
  Tensor h = relu(c1.forward(QTensor(x)).t);
  h = relu(c2.forward(QTensor(h)).t);
  return sigmoid(c3.forward(QTensor(h)).t);
}

QImage DNet::refine(const QImage& x) const {
  NoGradGuard ng;
  return qimage_from_tensor(forward(tensor_from_qimage(x)));
}

void DNet::collect(const std::string& prefix, ParamList& out) {
  c1.collect(prefix + ".c1", out);
  c2.collect(prefix + ".c2", out);
  c3.collect(prefix + ".c3", out);
}

}  // namespace qrestore
