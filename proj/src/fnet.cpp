#include "qrestore/fnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrestore {

AttentionGate::AttentionGate(int hidden_q, bool quaternion, Rng& rng)
    : conv1(2, hidden_q, 3, 1, 1, quaternion, rng),
      conv2(hidden_q, 1, 3, 1, 1, quaternion, rng) {
  // Start the gates mostly open (sigmoid(2) ~ 0.88) so the untrained fusion
  // passes the cleaned branches through nearly unattenuated.
  for (double& v : conv2.b.data_mut()) v = 2.0;
}

QTensor AttentionGate::forward(const QTensor& component,
                               const QTensor& damaged) const {
  const QTensor x = qcat({component, damaged});
  return QTensor(sigmoid(conv2.forward(QTensor(relu(conv1.forward(x).t))).t));
}

void AttentionGate::collect(const std::string& prefix, ParamList& out) {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
}

ProjectionHead::ProjectionHead(bool quaternion, Rng& rng)
    : proj(1, 1, 3, 1, 1, quaternion, rng),
      merge(2, 1, 3, 1, 1, quaternion, rng) {}

QTensor ProjectionHead::forward(const QTensor& fused,
                                const QTensor& damaged) const {
  const QTensor p = proj.forward(fused);
  return QTensor(sigmoid(merge.forward(qcat({p, damaged})).t));
}

void ProjectionHead::collect(const std::string& prefix, ParamList& out) {
  proj.collect(prefix + ".proj", out);
  merge.collect(prefix + ".merge", out);
}

Tensor fuse_t(const Tensor& f_s, const Tensor& f_t, const Tensor& m_s,
              const Tensor& m_t) {
  if (f_s.shape() != f_t.shape() || f_s.shape() != m_s.shape() ||
      f_s.shape() != m_t.shape()) {
    throw std::invalid_argument("fuse_t: all four inputs must share a shape");
  }
  return m_s * f_s + m_t * f_t;
}

namespace {

void check_image_tensor(const Tensor& x, const char* who) {
  if (x.dim() != 4 || x.size(1) != 4) {
    throw std::invalid_argument(std::string(who) +
                                ": expected a [B,4,H,W] image tensor");
  }
}

}  // namespace

Tensor regen_luma_t(const Tensor& x) {
  check_image_tensor(x, "regen_luma_t");
  const Tensor r = slice(x, 1, 1, 1);
  const Tensor g = slice(x, 1, 2, 1);
  const Tensor b = slice(x, 1, 3, 1);
  const Tensor l = r * 0.299 + g * 0.587 + b * 0.114;
  return concat({l, r, g, b}, 1);
}

Tensor gamma_correct_t(const Tensor& x, double gamma, double eps) {
  check_image_tensor(x, "gamma_correct_t");
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("gamma_correct_t: gamma must be positive");
  }
  const Tensor rgb = pow(clamp(slice(x, 1, 1, 3), eps, 1.0), gamma);
  const Tensor r = slice(rgb, 1, 0, 1);
  const Tensor g = slice(rgb, 1, 1, 1);
  const Tensor b = slice(rgb, 1, 2, 1);
  const Tensor l = r * 0.299 + g * 0.587 + b * 0.114;
  return concat({l, r, g, b}, 1);
}

QImage gamma_correct(const QImage& s, double gamma) {
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("gamma_correct: gamma must be positive");
  }
  QImage out = s;
  const size_t n = out.plane_size();
  for (int c = 1; c < 4; ++c) {
    double* p = out.data.data() + c * n;
    for (size_t i = 0; i < n; ++i) {
      p[i] = std::pow(std::clamp(p[i], 0.0, 1.0), gamma);
    }
  }
  regenerate_luma(out);
  return out;
}

Tensor recompose_t(const Tensor& s, const Tensor& t) {
  check_image_tensor(s, "recompose_t");
  if (s.shape() != t.shape()) {
    throw std::invalid_argument("recompose_t: shape mismatch");
  }
  const Tensor rgb =
      clamp(slice(s, 1, 1, 3) * slice(t, 1, 1, 3), 0.0, 1.0);
  const Tensor r = slice(rgb, 1, 0, 1);
  const Tensor g = slice(rgb, 1, 1, 1);
  const Tensor b = slice(rgb, 1, 2, 1);
  const Tensor l = r * 0.299 + g * 0.587 + b * 0.114;
  return concat({l, r, g, b}, 1);
}

}  // namespace qrestore
