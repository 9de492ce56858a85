#pragma once

#include "qrestore/qlayers.hpp"

namespace qrestore {

// Attention gate producing a per-pixel fusion weight map in (0,1):
// sigmoid(qconv3x3(relu(qconv3x3([component | damaged-image encoding])))).
// The structure and texture branches each own an independent gate.
struct AttentionGate {
  QConv2d conv1;  // 2 -> hidden quaternion channels
  QConv2d conv2;  // hidden -> 1

  AttentionGate() = default;
  AttentionGate(int hidden_q, bool quaternion, Rng& rng);
  QTensor forward(const QTensor& component, const QTensor& damaged) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Output projection: 3x3 qconv on the fused feature, concatenation with the
// damaged-image encoding, and a final 3x3 qconv + sigmoid back to an image.
struct ProjectionHead {
  QConv2d proj;   // 1 -> 1
  QConv2d merge;  // 2 -> 1

  ProjectionHead() = default;
  ProjectionHead(bool quaternion, Rng& rng);
  QTensor forward(const QTensor& fused, const QTensor& damaged) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Weighted elementwise fusion of two feature maps: m_s*f_s + m_t*f_t.
Tensor fuse_t(const Tensor& f_s, const Tensor& f_t, const Tensor& m_s,
              const Tensor& m_t);

// Componentwise power on the RGB planes of a [B,4,H,W] image tensor with the
// luma plane regenerated. Inputs are clamped to [eps,1] first so the power's
// gradient stays finite for exponents < 1.
Tensor gamma_correct_t(const Tensor& x, double gamma, double eps = 1e-6);

// Plain-image flavour: exact powers, no epsilon floor (no gradients here).
QImage gamma_correct(const QImage& s, double gamma);

// Elementwise product of the RGB planes of two [B,4,H,W] image tensors,
// clamped to [0,1], luma regenerated.
Tensor recompose_t(const Tensor& s, const Tensor& t);

// Replace the luma plane of a [B,4,H,W] image tensor with Rec.601 luma of
// its RGB planes (same association as the scalar helper).
Tensor regen_luma_t(const Tensor& x);

}  // namespace qrestore
