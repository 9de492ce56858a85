#pragma once

#include <string>
#include <vector>

#include "qrestore/ops.hpp"
#include "qrestore/qimage.hpp"
#include "qrestore/rng.hpp"
#include "qrestore/tensor.hpp"

namespace qrestore {

// Quaternion feature map: a real tensor [B, 4C, H, W] whose channels are
// grouped component-major — planes [0,C) real, [C,2C) i, [2C,3C) j,
// [3C,4C) k. All quaternion layers preserve this grouping.
struct QTensor {
  Tensor t;

  QTensor() = default;
  explicit QTensor(Tensor tt);  // validates rank 4 and channels % 4 == 0

  int64_t batch() const { return t.size(0); }
  int64_t qchannels() const { return t.size(1) / 4; }
  int64_t height() const { return t.size(2); }
  int64_t width() const { return t.size(3); }
};

// Channel concatenation that keeps the component-major grouping intact:
// result components are [rA rB | iA iB | jA jB | kA kB], not a flat concat.
QTensor qcat(const std::vector<QTensor>& parts);

// QImage <-> tensor bridges ([1,4,H,W], component order L,R,G,B).
Tensor tensor_from_qimage(const QImage& q);
QImage qimage_from_tensor(const Tensor& t);

// Named parameter registry entry used by the model-level bookkeeping.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// Quaternion convolution. The Hamilton product with kernel
// W = W0 + W1 i + W2 j + W3 k is realised as one real convolution with the
// block-structured weight
//   [ W0 -W1 -W2 -W3 ]
//   [ W1  W0 -W3  W2 ]
//   [ W2  W3  W0 -W1 ]
//   [ W3 -W2  W1  W0 ]
// assembled differentiably, so one conv2d call covers all 16 component
// convolutions. With quaternion=false the layer is the unconstrained real
// twin: a dense [4Co,4Ci,k,k] weight of identical real width.
struct QConv2d {
  int in_q = 0, out_q = 0, k = 1, stride = 1, pad = 0;
  bool quaternion = true;
  bool has_bias = true;
  std::vector<Tensor> w;  // quaternion: {W0,W1,W2,W3}; real twin: {W}
  Tensor b;               // [4*out_q]

  QConv2d() = default;
  QConv2d(int in_q, int out_q, int k, int stride, int pad, bool quaternion,
          Rng& rng, bool bias = true);

  QTensor forward(const QTensor& x) const;
  Tensor assembled_weight() const;  // [4*out_q, 4*in_q, k, k]
  int64_t weight_count() const;
  void collect(const std::string& prefix, ParamList& out);
};

// Quaternion linear map on token matrices [T, 4*C]; same Hamilton block
// structure as QConv2d with k=1.
struct QLinear {
  int in_q = 0, out_q = 0;
  bool quaternion = true;
  bool has_bias = true;
  std::vector<Tensor> w;  // quaternion: {W0..W3} each [out_q,in_q]; real: {W}
  Tensor b;               // [4*out_q]

  QLinear() = default;
  QLinear(int in_q, int out_q, bool quaternion, Rng& rng, bool bias = true);

  Tensor forward_tokens(const Tensor& x) const;  // [T,4Ci] -> [T,4Co]
  Tensor assembled_weight() const;               // [4*out_q, 4*in_q]
  int64_t weight_count() const;
  void collect(const std::string& prefix, ParamList& out);
};

// Plain depthwise 3x3 convolution over all real channels (shared by the
// quaternion model and its real twin; not Hamilton-structured).
struct DepthwiseConv {
  int channels = 0;
  Tensor w;  // [C,1,3,3]
  Tensor b;  // [C]

  DepthwiseConv() = default;
  DepthwiseConv(int channels, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Quaternion multi-head self-attention over the flattened spatial tokens.
// Per head, the attention score of a token pair is the real part of the
// summed Hamilton product q * conj(k) over the head's channels — equal to
// the real dot product of the 4d-dimensional real head vectors — scaled by
// 1/sqrt(d) with d = 4C/heads, then softmax over keys.
struct QMsa {
  int qch = 0, heads = 1;
  QLinear proj_q, proj_k, proj_v, proj_o;

  QMsa() = default;
  QMsa(int qch, int heads, bool quaternion, Rng& rng);
  QTensor forward(const QTensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Quaternion feed-forward: 1x1 qconv expansion, depthwise 3x3, GELU, 1x1
// qconv contraction, plus the residual connection (the "+ X" term).
struct QFfn {
  QConv2d expand, contract;
  DepthwiseConv dwc;

  QFfn() = default;
  QFfn(int qch, int expansion, bool quaternion, Rng& rng);
  QTensor forward(const QTensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Transformer block: y = x + QMSA(x); out = QFFN(y) (QFFN carries its own
// residual), composing both residual paths literally.
struct QTransformerBlock {
  QMsa msa;
  QFfn ffn;

  QTransformerBlock() = default;
  QTransformerBlock(int qch, int heads, int expansion, bool quaternion,
                    Rng& rng);
  QTensor forward(const QTensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Overlapping patch embedding: strided quaternion convolution, kernel
// strictly larger than stride, pad (k-1)/2 so the output grid is
// ceil(H/stride) x ceil(W/stride).
struct PatchEmbed {
  QConv2d conv;

  PatchEmbed() = default;
  PatchEmbed(int in_q, int out_q, int k, int stride, bool quaternion,
             Rng& rng);
  QTensor forward(const QTensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

}  // namespace qrestore
