#include "qrestore/qlayers.hpp"

#include <cmath>
#include <stdexcept>

namespace qrestore {

namespace {

// Glorot-uniform limit in terms of the real-channel fan counts, so the
// quaternion layers and their real twins draw from the same distribution.
double glorot_limit(int64_t fan_in, int64_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void check_qch(const char* who, int in_q, int out_q) {
  if (in_q < 1 || out_q < 1)
    throw std::invalid_argument(std::string(who) +
                                ": channel counts must be positive");
}

}  // namespace

QTensor::QTensor(Tensor tt) : t(std::move(tt)) {
  if (t.dim() != 4)
    throw std::invalid_argument("QTensor: expected rank 4, got " +
                                shape_str(t.shape()));
  if (t.size(1) % 4 != 0)
    throw std::invalid_argument("QTensor: real channel count " +
                                std::to_string(t.size(1)) +
                                " is not a multiple of 4");
}

QTensor qcat(const std::vector<QTensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("qcat: no inputs");
  std::vector<Tensor> blocks;
  blocks.reserve(parts.size() * 4);
  for (int c = 0; c < 4; ++c)
    for (const auto& p : parts) {
      const int64_t C = p.qchannels();
      blocks.push_back(slice(p.t, 1, c * C, C));
    }
  return QTensor(concat(blocks, 1));
}

Tensor tensor_from_qimage(const QImage& q) {
  return Tensor::from_data({1, 4, q.height, q.width}, q.data);
}

QImage qimage_from_tensor(const Tensor& t) {
  if (t.dim() != 4 || t.size(0) != 1 || t.size(1) != 4)
    throw std::invalid_argument("qimage_from_tensor: expected [1,4,H,W], got " +
                                shape_str(t.shape()));
  QImage q(static_cast<int>(t.size(2)), static_cast<int>(t.size(3)));
  const auto d = t.data();
  q.data.assign(d.begin(), d.end());
  return q;
}

// ---------------------------------------------------------------- QConv2d

QConv2d::QConv2d(int in_q_, int out_q_, int k_, int stride_, int pad_,
                 bool quaternion_, Rng& rng, bool bias)
    : in_q(in_q_),
      out_q(out_q_),
      k(k_),
      stride(stride_),
      pad(pad_),
      quaternion(quaternion_),
      has_bias(bias) {
  check_qch("QConv2d", in_q, out_q);
  const double lim =
      glorot_limit(4ll * in_q * k * k, 4ll * out_q * k * k);
  if (quaternion) {
    for (int c = 0; c < 4; ++c)
      w.push_back(Tensor::uniform({out_q, in_q, k, k}, -lim, lim, rng, true));
  } else {
    w.push_back(
        Tensor::uniform({4ll * out_q, 4ll * in_q, k, k}, -lim, lim, rng, true));
  }
  if (has_bias) b = Tensor::zeros({4ll * out_q}, true);
}

Tensor QConv2d::assembled_weight() const {
  if (!quaternion) return w[0];
  const Tensor &w0 = w[0], &w1 = w[1], &w2 = w[2], &w3 = w[3];
  Tensor row_r = concat({w0, neg(w1), neg(w2), neg(w3)}, 1);
  Tensor row_i = concat({w1, w0, neg(w3), w2}, 1);
  Tensor row_j = concat({w2, w3, w0, neg(w1)}, 1);
  Tensor row_k = concat({w3, neg(w2), w1, w0}, 1);
  return concat({row_r, row_i, row_j, row_k}, 0);
}

QTensor QConv2d::forward(const QTensor& x) const {
  if (x.qchannels() != in_q)
    throw std::invalid_argument(
        "QConv2d: input has " + std::to_string(x.qchannels()) +
        " quaternion channels, layer expects " + std::to_string(in_q));
  return QTensor(conv2d(x.t, assembled_weight(), b, stride, pad, 1));
}

int64_t QConv2d::weight_count() const {
  int64_t n = 0;
  for (const auto& wc : w) n += wc.numel();
  return n;
}

void QConv2d::collect(const std::string& prefix, ParamList& out) {
  if (quaternion) {
    static const char* names[] = {".w0", ".w1", ".w2", ".w3"};
    for (int c = 0; c < 4; ++c) out.push_back({prefix + names[c], w[c]});
  } else {
    out.push_back({prefix + ".w", w[0]});
  }
  if (has_bias) out.push_back({prefix + ".b", b});
}

// ---------------------------------------------------------------- QLinear

QLinear::QLinear(int in_q_, int out_q_, bool quaternion_, Rng& rng, bool bias)
    : in_q(in_q_), out_q(out_q_), quaternion(quaternion_), has_bias(bias) {
  check_qch("QLinear", in_q, out_q);
  const double lim = glorot_limit(4ll * in_q, 4ll * out_q);
  if (quaternion) {
    for (int c = 0; c < 4; ++c)
      w.push_back(Tensor::uniform({out_q, in_q}, -lim, lim, rng, true));
  } else {
    w.push_back(Tensor::uniform({4ll * out_q, 4ll * in_q}, -lim, lim, rng, true));
  }
  if (has_bias) b = Tensor::zeros({4ll * out_q}, true);
}

Tensor QLinear::assembled_weight() const {
  if (!quaternion) return w[0];
  const Tensor &w0 = w[0], &w1 = w[1], &w2 = w[2], &w3 = w[3];
  Tensor row_r = concat({w0, neg(w1), neg(w2), neg(w3)}, 1);
  Tensor row_i = concat({w1, w0, neg(w3), w2}, 1);
  Tensor row_j = concat({w2, w3, w0, neg(w1)}, 1);
  Tensor row_k = concat({w3, neg(w2), w1, w0}, 1);
  return concat({row_r, row_i, row_j, row_k}, 0);
}

Tensor QLinear::forward_tokens(const Tensor& x) const {
  if (x.dim() != 2 || x.size(1) != 4ll * in_q)
    throw std::invalid_argument("QLinear: expected [T," +
                                std::to_string(4 * in_q) + "], got " +
                                shape_str(x.shape()));
  return linear(x, assembled_weight(), b);
}

int64_t QLinear::weight_count() const {
  int64_t n = 0;
  for (const auto& wc : w) n += wc.numel();
  return n;
}

void QLinear::collect(const std::string& prefix, ParamList& out) {
  if (quaternion) {
    static const char* names[] = {".w0", ".w1", ".w2", ".w3"};
    for (int c = 0; c < 4; ++c) out.push_back({prefix + names[c], w[c]});
  } else {
    out.push_back({prefix + ".w", w[0]});
  }
  if (has_bias) out.push_back({prefix + ".b", b});
}

// ----------------------------------------------------------- DepthwiseConv

DepthwiseConv::DepthwiseConv(int channels_, Rng& rng) : channels(channels_) {
  const double lim = glorot_limit(9, 9);
  w = Tensor::uniform({channels, 1, 3, 3}, -lim, lim, rng, true);
  b = Tensor::zeros({channels}, true);
}

Tensor DepthwiseConv::forward(const Tensor& x) const {
  return conv2d(x, w, b, 1, 1, channels);
}

void DepthwiseConv::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

// -------------------------------------------------------------------- QMsa

QMsa::QMsa(int qch_, int heads_, bool quaternion, Rng& rng)
    : qch(qch_),
      heads(heads_),
      proj_q(qch_, qch_, quaternion, rng),
      proj_k(qch_, qch_, quaternion, rng),
      proj_v(qch_, qch_, quaternion, rng),
      proj_o(qch_, qch_, quaternion, rng) {
  if (heads < 1 || qch % heads != 0)
    throw std::invalid_argument("QMsa: qch " + std::to_string(qch) +
                                " not divisible by heads " +
                                std::to_string(heads));
}

namespace {

// Extracts head h ([T, 4*dh]) from component-major tokens [T, 4*C].
Tensor head_slice(const Tensor& tok, int64_t C, int64_t dh, int h) {
  std::vector<Tensor> comps;
  comps.reserve(4);
  for (int c = 0; c < 4; ++c)
    comps.push_back(slice(tok, 1, c * C + h * dh, dh));
  return concat(comps, 1);
}

}  // namespace

QTensor QMsa::forward(const QTensor& x) const {
  if (x.qchannels() != qch)
    throw std::invalid_argument("QMsa: channel mismatch");
  const int64_t B = x.batch(), C = qch, H = x.height(), W = x.width();
  const int64_t T = H * W;
  const int64_t dh = C / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(4 * C / heads));

  std::vector<Tensor> out_batches;
  out_batches.reserve(B);
  for (int64_t bi = 0; bi < B; ++bi) {
    Tensor tok =
        transpose2d(reshape(slice(x.t, 0, bi, 1), {4 * C, T}));  // [T,4C]
    Tensor Q = proj_q.forward_tokens(tok);
    Tensor K = proj_k.forward_tokens(tok);
    Tensor V = proj_v.forward_tokens(tok);

    std::vector<Tensor> head_out;  // per head [T, 4*dh]
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Tensor Qh = head_slice(Q, C, dh, h);
      Tensor Kh = head_slice(K, C, dh, h);
      Tensor Vh = head_slice(V, C, dh, h);
      // real part of sum_c hamilton(q_c, conj(k_c)) == dot(Qh, Kh)
      Tensor scores = mul(matmul_nt(Qh, Kh), scale);  // [T,T]
      Tensor attn = softmax(scores, 1);
      head_out.push_back(matmul(attn, Vh));
    }
    // reassemble component-major: component block = concat over heads
    std::vector<Tensor> comps;
    comps.reserve(4);
    for (int c = 0; c < 4; ++c) {
      std::vector<Tensor> per_head;
      per_head.reserve(heads);
      for (int h = 0; h < heads; ++h)
        per_head.push_back(slice(head_out[h], 1, c * dh, dh));
      comps.push_back(concat(per_head, 1));
    }
    Tensor merged = concat(comps, 1);  // [T,4C]
    Tensor proj = proj_o.forward_tokens(merged);
    out_batches.push_back(reshape(transpose2d(proj), {1, 4 * C, H, W}));
  }
  return QTensor(out_batches.size() == 1 ? out_batches[0]
                                         : concat(out_batches, 0));
}

void QMsa::collect(const std::string& prefix, ParamList& out) {
  proj_q.collect(prefix + ".q", out);
  proj_k.collect(prefix + ".k", out);
  proj_v.collect(prefix + ".v", out);
  proj_o.collect(prefix + ".o", out);
}

// -------------------------------------------------------------------- QFfn

QFfn::QFfn(int qch, int expansion, bool quaternion, Rng& rng)
    : expand(qch, qch * expansion, 1, 1, 0, quaternion, rng),
      contract(qch * expansion, qch, 1, 1, 0, quaternion, rng),
      dwc(4 * qch * expansion, rng) {}

QTensor QFfn::forward(const QTensor& x) const {
  Tensor h = expand.forward(x).t;
  h = gelu(dwc.forward(h));
  Tensor y = contract.forward(QTensor(h)).t;
  return QTensor(add(y, x.t));
}

void QFfn::collect(const std::string& prefix, ParamList& out) {
  expand.collect(prefix + ".expand", out);
  dwc.collect(prefix + ".dwc", out);
  contract.collect(prefix + ".contract", out);
}

// ------------------------------------------------------- QTransformerBlock

QTransformerBlock::QTransformerBlock(int qch, int heads, int expansion,
                                     bool quaternion, Rng& rng)
    : msa(qch, heads, quaternion, rng), ffn(qch, expansion, quaternion, rng) {}

QTensor QTransformerBlock::forward(const QTensor& x) const {
  QTensor y(add(msa.forward(x).t, x.t));
  return ffn.forward(y);
}

void QTransformerBlock::collect(const std::string& prefix, ParamList& out) {
  msa.collect(prefix + ".msa", out);
  ffn.collect(prefix + ".ffn", out);
}

// -------------------------------------------------------------- PatchEmbed

PatchEmbed::PatchEmbed(int in_q, int out_q, int k, int stride, bool quaternion,
                       Rng& rng)
    : conv(in_q, out_q, k, stride, (k - 1) / 2, quaternion, rng) {
  if (k <= stride)
    throw std::invalid_argument(
        "PatchEmbed: kernel must exceed stride for overlapping patches (k=" +
        std::to_string(k) + ", stride=" + std::to_string(stride) + ")");
}

QTensor PatchEmbed::forward(const QTensor& x) const { return conv.forward(x); }

void PatchEmbed::collect(const std::string& prefix, ParamList& out) {
  conv.collect(prefix + ".conv", out);
}

}  // namespace qrestore
