#include "qrestore/tnet.hpp"

#include <cmath>
#include <stdexcept>

namespace qrestore {

void TNetConfig::validate() const {
  auto need4 = [](const std::vector<int>& v, const char* what) {
    if (v.size() != 4) {
      throw std::invalid_argument(std::string("TNetConfig: ") + what +
                                  " must list exactly 4 stages");
    }
  };
  need4(widths, "widths");
  need4(heads, "heads");
  need4(patch_k, "patch_k");
  need4(patch_s, "patch_s");
  for (int i = 0; i < 4; ++i) {
    if (widths[i] <= 0 || heads[i] <= 0 || patch_k[i] <= 0 || patch_s[i] <= 0) {
      throw std::invalid_argument("TNetConfig: stage parameters must be positive");
    }
    if (patch_k[i] <= patch_s[i]) {
      throw std::invalid_argument(
          "TNetConfig: patch kernel must exceed stride (overlapping patches)");
    }
    if (widths[i] % heads[i] != 0) {
      throw std::invalid_argument(
          "TNetConfig: width must be divisible by heads at every stage");
    }
  }
  if (ffn_expansion < 1) {
    throw std::invalid_argument("TNetConfig: ffn_expansion must be >= 1");
  }
}

TNetEncoder::TNetEncoder(const TNetConfig& cfg, Rng& rng) {
  cfg.validate();
  stages.reserve(4);
  for (int i = 0; i < 4; ++i) {
    const int in_q = i == 0 ? 1 : cfg.widths[i - 1];
    TNetStage st{
        PatchEmbed(in_q, cfg.widths[i], cfg.patch_k[i], cfg.patch_s[i],
                   cfg.quaternion, rng),
        QTransformerBlock(cfg.widths[i], cfg.heads[i], cfg.ffn_expansion,
                          cfg.quaternion, rng)};
    stages.push_back(std::move(st));
  }
}

std::vector<QTensor> TNetEncoder::forward(const QTensor& x) const {
  std::vector<QTensor> feats;
  feats.reserve(stages.size());
  QTensor cur = x;
  for (const TNetStage& st : stages) {
    cur = st.block.forward(st.embed.forward(cur));
    feats.push_back(cur);
  }
  return feats;
}

void TNetEncoder::collect(const std::string& prefix, ParamList& out) {
  for (size_t i = 0; i < stages.size(); ++i) {
    const std::string sp = prefix + ".stage" + std::to_string(i + 1);
    stages[i].embed.collect(sp + ".embed", out);
    stages[i].block.collect(sp + ".block", out);
  }
}

TNetDecoder::TNetDecoder(const TNetConfig& cfg, bool shared_bottleneck,
                         Rng& rng) {
  cfg.validate();
  const std::vector<int>& w = cfg.widths;
  const int bottleneck_q = shared_bottleneck ? 2 * w[3] : w[3];
  reduce = QConv2d(bottleneck_q, w[3], 1, 1, 0, cfg.quaternion, rng);
  ups.reserve(3);
  for (int i = 3; i >= 1; --i) {
    UpBlock ub{QConv2d(w[i], w[i - 1], 3, 1, 1, cfg.quaternion, rng),
               QConv2d(2 * w[i - 1], w[i - 1], 3, 1, 1, cfg.quaternion, rng)};
    ups.push_back(std::move(ub));
  }
  out_conv = QConv2d(w[0], 1, 3, 1, 1, cfg.quaternion, rng);
  final_up = cfg.patch_s[0];
}

namespace {

// Nearest-neighbour upsampling overshoots when the encoder's ceil-divided
// grid was odd; trim back to the size the skip connection carries.
QTensor crop_to(const QTensor& x, int64_t h, int64_t w) {
  Tensor t = x.t;
  if (t.size(2) != h) t = slice(t, 2, 0, h);
  if (t.size(3) != w) t = slice(t, 3, 0, w);
  return QTensor(t);
}

}  // namespace

QTensor TNetDecoder::forward(const QTensor& bottom,
                             const std::vector<QTensor>& skips, int64_t out_h,
                             int64_t out_w) const {
  if (skips.size() != 3) {
    throw std::invalid_argument("TNetDecoder: expected 3 skip features");
  }
  QTensor x(relu(reduce.forward(bottom).t));
  for (size_t j = 0; j < ups.size(); ++j) {
    const QTensor& skip = skips[2 - j];
    x = QTensor(upsample_nearest(x.t, 2));
    x = crop_to(x, skip.height(), skip.width());
    x = QTensor(relu(ups[j].conv_up.forward(x).t));
    x = qcat({x, skip});
    x = QTensor(relu(ups[j].conv_fuse.forward(x).t));
  }
  x = QTensor(upsample_nearest(x.t, final_up));
  x = crop_to(x, out_h, out_w);
  return QTensor(sigmoid(out_conv.forward(x).t));
}

void TNetDecoder::collect(const std::string& prefix, ParamList& out) {
  reduce.collect(prefix + ".reduce", out);
  for (size_t j = 0; j < ups.size(); ++j) {
    const std::string up = prefix + ".up" + std::to_string(j + 1);
    ups[j].conv_up.collect(up + ".conv", out);
    ups[j].conv_fuse.collect(up + ".fuse", out);
  }
  out_conv.collect(prefix + ".out", out);
}

TNet::TNet(const TNetConfig& cfg, bool shared_bottleneck, Rng& rng)
    : enc(cfg, rng), dec(cfg, shared_bottleneck, rng) {}

void TNet::collect(const std::string& prefix, ParamList& out) {
  enc.collect(prefix + ".enc", out);
  dec.collect(prefix + ".dec", out);
}

QTensor share_stage4(const QTensor& f_h, const QTensor& f_s) {
  if (f_h.height() != f_s.height() || f_h.width() != f_s.width()) {
    throw std::invalid_argument(
        "share_stage4: spatial dimensions of the two stage-4 features differ");
  }
  return qcat({f_h, f_s});
}

LatentM::LatentM(int in_q, Rng& rng, bool quaternion)
    : conv(in_q, in_q, 1, 1, 0, quaternion, rng) {
  // softplus(ln(e-1)) = 1: the head starts as the identity multiplier.
  const double b0 = std::log(std::exp(1.0) - 1.0);
  for (double& v : conv.b.data_mut()) v = b0;
}

QTensor LatentM::forward(const QTensor& x) const {
  return QTensor(softplus(conv.forward(x).t));
}

void LatentM::collect(const std::string& prefix, ParamList& out) {
  conv.collect(prefix, out);
}

std::vector<double> closed_form_M(const std::vector<double>& S,
                                  const std::vector<double>& I, double A,
                                  double t, double eps) {
  if (S.size() != I.size()) {
    throw std::invalid_argument("closed_form_M: S and I sizes differ");
  }
  if (!(t > 0.0) || t > 1.0) {
    throw std::domain_error("closed_form_M: transmission t must lie in (0,1]");
  }
  std::vector<double> m(S.size());
  for (size_t i = 0; i < S.size(); ++i) {
    if (!(I[i] >= eps)) {
      throw std::domain_error("closed_form_M: intensity below eps");
    }
    m[i] = (S[i] + t * A - A) / (t * I[i]);
  }
  return m;
}

}  // namespace qrestore
