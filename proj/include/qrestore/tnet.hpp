#pragma once

#include <vector>

#include "qrestore/qlayers.hpp"

namespace qrestore {

// Four-stage hierarchical encoder + skip-connected decoder configuration.
struct TNetConfig {
  std::vector<int> widths{8, 16, 32, 64};  // quaternion channels per stage
  std::vector<int> heads{1, 2, 4, 8};
  std::vector<int> patch_k{7, 3, 3, 3};
  std::vector<int> patch_s{4, 2, 2, 2};
  int ffn_expansion = 2;
  bool quaternion = true;

  void validate() const;  // throws std::invalid_argument
};

struct TNetStage {
  PatchEmbed embed;
  QTransformerBlock block;
};

// Encoder: per stage, overlapping patch embedding then one transformer
// block; returns all four stage outputs (coarse last).
struct TNetEncoder {
  std::vector<TNetStage> stages;

  TNetEncoder() = default;
  TNetEncoder(const TNetConfig& cfg, Rng& rng);
  std::vector<QTensor> forward(const QTensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Decoder: 1x1 reduction of the (possibly concatenated) bottleneck, three
// nearest-neighbour 2x upsampling stages each followed by a 3x3 qconv and a
// skip-concat + 3x3 qconv (ReLU after both), then a final upsample back to
// image resolution and a 3x3 qconv to one quaternion channel with sigmoid.
// Upsampled maps are cropped to the skip's spatial size, so any input with
// sides >= 16 round-trips to its own dimensions.
struct TNetDecoder {
  struct UpBlock {
    QConv2d conv_up;    // widths[i] -> widths[i-1]
    QConv2d conv_fuse;  // 2*widths[i-1] -> widths[i-1]
  };
  QConv2d reduce;  // bottleneck (shared ? 2*w3 : w3) -> w3, 1x1
  std::vector<UpBlock> ups;
  QConv2d out_conv;  // widths[0] -> 1, 3x3
  int final_up = 4;  // stage-1 patch stride

  TNetDecoder() = default;
  TNetDecoder(const TNetConfig& cfg, bool shared_bottleneck, Rng& rng);
  // skips = encoder stage outputs 1..3 (indices 0..2); bottom is the stage-4
  // feature or the shared concatenation. out_h/out_w crop the final map.
  QTensor forward(const QTensor& bottom, const std::vector<QTensor>& skips,
                  int64_t out_h, int64_t out_w) const;
  void collect(const std::string& prefix, ParamList& out);
};

// One transformer instance: encoder plus decoder.
struct TNet {
  TNetEncoder enc;
  TNetDecoder dec;

  TNet() = default;
  TNet(const TNetConfig& cfg, bool shared_bottleneck, Rng& rng);
  void collect(const std::string& prefix, ParamList& out);
};

// Stage-4 feature sharing: fixed [H-features | S-features] concatenation.
QTensor share_stage4(const QTensor& f_h, const QTensor& f_s);

// Latent multiplier head: 1x1 qconv followed by softplus, guaranteeing a
// strictly positive map. The bias starts at ln(e - 1) so a zero-weight
// network emits softplus(ln(e - 1)) = 1, the identity multiplier.
struct LatentM {
  QConv2d conv;

  LatentM() = default;
  LatentM(int in_q, Rng& rng, bool quaternion = true);
  QTensor forward(const QTensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Analytic reference for the latent multiplier of the scattering model:
// M = (S + t*A - A) / (t*I). Throws std::domain_error when t is outside
// (0,1] or any I value is below eps.
std::vector<double> closed_form_M(const std::vector<double>& S,
                                  const std::vector<double>& I, double A,
                                  double t, double eps = 1e-3);

}  // namespace qrestore
