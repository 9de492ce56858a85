#pragma once

#include <string>
#include <vector>

#include "qrestore/checkpoint.hpp"
#include "qrestore/degrade.hpp"
#include "qrestore/metrics.hpp"
#include "qrestore/model.hpp"

namespace qrestore {

struct GammaParams {
  double gamma = 0.7;  // correction exponent, > 0
};

// Runtime knobs of the restoration pass (architecture lives in ModelConfig).
struct RestoreOptions {
  DecompParams decomp;
  GammaParams gamma;
  bool use_dnet = true;  // off: skip decomposition+refinement, feed the
                         // image itself to both cleaning branches
};

// Decomposition-and-encoding of one degraded/clean pair, ready for the
// differentiable pass. Decomposition is scalar preprocessing: gradients do
// not flow through it.
struct PreparedInput {
  Tensor input;   // [1,4,H,W] quaternion encoding of the degraded image
  Tensor s0, t0;  // initial structure/texture components (constants)
};

PreparedInput prepare_input(const Image& degraded, const DecompParams& dp,
                            bool use_dnet);

// The restoration pass: refine components, clean both branches (sharing
// stage-4 features when configured), apply the latent multiplier, gamma
// correction, attention-gated per-branch weighting, and recomposition.
// bypass_tnet short-circuits the cleaning branches (component-refinement
// pretraining). Aborts with std::runtime_error naming the stage if a
// non-finite intermediate appears.
Tensor forward_restore(Model& m, const PreparedInput& in,
                       const RestoreOptions& opt, bool bypass_tnet = false);

// Full-image restoration. Sides must be >= 16.
Image restore_image(Model& m, const Image& degraded,
                    const RestoreOptions& opt = {});

// Tile-wise restoration with linear feather blending in the overlaps.
// tile must be a positive multiple of 16 and overlap in [8, tile). An image
// that fits in one tile is restored directly (bit-identical to
// restore_image).
Image restore_tiled(Model& m, const Image& degraded, int tile, int overlap,
                    const RestoreOptions& opt = {});

struct TrainSample {
  Image degraded;
  Image clean;
};

struct TrainConfig {
  double lr_init = 1e-3;
  double lr_final = 1e-7;
  double momentum = 0.0;  // heavy-ball coefficient, 0 = plain descent
  int stage1_epochs = 0;  // component-refinement pretraining on synthetic
                          // low-light pairs built from the clean images
  int epochs = 1;         // full-pipeline stage
  int freeze_epochs = 0;  // leading full-pipeline epochs with the refinement
                          // and fusion groups frozen
  int batch = 1;
  int patch = 64;
  uint64_t seed = 0;
  bool augment = false;  // random 90-degree rotations (crops always apply
                         // when images exceed the patch size)
  bool use_qssim = true;   // off: plain MSE loss
  double mse_weight = 0.0;  // optional MSE term added to the QSSIM loss
  double lowlight_exponent = 2.2;  // synthetic pair generation for stage 1

  void validate() const;  // throws std::invalid_argument
};

struct TrainResult {
  std::vector<double> losses;  // one entry per optimizer step
  std::vector<double> lrs;
};

// Cosine annealing indexed by epoch: lr(0) = lr_init, lr(T-1) = lr_final,
// midpoint = their average.
double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_final);

// Two-stage schedule, plain SGD, gradient accumulation over the batch.
// Writes "step,lr,loss" CSV rows to csv_path when non-empty. Throws
// std::runtime_error naming the epoch if the loss turns non-finite.
TrainResult train(Model& m, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, const RestoreOptions& opt = {},
                  const std::string& csv_path = "");

}  // namespace qrestore
