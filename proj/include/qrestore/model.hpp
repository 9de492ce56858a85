#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qrestore/decomp.hpp"
#include "qrestore/fnet.hpp"
#include "qrestore/tnet.hpp"

namespace qrestore {

// Architecture description. Everything that determines parameter shapes
// lives here; the canonical string (and its hash) guards checkpoint
// compatibility.
struct ModelConfig {
  std::vector<int> widths{8, 16, 32, 64};
  std::vector<int> heads{1, 2, 4, 8};
  std::vector<int> patch_k{7, 3, 3, 3};
  std::vector<int> patch_s{4, 2, 2, 2};
  int ffn_expansion = 2;
  int dnet_hidden = 4;
  int fnet_hidden = 4;
  bool share_features = true;
  bool quaternion = true;

  TNetConfig tnet_config() const;
  void validate() const;
  std::string canonical() const;
  uint64_t hash() const;  // FNV-1a 64 over canonical()
};

enum class ParamGroup {
  DnetS = 0,
  DnetT,
  TnetH,
  TnetS,
  Fnet,
  LatentM,
  Projection,
};

inline constexpr int kNumGroups = 7;
extern const std::array<const char*, kNumGroups> kGroupNames;

// The full set of trainable sub-networks with per-group freeze flags.
// Freezing detaches the group's tensors from gradient recording and excludes
// them from optimizer steps.
struct Model {
  ModelConfig cfg;
  DNet dnet_s, dnet_t;
  TNet tnet_h, tnet_s;
  LatentM latent_m;
  AttentionGate gate_s, gate_t;
  ProjectionHead projection;

  Model() = default;
  Model(const ModelConfig& cfg, uint64_t seed);

  ParamList group_params(ParamGroup g);
  ParamList all_params();  // fixed group order, names prefixed by group

  int64_t count_params();
  int64_t count_params(ParamGroup g);

  void set_frozen(ParamGroup g, bool frozen);
  bool is_frozen(ParamGroup g) const { return frozen_[static_cast<int>(g)]; }

  void zero_grads();
  // Heavy-ball update on every unfrozen tensor that accumulated a gradient:
  // v <- momentum * v + grad, w -= lr * v. Momentum 0 is plain gradient
  // descent and keeps no state. Velocity is optimizer state, not part of
  // the checkpoint.
  void sgd_step(double lr, double momentum = 0.0);

 private:
  std::array<bool, kNumGroups> frozen_{};
  std::map<std::string, std::vector<double>> velocity_;
};

ParamGroup group_from_name(const std::string& name);  // throws on unknown

}  // namespace qrestore
