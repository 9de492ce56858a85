#include "qrestore/model.hpp"

#include <sstream>
#include <stdexcept>

namespace qrestore {

const std::array<const char*, kNumGroups> kGroupNames = {
    "dnet_s", "dnet_t", "tnet_h", "tnet_s", "fnet", "latent_m", "projection"};

TNetConfig ModelConfig::tnet_config() const {
  TNetConfig t;
  t.widths = widths;
  t.heads = heads;
  t.patch_k = patch_k;
  t.patch_s = patch_s;
  t.ffn_expansion = ffn_expansion;
  t.quaternion = quaternion;
  return t;
}

void ModelConfig::validate() const {
  tnet_config().validate();
  if (dnet_hidden <= 0 || fnet_hidden <= 0) {
    throw std::invalid_argument(
        "ModelConfig: hidden widths must be positive");
  }
}

std::string ModelConfig::canonical() const {
  auto join = [](const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) os << ',';
      os << v[i];
    }
    return os.str();
  };
  std::ostringstream os;
  os << "v1|widths=" << join(widths) << "|heads=" << join(heads)
     << "|patch_k=" << join(patch_k) << "|patch_s=" << join(patch_s)
     << "|ffn=" << ffn_expansion << "|dnet=" << dnet_hidden
     << "|fnet=" << fnet_hidden << "|share=" << (share_features ? 1 : 0)
     << "|quat=" << (quaternion ? 1 : 0);
  return os.str();
}

uint64_t ModelConfig::hash() const {
  uint64_t h = 14695981039346656037ull;
  for (const char c : canonical()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Model::Model(const ModelConfig& c, uint64_t seed) : cfg(c) {
  cfg.validate();
  Rng rng(seed);
  const TNetConfig tc = cfg.tnet_config();
  dnet_s = DNet(cfg.dnet_hidden, cfg.quaternion, rng);
  dnet_t = DNet(cfg.dnet_hidden, cfg.quaternion, rng);
  tnet_h = TNet(tc, cfg.share_features, rng);
  tnet_s = TNet(tc, cfg.share_features, rng);
  latent_m = LatentM(1, rng, cfg.quaternion);
  gate_s = AttentionGate(cfg.fnet_hidden, cfg.quaternion, rng);
  gate_t = AttentionGate(cfg.fnet_hidden, cfg.quaternion, rng);
  projection = ProjectionHead(cfg.quaternion, rng);
  for (NamedTensor& p : all_params()) p.tensor.set_requires_grad(true);
}

ParamList Model::group_params(ParamGroup g) {
  ParamList out;
  switch (g) {
    case ParamGroup::DnetS:
      dnet_s.collect("dnet_s", out);
      break;
    case ParamGroup::DnetT:
      dnet_t.collect("dnet_t", out);
      break;
    case ParamGroup::TnetH:
      tnet_h.collect("tnet_h", out);
      break;
    case ParamGroup::TnetS:
      tnet_s.collect("tnet_s", out);
      break;
    case ParamGroup::Fnet:
      gate_s.collect("fnet.gate_s", out);
      gate_t.collect("fnet.gate_t", out);
      break;
    case ParamGroup::LatentM:
      latent_m.collect("latent_m", out);
      break;
    case ParamGroup::Projection:
      projection.collect("projection", out);
      break;
  }
  return out;
}

ParamList Model::all_params() {
  ParamList out;
  for (int g = 0; g < kNumGroups; ++g) {
    ParamList part = group_params(static_cast<ParamGroup>(g));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

int64_t Model::count_params() {
  int64_t n = 0;
  for (const NamedTensor& p : all_params()) n += p.tensor.numel();
  return n;
}

int64_t Model::count_params(ParamGroup g) {
  int64_t n = 0;
  for (const NamedTensor& p : group_params(g)) n += p.tensor.numel();
  return n;
}

void Model::set_frozen(ParamGroup g, bool frozen) {
  frozen_[static_cast<int>(g)] = frozen;
  for (NamedTensor& p : group_params(g)) {
    p.tensor.set_requires_grad(!frozen);
  }
}

void Model::zero_grads() {
  for (NamedTensor& p : all_params()) p.tensor.zero_grad();
}

void Model::sgd_step(double lr, double momentum) {
  for (int g = 0; g < kNumGroups; ++g) {
    if (frozen_[g]) continue;
    for (NamedTensor& p : group_params(static_cast<ParamGroup>(g))) {
      if (!p.tensor.has_grad()) continue;
      std::span<double> w = p.tensor.data_mut();
      std::span<const double> gr = p.tensor.grad();
      if (momentum > 0.0) {
        std::vector<double>& v =
            velocity_[std::string(kGroupNames[g]) + "." + p.name];
        v.resize(w.size(), 0.0);
        for (size_t i = 0; i < w.size(); ++i) {
          v[i] = momentum * v[i] + gr[i];
          w[i] -= lr * v[i];
        }
      } else {
        for (size_t i = 0; i < w.size(); ++i) w[i] -= lr * gr[i];
      }
    }
  }
}

ParamGroup group_from_name(const std::string& name) {
  for (int g = 0; g < kNumGroups; ++g) {
    if (name == kGroupNames[g]) return static_cast<ParamGroup>(g);
  }
  throw std::invalid_argument("unknown parameter group: " + name);
}

}  // namespace qrestore
