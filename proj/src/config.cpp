#include "qrestore/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qrestore/image_io.hpp"

namespace qrestore {

namespace {

using nlohmann::json;

void require_known_keys(const json& j, const std::string& section,
                        const std::set<std::string>& known) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) {
      throw ConfigError("unknown config key \"" + key + "\" in section \"" +
                        section + "\"");
    }
  }
}

template <typename T>
void read_field(const json& j, const std::string& section, const char* key,
                T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key \"") + key + "\" in section \"" +
                      section + "\" has the wrong type");
  }
}

void read_model(const json& j, ModelConfig& m) {
  require_known_keys(j, "model",
                     {"widths", "heads", "patch_k", "patch_s", "ffn_expansion",
                      "dnet_hidden", "fnet_hidden", "share_features",
                      "quaternion"});
  read_field(j, "model", "widths", m.widths);
  read_field(j, "model", "heads", m.heads);
  read_field(j, "model", "patch_k", m.patch_k);
  read_field(j, "model", "patch_s", m.patch_s);
  read_field(j, "model", "ffn_expansion", m.ffn_expansion);
  read_field(j, "model", "dnet_hidden", m.dnet_hidden);
  read_field(j, "model", "fnet_hidden", m.fnet_hidden);
  read_field(j, "model", "share_features", m.share_features);
  read_field(j, "model", "quaternion", m.quaternion);
}

void read_decomp(const json& j, DecompParams& d) {
  require_known_keys(j, "decomp", {"gamma_t", "gamma_s", "omega", "eps",
                                   "t_max"});
  read_field(j, "decomp", "gamma_t", d.gamma_t);
  read_field(j, "decomp", "gamma_s", d.gamma_s);
  read_field(j, "decomp", "omega", d.omega);
  read_field(j, "decomp", "eps", d.eps);
  read_field(j, "decomp", "t_max", d.t_max);
}

void read_gamma(const json& j, GammaParams& g) {
  require_known_keys(j, "gamma", {"gamma"});
  read_field(j, "gamma", "gamma", g.gamma);
}

void read_train(const json& j, TrainConfig& t, bool& use_dnet) {
  require_known_keys(
      j, "train",
      {"lr_init", "lr_final", "momentum", "stage1_epochs", "epochs",
       "freeze_epochs", "batch", "patch", "seed", "augment", "use_dnet",
       "use_qssim", "mse_weight", "lowlight_exponent"});
  read_field(j, "train", "lr_init", t.lr_init);
  read_field(j, "train", "lr_final", t.lr_final);
  read_field(j, "train", "momentum", t.momentum);
  read_field(j, "train", "stage1_epochs", t.stage1_epochs);
  read_field(j, "train", "epochs", t.epochs);
  read_field(j, "train", "freeze_epochs", t.freeze_epochs);
  read_field(j, "train", "batch", t.batch);
  read_field(j, "train", "patch", t.patch);
  read_field(j, "train", "seed", t.seed);
  read_field(j, "train", "augment", t.augment);
  read_field(j, "train", "use_dnet", use_dnet);
  read_field(j, "train", "use_qssim", t.use_qssim);
  read_field(j, "train", "mse_weight", t.mse_weight);
  read_field(j, "train", "lowlight_exponent", t.lowlight_exponent);
}

}  // namespace

CliConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid json: ") + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError("config root must be a json object");
  }
  require_known_keys(j, "<root>", {"model", "decomp", "gamma", "train"});

  CliConfig cfg;
  auto section = [&](const char* name) -> const json* {
    if (!j.contains(name)) return nullptr;
    const json& s = j.at(name);
    if (!s.is_object()) {
      throw ConfigError(std::string("config section \"") + name +
                        "\" must be an object");
    }
    return &s;
  };
  if (const json* s = section("model")) read_model(*s, cfg.model);
  if (const json* s = section("decomp")) read_decomp(*s, cfg.decomp);
  if (const json* s = section("gamma")) read_gamma(*s, cfg.gamma);
  if (const json* s = section("train")) read_train(*s, cfg.train, cfg.use_dnet);

  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config values: ") + e.what());
  }
  if (!(cfg.gamma.gamma > 0.0)) {
    throw ConfigError("invalid config values: gamma must be positive");
  }
  return cfg;
}

CliConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace qrestore
