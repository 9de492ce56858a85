#pragma once

#include <stdexcept>
#include <string>

#include "qrestore/pipeline.hpp"

namespace qrestore {

// Malformed configuration: unknown key, wrong type, bad value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// On-disk JSON configuration with sections "model", "decomp", "gamma" and
// "train". Every key is optional and overrides the struct default; keys
// outside the schema are rejected. The train section also carries the
// ablation toggle use_dnet consumed by the restoration options.
struct CliConfig {
  ModelConfig model;
  DecompParams decomp;
  GammaParams gamma;
  TrainConfig train;
  bool use_dnet = true;

  RestoreOptions restore_options() const {
    RestoreOptions o;
    o.decomp = decomp;
    o.gamma = gamma;
    o.use_dnet = use_dnet;
    return o;
  }
};

// Throws ConfigError on schema violations.
CliConfig parse_config_text(const std::string& json_text);

// Throws IoError when unreadable, ConfigError when malformed.
CliConfig load_config_file(const std::string& path);

}  // namespace qrestore
