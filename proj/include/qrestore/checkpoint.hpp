#pragma once

#include <stdexcept>
#include <string>

#include "qrestore/model.hpp"

namespace qrestore {

enum class CheckpointErrorKind { Io, Version, Config, Shape, Corrupt };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// File layout: a text header followed by raw little-endian float64 blobs.
//   QRCKPT 1
//   config <16 hex digits of the architecture hash>
//   tensor <name> <ndims> <dims...> <element offset> <element count>
//   ...
//   DATA
// Offsets index doubles from the start of the data section. Round-trips are
// bit-exact.
void save_checkpoint(Model& model, const std::string& path);

// Loads into an existing model; the tensor set, shapes and config hash must
// match exactly. Errors are reported as CheckpointError with a distinct
// kind for I/O failure, version mismatch, config-hash mismatch, shape/name
// mismatch, and structural corruption (truncation included).
void load_checkpoint(Model& model, const std::string& path);

}  // namespace qrestore
