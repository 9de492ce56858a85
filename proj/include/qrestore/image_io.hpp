#pragma once

#include <stdexcept>
#include <string>

#include "qrestore/qimage.hpp"

namespace qrestore {

// File-level failures (missing file, malformed stream, unsupported format).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads an 8-bit image as planar RGB in [0,1]. PNG (any color type; alpha
// stripped, palette/gray expanded) and binary PPM (P6, maxval 255) are
// recognised by content.
Image load_image(const std::string& path);

// Writes 8-bit RGB, format chosen by extension (.png or .ppm). Values are
// clamped to [0,1] and quantized round-half-up.
void save_image(const Image& img, const std::string& path);

}  // namespace qrestore
