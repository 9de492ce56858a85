#pragma once

#include <cstdint>

#include "qrestore/qimage.hpp"
#include "qrestore/rng.hpp"

namespace qrestore {

enum class DegradeKind { Haze, Rain, Snow, Lowlight, Composite };

// Synthetic degradation recipe. All randomness flows from the seed, so a
// fixed spec reproduces the identical image bit for bit. The composite kind
// applies haze, then rain streaks, then snow, then low-light darkening.
struct DegradeSpec {
  DegradeKind kind = DegradeKind::Composite;

  // Haze: I' = I*t + A*(1-t). Typical synthesis draws A from [0.7,1] and
  // t from [0.3,1]; the full [0,1] ranges are accepted so the degenerate
  // endpoints (t=1 no haze, t=0 pure airlight) stay expressible.
  double airlight = 0.8;
  double transmission = 0.6;

  // Rain: additive bright streaks.
  int rain_count = 40;
  double rain_angle_deg = 70.0;  // measured from the horizontal axis
  int rain_length = 9;
  double rain_intensity = 0.35;

  // Snow: soft white disks. Zero count by default so the composite recipe
  // is haze + rain + lowlight unless snow is requested.
  int snow_count = 0;
  double snow_r_min = 1.0;
  double snow_r_max = 2.5;
  double snow_opacity = 0.6;

  // Low light: I' = I^exponent (exponent > 1 darkens).
  double lowlight_exponent = 2.2;

  uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

DegradeKind degrade_kind_from_name(const std::string& name);  // throws

Image degrade(const Image& clean, const DegradeSpec& spec);

}  // namespace qrestore
