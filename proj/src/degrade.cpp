#include "qrestore/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qrestore {

void DegradeSpec::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(airlight)) {
    throw std::invalid_argument("degrade: airlight must lie in [0,1]");
  }
  if (!in01(transmission)) {
    throw std::invalid_argument("degrade: transmission must lie in [0,1]");
  }
  if (rain_count < 0 || rain_length < 1 || !in01(rain_intensity)) {
    throw std::invalid_argument("degrade: invalid rain parameters");
  }
  if (snow_count < 0 || snow_r_min <= 0.0 || snow_r_max < snow_r_min ||
      !in01(snow_opacity)) {
    throw std::invalid_argument("degrade: invalid snow parameters");
  }
  if (!(lowlight_exponent > 0.0)) {
    throw std::invalid_argument("degrade: lowlight exponent must be positive");
  }
}

DegradeKind degrade_kind_from_name(const std::string& name) {
  if (name == "haze") return DegradeKind::Haze;
  if (name == "rain") return DegradeKind::Rain;
  if (name == "snow") return DegradeKind::Snow;
  if (name == "lowlight") return DegradeKind::Lowlight;
  if (name == "composite") return DegradeKind::Composite;
  throw std::invalid_argument("unknown degradation kind: " + name);
}

namespace {

void apply_haze(Image& img, double a, double t) {
  for (double& v : img.data) v = v * t + a * (1.0 - t);
}

void add_spot(Image& img, int y, int x, double amount) {
  if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
  for (int c = 0; c < 3; ++c) {
    double& v = img.at(c, y, x);
    v = std::min(1.0, v + amount);
  }
}

void apply_rain(Image& img, const DegradeSpec& s, Rng& rng) {
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  for (int i = 0; i < s.rain_count; ++i) {
    const double x0 = rng.uniform(0.0, static_cast<double>(img.width));
    const double y0 = rng.uniform(0.0, static_cast<double>(img.height));
    const double ang = (s.rain_angle_deg + rng.uniform(-5.0, 5.0)) * kDegToRad;
    const double dx = std::cos(ang), dy = std::sin(ang);
    for (int k = 0; k < s.rain_length; ++k) {
      // Fade the streak toward its tail.
      const double fade =
          1.0 - 0.5 * static_cast<double>(k) / static_cast<double>(s.rain_length);
      add_spot(img, static_cast<int>(std::lround(y0 + dy * k)),
               static_cast<int>(std::lround(x0 + dx * k)),
               s.rain_intensity * fade);
    }
  }
}

void apply_snow(Image& img, const DegradeSpec& s, Rng& rng) {
  for (int i = 0; i < s.snow_count; ++i) {
    const double cx = rng.uniform(0.0, static_cast<double>(img.width));
    const double cy = rng.uniform(0.0, static_cast<double>(img.height));
    const double r = rng.uniform(s.snow_r_min, s.snow_r_max);
    const int y_lo = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y_hi = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r)));
    const int x_lo = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x_hi = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        if (d > r) continue;
        // Soft edge: full opacity at the centre, zero at the rim.
        const double o = s.snow_opacity * (1.0 - d / r);
        for (int c = 0; c < 3; ++c) {
          double& v = img.at(c, y, x);
          v = (1.0 - o) * v + o;
        }
      }
    }
  }
}

void apply_lowlight(Image& img, double exponent) {
  for (double& v : img.data) {
    v = std::pow(std::clamp(v, 0.0, 1.0), exponent);
  }
}

}  // namespace

Image degrade(const Image& clean, const DegradeSpec& spec) {
  spec.validate();
  Image out = clean;
  Rng rng(spec.seed);
  switch (spec.kind) {
    case DegradeKind::Haze:
      apply_haze(out, spec.airlight, spec.transmission);
      break;
    case DegradeKind::Rain:
      apply_rain(out, spec, rng);
      break;
    case DegradeKind::Snow:
      apply_snow(out, spec, rng);
      break;
    case DegradeKind::Lowlight:
      apply_lowlight(out, spec.lowlight_exponent);
      break;
    case DegradeKind::Composite:
      apply_haze(out, spec.airlight, spec.transmission);
      apply_rain(out, spec, rng);
      apply_snow(out, spec, rng);
      apply_lowlight(out, spec.lowlight_exponent);
      break;
  }
  return out;
}

}  // namespace qrestore
