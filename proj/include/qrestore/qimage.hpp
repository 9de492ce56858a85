#pragma once

#include <cstdint>
#include <vector>

namespace qrestore {

// Planar RGB image, float64, nominal range [0, 1]. Plane order R, G, B.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // size 3 * height * width

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(3ull * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t plane_size() const { return static_cast<size_t>(height) * width; }
};

// Quaternion image: one quaternion per pixel, stored planar as four planes
// in component order (real, i, j, k) = (luma, R, G, B).
struct QImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // size 4 * height * width

  QImage() = default;
  QImage(int h, int w) : height(h), width(w), data(4ull * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t plane_size() const { return static_cast<size_t>(height) * width; }
};

// Rec.601 luma used as the real component of the quaternion encoding.
inline double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

// I -> L + R i + G j + B k
QImage encode(const Image& img);

// Inverse of encode: keeps the three imaginary planes, drops the real one.
Image decode(const QImage& q);

// Recompute the luma plane from the RGB planes in place. Needed after any
// operation that edits colour channels directly.
void regenerate_luma(QImage& q);

}  // namespace qrestore
