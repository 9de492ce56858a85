#include <cmath>

#include "doctest.h"
#include "qrestore/qimage.hpp"
#include "qrestore/rng.hpp"

using namespace qrestore;

namespace {
Image random_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}
}  // namespace

TEST_CASE("luma uses the Rec.601 weights") {
  // 0.299*0.2 + 0.587*0.4 + 0.114*0.6 = 0.363
  CHECK(luma(0.2, 0.4, 0.6) == doctest::Approx(0.363).epsilon(1e-12));
  CHECK(luma(1.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(luma(0.0, 0.0, 0.0) == 0.0);
  // weights sum to exactly 1 by construction
  CHECK(0.299 + 0.587 + 0.114 == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("encode fills the four planes in (L, R, G, B) order") {
  Image img(2, 3);
  img.at(0, 1, 2) = 0.2;  // R
  img.at(1, 1, 2) = 0.4;  // G
  img.at(2, 1, 2) = 0.6;  // B
  const QImage q = encode(img);
  CHECK(q.height == 2);
  CHECK(q.width == 3);
  CHECK(q.data.size() == 4 * 2 * 3);
  CHECK(q.at(0, 1, 2) == doctest::Approx(0.363).epsilon(1e-12));
  CHECK(q.at(1, 1, 2) == 0.2);
  CHECK(q.at(2, 1, 2) == 0.4);
  CHECK(q.at(3, 1, 2) == 0.6);
  // untouched pixel stays zero
  CHECK(q.at(0, 0, 0) == 0.0);
}

TEST_CASE("decode(encode(img)) is bit-exact") {
  const Image img = random_image(5, 7, 42);
  const Image back = decode(encode(img));
  REQUIRE(back.data.size() == img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
}

TEST_CASE("regenerate_luma rebuilds the real plane after channel edits") {
  Image img = random_image(4, 4, 9);
  QImage q = encode(img);
  // scale the red plane and regenerate
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) q.at(1, y, x) *= 0.5;
  regenerate_luma(q);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double expect = luma(q.at(1, y, x), q.at(2, y, x), q.at(3, y, x));
      CHECK(q.at(0, y, x) == expect);
    }
}
