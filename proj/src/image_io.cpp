#include "qrestore/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace qrestore {

namespace {

uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::floor(c * 255.0 + 0.5));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image from_rgb8(const std::vector<uint8_t>& rgb, int h, int w) {
  Image img(h, w);
  const size_t n = img.plane_size();
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      img.data[c * n + i] = static_cast<double>(rgb[3 * i + c]) / 255.0;
    }
  }
  return img;
}

Image load_png(std::FILE* f, const std::string& path) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png reader allocation failed");
  }
  std::vector<uint8_t> rgb;
  int h = 0, w = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed png: " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  if (png_get_rowbytes(png, info) != static_cast<size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported png layout: " + path);
  }
  rgb.resize(static_cast<size_t>(h) * w * 3);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(rgb, h, w);
}

void save_png(const Image& img, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png writer allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t n = img.plane_size();
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const size_t i = static_cast<size_t>(y) * img.width + x;
      for (int c = 0; c < 3; ++c) row[3 * x + c] = quantize(img.data[c * n + i]);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

int next_pnm_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {  // comment to end of line
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return 1;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok.empty() ? 0 : 1;
}

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string tok;
  if (!next_pnm_token(in, tok) || tok != "P6") {
    throw IoError("not a binary ppm: " + path);
  }
  long w = 0, h = 0, maxval = 0;
  try {
    if (!next_pnm_token(in, tok)) throw IoError("");
    w = std::stol(tok);
    if (!next_pnm_token(in, tok)) throw IoError("");
    h = std::stol(tok);
    if (!next_pnm_token(in, tok)) throw IoError("");
    maxval = std::stol(tok);
  } catch (const std::exception&) {
    throw IoError("malformed ppm header: " + path);
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw IoError("unsupported ppm (need positive dims, maxval 255): " + path);
  }
  std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) {
    throw IoError("truncated ppm pixel data: " + path);
  }
  return from_rgb8(rgb, static_cast<int>(h), static_cast<int>(w));
}

void save_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  const size_t n = img.plane_size();
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const size_t i = static_cast<size_t>(y) * img.width + x;
      for (int c = 0; c < 3; ++c) row[3 * x + c] = quantize(img.data[c * n + i]);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         std::equal(suf.rbegin(), suf.rend(), s.rbegin());
}

}  // namespace

Image load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open: " + path);
  uint8_t sig[8] = {};
  const size_t got = std::fread(sig, 1, sizeof sig, f.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) {
    std::rewind(f.get());
    return load_png(f.get(), path);
  }
  if (got >= 2 && sig[0] == 'P' && sig[1] == '6') {
    f.reset();
    return load_ppm(path);
  }
  throw IoError("unrecognised image format (need png or binary ppm): " + path);
}

void save_image(const Image& img, const std::string& path) {
  if (img.height <= 0 || img.width <= 0) {
    throw IoError("refusing to write an empty image: " + path);
  }
  if (has_suffix(path, ".png")) {
    save_png(img, path);
  } else if (has_suffix(path, ".ppm")) {
    save_ppm(img, path);
  } else {
    throw IoError("unsupported output extension (use .png or .ppm): " + path);
  }
}

}  // namespace qrestore
