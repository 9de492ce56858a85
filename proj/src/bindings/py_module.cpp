// Python bindings for the main operations: quaternion algebra, image
// encode/decode, structure/texture decomposition, quality metrics,
// degradation synthesis and checkpoint-driven restoration.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <string>

#include "qrestore/checkpoint.hpp"
#include "qrestore/config.hpp"
#include "qrestore/decomp.hpp"
#include "qrestore/degrade.hpp"
#include "qrestore/metrics.hpp"
#include "qrestore/pipeline.hpp"
#include "qrestore/quaternion.hpp"

namespace py = pybind11;
using namespace qrestore;

namespace {

Image image_from_array(const py::array_t<double>& arr) {
  const auto buf = arr.request();
  if (buf.ndim != 3 || buf.shape[2] != 3) {
    throw std::invalid_argument("expected an array of shape (H, W, 3)");
  }
  const int h = static_cast<int>(buf.shape[0]);
  const int w = static_cast<int>(buf.shape[1]);
  Image img(h, w);
  const auto view = arr.unchecked<3>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = view(y, x, c);
    }
  }
  return img;
}

py::array_t<double> array_from_image(const Image& img) {
  py::array_t<double> arr({img.height, img.width, 3});
  auto view = arr.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) view(y, x, c) = img.at(c, y, x);
    }
  }
  return arr;
}

QImage qimage_from_array(const py::array_t<double>& arr) {
  const auto buf = arr.request();
  if (buf.ndim != 3 || buf.shape[0] != 4) {
    throw std::invalid_argument("expected an array of shape (4, H, W)");
  }
  const int h = static_cast<int>(buf.shape[1]);
  const int w = static_cast<int>(buf.shape[2]);
  QImage q(h, w);
  const auto view = arr.unchecked<3>();
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) q.at(c, y, x) = view(c, y, x);
    }
  }
  return q;
}

py::array_t<double> array_from_qimage(const QImage& q) {
  py::array_t<double> arr({4, q.height, q.width});
  auto view = arr.mutable_unchecked<3>();
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < q.height; ++y) {
      for (int x = 0; x < q.width; ++x) view(c, y, x) = q.at(c, y, x);
    }
  }
  return arr;
}

}  // namespace

PYBIND11_MODULE(qrestore, m) {
  m.doc() = "quaternion structure/texture image restoration core";

  m.def(
      "hamilton",
      [](std::array<double, 4> a, std::array<double, 4> b) {
        const Quat r = hamilton(Quat{a[0], a[1], a[2], a[3]},
                                      Quat{b[0], b[1], b[2], b[3]});
        return std::array<double, 4>{r.w, r.x, r.y, r.z};
      },
      py::arg("a"), py::arg("b"),
      "Hamilton product of two quaternions given as (w, x, y, z).");

  m.def(
      "conjugate",
      [](std::array<double, 4> a) {
        const Quat r = conjugate(Quat{a[0], a[1], a[2], a[3]});
        return std::array<double, 4>{r.w, r.x, r.y, r.z};
      },
      py::arg("a"), "Quaternion conjugate.");

  m.def(
      "encode",
      [](const py::array_t<double>& img) {
        return array_from_qimage(encode(image_from_array(img)));
      },
      py::arg("image"),
      "RGB image (H, W, 3) -> quaternion planes (4, H, W): luma + R i + G j "
      "+ B k.");

  m.def(
      "decode",
      [](const py::array_t<double>& q) {
        return array_from_image(decode(qimage_from_array(q)));
      },
      py::arg("qimage"), "Quaternion planes (4, H, W) -> RGB image (H, W, 3).");

  m.def(
      "decompose",
      [](const py::array_t<double>& img, double gamma_t, double gamma_s) {
        DecompParams p;
        p.gamma_t = gamma_t;
        p.gamma_s = gamma_s;
        const DecompResult d = decompose(encode(image_from_array(img)), p);
        py::dict out;
        out["S"] = array_from_qimage(d.S);
        out["T"] = array_from_qimage(d.T);
        py::array_t<double> g({d.S.height, d.S.width});
        std::copy(d.G.begin(), d.G.end(), g.mutable_data());
        out["G"] = g;
        return out;
      },
      py::arg("image"), py::arg("gamma_t") = 0.5, py::arg("gamma_s") = 1.5,
      "Structure/texture/guidance decomposition. Returns a dict with "
      "quaternion arrays S and T plus the guidance map G.");

  m.def(
      "recompose",
      [](const py::array_t<double>& s, const py::array_t<double>& t) {
        return array_from_qimage(
            recompose(qimage_from_array(s), qimage_from_array(t)));
      },
      py::arg("s"), py::arg("t"),
      "Pixel-wise product of structure and texture quaternion images.");

  m.def(
      "qssim",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return qssim(qimage_from_array(a), qimage_from_array(b));
      },
      py::arg("a"), py::arg("b"),
      "Quaternion SSIM between two (4, H, W) quaternion images.");

  m.def(
      "ssim",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return ssim(qimage_from_array(a), qimage_from_array(b));
      },
      py::arg("a"), py::arg("b"),
      "Scalar SSIM over the luma planes of two quaternion images.");

  m.def(
      "psnr",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return psnr(image_from_array(a), image_from_array(b));
      },
      py::arg("a"), py::arg("b"),
      "PSNR in dB between two RGB images, capped at 100.");

  m.def(
      "degrade",
      [](const py::array_t<double>& img, const std::string& kind,
         uint64_t seed, double transmission, double airlight, int rain_count,
         double lowlight_exponent, int snow_count) {
        DegradeSpec spec;
        spec.kind = degrade_kind_from_name(kind);
        spec.seed = seed;
        spec.transmission = transmission;
        spec.airlight = airlight;
        spec.rain_count = rain_count;
        spec.lowlight_exponent = lowlight_exponent;
        spec.snow_count = snow_count;
        return array_from_image(degrade(image_from_array(img), spec));
      },
      py::arg("image"), py::arg("kind") = "composite", py::arg("seed") = 0,
      py::arg("transmission") = 0.6, py::arg("airlight") = 0.8,
      py::arg("rain_count") = 40, py::arg("lowlight_exponent") = 2.2,
      py::arg("snow_count") = 0,
      "Synthesize a haze/rain/snow/lowlight degradation.");

  m.def(
      "restore",
      [](const py::array_t<double>& img, const std::string& checkpoint,
         int tile, int overlap, const std::string& config) {
        CliConfig cfg = config.empty() ? CliConfig{} : load_config_file(config);
        Model model(cfg.model, 0);
        load_checkpoint(model, checkpoint);
        const Image in = image_from_array(img);
        const RestoreOptions opt = cfg.restore_options();
        return array_from_image(
            tile > 0 ? restore_tiled(model, in, tile, overlap, opt)
                     : restore_image(model, in, opt));
      },
      py::arg("image"), py::arg("checkpoint"), py::arg("tile") = 0,
      py::arg("overlap") = 16, py::arg("config") = std::string(),
      "Restore an RGB image with a trained checkpoint.");

  m.def(
      "param_count",
      [](bool quaternion) {
        ModelConfig cfg;
        cfg.quaternion = quaternion;
        Model model(cfg, 0);
        return model.count_params();
      },
      py::arg("quaternion") = true,
      "Total trainable parameter count of a default-config model.");
}
