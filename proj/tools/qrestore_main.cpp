// Command-line surface: decompose, restore, train, eval, gradcheck, degrade.
// Exit codes: 0 success, 2 I/O failure, 3 checkpoint failure, 64 usage or
// invalid parameters, 1 unexpected runtime failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qrestore/config.hpp"
#include "qrestore/gradcheck.hpp"
#include "qrestore/image_io.hpp"
#include "qrestore/metrics.hpp"
#include "qrestore/pipeline.hpp"

namespace fs = std::filesystem;
using namespace qrestore;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitUsage = 64;
constexpr int kExitRuntime = 1;

CliConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return CliConfig{};
  return load_config_file(path);
}

Image gray_image(const std::vector<double>& plane, int h, int w) {
  Image img(h, w);
  const size_t n = img.plane_size();
  for (int c = 0; c < 3; ++c) {
    std::copy(plane.begin(), plane.end(), img.data.begin() + c * n);
  }
  return img;
}

struct PairEntry {
  std::string name;
  fs::path degraded;
  fs::path clean;
};

// Discovers <name>.degraded.<ext> / <name>.clean.<ext> pairs, sorted by
// name. Returns the pairs and the number of convention-matching files left
// without a partner.
std::pair<std::vector<PairEntry>, int> find_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::map<std::string, fs::path> degraded, clean;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string fname = entry.path().filename().string();
    for (const char* ext : {".png", ".ppm"}) {
      const std::string deg_marker = std::string(".degraded") + ext;
      const std::string cln_marker = std::string(".clean") + ext;
      if (fname.size() > deg_marker.size() &&
          fname.ends_with(deg_marker)) {
        degraded[fname.substr(0, fname.size() - deg_marker.size())] =
            entry.path();
      } else if (fname.size() > cln_marker.size() &&
                 fname.ends_with(cln_marker)) {
        clean[fname.substr(0, fname.size() - cln_marker.size())] =
            entry.path();
      }
    }
  }
  std::vector<PairEntry> pairs;
  int unpaired = 0;
  for (const auto& [name, path] : degraded) {
    auto it = clean.find(name);
    if (it == clean.end()) {
      ++unpaired;
      continue;
    }
    pairs.push_back({name, path, it->second});
  }
  for (const auto& [name, path] : clean) {
    (void)path;
    if (!degraded.count(name)) ++unpaired;
  }
  return {pairs, unpaired};
}

// ---------------------------------------------------------------- decompose

struct DecomposeArgs {
  std::string input, out_dir, config;
  std::optional<double> gamma_t, gamma_s;
};

int cmd_decompose(const DecomposeArgs& a) {
  CliConfig cfg = load_config_or_default(a.config);
  if (a.gamma_t) cfg.decomp.gamma_t = *a.gamma_t;
  if (a.gamma_s) cfg.decomp.gamma_s = *a.gamma_s;
  if (!(cfg.decomp.gamma_t > 0.0) || !(cfg.decomp.gamma_s > 0.0) ||
      cfg.decomp.omega < 1 || !(cfg.decomp.eps > 0.0) ||
      !(cfg.decomp.t_max > 0.0)) {
    throw std::invalid_argument("decompose: parameters out of range");
  }
  const Image input = load_image(a.input);
  const DecompResult d = decompose(encode(input), cfg.decomp);
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + a.out_dir);
  save_image(decode(d.S), (fs::path(a.out_dir) / "S.png").string());
  save_image(decode(d.T), (fs::path(a.out_dir) / "T.png").string());
  save_image(gray_image(d.G, input.height, input.width),
             (fs::path(a.out_dir) / "G.png").string());
  return kExitOk;
}

// ------------------------------------------------------------------ restore

struct RestoreArgs {
  std::string input, checkpoint, output, config;
  int tile = 0;  // 0 = untiled
  int overlap = 16;
};

int cmd_restore(const RestoreArgs& a) {
  CliConfig cfg = load_config_or_default(a.config);
  const Image degraded = load_image(a.input);
  Model model(cfg.model, 0);
  load_checkpoint(model, a.checkpoint);
  const RestoreOptions opt = cfg.restore_options();
  const Image out = a.tile > 0
                        ? restore_tiled(model, degraded, a.tile, a.overlap, opt)
                        : restore_image(model, degraded, opt);
  save_image(out, a.output);
  return kExitOk;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string data_dir, config, out_checkpoint, loss_csv;
  std::optional<uint64_t> seed;
  std::optional<int> epochs, stage1_epochs, freeze_epochs, batch, patch;
  std::optional<double> lr_init, lr_final, momentum;
};

int cmd_train(const TrainArgs& a) {
  CliConfig cfg = load_config_or_default(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.stage1_epochs) cfg.train.stage1_epochs = *a.stage1_epochs;
  if (a.freeze_epochs) cfg.train.freeze_epochs = *a.freeze_epochs;
  if (a.batch) cfg.train.batch = *a.batch;
  if (a.patch) cfg.train.patch = *a.patch;
  if (a.lr_init) cfg.train.lr_init = *a.lr_init;
  if (a.lr_final) cfg.train.lr_final = *a.lr_final;
  if (a.momentum) cfg.train.momentum = *a.momentum;
  cfg.train.validate();

  const auto [pairs, unpaired] = find_pairs(a.data_dir);
  if (unpaired > 0) {
    std::cerr << "warning: " << unpaired << " unpaired file(s) skipped\n";
  }
  if (pairs.empty()) {
    throw IoError("no training pairs found in " + a.data_dir);
  }
  std::vector<TrainSample> data;
  data.reserve(pairs.size());
  for (const PairEntry& p : pairs) {
    data.push_back({load_image(p.degraded.string()),
                    load_image(p.clean.string())});
  }

  Model model(cfg.model, cfg.train.seed);
  const std::string csv = a.loss_csv.empty()
                              ? a.out_checkpoint + ".loss.csv"
                              : a.loss_csv;
  const TrainResult res =
      train(model, data, cfg.train, cfg.restore_options(), csv);
  save_checkpoint(model, a.out_checkpoint);
  std::cout << "steps: " << res.losses.size();
  if (!res.losses.empty()) {
    std::cout << "  final loss: " << std::setprecision(10)
              << res.losses.back();
  }
  std::cout << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string pairs_dir, checkpoint, report, config;
  int tile = 0;
  int overlap = 16;
};

int cmd_eval(const EvalArgs& a) {
  CliConfig cfg = load_config_or_default(a.config);
  const auto [pairs, unpaired] = find_pairs(a.pairs_dir);
  if (unpaired > 0) {
    std::cerr << "warning: " << unpaired << " unpaired file(s) skipped\n";
  }
  if (pairs.empty()) {
    throw IoError("no evaluation pairs found in " + a.pairs_dir);
  }

  std::optional<Model> model;
  if (!a.checkpoint.empty()) {
    model.emplace(cfg.model, 0);
    load_checkpoint(*model, a.checkpoint);
  }
  const RestoreOptions opt = cfg.restore_options();

  std::ofstream report(a.report, std::ios::trunc);
  if (!report) throw IoError("cannot write report: " + a.report);
  report << std::setprecision(10) << "name,psnr_db,ssim,qssim\n";
  double sum_psnr = 0.0, sum_ssim = 0.0, sum_qssim = 0.0;
  for (const PairEntry& p : pairs) {
    const Image degraded = load_image(p.degraded.string());
    const Image clean = load_image(p.clean.string());
    const Image candidate =
        model ? (a.tile > 0
                     ? restore_tiled(*model, degraded, a.tile, a.overlap, opt)
                     : restore_image(*model, degraded, opt))
              : degraded;
    const QImage qc = encode(clean), qr = encode(candidate);
    const double m_psnr = psnr(clean, candidate);
    const double m_ssim = ssim(qc, qr);
    const double m_qssim = qssim(qc, qr);
    report << p.name << ',' << m_psnr << ',' << m_ssim << ',' << m_qssim
           << '\n';
    sum_psnr += m_psnr;
    sum_ssim += m_ssim;
    sum_qssim += m_qssim;
  }
  const double n = static_cast<double>(pairs.size());
  report << "mean," << sum_psnr / n << ',' << sum_ssim / n << ','
         << sum_qssim / n << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string module = "all";
  uint64_t seed = 0;
};

struct GradRow {
  std::string name;
  double err;
  double threshold;
};

void gradcheck_ops(uint64_t seed, std::vector<GradRow>& rows) {
  constexpr double kTol = 1e-6;
  Rng rng(seed);
  auto rnd = [&](Shape s, double lo, double hi) {
    return Tensor::uniform(std::move(s), lo, hi, rng, true);
  };
  const Tensor b = rnd({3, 4}, 0.6, 1.5).detach();
  rows.push_back({"add", grad_check([&](const Tensor& x) {
                    return sum(add(x, b));
                  }, rnd({3, 4}, -1, 1)), kTol});
  rows.push_back({"mul", grad_check([&](const Tensor& x) {
                    return sum(mul(x, b));
                  }, rnd({3, 4}, -1, 1)), kTol});
  rows.push_back({"div", grad_check([&](const Tensor& x) {
                    return sum(div(x, b));
                  }, rnd({3, 4}, -1, 1)), kTol});
  rows.push_back({"gelu", grad_check([](const Tensor& x) {
                    return sum(gelu(x));
                  }, rnd({20}, -2, 2)), kTol});
  rows.push_back({"sigmoid", grad_check([](const Tensor& x) {
                    return sum(sigmoid(x));
                  }, rnd({20}, -2, 2)), kTol});
  rows.push_back({"softplus", grad_check([](const Tensor& x) {
                    return sum(softplus(x));
                  }, rnd({20}, -2, 2)), kTol});
  rows.push_back({"sqrt", grad_check([](const Tensor& x) {
                    return sum(sqrt(x));
                  }, rnd({20}, 0.4, 2)), kTol});
  rows.push_back({"pow", grad_check([](const Tensor& x) {
                    return sum(pow(x, 0.7));
                  }, rnd({20}, 0.3, 1)), kTol});
  const Tensor mb = rnd({4, 5}, -1, 1).detach();
  rows.push_back({"matmul", grad_check([&](const Tensor& x) {
                    return sum(matmul(x, mb));
                  }, rnd({3, 4}, -1, 1)), kTol});
  const Tensor cw = rnd({4, 2, 3, 3}, -0.4, 0.4).detach();
  rows.push_back({"conv2d", grad_check([&](const Tensor& x) {
                    return sum(conv2d(x, cw, {}, 2, 1));
                  }, rnd({1, 2, 6, 6}, -1, 1)), kTol});
  const Tensor sw = rnd({3, 6}, 0.5, 1.5).detach();
  rows.push_back({"softmax", grad_check([&](const Tensor& x) {
                    return sum(mul(softmax(x, 1), sw));
                  }, rnd({3, 6}, -1, 1)), kTol});
  const Tensor pw = rnd({1, 1, 2, 2}, 0.5, 1.5).detach();
  rows.push_back({"avgpool", grad_check([&](const Tensor& x) {
                    return sum(mul(avgpool(x, 2), pw));
                  }, rnd({1, 1, 4, 4}, -1, 1)), kTol});
}

void gradcheck_qlayers(uint64_t seed, std::vector<GradRow>& rows) {
  constexpr double kTol = 1e-4;
  Rng rng(seed + 1);
  auto qrnd = [&](int64_t c, int64_t hw) {
    return Tensor::uniform({1, 4 * c, hw, hw}, -1.0, 1.0, rng, true);
  };
  {
    QConv2d conv(2, 3, 3, 1, 1, true, rng);
    rows.push_back({"qconv2d", grad_check([&](const Tensor& x) {
                      return sum(conv.forward(QTensor(x)).t);
                    }, qrnd(2, 5)), kTol});
  }
  {
    QMsa msa(2, 2, true, rng);
    rows.push_back({"qmsa", grad_check([&](const Tensor& x) {
                      return sum(msa.forward(QTensor(x)).t);
                    }, qrnd(2, 4)), kTol});
  }
  {
    QFfn ffn(2, 2, true, rng);
    rows.push_back({"qffn", grad_check([&](const Tensor& x) {
                      return sum(ffn.forward(QTensor(x)).t);
                    }, qrnd(2, 4)), kTol});
  }
  {
    QTransformerBlock blk(2, 2, 2, true, rng);
    rows.push_back({"qtransformer_block", grad_check([&](const Tensor& x) {
                      return sum(blk.forward(QTensor(x)).t);
                    }, qrnd(2, 4)), kTol});
  }
}

void gradcheck_decomp(uint64_t seed, std::vector<GradRow>& rows) {
  constexpr double kTol = 1e-4;
  Rng rng(seed + 2);
  DNet net(2, true, rng);
  Tensor x = Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true);
  rows.push_back({"dnet_refine", grad_check([&](const Tensor& t) {
                    return sum(net.forward(t));
                  }, x), kTol});
}

void gradcheck_fnet(uint64_t seed, std::vector<GradRow>& rows) {
  constexpr double kTol = 1e-4;
  Rng rng(seed + 3);
  AttentionGate gate(2, true, rng);
  const Tensor damaged =
      Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, false);
  rows.push_back({"fnet_attention", grad_check([&](const Tensor& x) {
                    return sum(gate.forward(QTensor(x), QTensor(damaged)).t);
                  }, Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true)),
                  kTol});
  ProjectionHead head(true, rng);
  rows.push_back({"fnet_projection", grad_check([&](const Tensor& x) {
                    return sum(head.forward(QTensor(x), QTensor(damaged)).t);
                  }, Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true)),
                  kTol});
}

void gradcheck_metrics(uint64_t seed, std::vector<GradRow>& rows) {
  constexpr double kTol = 1e-4;
  Rng rng(seed + 4);
  const Tensor gt = Tensor::uniform({1, 4, 16, 16}, 0.1, 0.9, rng, false);
  rows.push_back({"qssim_loss", grad_check([&](const Tensor& x) {
                    return qssim_loss(gt, x);
                  }, Tensor::uniform({1, 4, 16, 16}, 0.1, 0.9, rng, true)),
                  kTol});
}

int cmd_gradcheck(const GradcheckArgs& a) {
  std::vector<GradRow> rows;
  if (a.module == "ops" || a.module == "all") gradcheck_ops(a.seed, rows);
  if (a.module == "qlayers" || a.module == "all") {
    gradcheck_qlayers(a.seed, rows);
  }
  if (a.module == "decomp" || a.module == "all") gradcheck_decomp(a.seed, rows);
  if (a.module == "fnet" || a.module == "all") gradcheck_fnet(a.seed, rows);
  if (a.module == "metrics" || a.module == "all") {
    gradcheck_metrics(a.seed, rows);
  }
  if (rows.empty()) {
    throw std::invalid_argument(
        "unknown gradcheck module \"" + a.module +
        "\" (expected ops|qlayers|decomp|fnet|metrics|all)");
  }
  bool all_ok = true;
  std::cout << std::left << std::setw(22) << "op" << std::setw(14)
            << "max_rel_err" << std::setw(12) << "threshold" << "status\n";
  for (const GradRow& r : rows) {
    const bool ok = r.err < r.threshold;
    all_ok &= ok;
    std::cout << std::left << std::setw(22) << r.name << std::setw(14)
              << std::setprecision(3) << std::scientific << r.err
              << std::setw(12) << r.threshold << (ok ? "pass" : "FAIL")
              << std::defaultfloat << '\n';
  }
  return all_ok ? kExitOk : kExitRuntime;
}

// ------------------------------------------------------------------ degrade

struct DegradeArgs {
  std::string input, output, kind = "composite";
  DegradeSpec spec;
};

int cmd_degrade(const DegradeArgs& a) {
  DegradeSpec spec = a.spec;
  spec.kind = degrade_kind_from_name(a.kind);
  const Image input = load_image(a.input);
  save_image(degrade(input, spec), a.output);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quaternion structure/texture image restoration toolkit"};
  app.require_subcommand(1);

  DecomposeArgs dec;
  CLI::App* c_dec = app.add_subcommand(
      "decompose", "split an image into structure/texture/guidance maps");
  c_dec->add_option("--input", dec.input, "input image (png or ppm)")
      ->required();
  c_dec->add_option("--out-dir", dec.out_dir, "directory for S/T/G images")
      ->required();
  c_dec->add_option("--config", dec.config, "json config file");
  c_dec->add_option("--gamma-t", dec.gamma_t, "texture exponent (default 0.5)");
  c_dec->add_option("--gamma-s", dec.gamma_s,
                    "structure exponent (default 1.5)");

  RestoreArgs res;
  CLI::App* c_res = app.add_subcommand("restore", "restore a degraded image");
  c_res->add_option("--input", res.input, "degraded image")->required();
  c_res->add_option("--checkpoint", res.checkpoint, "model checkpoint")
      ->required();
  c_res->add_option("--output", res.output, "restored image path")->required();
  c_res->add_option("--config", res.config, "json config file");
  c_res->add_option("--tile", res.tile, "tile size (0 = whole image)");
  c_res->add_option("--overlap", res.overlap, "tile overlap (default 16)");

  TrainArgs tra;
  CLI::App* c_tra = app.add_subcommand("train", "train on paired images");
  c_tra->add_option("--data-dir", tra.data_dir,
                    "directory of <name>.degraded.png/<name>.clean.png pairs")
      ->required();
  c_tra->add_option("--out-checkpoint", tra.out_checkpoint,
                    "checkpoint output path")
      ->required();
  c_tra->add_option("--config", tra.config, "json config file");
  c_tra->add_option("--loss-csv", tra.loss_csv,
                    "loss history csv (default <checkpoint>.loss.csv)");
  c_tra->add_option("--seed", tra.seed, "training seed");
  c_tra->add_option("--epochs", tra.epochs, "full-pipeline epochs");
  c_tra->add_option("--stage1-epochs", tra.stage1_epochs,
                    "pretraining epochs");
  c_tra->add_option("--freeze-epochs", tra.freeze_epochs,
                    "leading epochs with refinement/fusion frozen");
  c_tra->add_option("--batch", tra.batch, "batch size");
  c_tra->add_option("--patch", tra.patch, "training patch side");
  c_tra->add_option("--lr-init", tra.lr_init, "initial learning rate");
  c_tra->add_option("--lr-final", tra.lr_final, "final learning rate");
  c_tra->add_option("--momentum", tra.momentum, "heavy-ball momentum");

  EvalArgs eva;
  CLI::App* c_eva = app.add_subcommand(
      "eval", "report psnr/ssim/qssim over an image-pair directory");
  c_eva->add_option("--pairs-dir", eva.pairs_dir, "directory of pairs")
      ->required();
  c_eva->add_option("--report", eva.report, "csv report path")->required();
  c_eva->add_option("--checkpoint", eva.checkpoint,
                    "restore degraded inputs with this checkpoint first "
                    "(omit to score the degraded images as-is)");
  c_eva->add_option("--config", eva.config, "json config file");
  c_eva->add_option("--tile", eva.tile, "tile size (0 = whole image)");
  c_eva->add_option("--overlap", eva.overlap, "tile overlap (default 16)");

  GradcheckArgs gra;
  CLI::App* c_gra = app.add_subcommand(
      "gradcheck", "finite-difference checks of the autodiff engine");
  c_gra->add_option("--module", gra.module,
                    "ops|qlayers|decomp|fnet|metrics|all (default all)");
  c_gra->add_option("--seed", gra.seed, "rng seed for the test tensors");

  DegradeArgs deg;
  CLI::App* c_deg = app.add_subcommand(
      "degrade", "synthesize haze/rain/snow/lowlight degradations");
  c_deg->add_option("--input", deg.input, "clean image")->required();
  c_deg->add_option("--output", deg.output, "degraded image path")->required();
  c_deg->add_option("--kind", deg.kind,
                    "haze|rain|snow|lowlight|composite (default composite)");
  c_deg->add_option("--seed", deg.spec.seed, "rng seed");
  c_deg->add_option("--airlight", deg.spec.airlight, "haze airlight A");
  c_deg->add_option("--t", deg.spec.transmission, "haze transmission t");
  c_deg->add_option("--rain-count", deg.spec.rain_count, "rain streak count");
  c_deg->add_option("--rain-angle", deg.spec.rain_angle_deg,
                    "streak angle (degrees)");
  c_deg->add_option("--rain-length", deg.spec.rain_length, "streak length");
  c_deg->add_option("--rain-intensity", deg.spec.rain_intensity,
                    "streak brightness");
  c_deg->add_option("--snow-count", deg.spec.snow_count, "snow disk count");
  c_deg->add_option("--snow-rmin", deg.spec.snow_r_min, "min disk radius");
  c_deg->add_option("--snow-rmax", deg.spec.snow_r_max, "max disk radius");
  c_deg->add_option("--snow-opacity", deg.spec.snow_opacity, "disk opacity");
  c_deg->add_option("--exponent", deg.spec.lowlight_exponent,
                    "lowlight darkening exponent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(c_dec)) return cmd_decompose(dec);
    if (app.got_subcommand(c_res)) return cmd_restore(res);
    if (app.got_subcommand(c_tra)) return cmd_train(tra);
    if (app.got_subcommand(c_eva)) return cmd_eval(eva);
    if (app.got_subcommand(c_gra)) return cmd_gradcheck(gra);
    if (app.got_subcommand(c_deg)) return cmd_degrade(deg);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid parameters: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid parameters: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
