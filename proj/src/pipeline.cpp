#include "qrestore/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace qrestore {

namespace {

void check_stage(const Tensor& t, const char* stage) {
  for (const double v : t.data()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("restore aborted at stage '") +
                               stage + "': non-finite values");
    }
  }
}

}  // namespace

PreparedInput prepare_input(const Image& degraded, const DecompParams& dp,
                            bool use_dnet) {
  PreparedInput out;
  const QImage q = encode(degraded);
  out.input = tensor_from_qimage(q);
  if (use_dnet) {
    const DecompResult d = decompose(q, dp);
    out.s0 = tensor_from_qimage(d.S);
    out.t0 = tensor_from_qimage(d.T);
  } else {
    out.s0 = out.input;
    out.t0 = out.input;
  }
  return out;
}

Tensor forward_restore(Model& m, const PreparedInput& in,
                       const RestoreOptions& opt, bool bypass_tnet) {
  const Tensor& input = in.input;
  check_stage(input, "encode");
  const int64_t h = input.size(2), w = input.size(3);

  Tensor s = in.s0, t = in.t0;
  if (opt.use_dnet) {
    s = m.dnet_s.forward(s);
    check_stage(s, "refine_s");
    t = m.dnet_t.forward(t);
    check_stage(t, "refine_t");
  }

  Tensor s_clean = s, t_clean = t;
  if (!bypass_tnet) {
    const std::vector<QTensor> fh = m.tnet_h.enc.forward(QTensor(s));
    const std::vector<QTensor> fs = m.tnet_s.enc.forward(QTensor(t));
    QTensor bottom_h = fh[3], bottom_s = fs[3];
    if (m.cfg.share_features) {
      const QTensor shared = share_stage4(fh[3], fs[3]);
      bottom_h = shared;
      bottom_s = shared;
    }
    const std::vector<QTensor> skips_h(fh.begin(), fh.begin() + 3);
    const std::vector<QTensor> skips_s(fs.begin(), fs.begin() + 3);
    s_clean = m.tnet_h.dec.forward(bottom_h, skips_h, h, w).t;
    check_stage(s_clean, "clean_s");
    t_clean = m.tnet_s.dec.forward(bottom_s, skips_s, h, w).t;
    check_stage(t_clean, "clean_t");

    const Tensor mult = m.latent_m.forward(QTensor(s_clean)).t;
    check_stage(mult, "latent_m");
    s_clean = mult * s_clean;
  }

  s_clean = gamma_correct_t(s_clean, opt.gamma.gamma);
  check_stage(s_clean, "gamma");

  const Tensor map_s = m.gate_s.forward(QTensor(s_clean), QTensor(input)).t;
  const Tensor map_t = m.gate_t.forward(QTensor(t_clean), QTensor(input)).t;
  check_stage(map_s, "attention_s");
  check_stage(map_t, "attention_t");

  const Tensor s_fused = map_s * s_clean;
  const Tensor t_fused = map_t * t_clean;
  check_stage(s_fused, "fuse_s");
  check_stage(t_fused, "fuse_t");

  const Tensor out = recompose_t(s_fused, t_fused);
  check_stage(out, "recompose");
  return out;
}

Image restore_image(Model& m, const Image& degraded,
                    const RestoreOptions& opt) {
  if (degraded.height < 16 || degraded.width < 16) {
    throw std::invalid_argument("restore_image: image sides must be >= 16");
  }
  NoGradGuard ng;
  const PreparedInput in = prepare_input(degraded, opt.decomp, opt.use_dnet);
  const Tensor out = forward_restore(m, in, opt);
  return decode(qimage_from_tensor(out));
}

namespace {

std::vector<int> tile_positions(int dim, int tile, int step) {
  std::vector<int> ps;
  int p = 0;
  for (;;) {
    if (p + tile >= dim) {
      const int last = dim - tile;
      if (ps.empty() || ps.back() != last) ps.push_back(last);
      break;
    }
    ps.push_back(p);
    p += step;
  }
  return ps;
}

// Triangle feather: ramps of width overlap+1 at both ends, flat 1 between.
std::vector<double> feather(int len, int overlap) {
  std::vector<double> w(len);
  for (int i = 0; i < len; ++i) {
    const double edge = std::min(i + 1, len - i);
    w[i] = std::min(edge, static_cast<double>(overlap + 1)) /
           static_cast<double>(overlap + 1);
  }
  return w;
}

Image crop_image(const Image& img, int y0, int x0, int h, int w) {
  Image out(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

}  // namespace

Image restore_tiled(Model& m, const Image& degraded, int tile, int overlap,
                    const RestoreOptions& opt) {
  if (tile < 16 || tile % 16 != 0) {
    throw std::invalid_argument(
        "restore_tiled: tile must be a positive multiple of 16");
  }
  if (overlap < 8 || overlap >= tile) {
    throw std::invalid_argument("restore_tiled: overlap must lie in [8, tile)");
  }
  const int h = degraded.height, w = degraded.width;
  if (h < 16 || w < 16) {
    throw std::invalid_argument("restore_tiled: image sides must be >= 16");
  }
  if (h <= tile && w <= tile) return restore_image(m, degraded, opt);

  const int step = tile - overlap;
  const std::vector<int> ys =
      h <= tile ? std::vector<int>{0} : tile_positions(h, tile, step);
  const std::vector<int> xs =
      w <= tile ? std::vector<int>{0} : tile_positions(w, tile, step);
  const int th = std::min(tile, h), tw = std::min(tile, w);
  const std::vector<double> wy = feather(th, overlap);
  const std::vector<double> wx = feather(tw, overlap);

  std::vector<double> acc(3ull * h * w, 0.0);
  std::vector<double> wsum(static_cast<size_t>(h) * w, 0.0);
  for (const int y0 : ys) {
    for (const int x0 : xs) {
      const Image part =
          restore_image(m, crop_image(degraded, y0, x0, th, tw), opt);
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          const double weight = wy[y] * wx[x];
          const size_t pix = static_cast<size_t>(y0 + y) * w + (x0 + x);
          wsum[pix] += weight;
          for (int c = 0; c < 3; ++c) {
            acc[c * static_cast<size_t>(h) * w + pix] +=
                weight * part.at(c, y, x);
          }
        }
      }
    }
  }
  Image out(h, w);
  for (int c = 0; c < 3; ++c) {
    for (size_t pix = 0; pix < wsum.size(); ++pix) {
      out.data[c * wsum.size() + pix] = acc[c * wsum.size() + pix] / wsum[pix];
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(lr_init > lr_final) || !(lr_final > 0.0)) {
    throw std::invalid_argument("train: need lr_init > lr_final > 0");
  }
  if (stage1_epochs < 0 || epochs < 0 || freeze_epochs < 0) {
    throw std::invalid_argument("train: epoch counts must be non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  }
  if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (patch < 16) throw std::invalid_argument("train: patch must be >= 16");
  if (mse_weight < 0.0) {
    throw std::invalid_argument("train: mse_weight must be non-negative");
  }
  if (!(lowlight_exponent > 0.0)) {
    throw std::invalid_argument("train: lowlight exponent must be positive");
  }
}

double cosine_lr(int epoch, int total_epochs, double lr_init,
                 double lr_final) {
  if (total_epochs <= 1) return lr_init;
  const double x =
      static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  constexpr double kPi = 3.14159265358979323846;
  return lr_final + (lr_init - lr_final) * 0.5 * (1.0 + std::cos(kPi * x));
}

namespace {

// 90-degree counter-clockwise rotation of a square image, applied k times.
Image rot90(const Image& img, int k) {
  Image cur = img;
  for (int r = 0; r < (k & 3); ++r) {
    Image next(cur.width, cur.height);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < next.height; ++y) {
        for (int x = 0; x < next.width; ++x) {
          next.at(c, y, x) = cur.at(c, x, cur.width - 1 - y);
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

struct PreparedPair {
  PreparedInput in;
  Tensor target;
};

}  // namespace

TrainResult train(Model& m, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, const RestoreOptions& opt,
                  const std::string& csv_path) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const TrainSample& s : data) {
    if (s.degraded.height != s.clean.height ||
        s.degraded.width != s.clean.width) {
      throw std::invalid_argument("train: degraded/clean dimensions differ");
    }
    if (s.clean.height < cfg.patch || s.clean.width < cfg.patch) {
      throw std::invalid_argument("train: patch does not fit inside an image");
    }
  }

  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path, std::ios::trunc);
    if (!csv) {
      throw std::runtime_error("train: cannot write loss history to " +
                               csv_path);
    }
    csv << std::setprecision(17) << "step,lr,loss\n";
  }

  TrainResult res;
  Rng rng(cfg.seed);
  int64_t gstep = 0;

  // Caller-set freeze flags are honoured on top of the stage schedule and
  // restored afterwards, so a fully frozen model trains to a no-op.
  std::array<bool, kNumGroups> baseline{};
  for (int g = 0; g < kNumGroups; ++g) {
    baseline[g] = m.is_frozen(static_cast<ParamGroup>(g));
  }
  auto apply_freeze = [&](const std::array<bool, kNumGroups>& scheduled) {
    for (int g = 0; g < kNumGroups; ++g) {
      m.set_frozen(static_cast<ParamGroup>(g), baseline[g] || scheduled[g]);
    }
  };

  auto loss_of = [&](const Tensor& target, const Tensor& restored) {
    if (!cfg.use_qssim) {
      const Tensor d = restored - target;
      return mean(d * d);
    }
    Tensor l = qssim_loss(target, restored);
    if (cfg.mse_weight > 0.0) {
      const Tensor d = restored - target;
      l = l + cfg.mse_weight * mean(d * d);
    }
    return l;
  };

  auto prepare_pair = [&](const TrainSample& s) {
    TrainSample cut = s;
    if (s.clean.height > cfg.patch || s.clean.width > cfg.patch) {
      const int y0 =
          static_cast<int>(rng.uniform_int(s.clean.height - cfg.patch + 1));
      const int x0 =
          static_cast<int>(rng.uniform_int(s.clean.width - cfg.patch + 1));
      cut.degraded = crop_image(s.degraded, y0, x0, cfg.patch, cfg.patch);
      cut.clean = crop_image(s.clean, y0, x0, cfg.patch, cfg.patch);
    }
    if (cfg.augment) {
      const int k = static_cast<int>(rng.uniform_int(4));
      cut.degraded = rot90(cut.degraded, k);
      cut.clean = rot90(cut.clean, k);
    }
    PreparedPair p;
    p.in = prepare_input(cut.degraded, opt.decomp, opt.use_dnet);
    p.target = tensor_from_qimage(encode(cut.clean));
    return p;
  };

  bool needs_crop = false;
  for (const TrainSample& s : data) {
    needs_crop |= s.clean.height > cfg.patch || s.clean.width > cfg.patch;
  }
  const bool static_data = !cfg.augment && !needs_crop;

  auto run_stage = [&](const std::vector<TrainSample>& samples, int epochs,
                       bool bypass_tnet, const char* stage_name,
                       auto&& freeze_for_epoch) {
    if (epochs <= 0 || samples.empty()) return;
    std::vector<PreparedPair> cache;
    if (static_data) {
      cache.reserve(samples.size());
      for (const TrainSample& s : samples) cache.push_back(prepare_pair(s));
    }
    const int64_t n = static_cast<int64_t>(samples.size());
    const int64_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    int64_t cursor = 0;  // round-robin over samples
    for (int e = 0; e < epochs; ++e) {
      freeze_for_epoch(e);
      const double lr = cosine_lr(e, epochs, cfg.lr_init, cfg.lr_final);
      for (int64_t st = 0; st < steps_per_epoch; ++st) {
        m.zero_grads();
        double acc = 0.0;
        int count = 0;
        for (int j = 0; j < cfg.batch; ++j) {
          const int64_t idx = cursor % n;
          ++cursor;
          const PreparedPair p = static_data
                                     ? cache[static_cast<size_t>(idx)]
                                     : prepare_pair(samples[idx]);
          const Tensor restored = forward_restore(m, p.in, opt, bypass_tnet);
          const Tensor loss = loss_of(p.target, restored);
          const double lv = loss.item();
          if (!std::isfinite(lv)) {
            throw std::runtime_error("training diverged at epoch " +
                                     std::to_string(e) + " of the " +
                                     stage_name + " stage");
          }
          // with every group frozen the loss has no grad path; the step is
          // then a recorded no-op
          if (loss.requires_grad()) backward(loss);
          acc += lv;
          ++count;
        }
        m.sgd_step(lr / count, cfg.momentum);
        const double mean_loss = acc / count;
        res.losses.push_back(mean_loss);
        res.lrs.push_back(lr);
        if (csv.is_open()) {
          csv << gstep << ',' << lr << ',' << mean_loss << '\n';
        }
        ++gstep;
      }
    }
  };

  // Stage 1: refinement + fusion pretraining on synthetic low-light pairs.
  if (cfg.stage1_epochs > 0) {
    std::vector<TrainSample> stage1;
    stage1.reserve(data.size());
    DegradeSpec low;
    low.kind = DegradeKind::Lowlight;
    low.lowlight_exponent = cfg.lowlight_exponent;
    for (const TrainSample& s : data) {
      stage1.push_back({degrade(s.clean, low), s.clean});
    }
    std::array<bool, kNumGroups> sched{};
    sched[static_cast<int>(ParamGroup::TnetH)] = true;
    sched[static_cast<int>(ParamGroup::TnetS)] = true;
    sched[static_cast<int>(ParamGroup::LatentM)] = true;
    sched[static_cast<int>(ParamGroup::Projection)] = true;
    run_stage(stage1, cfg.stage1_epochs, /*bypass_tnet=*/true,
              "component pretraining", [&](int) { apply_freeze(sched); });
  }

  // Stage 2: full pipeline; refinement and fusion groups stay frozen for the
  // leading freeze_epochs.
  run_stage(data, cfg.epochs, /*bypass_tnet=*/false, "full pipeline",
            [&](int e) {
              const bool fr = e < cfg.freeze_epochs;
              std::array<bool, kNumGroups> sched{};
              sched[static_cast<int>(ParamGroup::DnetS)] = fr;
              sched[static_cast<int>(ParamGroup::DnetT)] = fr;
              sched[static_cast<int>(ParamGroup::Fnet)] = fr;
              sched[static_cast<int>(ParamGroup::Projection)] = fr;
              apply_freeze(sched);
            });

  apply_freeze({});
  return res;
}

}  // namespace qrestore
