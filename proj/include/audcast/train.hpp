#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/checkpoint.hpp"
#include "audcast/dataset.hpp"
#include "audcast/diffusion.hpp"
#include "audcast/model.hpp"
#include "audcast/refine.hpp"

namespace audcast {

// conditioning + clean latent for one bundle, reused across steps
inline TrainSample make_train_sample(const H2Model& model, const ClipBundle& bundle) {
  const RunConfig& cfg = model.config();
  if (bundle.clip.frames != cfg.frames)
    throw std::runtime_error("train sample: bundle has " + std::to_string(bundle.clip.frames) +
                             " frames, model expects " + std::to_string(cfg.frames));
  TrainSample s;
  s.z0 = model.codec().encode(bundle.clip);
  MotionTokens motion;
  if (cfg.use_mt && cfg.overlap_m > 0)
    motion = build_motion_tokens(bundle.prev, model.codec(), cfg.patch_geometry(), cfg.overlap_m);
  const std::vector<Box> face_boxes = bundle.face_boxes();
  s.conds = model.build_conds(bundle.ref, face_boxes.empty() ? Box{0, 0, 1, 1} : face_boxes[0],
                              bundle.audio, face_boxes, motion);
  return s;
}

struct TrainLogEntry {
  long long step;
  double loss;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  double final_loss = 0.0;
  double min_loss = 1e300;
};

using StepCallback = std::function<void(long long step, double loss)>;

// Sequential single-sample training loop; per-step randomness and the sample
// rotation derive from (seed, step), so resumed runs replay the same stream.
inline TrainResult train_h2(H2Model& model, const std::vector<TrainSample>& samples,
                            const DiffusionSchedule& sched, long long steps, double lr,
                            std::uint64_t seed, long long start_step = 0,
                            const std::string& log_path = "",
                            const StepCallback& on_step = nullptr) {
  if (samples.empty()) throw std::runtime_error("train: no samples");
  AdamState opt;
  opt.lr = lr;
  opt.grad_clip = model.config().grad_clip;
  opt.init(model.params());
  TrainResult res;
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("train: cannot open loss log " + log_path);
  }
  for (long long step = start_step; step < start_step + steps; ++step) {
    const std::size_t idx = static_cast<std::size_t>(
        mix_seed(seed, 0x53414D50ull, static_cast<std::uint64_t>(step)) % samples.size());
    const double loss = training_step(model, samples[idx], sched, opt, seed, step);
    res.final_loss = loss;
    res.min_loss = std::min(res.min_loss, loss);
    if (log && (step % model.config().log_every == 0 || step + 1 == start_step + steps))
      log << step << " " << loss << "\n";
    res.log.push_back({step, loss});
    if (on_step) on_step(step, loss);
  }
  return res;
}

// ---------------------------------------------------------------------------
// R2 training: conditional inpainting with clean context

struct R2TrainSample {
  LatentClip z0;      // ground-truth latent (stands in for stage-1 context)
  R2Conds conds;
};

inline R2TrainSample make_r2_train_sample(const R2Model& model, const ClipBundle& bundle) {
  const RunConfig& cfg = model.config();
  if (bundle.clip.frames != cfg.frames)
    throw std::runtime_error("r2 train sample: frame count mismatch");
  R2TrainSample s;
  s.z0 = model.codec().encode(bundle.clip);
  const std::vector<Box> face_boxes = bundle.face_boxes();
  s.conds = build_r2_conds(model, s.z0, bundle.prior, bundle.ref,
                           face_boxes.empty() ? Box{0, 0, 1, 1} : face_boxes[0]);
  return s;
}

// One R2 step: noise only the masked cells (context cells stay clean, exactly
// as the clamped sampler presents them) and regress eps on masked token rows.
inline double r2_training_step(R2Model& model, const R2TrainSample& sample,
                               const DiffusionSchedule& sched, AdamState& opt, std::uint64_t seed,
                               long long step_index) {
  Rng rng(mix_seed(seed, 0x52325354ull, static_cast<std::uint64_t>(step_index)));
  const int t = rng.uniform_int(sched.t_train);
  LatentClip eps = randn_like(sample.z0, rng);
  LatentClip z_t = q_sample(sample.z0, t, eps, sched);
  for (int f = 0; f < z_t.frames; ++f)
    for (int y = 0; y < z_t.height; ++y)
      for (int x = 0; x < z_t.width; ++x)
        if (!sample.conds.mask.at(f, y, x))
          for (int c = 0; c < z_t.channels; ++c) z_t.at(f, y, x, c) = sample.z0.at(f, y, x, c);

  const PatchGeometry g = model.config().patch_geometry();
  Tensor pred = model.predict_eps_tokens(patchify_raw(z_t, g), t, sample.conds);
  Tensor pred_masked = row_scale(pred, sample.conds.token_mask);
  std::vector<double> target = patchify_raw(eps, g);
  {
    const int pv = model.config().patch_values();
    for (int r = 0; r < pred.dim(0); ++r)
      if (sample.conds.token_mask[static_cast<std::size_t>(r)] == 0.0)
        for (int c = 0; c < pv; ++c) target[static_cast<std::size_t>(r) * pv + c] = 0.0;
  }
  Tensor loss = diffusion_loss(pred_masked, target);
  const double value = loss.scalar();
  if (!std::isfinite(value))
    throw std::runtime_error("r2 training_step: non-finite loss at step " +
                             std::to_string(step_index));
  backward(loss);
  opt.apply(model.params());
  return value;
}

inline TrainResult train_r2(R2Model& model, const std::vector<R2TrainSample>& samples,
                            const DiffusionSchedule& sched, long long steps, double lr,
                            std::uint64_t seed, const std::string& log_path = "",
                            const StepCallback& on_step = nullptr) {
  if (samples.empty()) throw std::runtime_error("r2 train: no samples");
  AdamState opt;
  opt.lr = lr;
  opt.grad_clip = model.config().grad_clip;
  opt.init(model.params());
  TrainResult res;
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw std::runtime_error("r2 train: cannot open loss log " + log_path);
  }
  for (long long step = 0; step < steps; ++step) {
    const std::size_t idx = static_cast<std::size_t>(
        mix_seed(seed, 0x53414D50ull, static_cast<std::uint64_t>(step)) % samples.size());
    const double loss = r2_training_step(model, samples[idx], sched, opt, seed, step);
    res.final_loss = loss;
    res.min_loss = std::min(res.min_loss, loss);
    if (log && (step % model.config().log_every == 0 || step + 1 == steps))
      log << step << " " << loss << "\n";
    res.log.push_back({step, loss});
    if (on_step) on_step(step, loss);
  }
  return res;
}

}  // namespace audcast
