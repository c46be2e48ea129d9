#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/codec.hpp"
#include "audcast/config.hpp"
#include "audcast/model.hpp"
#include "audcast/rng.hpp"

namespace audcast {

enum class SamplerKind { deterministic, ancestral };

inline SamplerKind sampler_from_string(const std::string& s) {
  if (s == "deterministic") return SamplerKind::deterministic;
  if (s == "ancestral") return SamplerKind::ancestral;
  throw std::runtime_error("unknown sampler kind: " + s);
}

// Linear beta schedule with cumulative alpha products.
struct DiffusionSchedule {
  int t_train = 100;
  int t_sample = 20;
  SamplerKind kind = SamplerKind::deterministic;
  std::vector<double> beta, alpha, alpha_bar;

  static DiffusionSchedule linear(int t_train, double beta_min = 1e-4, double beta_max = 2e-2,
                                  int t_sample = 20,
                                  SamplerKind kind = SamplerKind::deterministic) {
    if (t_train < 1) throw std::runtime_error("schedule: t_train must be >= 1");
    DiffusionSchedule s;
    s.t_train = t_train;
    s.t_sample = t_sample;
    s.kind = kind;
    s.beta.resize(static_cast<std::size_t>(t_train));
    s.alpha.resize(static_cast<std::size_t>(t_train));
    s.alpha_bar.resize(static_cast<std::size_t>(t_train));
    double prod = 1.0;
    for (int t = 0; t < t_train; ++t) {
      const double b =
          t_train == 1 ? beta_min
                       : beta_min + (beta_max - beta_min) * static_cast<double>(t) / (t_train - 1);
      s.beta[static_cast<std::size_t>(t)] = b;
      s.alpha[static_cast<std::size_t>(t)] = 1.0 - b;
      prod *= 1.0 - b;
      s.alpha_bar[static_cast<std::size_t>(t)] = prod;
    }
    return s;
  }

  static DiffusionSchedule from_config(const RunConfig& cfg) {
    return linear(cfg.t_train, cfg.beta_min, cfg.beta_max, cfg.t_sample,
                  sampler_from_string(cfg.sampler));
  }

  double abar(int t) const {
    if (t < 0 || t >= t_train)
      throw std::runtime_error("schedule: t=" + std::to_string(t) + " out of range");
    return alpha_bar[static_cast<std::size_t>(t)];
  }

  // descending timestep subsequence visited by the sampler
  std::vector<int> sample_timesteps() const {
    std::vector<int> ts(static_cast<std::size_t>(t_sample));
    for (int i = 0; i < t_sample; ++i) {
      const double frac =
          t_sample == 1 ? 1.0 : static_cast<double>(t_sample - 1 - i) / (t_sample - 1);
      ts[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(frac * (t_train - 1)));
    }
    return ts;
  }
};

inline LatentClip randn_like(const LatentClip& z, Rng& rng) {
  LatentClip out = z;
  for (auto& v : out.data) v = rng.normal();
  return out;
}

// forward process: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline LatentClip q_sample(const LatentClip& z0, int t, const LatentClip& eps,
                           const DiffusionSchedule& sched) {
  if (!z0.same_geometry(eps)) throw std::runtime_error("q_sample: eps shape mismatch");
  const double ab = sched.abar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  LatentClip out = z0;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * z0.data[i] + b * eps.data[i];
  return out;
}

// model interface used by the samplers; oracles plug in the same way
using DenoiseFn = std::function<LatentClip(const LatentClip& z_t, int t)>;
// hook applied to the working latent after every sampler step (inpainting)
using ClampFn = std::function<void(LatentClip& z, int step_index, bool final_step)>;

inline void check_finite(const LatentClip& z, const char* where) {
  for (double v : z.data)
    if (!std::isfinite(v)) throw std::runtime_error(std::string(where) + ": non-finite latent");
}

// Reverse process. The deterministic variant is the zero-noise (DDIM-style)
// update; ancestral adds posterior noise. The final step lands on the clean
// prediction (alpha_bar treated as 1 past the schedule start).
inline LatentClip sample_latent(const DenoiseFn& model, const LatentClip& shape_like,
                                const DiffusionSchedule& sched, Rng& rng,
                                const ClampFn& clamp = nullptr) {
  LatentClip x = randn_like(shape_like, rng);
  if (clamp) clamp(x, -1, false);  // known cells are held from the very first model call
  const std::vector<int> ts = sched.sample_timesteps();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const bool last = i + 1 == ts.size();
    const int t_prev = last ? -1 : ts[i + 1];
    const double ab = sched.abar(t);
    const double ab_prev = last ? 1.0 : sched.abar(t_prev);
    LatentClip eps = model(x, t);
    check_finite(eps, "sampler");
    if (!eps.same_geometry(x)) throw std::runtime_error("sampler: model output shape mismatch");
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    if (sched.kind == SamplerKind::deterministic) {
      const double sap = std::sqrt(ab_prev), sbp = std::sqrt(1.0 - ab_prev);
      for (std::size_t j = 0; j < x.data.size(); ++j) {
        const double x0 = (x.data[j] - sb * eps.data[j]) / sa;
        x.data[j] = sap * x0 + sbp * eps.data[j];
      }
    } else {
      // ancestral: posterior mean with variance beta_tilde
      const double alpha_t = ab / (last ? 1.0 : ab_prev);
      const double beta_t = 1.0 - alpha_t;
      const double mean_coef = 1.0 / std::sqrt(alpha_t);
      const double eps_coef = beta_t / std::sqrt(1.0 - ab);
      const double var = last ? 0.0 : beta_t * (1.0 - ab_prev) / (1.0 - ab);
      const double sigma = std::sqrt(std::max(0.0, var));
      for (std::size_t j = 0; j < x.data.size(); ++j) {
        const double mean = mean_coef * (x.data[j] - eps_coef * eps.data[j]);
        x.data[j] = mean + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
      }
    }
    check_finite(x, "sampler");
    if (clamp) clamp(x, static_cast<int>(i), last);
  }
  return x;
}

// ---------------------------------------------------------------------------
// training

struct AdamState {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;
  long long step = 0;
  std::vector<std::vector<double>> m, v;

  void init(const ParamStore& store) {
    m.clear();
    v.clear();
    for (const auto& p : store.all()) {
      m.emplace_back(p.tensor.numel(), 0.0);
      v.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  // global-norm clip then bias-corrected Adam update; gradients are reset
  void apply(ParamStore& store) {
    if (m.size() != store.all().size()) init(store);
    double norm_sq = 0.0;
    for (auto& p : store.all()) {
      if (!p.trainable) continue;
      for (double g : p.tensor.grad()) norm_sq += g * g;
    }
    const double norm = std::sqrt(norm_sq);
    const double scale = (grad_clip > 0.0 && norm > grad_clip) ? grad_clip / norm : 1.0;
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::size_t idx = 0;
    for (auto& p : store.all()) {
      if (!p.trainable) {
        ++idx;
        continue;
      }
      auto& mm = m[idx];
      auto& vv = v[idx];
      auto& data = p.tensor.data();
      auto& grad = p.tensor.grad();
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = grad[i] * scale;
        mm[i] = beta1 * mm[i] + (1.0 - beta1) * g;
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g;
        const double mhat = mm[i] / bc1;
        const double vhat = vv[i] / bc2;
        data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
      ++idx;
    }
    store.zero_grad();
  }
};

// masked mean-squared error over the video-latent token rows; target and
// prediction are patch-row matrices
inline Tensor diffusion_loss(const Tensor& pred_rows, const std::vector<double>& target_rows) {
  Tensor target = Tensor::from_data(pred_rows.shape(), target_rows);
  return mse(pred_rows, target);
}

struct TrainSample {
  LatentClip z0;         // clean latent of the target clip
  CondPack conds;        // full conditioning (motion pre-dropout)
};

// One optimization step: sample t and eps, apply whole-sequence motion
// dropout, predict eps over video positions only, MSE, backprop, Adam.
// Per-step randomness is derived from (seed, step) so training is resumable
// and bitwise reproducible.
inline double training_step(H2Model& model, const TrainSample& sample,
                            const DiffusionSchedule& sched, AdamState& opt, std::uint64_t seed,
                            long long step_index) {
  Rng rng(mix_seed(seed, 0x57455054ull, static_cast<std::uint64_t>(step_index)));
  const int t = rng.uniform_int(sched.t_train);
  LatentClip eps = randn_like(sample.z0, rng);
  LatentClip z_t = q_sample(sample.z0, t, eps, sched);

  CondPack conds = sample.conds;
  conds.motion = dropout_motion(conds.motion, model.config().motion_dropout, rng);

  const PatchGeometry g = model.config().patch_geometry();
  Tensor pred = model.predict_eps_tokens(patchify_raw(z_t, g), t, conds);
  Tensor loss = diffusion_loss(pred, patchify_raw(eps, g));
  const double value = loss.scalar();
  if (!std::isfinite(value))
    throw std::runtime_error("training_step: non-finite loss at step " +
                             std::to_string(step_index));
  backward(loss);
  opt.apply(model.params());
  return value;
}

// loss evaluation without the optimizer update, for resume checks
inline double training_loss_only(H2Model& model, const TrainSample& sample,
                                 const DiffusionSchedule& sched, std::uint64_t seed,
                                 long long step_index) {
  NoGradGuard ng;
  Rng rng(mix_seed(seed, 0x57455054ull, static_cast<std::uint64_t>(step_index)));
  const int t = rng.uniform_int(sched.t_train);
  LatentClip eps = randn_like(sample.z0, rng);
  LatentClip z_t = q_sample(sample.z0, t, eps, sched);
  CondPack conds = sample.conds;
  conds.motion = dropout_motion(conds.motion, model.config().motion_dropout, rng);
  const PatchGeometry g = model.config().patch_geometry();
  Tensor pred = model.predict_eps_tokens(patchify_raw(z_t, g), t, conds);
  return diffusion_loss(pred, patchify_raw(eps, g)).scalar();
}

// ---------------------------------------------------------------------------
// long-video chaining

struct ChainPlan {
  int total_frames = 0;
  int chunk_frames = 0;
  int overlap_m = 0;
  std::vector<std::uint64_t> chunk_seeds;

  int chunks() const { return total_frames / chunk_frames; }

  static ChainPlan tile(int total_frames, int chunk_frames, int overlap_m, std::uint64_t seed) {
    if (chunk_frames < 1 || total_frames < chunk_frames || total_frames % chunk_frames != 0)
      throw std::runtime_error("chain plan: audio of " + std::to_string(total_frames) +
                               " frames does not tile into chunks of " +
                               std::to_string(chunk_frames));
    ChainPlan p;
    p.total_frames = total_frames;
    p.chunk_frames = chunk_frames;
    p.overlap_m = overlap_m;
    for (int k = 0; k < p.chunks(); ++k)
      p.chunk_seeds.push_back(mix_seed(seed, 0x4348554Bull, static_cast<std::uint64_t>(k)));
    return p;
  }
};

struct SeamReport {
  std::vector<double> seam_diffs;   // mean abs pixel diff across each chunk boundary
  double intra_mean_diff = 0.0;     // mean abs consecutive-frame diff inside chunks
};

// builds per-chunk conditioning; chunk index -> CondPack without motion
using ChunkCondProvider = std::function<CondPack(int chunk)>;

// Stage-1 long-video protocol: chunk 1 samples with motion tokens absent;
// chunk k>1 re-encodes the last M decoded frames of chunk k-1 (pixel round
// trip, matching the training-time path). Overlap frames are context only and
// never re-emitted.
inline VideoClip generate_long(const H2Model& model, const ChainPlan& plan,
                               const ChunkCondProvider& conds_for, const DiffusionSchedule& sched,
                               SeamReport* report = nullptr, bool use_motion = true,
                               std::vector<LatentClip>* latents_out = nullptr) {
  const RunConfig& cfg = model.config();
  if (plan.chunk_frames != cfg.frames)
    throw std::runtime_error("generate_long: plan chunk size does not match model frames");
  VideoClip full;
  VideoClip prev_tail;
  LatentClip shape_like(cfg.latent_frames(), cfg.latent_height(), cfg.latent_width(), cfg.c_z,
                        cfg.r_t, cfg.r_s);
  std::vector<double> intra_diffs;
  for (int k = 0; k < plan.chunks(); ++k) {
    CondPack conds = conds_for(k);
    if (use_motion && cfg.use_mt && k > 0)
      conds.motion =
          build_motion_tokens(prev_tail, model.codec(), cfg.patch_geometry(), cfg.overlap_m);
    else
      conds.motion = MotionTokens{};
    Rng rng(plan.chunk_seeds[static_cast<std::size_t>(k)]);
    DenoiseFn fn = [&](const LatentClip& zt, int t) { return model.denoise(zt, t, conds); };
    LatentClip z = sample_latent(fn, shape_like, sched, rng);
    if (latents_out) latents_out->push_back(z);
    VideoClip chunk = model.codec().decode(z);
    if (report) {
      if (k > 0) {
        // seam: last emitted frame vs first frame of this chunk
        const VideoClip last = full.slice_frames(full.frames - 1, full.frames);
        double acc = 0.0;
        for (std::size_t i = 0; i < last.data.size(); ++i)
          acc += std::abs(chunk.data[i] - last.data[i]);
        report->seam_diffs.push_back(acc / static_cast<double>(last.data.size()));
      }
      for (int f = 1; f < chunk.frames; ++f) {
        double acc = 0.0;
        const std::size_t fs = chunk.frame_size();
        for (std::size_t i = 0; i < fs; ++i)
          acc += std::abs(chunk.data[f * fs + i] - chunk.data[(f - 1) * fs + i]);
        intra_diffs.push_back(acc / static_cast<double>(fs));
      }
    }
    full.append_frames(chunk);
    if (cfg.overlap_m > 0)
      prev_tail = full.slice_frames(full.frames - cfg.overlap_m, full.frames);
  }
  if (report && !intra_diffs.empty()) {
    double acc = 0.0;
    for (double d : intra_diffs) acc += d;
    report->intra_mean_diff = acc / static_cast<double>(intra_diffs.size());
  }
  return full;
}

}  // namespace audcast
