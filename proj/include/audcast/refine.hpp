#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/diffusion.hpp"
#include "audcast/model.hpp"

namespace audcast {

// Per-frame region boxes for face and hands.
struct FrameRegions {
  Box face, lhand, rhand;

  std::vector<const Box*> nonempty() const {
    std::vector<const Box*> out;
    if (!face.empty()) out.push_back(&face);
    if (!lhand.empty()) out.push_back(&lhand);
    if (!rhand.empty()) out.push_back(&rhand);
    return out;
  }
};

// Rendered structural stand-in for the 3D face/hand fitting: a one-channel
// clip whose pixels outside the region boxes are zero, plus the boxes.
struct StructuralPrior {
  VideoClip render;  // channels == 1
  std::vector<FrameRegions> regions;

  void validate() const {
    if (render.channels != 1)
      throw std::runtime_error("structural prior: render must be single channel");
    if (static_cast<int>(regions.size()) != render.frames)
      throw std::runtime_error("structural prior: one region record per frame required");
    for (int f = 0; f < render.frames; ++f) {
      const auto boxes = regions[static_cast<std::size_t>(f)].nonempty();
      for (const auto* b : boxes)
        if (b->x0 < 0 || b->y0 < 0 || b->x1 > render.width || b->y1 > render.height)
          throw std::runtime_error("structural prior: region box out of bounds");
      for (int y = 0; y < render.height; ++y)
        for (int x = 0; x < render.width; ++x) {
          if (render.at(f, y, x, 0) == 0.0) continue;
          bool inside = false;
          for (const auto* b : boxes) inside = inside || b->contains_pixel(x, y);
          if (!inside)
            throw std::runtime_error("structural prior: nonzero pixel outside region boxes");
        }
    }
  }
};

// Binary volume over the latent grid marking cells to re-synthesize.
struct InpaintMask {
  int frames = 0, height = 0, width = 0;  // latent dims
  std::vector<std::uint8_t> cells;        // [f][y][x]

  std::uint8_t at(int f, int y, int x) const {
    return cells[(static_cast<std::size_t>(f) * height + y) * width + x];
  }
  std::uint8_t& at(int f, int y, int x) {
    return cells[(static_cast<std::size_t>(f) * height + y) * width + x];
  }
  bool any() const {
    for (auto v : cells)
      if (v) return true;
    return false;
  }
};

// Any-overlap stride reduction of the region boxes to the latent grid, then
// dilation by one patch: every patch touching a marked cell is flagged along
// with its full Chebyshev 1-ring, and flagged patches are filled whole, so the
// mask is patch-aligned.
inline InpaintMask build_inpaint_mask(const std::vector<FrameRegions>& regions,
                                      const RunConfig& cfg) {
  if (static_cast<int>(regions.size()) != cfg.frames)
    throw std::runtime_error("build_inpaint_mask: one region record per frame required");
  InpaintMask m;
  m.frames = cfg.latent_frames();
  m.height = cfg.latent_height();
  m.width = cfg.latent_width();
  m.cells.assign(static_cast<std::size_t>(m.frames) * m.height * m.width, 0);

  for (int zf = 0; zf < m.frames; ++zf)
    for (int zy = 0; zy < m.height; ++zy)
      for (int zx = 0; zx < m.width; ++zx) {
        bool hit = false;
        for (int df = 0; df < cfg.r_t && !hit; ++df) {
          const auto& reg = regions[static_cast<std::size_t>(zf * cfg.r_t + df)];
          const auto boxes = reg.nonempty();
          for (int py = zy * cfg.r_s; py < (zy + 1) * cfg.r_s && !hit; ++py)
            for (int px = zx * cfg.r_s; px < (zx + 1) * cfg.r_s && !hit; ++px)
              for (const auto* b : boxes)
                if (b->contains_pixel(px, py)) {
                  hit = true;
                  break;
                }
        }
        if (hit) m.at(zf, zy, zx) = 1;
      }

  // patch-level dilation
  const int nt = m.frames / cfg.p_t, ny = m.height / cfg.p_h, nx = m.width / cfg.p_w;
  std::vector<std::uint8_t> patch_flag(static_cast<std::size_t>(nt) * ny * nx, 0);
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp) {
        bool any = false;
        for (int dt = 0; dt < cfg.p_t && !any; ++dt)
          for (int dy = 0; dy < cfg.p_h && !any; ++dy)
            for (int dx = 0; dx < cfg.p_w && !any; ++dx)
              any = m.at(tp * cfg.p_t + dt, yp * cfg.p_h + dy, xp * cfg.p_w + dx) != 0;
        if (any) patch_flag[(static_cast<std::size_t>(tp) * ny + yp) * nx + xp] = 1;
      }
  std::vector<std::uint8_t> dilated(patch_flag.size(), 0);
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp) {
        bool any = false;
        for (int dt = -1; dt <= 1 && !any; ++dt)
          for (int dy = -1; dy <= 1 && !any; ++dy)
            for (int dx = -1; dx <= 1 && !any; ++dx) {
              const int t2 = tp + dt, y2 = yp + dy, x2 = xp + dx;
              if (t2 < 0 || t2 >= nt || y2 < 0 || y2 >= ny || x2 < 0 || x2 >= nx) continue;
              any = patch_flag[(static_cast<std::size_t>(t2) * ny + y2) * nx + x2] != 0;
            }
        dilated[(static_cast<std::size_t>(tp) * ny + yp) * nx + xp] = any ? 1 : 0;
      }
  std::fill(m.cells.begin(), m.cells.end(), 0);
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp) {
        if (!dilated[(static_cast<std::size_t>(tp) * ny + yp) * nx + xp]) continue;
        for (int dt = 0; dt < cfg.p_t; ++dt)
          for (int dy = 0; dy < cfg.p_h; ++dy)
            for (int dx = 0; dx < cfg.p_w; ++dx)
              m.at(tp * cfg.p_t + dt, yp * cfg.p_h + dy, xp * cfg.p_w + dx) = 1;
      }
  return m;
}

// per-token view of a patch-aligned latent mask
inline std::vector<double> token_mask_from_cells(const InpaintMask& m, const RunConfig& cfg) {
  const int nt = m.frames / cfg.p_t, ny = m.height / cfg.p_h, nx = m.width / cfg.p_w;
  std::vector<double> out(static_cast<std::size_t>(nt) * ny * nx, 0.0);
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp) {
        bool any = false;
        for (int dt = 0; dt < cfg.p_t && !any; ++dt)
          for (int dy = 0; dy < cfg.p_h && !any; ++dy)
            for (int dx = 0; dx < cfg.p_w && !any; ++dx)
              any = m.at(tp * cfg.p_t + dt, yp * cfg.p_h + dy, xp * cfg.p_w + dx) != 0;
        out[(static_cast<std::size_t>(tp) * ny + yp) * nx + xp] = any ? 1.0 : 0.0;
      }
  return out;
}

struct R2Conds {
  StructuralPrior prior;
  InpaintMask mask;
  std::vector<double> token_mask;       // 1 = re-synthesize
  std::vector<double> h2_patch_rows;    // stage-1 latent, patchified
  std::vector<double> gate;             // head gate over noise tokens
  AppearanceTokens appearance;
  std::vector<double> identity_tokens;
  int identity_rows = 0;
};

// Regional refinement DiT: audio-free transformer over [conditioning tokens,
// noise tokens], where conditioning is the channel-concat of masked stage-1
// tokens and mesh tokens projected back to width E.
class R2Model {
 public:
  R2Model(const RunConfig& cfg, std::uint64_t init_seed)
      : cfg_(cfg), codec_(cfg.codec_config()), idemb_(cfg.embed_dim) {
    if (cfg_.use_audio_xattn)
      throw std::runtime_error("r2 model: use_audio_xattn must be false (audio-free stage)");
    cfg_.validate();
    Rng rng(mix_seed(init_seed, 0x5232));  // "R2"
    const int e = cfg_.embed_dim;
    const int pv = cfg_.patch_values();

    store_.add("codec.projection", {cfg_.c_z, codec_.block_size()}, codec_.projection(), false);
    store_.add("idemb.conv1", {static_cast<int>(idemb_.conv1().size())}, idemb_.conv1(), false);
    store_.add("idemb.conv2", {static_cast<int>(idemb_.conv2().size())}, idemb_.conv2(), false);
    store_.add("idemb.out", {static_cast<int>(idemb_.out_proj().size())}, idemb_.out_proj(),
               false);

    embed_w_ = store_.add_randn("embed.video.w", {pv, e}, rng,
                                1.0 / std::sqrt(static_cast<double>(pv)));
    embed_b_ = store_.add_zeros("embed.video.b", {e});
    unembed_w_ = store_.add_zeros("unembed.w", {e, pv});
    unembed_b_ = store_.add_zeros("unembed.b", {pv});
    role_cond_ = store_.add_randn("role.cond", {e}, rng, 0.02);
    role_noise_ = store_.add_randn("role.noise", {e}, rng, 0.02);
    role_appearance_ = store_.add_randn("role.appearance", {e}, rng, 0.02);
    temb_w1_ = store_.add_randn("temb.w1", {e, e}, rng, 1.0 / std::sqrt(static_cast<double>(e)));
    temb_b1_ = store_.add_zeros("temb.b1", {e});
    temb_w2_ = store_.add_randn("temb.w2", {e, e}, rng, 1.0 / std::sqrt(static_cast<double>(e)));
    temb_b2_ = store_.add_zeros("temb.b2", {e});

    mesh_ = std::make_unique<VolumeEncoder>(store_, "mesh", cfg_, rng);
    cond_w_ = store_.add_randn("cond.w", {2 * e, e}, rng,
                               1.0 / std::sqrt(static_cast<double>(2 * e)));
    cond_b_ = store_.add_zeros("cond.b", {e});

    for (int i = 0; i < cfg_.layers; ++i)
      layers_.push_back(make_layer_weights(store_, "layer" + std::to_string(i), cfg_, rng));

    final_mod_w_ = store_.add_zeros("final.mod.w", {e, 2 * e});
    final_mod_b_ = store_.add_zeros("final.mod.b", {2 * e});

    const int nt = cfg_.latent_frames() / cfg_.p_t;
    const int ny = cfg_.latent_height() / cfg_.p_h;
    const int nx = cfg_.latent_width() / cfg_.p_w;
    pos_video_ = spatial_positions(nt, ny, nx, 0.0, e);
    pos_appearance_ = spatial_positions(1, ny, nx, 0.0, e);
    const PosLayout l = PosLayout::make(e);
    for (int rix = 0; rix < ny * nx; ++rix)
      for (int d = 0; d < l.t_dims; ++d)
        pos_appearance_[static_cast<std::size_t>(rix) * e + d] = 0.0;
  }

  const RunConfig& config() const { return cfg_; }
  const LatentCodec& codec() const { return codec_; }
  const IdentityEmbedder& identity_embedder() const { return idemb_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  void sync_frozen_from_store() {
    const Parameter* p = store_.find("codec.projection");
    if (p) codec_.set_projection(p->tensor.data());
  }

  Tensor mesh_tokens(const StructuralPrior& prior) const {
    if (prior.render.frames != cfg_.frames || prior.render.height != cfg_.height ||
        prior.render.width != cfg_.width)
      throw std::runtime_error("mesh encoder: prior dims do not match video dims");
    return mesh_->encode_volume(prior.render.data, prior.render.frames, prior.render.height,
                                prior.render.width);
  }

  Tensor temb_tensor(int t) const {
    Tensor raw = Tensor::from_data({1, cfg_.embed_dim},
                                   timestep_embedding(t, cfg_.embed_dim, cfg_.t_train));
    Tensor h = silu(add_rowvec(matmul(raw, temb_w1_), temb_b1_));
    return add_rowvec(matmul(h, temb_w2_), temb_b2_);
  }

  Tensor embed_patch_rows(const std::vector<double>& raw, int rows) const {
    Tensor leaf = Tensor::from_data({rows, cfg_.patch_values()}, raw);
    return add_rowvec(matmul(leaf, embed_w_), embed_b_);
  }

  // Channel-concat of (masked stage-1 tokens, mesh tokens), projected to E;
  // masked token rows are zeroed so the conditioning there carries the mesh
  // signal only.
  Tensor assemble_cond_tokens(const R2Conds& c) const {
    const int sv = cfg_.tokens_video();
    if (static_cast<int>(c.token_mask.size()) != sv)
      throw std::runtime_error("assemble: token mask length mismatch");
    Tensor h2 = embed_patch_rows(c.h2_patch_rows, sv);
    std::vector<double> keep(c.token_mask.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = 1.0 - c.token_mask[i];
    h2 = row_scale(h2, keep);
    Tensor mesh = mesh_tokens(c.prior);
    Tensor cond = add_rowvec(matmul(concat_cols(h2, mesh), cond_w_), cond_b_);
    cond = add(cond, Tensor::from_data({sv, cfg_.embed_dim}, pos_video_));
    return add_rowvec(cond, role_cond_);
  }

  Tensor predict_eps_tokens(const std::vector<double>& noisy_patch_rows, int t,
                            const R2Conds& c) const {
    const int sv = cfg_.tokens_video();
    if (static_cast<int>(c.gate.size()) != sv)
      throw std::runtime_error("r2 predict: gate length mismatch");
    Tensor cond = assemble_cond_tokens(c);
    Tensor xv = embed_patch_rows(noisy_patch_rows, sv);
    xv = add(xv, Tensor::from_data({sv, cfg_.embed_dim}, pos_video_));
    xv = add_rowvec(xv, role_noise_);
    Tensor seq = concat_rows({cond, xv});
    std::vector<double> gate_full(static_cast<std::size_t>(sv), 0.0);
    gate_full.insert(gate_full.end(), c.gate.begin(), c.gate.end());

    Tensor temb = temb_tensor(t);
    Tensor r, f;
    if (cfg_.use_aa) {
      Tensor ra = embed_patch_rows(c.appearance.raw, c.appearance.rows);
      ra = add(ra, Tensor::from_data({c.appearance.rows, cfg_.embed_dim}, pos_appearance_));
      r = add_rowvec(ra, role_appearance_);
    }
    if (cfg_.use_ia) f = Tensor::from_data({c.identity_rows, cfg_.embed_dim}, c.identity_tokens);
    for (const auto& lw : layers_)
      seq = transformer_layer(seq, Tensor(), r, f, gate_full, temb, lw, cfg_.heads);

    Tensor noise_rows = slice_rows(seq, sv, 2 * sv);
    Tensor fmods = add_rowvec(matmul(temb, final_mod_w_), final_mod_b_);
    Tensor out = modulate(noise_rows, slice_cols(fmods, 0, cfg_.embed_dim),
                          slice_cols(fmods, cfg_.embed_dim, 2 * cfg_.embed_dim));
    return add_rowvec(matmul(out, unembed_w_), unembed_b_);
  }

  LatentClip denoise(const LatentClip& z_noisy, int t, const R2Conds& c) const {
    NoGradGuard ng;
    Tensor pred = predict_eps_tokens(patchify_raw(z_noisy, cfg_.patch_geometry()), t, c);
    return unpatchify_raw(pred.data(), cfg_.patch_geometry(), z_noisy.frames, z_noisy.height,
                          z_noisy.width, z_noisy.channels, z_noisy.r_t, z_noisy.r_s);
  }

 private:
  RunConfig cfg_;
  LatentCodec codec_;
  IdentityEmbedder idemb_;
  ParamStore store_;
  std::unique_ptr<VolumeEncoder> mesh_;
  std::vector<LayerWeights> layers_;
  Tensor embed_w_, embed_b_, unembed_w_, unembed_b_;
  Tensor role_cond_, role_noise_, role_appearance_;
  Tensor temb_w1_, temb_b1_, temb_w2_, temb_b2_;
  Tensor cond_w_, cond_b_;
  Tensor final_mod_w_, final_mod_b_;
  std::vector<double> pos_video_, pos_appearance_;
};

// builds the full R2 conditioning for one sample
inline R2Conds build_r2_conds(const R2Model& model, const LatentClip& stage1,
                              const StructuralPrior& prior, const VideoClip& ref,
                              const Box& head_box) {
  const RunConfig& cfg = model.config();
  prior.validate();
  R2Conds c;
  c.prior = prior;
  c.mask = build_inpaint_mask(prior.regions, cfg);
  c.token_mask = token_mask_from_cells(c.mask, cfg);
  c.h2_patch_rows = patchify_raw(stage1, cfg.patch_geometry());
  std::vector<Box> face_boxes;
  for (const auto& reg : prior.regions) face_boxes.push_back(reg.face);
  HeadMask hm = build_head_mask(face_boxes, cfg.frames, cfg.height, cfg.width, cfg.mask_margin);
  c.gate = derive_sequential_gate(hm, cfg);
  c.appearance = extract_appearance_tokens(ref, model.codec(), cfg.patch_geometry());
  c.identity_tokens = model.identity_embedder().embed_tokens(ref, 0, head_box);
  c.identity_rows = model.identity_embedder().token_count();
  return c;
}

// Diffusion inpainting with known-region clamping: after every sampler step
// the unmasked cells of the working latent are replaced by the stage-1
// values, so outside-mask preservation holds exactly at every step.
inline LatentClip refine_clip(const R2Model& model, const LatentClip& stage1, const R2Conds& c,
                              const DiffusionSchedule& sched, std::uint64_t seed) {
  if (!c.mask.any()) return stage1;  // nothing to re-synthesize
  Rng rng(mix_seed(seed, 0x5245464Eull));
  DenoiseFn fn = [&](const LatentClip& zt, int t) { return model.denoise(zt, t, c); };
  ClampFn clamp = [&](LatentClip& z, int, bool) {
    for (int f = 0; f < z.frames; ++f)
      for (int y = 0; y < z.height; ++y)
        for (int x = 0; x < z.width; ++x)
          if (!c.mask.at(f, y, x))
            for (int ch = 0; ch < z.channels; ++ch)
              z.at(f, y, x, ch) = stage1.at(f, y, x, ch);
  };
  return sample_latent(fn, stage1, sched, rng, clamp);
}

}  // namespace audcast
