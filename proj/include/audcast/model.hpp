#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/clip.hpp"
#include "audcast/codec.hpp"
#include "audcast/conditioning.hpp"
#include "audcast/config.hpp"
#include "audcast/rng.hpp"
#include "audcast/tensor.hpp"

namespace audcast {

// ---------------------------------------------------------------------------
// positional encodings

// Splits the embedding into (time, y, x) sinusoid banks; audio tokens use the
// same time bank (zero elsewhere) so temporally aligned video and audio tokens
// share features the attention can key on.
struct PosLayout {
  int t_dims = 0, y_dims = 0, x_dims = 0;

  static PosLayout make(int embed_dim) {
    PosLayout l;
    l.t_dims = 2 * static_cast<int>(std::lround(embed_dim * 3.0 / 16.0));
    int remaining = embed_dim - l.t_dims;
    l.y_dims = (remaining / 2) & ~1;
    l.x_dims = remaining - l.y_dims;
    return l;
  }
};

inline void sinusoid_features(double pos, int dims, double* out) {
  const int pairs = dims / 2;
  for (int j = 0; j < pairs; ++j) {
    const double omega = std::exp(-std::log(10000.0) * static_cast<double>(j) / pairs);
    out[2 * j] = std::sin(pos * omega);
    out[2 * j + 1] = std::cos(pos * omega);
  }
}

// Factorized (t, y, x) position rows for one latent-frame block layout; t is
// measured in latent-frame units so motion tokens take negative positions and
// audio tokens (at pixel-frame rate) land on fractional ones.
inline std::vector<double> spatial_positions(int nt, int ny, int nx, double t0, int embed_dim) {
  const PosLayout l = PosLayout::make(embed_dim);
  std::vector<double> out(static_cast<std::size_t>(nt) * ny * nx * embed_dim, 0.0);
  std::size_t row = 0;
  for (int t = 0; t < nt; ++t)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++row) {
        double* p = &out[row * embed_dim];
        sinusoid_features(t0 + t, l.t_dims, p);
        sinusoid_features(y, l.y_dims, p + l.t_dims);
        sinusoid_features(x, l.x_dims, p + l.t_dims + l.y_dims);
      }
  return out;
}

inline std::vector<double> audio_positions(int frames, double frames_per_latent,
                                           int embed_dim) {
  const PosLayout l = PosLayout::make(embed_dim);
  std::vector<double> out(static_cast<std::size_t>(frames) * embed_dim, 0.0);
  for (int i = 0; i < frames; ++i)
    sinusoid_features(static_cast<double>(i) / frames_per_latent, l.t_dims,
                      &out[static_cast<std::size_t>(i) * embed_dim]);
  return out;
}

// deterministic sinusoidal timestep code; raw, before the shared MLP
inline std::vector<double> timestep_embedding(int t, int embed_dim, int t_train) {
  if (t < 0 || t >= t_train)
    throw std::runtime_error("timestep_embedding: t=" + std::to_string(t) +
                             " outside [0," + std::to_string(t_train) + ")");
  std::vector<double> out(static_cast<std::size_t>(embed_dim), 0.0);
  const int half = embed_dim / 2;
  for (int i = 0; i < half; ++i) {
    const double omega = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    out[static_cast<std::size_t>(i)] = std::sin(t * omega);
    out[static_cast<std::size_t>(half + i)] = std::cos(t * omega);
  }
  return out;
}

// ---------------------------------------------------------------------------
// attention

// standard multi-head scaled dot-product term: softmax(Q K^T / sqrt(c)) V
inline Tensor attention_term(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const int e = q.dim(1);
  if (k.dim(1) != e || v.dim(1) != e)
    throw std::runtime_error("attention: embedding width mismatch " + shape_str(q.shape()) +
                             " / " + shape_str(k.shape()) + " / " + shape_str(v.shape()));
  if (e % heads) throw std::runtime_error("attention: heads do not divide embedding");
  const int c = e / heads;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * c, (h + 1) * c);
    Tensor kh = slice_cols(k, h * c, (h + 1) * c);
    Tensor vh = slice_cols(v, h * c, (h + 1) * c);
    Tensor attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_c));
    outs.push_back(matmul(attn, vh));
  }
  return heads == 1 ? outs[0] : concat_cols_list(outs);
}

struct LayerWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor aa_wk, aa_wv;  // appearance adapter, value side zero-initialized
  Tensor ia_wk, ia_wv;  // identity adapter, value side zero-initialized
  Tensor xq, xk, xv;    // optional audio-attention projections
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Tensor mod_w, mod_b;  // timestep modulation table: [E, 4E] -> scale/shift pairs
  bool has_aa = false, has_ia = false, has_xattn = false, has_xproj = false;
};

inline LayerWeights make_layer_weights(ParamStore& store, const std::string& prefix,
                                       const RunConfig& cfg, Rng& rng) {
  const int e = cfg.embed_dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(e));
  LayerWeights w;
  w.wq = store.add_randn(prefix + ".attn.wq", {e, e}, rng, s);
  w.bq = store.add_zeros(prefix + ".attn.bq", {e});
  w.wk = store.add_randn(prefix + ".attn.wk", {e, e}, rng, s);
  w.bk = store.add_zeros(prefix + ".attn.bk", {e});
  w.wv = store.add_randn(prefix + ".attn.wv", {e, e}, rng, s);
  w.bv = store.add_zeros(prefix + ".attn.bv", {e});
  w.wo = store.add_randn(prefix + ".attn.wo", {e, e}, rng, s);
  w.bo = store.add_zeros(prefix + ".attn.bo", {e});
  if (cfg.use_aa) {
    w.aa_wk = store.add_randn(prefix + ".aa.wk", {e, e}, rng, s);
    w.aa_wv = store.add_zeros(prefix + ".aa.wv", {e, e});
    w.has_aa = true;
  }
  if (cfg.use_ia) {
    w.ia_wk = store.add_randn(prefix + ".ia.wk", {e, e}, rng, s);
    w.ia_wv = store.add_zeros(prefix + ".ia.wv", {e, e});
    w.has_ia = true;
  }
  w.has_xattn = cfg.use_audio_xattn;
  if (cfg.use_audio_xattn && cfg.use_audio_proj) {
    w.xq = store.add_randn(prefix + ".xattn.wq", {e, e}, rng, s);
    w.xk = store.add_randn(prefix + ".xattn.wk", {e, e}, rng, s);
    w.xv = store.add_randn(prefix + ".xattn.wv", {e, e}, rng, s);
    w.has_xproj = true;
  }
  w.mlp_w1 = store.add_randn(prefix + ".mlp.w1", {e, 4 * e}, rng, s);
  w.mlp_b1 = store.add_zeros(prefix + ".mlp.b1", {4 * e});
  w.mlp_w2 = store.add_randn(prefix + ".mlp.w2", {4 * e, e}, rng,
                             1.0 / std::sqrt(static_cast<double>(4 * e)));
  w.mlp_b2 = store.add_zeros(prefix + ".mlp.b2", {e});
  w.mod_w = store.add_zeros(prefix + ".mod.w", {e, 4 * e});
  w.mod_b = store.add_zeros(prefix + ".mod.b", {4 * e});
  return w;
}

// Eq.-style three-term self-attention over the concatenated sequence:
//   softmax(QK^T/sqrt(c)) V
// + softmax(Q (R Wk_R)^T / sqrt(c)) R Wv_R                (appearance adapter)
// + gate . softmax(Q (F Wk_F)^T / sqrt(c)) F Wv_F          (identity adapter)
// The gate scales the identity term per query token; R and F are the
// appearance and identity token blocks.
inline Tensor adapter_self_attention(const Tensor& x, const Tensor& r, const Tensor& f,
                                     const std::vector<double>& gate, const LayerWeights& w,
                                     int heads) {
  if (static_cast<int>(gate.size()) != x.dim(0))
    throw std::runtime_error("adapter_self_attention: gate length " +
                             std::to_string(gate.size()) + " does not match sequence " +
                             std::to_string(x.dim(0)));
  Tensor q = add_rowvec(matmul(x, w.wq), w.bq);
  Tensor k = add_rowvec(matmul(x, w.wk), w.bk);
  Tensor v = add_rowvec(matmul(x, w.wv), w.bv);
  Tensor out = attention_term(q, k, v, heads);
  if (w.has_aa) {
    if (!r.defined()) throw std::runtime_error("adapter_self_attention: appearance tokens missing");
    out = add(out, attention_term(q, matmul(r, w.aa_wk), matmul(r, w.aa_wv), heads));
  }
  if (w.has_ia) {
    if (!f.defined()) throw std::runtime_error("adapter_self_attention: identity tokens missing");
    out = add(out, row_scale(attention_term(q, matmul(f, w.ia_wk), matmul(f, w.ia_wv), heads),
                             gate));
  }
  return add_rowvec(matmul(out, w.wo), w.bo);
}

// Eq.-style audio cross-attention, taken literally: the audio tokens serve as
// both key and value, the gate selects head-region queries, and the result is
// added residually so gate-0 tokens pass through unchanged.
inline Tensor audio_cross_attention(const Tensor& x, const Tensor& audio,
                                    const std::vector<double>& gate, const LayerWeights& w,
                                    int heads) {
  if (!audio.defined() || audio.dim(0) == 0)
    throw std::runtime_error("audio_cross_attention: audio tokens missing");
  if (audio.dim(1) != x.dim(1))
    throw std::runtime_error("audio_cross_attention: embedding width mismatch " +
                             shape_str(x.shape()) + " vs " + shape_str(audio.shape()));
  Tensor ones = Tensor::full({x.dim(1)}, 1.0);
  Tensor zeros = Tensor::zeros({x.dim(1)});
  Tensor q = layernorm(x, ones, zeros);
  Tensor kk = audio, vv = audio;
  if (w.has_xproj) {
    q = matmul(q, w.xq);
    kk = matmul(audio, w.xk);
    vv = matmul(audio, w.xv);
  }
  return add(x, row_scale(attention_term(q, kk, vv, heads), gate));
}

// timestep-modulated layernorm: ln(x) * (1 + scale) + shift
inline Tensor modulate(const Tensor& x, const Tensor& scale_vec, const Tensor& shift_vec) {
  Tensor ones = Tensor::full({x.dim(1)}, 1.0);
  Tensor zeros = Tensor::zeros({x.dim(1)});
  Tensor h = layernorm(x, ones, zeros);
  return add_rowvec(mul_rowvec(h, add_scalar(scale_vec, 1.0)), shift_vec);
}

// One MM-DiT style block: modulated norm -> adapter self-attention -> residual
// -> gated audio cross-attention -> modulated norm -> MLP -> residual.
inline Tensor transformer_layer(const Tensor& x, const Tensor& audio, const Tensor& r,
                                const Tensor& f, const std::vector<double>& gate,
                                const Tensor& temb, const LayerWeights& w, int heads) {
  const int e = x.dim(1);
  Tensor mods = add_rowvec(matmul(temb, w.mod_w), w.mod_b);  // [1, 4E]
  Tensor s1 = slice_cols(mods, 0, e);
  Tensor h1 = slice_cols(mods, e, 2 * e);
  Tensor s2 = slice_cols(mods, 2 * e, 3 * e);
  Tensor h2 = slice_cols(mods, 3 * e, 4 * e);

  Tensor out = add(x, adapter_self_attention(modulate(x, s1, h1), r, f, gate, w, heads));
  if (w.has_xattn && audio.defined()) out = audio_cross_attention(out, audio, gate, w, heads);
  return add(out, mlp2(modulate(out, s2, h2), w.mlp_w1, w.mlp_b1, w.mlp_w2, w.mlp_b2));
}

// ---------------------------------------------------------------------------
// conditioning pack shared by training and sampling

struct CondPack {
  HeadMask mask;                       // pixel head mask (may be all-zero)
  std::vector<double> gate;            // per video token
  AppearanceTokens appearance;         // raw patch rows for R
  std::vector<double> identity_tokens; // [9, E] rows from the frozen embedder
  int identity_rows = 0;
  AudioFeatures audio;                 // 12-layer feature stack for the chunk
  MotionTokens motion;                 // previous-frame tokens (may be absent)
};

// ---------------------------------------------------------------------------

class H2Model {
 public:
  H2Model(const RunConfig& cfg, std::uint64_t init_seed)
      : cfg_(cfg), codec_(cfg.codec_config()), idemb_(cfg.embed_dim) {
    cfg_.validate();
    Rng rng(mix_seed(init_seed, 0x4832));  // "H2"
    const int e = cfg_.embed_dim;
    const int pv = cfg_.patch_values();

    // frozen pieces shipped with the checkpoint
    store_.add("codec.projection", {cfg_.c_z, codec_.block_size()}, codec_.projection(), false);
    store_.add("idemb.conv1", {static_cast<int>(idemb_.conv1().size())}, idemb_.conv1(), false);
    store_.add("idemb.conv2", {static_cast<int>(idemb_.conv2().size())}, idemb_.conv2(), false);
    store_.add("idemb.out", {static_cast<int>(idemb_.out_proj().size())}, idemb_.out_proj(),
               false);

    embed_w_ = store_.add_randn("embed.video.w", {pv, e}, rng, 1.0 / std::sqrt(static_cast<double>(pv)));
    embed_b_ = store_.add_zeros("embed.video.b", {e});
    unembed_w_ = store_.add_zeros("unembed.w", {e, pv});
    unembed_b_ = store_.add_zeros("unembed.b", {pv});

    role_video_ = store_.add_randn("role.video", {e}, rng, 0.02);
    role_motion_ = store_.add_randn("role.motion", {e}, rng, 0.02);
    role_audio_ = store_.add_randn("role.audio", {e}, rng, 0.02);
    role_appearance_ = store_.add_randn("role.appearance", {e}, rng, 0.02);

    temb_w1_ = store_.add_randn("temb.w1", {e, e}, rng, 1.0 / std::sqrt(static_cast<double>(e)));
    temb_b1_ = store_.add_zeros("temb.b1", {e});
    temb_w2_ = store_.add_randn("temb.w2", {e, e}, rng, 1.0 / std::sqrt(static_cast<double>(e)));
    temb_b2_ = store_.add_zeros("temb.b2", {e});

    if (uses_audio()) {
      audio_logits_ = store_.add_zeros("audio.logits", {cfg_.audio_layers});
      audio_w_ = store_.add_randn("audio.w", {cfg_.d_audio, e}, rng,
                                  1.0 / std::sqrt(static_cast<double>(cfg_.d_audio)));
      audio_b_ = store_.add_zeros("audio.b", {e});
    }

    if (cfg_.use_hpe) {
      hpe_ = std::make_unique<VolumeEncoder>(store_, "hpe", cfg_, rng);
      fuse_w1_ = store_.add_randn("fuse.w1", {2 * e, 4 * e}, rng,
                                  1.0 / std::sqrt(static_cast<double>(2 * e)));
      fuse_b1_ = store_.add_zeros("fuse.b1", {4 * e});
      fuse_w2_ = store_.add_randn("fuse.w2", {4 * e, e}, rng,
                                  1.0 / std::sqrt(static_cast<double>(4 * e)));
      fuse_b2_ = store_.add_zeros("fuse.b2", {e});
    }

    for (int i = 0; i < cfg_.layers; ++i)
      layers_.push_back(make_layer_weights(store_, "layer" + std::to_string(i), cfg_, rng));

    final_mod_w_ = store_.add_zeros("final.mod.w", {e, 2 * e});
    final_mod_b_ = store_.add_zeros("final.mod.b", {2 * e});

    const int nt = cfg_.latent_frames() / cfg_.p_t;
    const int ny = cfg_.latent_height() / cfg_.p_h;
    const int nx = cfg_.latent_width() / cfg_.p_w;
    pos_video_ = spatial_positions(nt, ny, nx, 0.0, e);
    const int mt = cfg_.motion_latent_frames() / cfg_.p_t;
    if (mt > 0) pos_motion_ = spatial_positions(mt, ny, nx, -static_cast<double>(mt * cfg_.p_t), e);
    pos_audio_ = audio_positions(cfg_.audio_frames(), static_cast<double>(cfg_.r_t), e);
    // appearance rows keep spatial features only; the reference is timeless
    pos_appearance_ = spatial_positions(1, ny, nx, 0.0, e);
    const PosLayout l = PosLayout::make(e);
    for (int rix = 0; rix < ny * nx; ++rix)
      for (int d = 0; d < l.t_dims; ++d)
        pos_appearance_[static_cast<std::size_t>(rix) * e + d] = 0.0;
  }

  const RunConfig& config() const { return cfg_; }
  RunConfig& mutable_config() { return cfg_; }
  const LatentCodec& codec() const { return codec_; }
  const IdentityEmbedder& identity_embedder() const { return idemb_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const std::vector<LayerWeights>& layer_weights() const { return layers_; }
  bool uses_audio() const { return cfg_.use_audio_xattn || audio_in_sequence_; }

  // After loading a checkpoint the codec projection must match the table.
  void sync_frozen_from_store() {
    const Parameter* p = store_.find("codec.projection");
    if (p) codec_.set_projection(p->tensor.data());
  }

  int motion_token_rows() const {
    return (cfg_.motion_latent_frames() / cfg_.p_t) * cfg_.tokens_per_latent_frame_block();
  }

  // builds every conditioning stream of one sample
  CondPack build_conds(const VideoClip& ref, const Box& head_box, const AudioFeatures& audio,
                       const std::vector<Box>& face_boxes_per_frame,
                       const MotionTokens& motion) const {
    CondPack c;
    c.mask = build_head_mask(face_boxes_per_frame, cfg_.frames, cfg_.height, cfg_.width,
                             cfg_.mask_margin);
    c.gate = derive_sequential_gate(c.mask, cfg_);
    c.appearance = extract_appearance_tokens(ref, codec_, cfg_.patch_geometry());
    c.identity_tokens = idemb_.embed_tokens(ref, 0, head_box);
    c.identity_rows = idemb_.token_count();
    c.audio = audio;
    c.motion = motion;
    return c;
  }

  // timestep code through the shared MLP -> [1, E]
  Tensor temb_tensor(int t) const {
    Tensor raw = Tensor::from_data({1, cfg_.embed_dim},
                                   timestep_embedding(t, cfg_.embed_dim, cfg_.t_train));
    Tensor h = silu(add_rowvec(matmul(raw, temb_w1_), temb_b1_));
    return add_rowvec(matmul(h, temb_w2_), temb_b2_);
  }

  Tensor embed_patch_rows(const std::vector<double>& raw, int rows) const {
    const int pv = cfg_.patch_values();
    Tensor leaf = Tensor::from_data({rows, pv}, raw);
    return add_rowvec(matmul(leaf, embed_w_), embed_b_);
  }

  Tensor appearance_tokens_embedded(const CondPack& c) const {
    Tensor r = embed_patch_rows(c.appearance.raw, c.appearance.rows);
    r = add(r, Tensor::from_data({c.appearance.rows, cfg_.embed_dim}, pos_appearance_));
    return add_rowvec(r, role_appearance_);
  }

  Tensor identity_tokens_tensor(const CondPack& c) const {
    return Tensor::from_data({c.identity_rows, cfg_.embed_dim}, c.identity_tokens);
  }

  Tensor audio_tokens_embedded(const CondPack& c) const {
    Tensor a = project_audio(c.audio, audio_logits_, audio_w_, audio_b_, cfg_.audio_layers);
    if (a.dim(0) != cfg_.audio_frames())
      throw std::runtime_error("audio tokens: expected " + std::to_string(cfg_.audio_frames()) +
                               " frames, got " + std::to_string(a.dim(0)));
    a = add(a, Tensor::from_data({a.dim(0), cfg_.embed_dim}, pos_audio_));
    return add_rowvec(a, role_audio_);
  }

  // Full denoiser pass over patch rows of the noisy latent. Returns predicted
  // noise as patch rows [S^v, patch_values]; motion rows are consumed as
  // context and never returned.
  Tensor predict_eps_tokens(const std::vector<double>& noisy_patch_rows, int t,
                            const CondPack& conds) const {
    const int sv = cfg_.tokens_video();
    if (uses_audio() && conds.audio.frames == 0)
      throw std::runtime_error("denoise: audio conditioning missing");
    if (cfg_.use_ia && conds.identity_rows == 0)
      throw std::runtime_error("denoise: identity tokens missing");
    if (cfg_.use_aa && conds.appearance.rows == 0)
      throw std::runtime_error("denoise: appearance tokens missing");
    if (static_cast<int>(conds.gate.size()) != sv)
      throw std::runtime_error("denoise: gate length mismatch");

    Tensor xv = embed_patch_rows(noisy_patch_rows, sv);
    if (cfg_.use_hpe) {
      Tensor tp = hpe_->encode_mask(conds.mask);
      xv = mlp2(concat_cols(tp, xv), fuse_w1_, fuse_b1_, fuse_w2_, fuse_b2_);
    }
    xv = add(xv, Tensor::from_data({sv, cfg_.embed_dim}, pos_video_));
    xv = add_rowvec(xv, role_video_);

    std::vector<Tensor> seq_parts;
    std::vector<double> gate_full;
    int motion_rows = 0;
    if (cfg_.use_mt && conds.motion.present) {
      Tensor xm = embed_patch_rows(conds.motion.raw, conds.motion.rows);
      xm = add(xm, Tensor::from_data({conds.motion.rows, cfg_.embed_dim}, pos_motion_));
      xm = add_rowvec(xm, role_motion_);
      seq_parts.push_back(xm);
      motion_rows = conds.motion.rows;
      gate_full.insert(gate_full.end(), static_cast<std::size_t>(motion_rows), 0.0);
    }
    seq_parts.push_back(xv);
    gate_full.insert(gate_full.end(), conds.gate.begin(), conds.gate.end());

    Tensor audio_tokens;
    if (uses_audio()) {
      audio_tokens = audio_tokens_embedded(conds);
      seq_parts.push_back(audio_tokens);
      gate_full.insert(gate_full.end(), static_cast<std::size_t>(audio_tokens.dim(0)), 0.0);
    }

    Tensor seq = seq_parts.size() == 1 ? seq_parts[0] : concat_rows(seq_parts);
    Tensor temb = temb_tensor(t);
    Tensor r = cfg_.use_aa ? appearance_tokens_embedded(conds) : Tensor();
    Tensor f = cfg_.use_ia ? identity_tokens_tensor(conds) : Tensor();
    for (const auto& lw : layers_)
      seq = transformer_layer(seq, audio_tokens, r, f, gate_full, temb, lw, cfg_.heads);

    Tensor video_rows = slice_rows(seq, motion_rows, motion_rows + sv);
    Tensor fmods = add_rowvec(matmul(temb, final_mod_w_), final_mod_b_);
    Tensor out = modulate(video_rows, slice_cols(fmods, 0, cfg_.embed_dim),
                          slice_cols(fmods, cfg_.embed_dim, 2 * cfg_.embed_dim));
    return add_rowvec(matmul(out, unembed_w_), unembed_b_);
  }

  // inference convenience: latent in, predicted noise out
  LatentClip denoise(const LatentClip& z_noisy, int t, const CondPack& conds) const {
    NoGradGuard ng;
    Tensor pred = predict_eps_tokens(patchify_raw(z_noisy, cfg_.patch_geometry()), t, conds);
    return unpatchify_raw(pred.data(), cfg_.patch_geometry(), z_noisy.frames, z_noisy.height,
                          z_noisy.width, z_noisy.channels, z_noisy.r_t, z_noisy.r_s);
  }

 private:
  RunConfig cfg_;
  LatentCodec codec_;
  IdentityEmbedder idemb_;
  ParamStore store_;
  std::unique_ptr<VolumeEncoder> hpe_;
  std::vector<LayerWeights> layers_;
  Tensor embed_w_, embed_b_, unembed_w_, unembed_b_;
  Tensor role_video_, role_motion_, role_audio_, role_appearance_;
  Tensor temb_w1_, temb_b1_, temb_w2_, temb_b2_;
  Tensor audio_logits_, audio_w_, audio_b_;
  Tensor fuse_w1_, fuse_b1_, fuse_w2_, fuse_b2_;
  Tensor final_mod_w_, final_mod_b_;
  std::vector<double> pos_video_, pos_motion_, pos_audio_, pos_appearance_;
  bool audio_in_sequence_ = true;
};

}  // namespace audcast
