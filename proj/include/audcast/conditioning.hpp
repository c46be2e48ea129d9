#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/clip.hpp"
#include "audcast/codec.hpp"
#include "audcast/config.hpp"
#include "audcast/rng.hpp"
#include "audcast/tensor.hpp"

namespace audcast {

using HeadMask = MaskVolume;

// Axis-aligned half-open box in pixel coordinates.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }

  Box dilated(double margin_frac) const {
    const double mx = margin_frac * width(), my = margin_frac * height();
    return Box{x0 - mx, y0 - my, x1 + mx, y1 + my};
  }

  Box clamped(int w, int h) const {
    return Box{std::max(0.0, x0), std::max(0.0, y0), std::min<double>(w, x1),
               std::min<double>(h, y1)};
  }

  bool contains_pixel(int x, int y) const {
    const double cx = x + 0.5, cy = y + 0.5;
    return cx >= x0 && cx < x1 && cy >= y0 && cy < y1;
  }
};

inline std::string box_str(const Box& b) {
  std::ostringstream os;
  os.precision(17);
  os << b.x0 << "," << b.y0 << "," << b.x1 << "," << b.y1;
  return os.str();
}

inline Box parse_box(const std::string& s) {
  auto v = parse_double_list(s);
  if (v.size() != 4) throw std::runtime_error("malformed box: " + s);
  return Box{v[0], v[1], v[2], v[3]};
}

// Union of the per-frame face boxes, dilated by a relative margin, rasterized
// once and replicated to every frame: one static plane covering the head
// movements across the whole clip.
inline HeadMask build_head_mask(const std::vector<Box>& boxes_per_frame, int frames, int height,
                                int width, double margin_frac = 0.1) {
  if (static_cast<int>(boxes_per_frame.size()) != 0 &&
      static_cast<int>(boxes_per_frame.size()) != frames)
    throw std::runtime_error("build_head_mask: need one box per frame or none");
  std::vector<Box> dilated;
  for (const auto& b : boxes_per_frame) {
    if (b.empty()) continue;
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > width || b.y1 > height)
      throw std::runtime_error("build_head_mask: box out of frame bounds");
    dilated.push_back(b.dilated(margin_frac).clamped(width, height));
  }
  HeadMask m(frames, height, width);
  if (dilated.empty()) return m;  // headless sample
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      bool inside = false;
      for (const auto& b : dilated) inside = inside || b.contains_pixel(x, y);
      if (inside)
        for (int f = 0; f < frames; ++f) m.at(f, y, x) = 1;
    }
  return m;
}

// Sequential gate over video tokens: gate=1 iff the fraction of the token's
// pixel footprint covered by the mask reaches the threshold. The fraction is
// computed at pixel granularity so a box merely touching a patch corner does
// not gate the whole token.
inline std::vector<double> derive_sequential_gate(const HeadMask& mask, const RunConfig& cfg) {
  if (mask.frames != cfg.frames || mask.height != cfg.height || mask.width != cfg.width)
    throw std::runtime_error("derive_sequential_gate: mask dims do not match configured video");
  const int nt = cfg.latent_frames() / cfg.p_t;
  const int ny = cfg.latent_height() / cfg.p_h;
  const int nx = cfg.latent_width() / cfg.p_w;
  const int ft = cfg.p_t * cfg.r_t;   // pixel frames per token
  const int fy = cfg.p_h * cfg.r_s;
  const int fx = cfg.p_w * cfg.r_s;
  std::vector<double> gate(static_cast<std::size_t>(nt) * ny * nx, 0.0);
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp) {
        long long covered = 0;
        for (int f = tp * ft; f < (tp + 1) * ft; ++f)
          for (int y = yp * fy; y < (yp + 1) * fy; ++y)
            for (int x = xp * fx; x < (xp + 1) * fx; ++x) covered += mask.at(f, y, x);
        const double frac =
            static_cast<double>(covered) / (static_cast<double>(ft) * fy * fx);
        gate[(static_cast<std::size_t>(tp) * ny + yp) * nx + xp] =
            frac >= cfg.gate_threshold ? 1.0 : 0.0;
      }
  return gate;
}

// Oracle-style overlap fraction for a single token, exposed for tests.
inline double token_overlap_fraction(const HeadMask& mask, const RunConfig& cfg, int token) {
  const int ny = cfg.latent_height() / cfg.p_h;
  const int nx = cfg.latent_width() / cfg.p_w;
  const int tp = token / (ny * nx);
  const int yp = (token / nx) % ny;
  const int xp = token % nx;
  const int ft = cfg.p_t * cfg.r_t, fy = cfg.p_h * cfg.r_s, fx = cfg.p_w * cfg.r_s;
  long long covered = 0;
  for (int f = tp * ft; f < (tp + 1) * ft; ++f)
    for (int y = yp * fy; y < (yp + 1) * fy; ++y)
      for (int x = xp * fx; x < (xp + 1) * fx; ++x) covered += mask.at(f, y, x);
  return static_cast<double>(covered) / (static_cast<double>(ft) * fy * fx);
}

// Downsampling 3-D conv stack whose strides mirror the codec, followed by a
// patch embedding; shared architecture between the head position encoder and
// the mesh encoder.
class VolumeEncoder {
 public:
  VolumeEncoder(ParamStore& store, const std::string& prefix, const RunConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    // factor spatial stride into halvings: first conv carries the temporal
    // stride, later convs are spatial only
    int remaining = cfg.r_s;
    int st = cfg.r_t;
    int in_c = 1;
    int idx = 0;
    while (true) {
      const int ss = remaining >= 2 ? 2 : 1;
      const int out_c = cfg.enc_channels;
      const double stddev = 1.0 / std::sqrt(static_cast<double>(in_c * st * ss * ss));
      ConvSpec spec;
      spec.w = store.add_randn(prefix + ".conv" + std::to_string(idx) + ".w",
                               {out_c, in_c, st, ss, ss}, rng, stddev);
      spec.b = store.add_zeros(prefix + ".conv" + std::to_string(idx) + ".b", {out_c});
      spec.sd = st;
      spec.sh = ss;
      spec.sw = ss;
      convs_.push_back(spec);
      remaining /= ss;
      in_c = out_c;
      st = 1;
      ++idx;
      if (remaining <= 1) break;
    }
    const int pv = cfg.p_t * cfg.p_h * cfg.p_w * cfg.enc_channels;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(pv));
    embed_w_ = store.add_randn(prefix + ".embed.w", {pv, cfg.embed_dim}, rng, stddev);
    embed_b_ = store.add_zeros(prefix + ".embed.b", {cfg.embed_dim});
  }

  // volume: [frames, H, W] binary or real plane stack
  Tensor encode_volume(const std::vector<double>& volume, int frames, int height,
                       int width) const {
    if (frames != cfg_.frames || height != cfg_.height || width != cfg_.width)
      throw std::runtime_error("volume encoder: input dims do not match video dims");
    Tensor x = Tensor::from_data({1, frames, height, width}, volume);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const auto& c = convs_[i];
      x = conv3d_down(x, c.w, c.b, c.sd, c.sh, c.sw);
      if (i + 1 < convs_.size()) x = gelu(x);
    }
    Tensor tok = patchify_volume(x, cfg_.p_t, cfg_.p_h, cfg_.p_w);
    Tensor out = add_rowvec(matmul(tok, embed_w_), embed_b_);
    if (out.dim(0) != cfg_.tokens_video())
      throw std::runtime_error("volume encoder produced " + std::to_string(out.dim(0)) +
                               " tokens, expected " + std::to_string(cfg_.tokens_video()));
    return out;
  }

  Tensor encode_mask(const HeadMask& m) const {
    std::vector<double> vol(m.data.size());
    for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = m.data[i] ? 1.0 : 0.0;
    return encode_volume(vol, m.frames, m.height, m.width);
  }

 private:
  struct ConvSpec {
    Tensor w, b;
    int sd = 1, sh = 1, sw = 1;
  };
  RunConfig cfg_;
  std::vector<ConvSpec> convs_;
  Tensor embed_w_, embed_b_;
};

// Two-layer GELU MLP used for the position-fusion step and transformer blocks.
inline Tensor mlp2(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                   const Tensor& b2) {
  return add_rowvec(matmul(gelu(add_rowvec(matmul(x, w1), b1)), w2), b2);
}

// Motion tokens: raw patch rows from the previous M frames through the codec
// path; embedding happens inside the denoiser with the shared video embedding.
struct MotionTokens {
  bool present = false;
  int rows = 0;
  int cols = 0;
  std::vector<double> raw;
};

inline MotionTokens build_motion_tokens(const VideoClip& prev, const LatentCodec& codec,
                                        const PatchGeometry& g, int expected_m) {
  if (expected_m == 0) return MotionTokens{};
  if (prev.frames != expected_m)
    throw std::runtime_error("build_motion_tokens: got " + std::to_string(prev.frames) +
                             " frames, expected M=" + std::to_string(expected_m));
  LatentClip z = codec.encode(prev);
  MotionTokens mt;
  mt.present = true;
  mt.raw = patchify_raw(z, g);
  mt.rows = g.token_count(z);
  mt.cols = g.patch_values(z.channels);
  return mt;
}

// Whole-sequence dropout: with probability p the entire token block is
// replaced by the absent flag, matching the first-inference condition where
// no prior frames exist.
inline MotionTokens dropout_motion(const MotionTokens& mt, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::runtime_error("dropout_motion: p outside [0,1]");
  if (!mt.present) return mt;
  if (rng.uniform() < p) return MotionTokens{};
  return mt;
}

// Softmax-weighted combination of the 12 feature layers followed by a linear
// projection to the embedding width. S^a equals the feature frame count.
inline Tensor project_audio(const AudioFeatures& feats, const Tensor& layer_logits,
                            const Tensor& w, const Tensor& b, int expected_layers = 12) {
  if (feats.layers != expected_layers)
    throw std::runtime_error("project_audio: feature stack has " + std::to_string(feats.layers) +
                             " layers, expected " + std::to_string(expected_layers));
  if (w.dim(0) != feats.dim)
    throw std::runtime_error("project_audio: projection expects " + std::to_string(w.dim(0)) +
                             " feature dims, features carry " + std::to_string(feats.dim));
  std::vector<Tensor> planes;
  planes.reserve(static_cast<std::size_t>(feats.layers));
  for (int l = 0; l < feats.layers; ++l) {
    std::vector<double> plane(static_cast<std::size_t>(feats.frames) * feats.dim);
    std::copy_n(&feats.data[static_cast<std::size_t>(l) * feats.frames * feats.dim],
                plane.size(), plane.begin());
    planes.push_back(Tensor::from_data({feats.frames, feats.dim}, std::move(plane)));
  }
  Tensor combined = weighted_sum(planes, softmax_rows(layer_logits));
  return add_rowvec(matmul(combined, w), b);
}

// Appearance tokens: the reference frame through the codec and patch split of
// the video-token path (temporal replication makes the single frame fit the
// causal block and patch extents). Returns raw patch rows.
struct AppearanceTokens {
  int rows = 0;
  int cols = 0;
  std::vector<double> raw;
};

inline AppearanceTokens extract_appearance_tokens(const VideoClip& ref, const LatentCodec& codec,
                                                  const PatchGeometry& g) {
  if (ref.frames != 1)
    throw std::runtime_error("extract_appearance_tokens: reference must be a single frame");
  LatentClip z1 = codec.encode_single_frame(ref);
  LatentClip rep(g.p_t, z1.height, z1.width, z1.channels, z1.r_t, z1.r_s);
  const std::size_t plane = z1.data.size();
  for (int f = 0; f < g.p_t; ++f)
    std::copy(z1.data.begin(), z1.data.end(),
              rep.data.begin() + static_cast<std::ptrdiff_t>(f * plane));
  AppearanceTokens r;
  r.raw = patchify_raw(rep, g);
  r.rows = g.token_count(rep);
  r.cols = g.patch_values(rep.channels);
  return r;
}

// Frozen stand-in for a pretrained face embedder: crop, bilinear resize to a
// fixed grid, two seeded tanh convolutions, per-cell tokens, fixed linear map
// to the embedding width, unit-norm rows.
class IdentityEmbedder {
 public:
  IdentityEmbedder(int embed_dim, std::uint64_t seed = 0x1DF0CE) : embed_dim_(embed_dim) {
    Rng rng(mix_seed(seed, 0xFACE));
    auto fill = [&](std::vector<double>& v, double stddev) {
      for (auto& d : v) d = rng.normal(0.0, stddev);
    };
    w1_.assign(static_cast<std::size_t>(c1_) * 3 * 3 * 3, 0.0);
    fill(w1_, 1.0 / std::sqrt(27.0));
    w2_.assign(static_cast<std::size_t>(c2_) * c1_ * 3 * 3, 0.0);
    fill(w2_, 1.0 / std::sqrt(9.0 * c1_));
    wout_.assign(static_cast<std::size_t>(c2_) * embed_dim_, 0.0);
    fill(wout_, 1.0 / std::sqrt(static_cast<double>(c2_)));
    // local color projection; cell-mean colors carry most of the identity
    // signal at desk resolution, so they get a stronger gain than the convs
    wcol_.assign(static_cast<std::size_t>(3) * embed_dim_, 0.0);
    fill(wcol_, 2.0 / std::sqrt(3.0));
    // baseline response to a neutral gray crop; subtracting it keeps the
    // shared face layout from swamping the identity-specific deviations
    baseline_.assign(static_cast<std::size_t>(9) * embed_dim_, 0.0);
    VideoClip gray(1, 16, 16, 3);
    std::fill(gray.data.begin(), gray.data.end(), 0.5);
    baseline_ = raw_tokens(gray, 0, Box{0, 0, 16, 16});
  }

  int token_count() const { return 9; }
  int dim() const { return embed_dim_; }
  const std::vector<double>& conv1() const { return w1_; }
  const std::vector<double>& conv2() const { return w2_; }
  const std::vector<double>& out_proj() const { return wout_; }

  // tokens: [9, embed_dim], rows L2-normalized
  std::vector<double> embed_tokens(const VideoClip& frame, int frame_index,
                                   const Box& head_box) const {
    std::vector<double> tokens = raw_tokens(frame, frame_index, head_box);
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] -= baseline_[i];
    for (int cell = 0; cell < 9; ++cell) {
      double norm = 0.0;
      for (int e = 0; e < embed_dim_; ++e) {
        const double v = tokens[static_cast<std::size_t>(cell) * embed_dim_ + e];
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) norm = 1.0;
      for (int e = 0; e < embed_dim_; ++e)
        tokens[static_cast<std::size_t>(cell) * embed_dim_ + e] /= norm;
    }
    return tokens;
  }

  // unit-norm concatenation of the token rows; its dot product with another
  // pooled embedding equals the mean per-cell cosine, so per-cell identity
  // signal survives pooling. Used by CosSim and feature-Frechet.
  std::vector<double> pooled(const VideoClip& frame, int frame_index, const Box& head_box) const {
    auto tokens = embed_tokens(frame, frame_index, head_box);
    const double inv = 1.0 / 3.0;  // 9 unit rows -> norm 3
    for (auto& v : tokens) v *= inv;
    return tokens;
  }

 private:
  std::vector<double> raw_tokens(const VideoClip& frame, int frame_index,
                                 const Box& head_box) const {
    if (head_box.empty()) throw std::runtime_error("identity embedder: empty head box");
    std::vector<double> crop = resize_crop(frame, frame_index, head_box);
    // conv1: 3 -> c1, k3 s2 on 16x16 -> 7x7
    std::vector<double> h1 = conv2d(crop, 16, 16, 3, w1_, c1_, 3, 2);
    for (auto& v : h1) v = std::tanh(v);
    // conv2: c1 -> c2, k3 s2 on 7x7 -> 3x3
    std::vector<double> h2 = conv2d(h1, 7, 7, c1_, w2_, c2_, 3, 2);
    for (auto& v : h2) v = std::tanh(v);
    // one token per cell of the 3x3 map, conv features plus local mean color
    std::vector<double> tokens(static_cast<std::size_t>(9) * embed_dim_, 0.0);
    for (int cell = 0; cell < 9; ++cell) {
      const int cy = cell / 3, cx = cell % 3;
      double mean_rgb[3] = {0.0, 0.0, 0.0};
      const int y0 = cy * 16 / 3, y1 = (cy + 1) * 16 / 3;
      const int x0 = cx * 16 / 3, x1 = (cx + 1) * 16 / 3;
      for (int c = 0; c < 3; ++c) {
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x)
            mean_rgb[c] += crop[(static_cast<std::size_t>(c) * 16 + y) * 16 + x];
        mean_rgb[c] /= static_cast<double>((y1 - y0) * (x1 - x0));
      }
      // level plus two chroma axes; chroma separates hue classes even when
      // overall brightness coincides
      const double col[3] = {(mean_rgb[0] + mean_rgb[1] + mean_rgb[2]) / 3.0 - 0.5,
                             3.0 * (mean_rgb[0] - mean_rgb[1]),
                             3.0 * (mean_rgb[1] - mean_rgb[2])};
      for (int e = 0; e < embed_dim_; ++e) {
        double acc = 0.0;
        for (int c = 0; c < c2_; ++c)
          acc += h2[(static_cast<std::size_t>(c) * 3 + cy) * 3 + cx] *
                 wout_[static_cast<std::size_t>(c) * embed_dim_ + e];
        for (int c = 0; c < 3; ++c)
          acc += col[c] * wcol_[static_cast<std::size_t>(c) * embed_dim_ + e];
        tokens[static_cast<std::size_t>(cell) * embed_dim_ + e] = acc;
      }
    }
    return tokens;
  }

  // bilinear crop-resample of the head box to a 16x16x3 patch, channel-first
  std::vector<double> resize_crop(const VideoClip& v, int f, const Box& box) const {
    const Box b = box.clamped(v.width, v.height);
    if (b.empty()) throw std::runtime_error("identity embedder: head box outside frame");
    std::vector<double> out(static_cast<std::size_t>(3) * 16 * 16, 0.0);
    for (int gy = 0; gy < 16; ++gy)
      for (int gx = 0; gx < 16; ++gx) {
        const double sy = b.y0 + (gy + 0.5) / 16.0 * b.height() - 0.5;
        const double sx = b.x0 + (gx + 0.5) / 16.0 * b.width() - 0.5;
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        for (int c = 0; c < 3; ++c) {
          auto sample = [&](int yy, int xx) {
            yy = std::clamp(yy, 0, v.height - 1);
            xx = std::clamp(xx, 0, v.width - 1);
            return v.at(f, yy, xx, c);
          };
          const double val = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                             fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
          out[(static_cast<std::size_t>(c) * 16 + gy) * 16 + gx] = val;
        }
      }
    return out;
  }

  static std::vector<double> conv2d(const std::vector<double>& x, int h, int w, int cin,
                                    const std::vector<double>& k, int cout, int ks, int stride) {
    const int ho = (h - ks) / stride + 1, wo = (w - ks) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(cout) * ho * wo, 0.0);
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int dy = 0; dy < ks; ++dy)
              for (int dx = 0; dx < ks; ++dx)
                acc += x[(static_cast<std::size_t>(ci) * h + oy * stride + dy) * w + ox * stride + dx] *
                       k[((static_cast<std::size_t>(co) * cin + ci) * ks + dy) * ks + dx];
          out[(static_cast<std::size_t>(co) * ho + oy) * wo + ox] = acc;
        }
    return out;
  }

  int embed_dim_;
  static constexpr int c1_ = 8;
  static constexpr int c2_ = 8;
  std::vector<double> w1_, w2_, wout_, wcol_;
  std::vector<double> baseline_;
};

}  // namespace audcast
