#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/clip.hpp"
#include "audcast/rng.hpp"
#include "audcast/tensor.hpp"

namespace audcast {

// Compressed video representation, layout [latent_frame][y][x][channel].
struct LatentClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  int r_t = 1;  // temporal stride of the codec that produced it
  int r_s = 1;  // spatial stride
  std::vector<double> data;

  LatentClip() = default;
  LatentClip(int f, int h, int w, int c, int rt, int rs)
      : frames(f), height(h), width(w), channels(c), r_t(rt), r_s(rs),
        data(static_cast<std::size_t>(f) * h * w * c, 0.0) {}

  std::size_t index(int f, int y, int x, int c) const {
    return ((static_cast<std::size_t>(f) * height + y) * width + x) * channels + c;
  }
  double& at(int f, int y, int x, int c) { return data[index(f, y, x, c)]; }
  double at(int f, int y, int x, int c) const { return data[index(f, y, x, c)]; }

  bool same_geometry(const LatentClip& o) const {
    return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
  }
};

// Patch split of a latent clip into transformer tokens.
struct PatchGeometry {
  int p_t = 1;
  int p_h = 2;
  int p_w = 2;
  int embed_dim = 64;

  int tokens_t(const LatentClip& z) const { return z.frames / p_t; }
  int tokens_y(const LatentClip& z) const { return z.height / p_h; }
  int tokens_x(const LatentClip& z) const { return z.width / p_w; }
  int token_count(const LatentClip& z) const {
    return tokens_t(z) * tokens_y(z) * tokens_x(z);
  }
  int patch_values(int channels) const { return p_t * p_h * p_w * channels; }

  void check_divides(const LatentClip& z) const {
    if (z.frames % p_t || z.height % p_h || z.width % p_w)
      throw std::runtime_error("patch geometry (" + std::to_string(p_t) + "," +
                               std::to_string(p_h) + "," + std::to_string(p_w) +
                               ") does not divide latent dims " + std::to_string(z.frames) + "x" +
                               std::to_string(z.height) + "x" + std::to_string(z.width));
  }
};

enum class TokenRole : std::uint8_t { video, motion, audio, mesh, noise, appearance, identity };

inline const char* role_name(TokenRole r) {
  switch (r) {
    case TokenRole::video: return "video";
    case TokenRole::motion: return "motion";
    case TokenRole::audio: return "audio";
    case TokenRole::mesh: return "mesh";
    case TokenRole::noise: return "noise";
    case TokenRole::appearance: return "appearance";
    case TokenRole::identity: return "identity";
  }
  return "?";
}

// Ordered embedding sequence with per-token role tags and region gate.
struct TokenSeq {
  Tensor tokens;                 // [S, E]
  std::vector<TokenRole> roles;  // length S
  std::vector<double> gate;      // length S, values in {0,1}

  int length() const { return tokens.defined() ? tokens.dim(0) : 0; }
};

struct CodecConfig {
  int r_t = 2;
  int r_s = 4;
  int c_z = 8;
  std::uint64_t seed = 77;
  double scale = 3.0;   // latent gain applied after projection
  double center = 0.5;  // pixel offset removed before projection
};

// Deterministic stand-in for the 3D causal VAE: each (r_t x r_s x r_s x 3)
// pixel block is projected with a fixed seeded orthonormal matrix whose first
// row is the constant direction, so decode(encode(v)) reproduces block means
// exactly and the map is causal in time (a latent frame depends only on its
// own pixel block).
class LatentCodec {
 public:
  explicit LatentCodec(const CodecConfig& cfg, int img_channels = 3)
      : cfg_(cfg), img_channels_(img_channels) {
    block_n_ = cfg.r_t * cfg.r_s * cfg.r_s * img_channels;
    if (cfg.c_z < 1 || cfg.c_z > block_n_)
      throw std::runtime_error("codec: c_z must lie in [1, block size]");
    build_projection();
  }

  const CodecConfig& config() const { return cfg_; }
  int block_size() const { return block_n_; }
  const std::vector<double>& projection() const { return proj_; }

  // Allows shipping the projection in a checkpoint and restoring it verbatim.
  void set_projection(std::vector<double> proj) {
    if (proj.size() != static_cast<std::size_t>(cfg_.c_z) * block_n_)
      throw std::runtime_error("codec: projection size mismatch");
    proj_ = std::move(proj);
  }

  LatentClip encode(const VideoClip& v) const {
    if (v.channels != img_channels_)
      throw std::runtime_error("codec: channel mismatch, clip has " +
                               std::to_string(v.channels) + " channels, codec expects " +
                               std::to_string(img_channels_));
    if (v.frames % cfg_.r_t || v.height % cfg_.r_s || v.width % cfg_.r_s)
      throw std::runtime_error("codec: clip dims " + std::to_string(v.frames) + "x" +
                               std::to_string(v.height) + "x" + std::to_string(v.width) +
                               " not divisible by strides (" + std::to_string(cfg_.r_t) + "," +
                               std::to_string(cfg_.r_s) + ")");
    LatentClip z(v.frames / cfg_.r_t, v.height / cfg_.r_s, v.width / cfg_.r_s, cfg_.c_z,
                 cfg_.r_t, cfg_.r_s);
    std::vector<double> block(static_cast<std::size_t>(block_n_));
    for (int zf = 0; zf < z.frames; ++zf)
      for (int zy = 0; zy < z.height; ++zy)
        for (int zx = 0; zx < z.width; ++zx) {
          gather_block(v, zf, zy, zx, block);
          for (int k = 0; k < cfg_.c_z; ++k) {
            const double* row = &proj_[static_cast<std::size_t>(k) * block_n_];
            double acc = 0.0;
            for (int i = 0; i < block_n_; ++i) acc += row[i] * (block[static_cast<std::size_t>(i)] - cfg_.center);
            z.at(zf, zy, zx, k) = acc * cfg_.scale;
          }
        }
    return z;
  }

  VideoClip decode(const LatentClip& z) const {
    if (z.channels != cfg_.c_z)
      throw std::runtime_error("codec: latent has " + std::to_string(z.channels) +
                               " channels, codec expects " + std::to_string(cfg_.c_z));
    VideoClip v(z.frames * cfg_.r_t, z.height * cfg_.r_s, z.width * cfg_.r_s, img_channels_);
    std::vector<double> block(static_cast<std::size_t>(block_n_));
    for (int zf = 0; zf < z.frames; ++zf)
      for (int zy = 0; zy < z.height; ++zy)
        for (int zx = 0; zx < z.width; ++zx) {
          std::fill(block.begin(), block.end(), 0.0);
          for (int k = 0; k < cfg_.c_z; ++k) {
            const double zk = z.at(zf, zy, zx, k) / cfg_.scale;
            const double* row = &proj_[static_cast<std::size_t>(k) * block_n_];
            for (int i = 0; i < block_n_; ++i) block[static_cast<std::size_t>(i)] += row[i] * zk;
          }
          scatter_block(v, zf, zy, zx, block);
        }
    return v;
  }

  // Single reference frames go through the same path by temporal replication.
  LatentClip encode_single_frame(const VideoClip& ref) const {
    if (ref.frames != 1) throw std::runtime_error("encode_single_frame: expected one frame");
    VideoClip rep(cfg_.r_t, ref.height, ref.width, ref.channels);
    for (int f = 0; f < cfg_.r_t; ++f)
      std::copy(ref.data.begin(), ref.data.end(),
                rep.data.begin() + static_cast<std::ptrdiff_t>(f * ref.frame_size()));
    return encode(rep);
  }

 private:
  void gather_block(const VideoClip& v, int zf, int zy, int zx, std::vector<double>& block) const {
    std::size_t i = 0;
    for (int dt = 0; dt < cfg_.r_t; ++dt)
      for (int dy = 0; dy < cfg_.r_s; ++dy)
        for (int dx = 0; dx < cfg_.r_s; ++dx)
          for (int c = 0; c < img_channels_; ++c)
            block[i++] = v.at(zf * cfg_.r_t + dt, zy * cfg_.r_s + dy, zx * cfg_.r_s + dx, c);
  }

  void scatter_block(VideoClip& v, int zf, int zy, int zx, const std::vector<double>& block) const {
    std::size_t i = 0;
    for (int dt = 0; dt < cfg_.r_t; ++dt)
      for (int dy = 0; dy < cfg_.r_s; ++dy)
        for (int dx = 0; dx < cfg_.r_s; ++dx)
          for (int c = 0; c < img_channels_; ++c) {
            const double val = cfg_.center + block[i++];
            v.at(zf * cfg_.r_t + dt, zy * cfg_.r_s + dy, zx * cfg_.r_s + dx, c) =
                std::min(1.0, std::max(0.0, val));
          }
  }

  // Gram-Schmidt over [constant direction, seeded gaussian vectors].
  void build_projection() {
    const int n = block_n_;
    proj_.assign(static_cast<std::size_t>(cfg_.c_z) * n, 0.0);
    Rng rng(mix_seed(cfg_.seed, 0x434F444543ull));  // "CODEC"
    const double inv = 1.0 / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i) proj_[static_cast<std::size_t>(i)] = inv;
    for (int k = 1; k < cfg_.c_z; ++k) {
      double* row = &proj_[static_cast<std::size_t>(k) * n];
      for (int attempt = 0;; ++attempt) {
        for (int i = 0; i < n; ++i) row[i] = rng.normal();
        for (int j = 0; j < k; ++j) {
          const double* prev = &proj_[static_cast<std::size_t>(j) * n];
          double dot = 0.0;
          for (int i = 0; i < n; ++i) dot += row[i] * prev[i];
          for (int i = 0; i < n; ++i) row[i] -= dot * prev[i];
        }
        double norm = 0.0;
        for (int i = 0; i < n; ++i) norm += row[i] * row[i];
        norm = std::sqrt(norm);
        if (norm > 1e-8) {
          for (int i = 0; i < n; ++i) row[i] /= norm;
          break;
        }
        if (attempt > 16) throw std::runtime_error("codec: projection degenerate");
      }
    }
  }

  CodecConfig cfg_;
  int img_channels_;
  int block_n_ = 0;
  std::vector<double> proj_;
};

// Token index is time-major then row-major spatial:
//   idx = (tp * (h/p_h) + yp) * (w/p_w) + xp
// Within a patch, values are flattened (dt,dy,dx) lexicographic, channel last.
inline std::vector<double> patchify_raw(const LatentClip& z, const PatchGeometry& g) {
  g.check_divides(z);
  const int nt = g.tokens_t(z), ny = g.tokens_y(z), nx = g.tokens_x(z);
  const int pv = g.patch_values(z.channels);
  std::vector<double> out(static_cast<std::size_t>(nt) * ny * nx * pv);
  std::size_t o = 0;
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp)
        for (int dt = 0; dt < g.p_t; ++dt)
          for (int dy = 0; dy < g.p_h; ++dy)
            for (int dx = 0; dx < g.p_w; ++dx)
              for (int c = 0; c < z.channels; ++c)
                out[o++] = z.at(tp * g.p_t + dt, yp * g.p_h + dy, xp * g.p_w + dx, c);
  return out;
}

inline LatentClip unpatchify_raw(const std::vector<double>& tokens, const PatchGeometry& g,
                                 int frames, int height, int width, int channels, int r_t,
                                 int r_s) {
  LatentClip z(frames, height, width, channels, r_t, r_s);
  g.check_divides(z);
  const int nt = g.tokens_t(z), ny = g.tokens_y(z), nx = g.tokens_x(z);
  const int pv = g.patch_values(channels);
  if (tokens.size() != static_cast<std::size_t>(nt) * ny * nx * pv)
    throw std::runtime_error("unpatchify: token payload of " + std::to_string(tokens.size()) +
                             " values does not match geometry");
  std::size_t o = 0;
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp)
        for (int dt = 0; dt < g.p_t; ++dt)
          for (int dy = 0; dy < g.p_h; ++dy)
            for (int dx = 0; dx < g.p_w; ++dx)
              for (int c = 0; c < channels; ++c)
                z.at(tp * g.p_t + dt, yp * g.p_h + dy, xp * g.p_w + dx, c) = tokens[o++];
  return z;
}

// Patchify + linear embedding as spec'd for the token sequence contract.
// W_embed: [patch_values, E]. Returns tokens with the given role and zero gate.
inline TokenSeq patchify(const LatentClip& z, const PatchGeometry& g, const Tensor& w_embed,
                         TokenRole role = TokenRole::video) {
  g.check_divides(z);
  const int s = g.token_count(z);
  const int pv = g.patch_values(z.channels);
  if (w_embed.rank() != 2 || w_embed.dim(0) != pv)
    throw std::runtime_error("patchify: embedding expects " + std::to_string(w_embed.dim(0)) +
                             " inputs per token but patches carry " + std::to_string(pv));
  Tensor raw = Tensor::from_data({s, pv}, patchify_raw(z, g));
  TokenSeq ts;
  ts.tokens = matmul(raw, w_embed);
  ts.roles.assign(static_cast<std::size_t>(s), role);
  ts.gate.assign(static_cast<std::size_t>(s), 0.0);
  return ts;
}

// Inverse of patchify for video tokens: W_unembed maps E back to patch values.
inline LatentClip unpatchify(const TokenSeq& t, const PatchGeometry& g, const Tensor& w_unembed,
                             int frames, int height, int width, int channels, int r_t, int r_s) {
  for (auto r : t.roles)
    if (r != TokenRole::video && r != TokenRole::noise)
      throw std::runtime_error(std::string("unpatchify: unexpected token role ") + role_name(r));
  LatentClip probe(frames, height, width, channels, r_t, r_s);
  g.check_divides(probe);
  if (t.length() != g.token_count(probe))
    throw std::runtime_error("unpatchify: token count " + std::to_string(t.length()) +
                             " does not match geometry's " + std::to_string(g.token_count(probe)));
  Tensor patches = matmul(t.tokens, w_unembed);
  NoGradGuard ng;  // data copy only; gradients flow through the matmul above when needed
  return unpatchify_raw(patches.data(), g, frames, height, width, channels, r_t, r_s);
}

// Gather a conv volume [C, D, H, W] into patch tokens [S, p_t*p_h*p_w*C] with
// the same token ordering as patchify; differentiable.
inline Tensor patchify_volume(const Tensor& x, int p_t, int p_h, int p_w) {
  if (x.rank() != 4) throw std::runtime_error("patchify_volume: rank-4 volume required");
  const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (D % p_t || H % p_h || W % p_w)
    throw std::runtime_error("patchify_volume: patch does not divide volume " +
                             shape_str(x.shape()));
  const int nt = D / p_t, ny = H / p_h, nx = W / p_w;
  const int pv = p_t * p_h * p_w * C;
  const int s = nt * ny * nx;
  std::vector<std::size_t> src(static_cast<std::size_t>(s) * pv);
  std::size_t o = 0;
  for (int tp = 0; tp < nt; ++tp)
    for (int yp = 0; yp < ny; ++yp)
      for (int xp = 0; xp < nx; ++xp)
        for (int dt = 0; dt < p_t; ++dt)
          for (int dy = 0; dy < p_h; ++dy)
            for (int dx = 0; dx < p_w; ++dx)
              for (int c = 0; c < C; ++c)
                src[o++] = ((static_cast<std::size_t>(c) * D + (tp * p_t + dt)) * H +
                            (yp * p_h + dy)) * W + (xp * p_w + dx);
  std::vector<double> out(src.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xv[src[i]];
  return detail::make_op({s, pv}, std::move(out), {x}, [src](TensorNode& node) {
    auto& px = *node.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) px.grad[src[i]] += node.grad[i];
  });
}

}  // namespace audcast
