#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/codec.hpp"

namespace audcast {

// One flat configuration record for dataset, models, training, sampling and
// evaluation. Serialized as key=value text (sorted keys) into checkpoints and
// reports so experiment records diff cleanly.
struct RunConfig {
  // pixel-space geometry
  int frames = 16;
  int height = 32;
  int width = 32;
  int fps = 10;

  // codec
  int r_t = 2;
  int r_s = 4;
  int c_z = 8;
  std::uint64_t codec_seed = 77;
  double codec_scale = 3.0;
  double codec_center = 0.5;

  // token geometry
  int p_t = 1;
  int p_h = 2;
  int p_w = 2;
  int embed_dim = 64;

  // model
  int layers = 2;
  int heads = 4;
  int enc_channels = 8;  // position/mesh encoder channel width
  int d_audio = 32;
  int audio_layers = 12;
  int overlap_m = 4;  // previous frames M used for motion tokens and chaining
  bool use_hpe = true;
  bool use_mt = true;
  bool use_aa = true;
  bool use_ia = true;
  bool use_audio_xattn = true;
  bool use_audio_proj = false;  // learned q/k/v projections for audio attention

  // diffusion
  int t_train = 100;
  int t_sample = 20;
  std::string sampler = "deterministic";  // or "ancestral"
  double beta_min = 1e-4;
  double beta_max = 2e-2;

  // training
  double lr = 5e-5;
  int steps = 2000;
  double grad_clip = 1.0;
  double motion_dropout = 0.5;
  int checkpoint_every = 1000;
  int log_every = 50;

  // chaining
  int chunk_frames = 16;

  // conditioning / metrics knobs
  double gate_threshold = 0.25;
  double mask_margin = 0.1;
  double bas_sigma = 0.1;
  int frechet_dim = 8;

  // data
  int identities = 8;
  std::uint64_t seed = 1;

  // derived geometry
  int latent_frames() const { return frames / r_t; }
  int latent_height() const { return height / r_s; }
  int latent_width() const { return width / r_s; }
  int tokens_video() const {
    return (latent_frames() / p_t) * (latent_height() / p_h) * (latent_width() / p_w);
  }
  int tokens_per_latent_frame_block() const {
    return (latent_height() / p_h) * (latent_width() / p_w);
  }
  int motion_latent_frames() const { return overlap_m / r_t; }
  int audio_frames() const { return frames; }  // feature rate equals video fps
  int patch_values() const { return p_t * p_h * p_w * c_z; }

  PatchGeometry patch_geometry() const {
    PatchGeometry g;
    g.p_t = p_t;
    g.p_h = p_h;
    g.p_w = p_w;
    g.embed_dim = embed_dim;
    return g;
  }

  CodecConfig codec_config() const {
    CodecConfig c;
    c.r_t = r_t;
    c.r_s = r_s;
    c.c_z = c_z;
    c.seed = codec_seed;
    c.scale = codec_scale;
    c.center = codec_center;
    return c;
  }

  void validate() const {
    auto req = [](bool ok, const std::string& msg) {
      if (!ok) throw std::runtime_error("config: " + msg);
    };
    req(frames >= 1 && height >= 1 && width >= 1, "frame dims must be positive");
    req(frames % r_t == 0, "frames not divisible by r_t");
    req(height % r_s == 0 && width % r_s == 0, "frame size not divisible by r_s");
    req(latent_frames() % p_t == 0, "latent frames not divisible by p_t");
    req(latent_height() % p_h == 0 && latent_width() % p_w == 0,
        "latent size not divisible by patch");
    req(embed_dim % heads == 0, "embed_dim not divisible by heads");
    req(embed_dim % 2 == 0, "embed_dim must be even");
    req(overlap_m % r_t == 0, "overlap_m not divisible by r_t");
    req(overlap_m == 0 || (overlap_m / r_t) % p_t == 0,
        "motion latent frames not divisible by p_t");
    req(overlap_m < frames, "overlap_m must be smaller than chunk frames");
    req(chunk_frames == frames, "chunk_frames must equal model frames");
    req(t_sample >= 1 && t_sample <= t_train, "t_sample must lie in [1, t_train]");
    req(sampler == "deterministic" || sampler == "ancestral", "unknown sampler kind");
    req(motion_dropout >= 0.0 && motion_dropout <= 1.0, "motion_dropout outside [0,1]");
    req(r_s == 1 || r_s == 2 || r_s == 4 || r_s == 8, "r_s must be 1, 2, 4 or 8");
    req(audio_layers == 12, "audio feature stack is defined as 12 layers");
  }

  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> m;
    auto put_i = [&](const char* k, long long v) { m[k] = std::to_string(v); };
    auto put_d = [&](const char* k, double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      m[k] = os.str();
    };
    put_i("frames", frames);
    put_i("height", height);
    put_i("width", width);
    put_i("fps", fps);
    put_i("r_t", r_t);
    put_i("r_s", r_s);
    put_i("c_z", c_z);
    put_i("codec_seed", static_cast<long long>(codec_seed));
    put_d("codec_scale", codec_scale);
    put_d("codec_center", codec_center);
    put_i("p_t", p_t);
    put_i("p_h", p_h);
    put_i("p_w", p_w);
    put_i("embed_dim", embed_dim);
    put_i("layers", layers);
    put_i("heads", heads);
    put_i("enc_channels", enc_channels);
    put_i("d_audio", d_audio);
    put_i("audio_layers", audio_layers);
    put_i("overlap_m", overlap_m);
    put_i("use_hpe", use_hpe);
    put_i("use_mt", use_mt);
    put_i("use_aa", use_aa);
    put_i("use_ia", use_ia);
    put_i("use_audio_xattn", use_audio_xattn);
    put_i("use_audio_proj", use_audio_proj);
    put_i("t_train", t_train);
    put_i("t_sample", t_sample);
    m["sampler"] = sampler;
    put_d("beta_min", beta_min);
    put_d("beta_max", beta_max);
    put_d("lr", lr);
    put_i("steps", steps);
    put_d("grad_clip", grad_clip);
    put_d("motion_dropout", motion_dropout);
    put_i("checkpoint_every", checkpoint_every);
    put_i("log_every", log_every);
    put_i("chunk_frames", chunk_frames);
    put_d("gate_threshold", gate_threshold);
    put_d("mask_margin", mask_margin);
    put_d("bas_sigma", bas_sigma);
    put_i("frechet_dim", frechet_dim);
    put_i("identities", identities);
    put_i("seed", static_cast<long long>(seed));
    return m;
  }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_map()) os << k << "=" << v << "\n";
    return os.str();
  }

  void set(const std::string& key, const std::string& value) {
    auto as_i = [&]() { return std::stoll(value); };
    auto as_d = [&]() { return std::stod(value); };
    auto as_b = [&]() { return value == "1" || value == "true"; };
    if (key == "frames") frames = static_cast<int>(as_i());
    else if (key == "height") height = static_cast<int>(as_i());
    else if (key == "width") width = static_cast<int>(as_i());
    else if (key == "fps") fps = static_cast<int>(as_i());
    else if (key == "r_t") r_t = static_cast<int>(as_i());
    else if (key == "r_s") r_s = static_cast<int>(as_i());
    else if (key == "c_z") c_z = static_cast<int>(as_i());
    else if (key == "codec_seed") codec_seed = static_cast<std::uint64_t>(as_i());
    else if (key == "codec_scale") codec_scale = as_d();
    else if (key == "codec_center") codec_center = as_d();
    else if (key == "p_t") p_t = static_cast<int>(as_i());
    else if (key == "p_h") p_h = static_cast<int>(as_i());
    else if (key == "p_w") p_w = static_cast<int>(as_i());
    else if (key == "embed_dim") embed_dim = static_cast<int>(as_i());
    else if (key == "layers") layers = static_cast<int>(as_i());
    else if (key == "heads") heads = static_cast<int>(as_i());
    else if (key == "enc_channels") enc_channels = static_cast<int>(as_i());
    else if (key == "d_audio") d_audio = static_cast<int>(as_i());
    else if (key == "audio_layers") audio_layers = static_cast<int>(as_i());
    else if (key == "overlap_m") overlap_m = static_cast<int>(as_i());
    else if (key == "use_hpe") use_hpe = as_b();
    else if (key == "use_mt") use_mt = as_b();
    else if (key == "use_aa") use_aa = as_b();
    else if (key == "use_ia") use_ia = as_b();
    else if (key == "use_audio_xattn") use_audio_xattn = as_b();
    else if (key == "use_audio_proj") use_audio_proj = as_b();
    else if (key == "t_train") t_train = static_cast<int>(as_i());
    else if (key == "t_sample") t_sample = static_cast<int>(as_i());
    else if (key == "sampler") sampler = value;
    else if (key == "beta_min") beta_min = as_d();
    else if (key == "beta_max") beta_max = as_d();
    else if (key == "lr") lr = as_d();
    else if (key == "steps") steps = static_cast<int>(as_i());
    else if (key == "grad_clip") grad_clip = as_d();
    else if (key == "motion_dropout") motion_dropout = as_d();
    else if (key == "checkpoint_every") checkpoint_every = static_cast<int>(as_i());
    else if (key == "log_every") log_every = static_cast<int>(as_i());
    else if (key == "chunk_frames") chunk_frames = static_cast<int>(as_i());
    else if (key == "gate_threshold") gate_threshold = as_d();
    else if (key == "mask_margin") mask_margin = as_d();
    else if (key == "bas_sigma") bas_sigma = as_d();
    else if (key == "frechet_dim") frechet_dim = static_cast<int>(as_i());
    else if (key == "identities") identities = static_cast<int>(as_i());
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_i());
    else throw std::runtime_error("config: unknown key '" + key + "'");
  }

  static RunConfig from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: malformed line '" + line + "'");
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
  }

  // keys that must agree between the two stages of a cascade
  std::string geometry_fingerprint() const {
    std::ostringstream os;
    os << frames << "/" << height << "/" << width << "/" << fps << "/" << r_t << "/" << r_s
       << "/" << c_z << "/" << codec_seed << "/" << codec_scale << "/" << codec_center << "/"
       << p_t << "/" << p_h << "/" << p_w << "/" << embed_dim;
    return os.str();
  }
};

// Small desk geometry used by gradient checks and fast unit tests.
inline RunConfig tiny_config() {
  RunConfig c;
  c.frames = 8;
  c.height = 16;
  c.width = 16;
  c.r_t = 2;
  c.r_s = 4;
  c.c_z = 4;
  c.p_t = 1;
  c.p_h = 2;
  c.p_w = 2;
  c.embed_dim = 32;
  c.heads = 2;
  c.layers = 1;
  c.enc_channels = 4;
  c.d_audio = 16;
  c.overlap_m = 4;
  c.chunk_frames = 8;
  c.t_train = 50;
  c.t_sample = 10;
  return c;
}

// A third desk geometry exercising p_t > 1 and r_t = 1.
inline RunConfig wide_config() {
  RunConfig c;
  c.frames = 4;
  c.height = 16;
  c.width = 16;
  c.r_t = 1;
  c.r_s = 2;
  c.c_z = 6;
  c.p_t = 2;
  c.p_h = 2;
  c.p_w = 2;
  c.embed_dim = 48;
  c.heads = 3;
  c.layers = 1;
  c.enc_channels = 6;
  c.d_audio = 16;
  c.overlap_m = 2;
  c.chunk_frames = 4;
  c.t_train = 50;
  c.t_sample = 10;
  return c;
}

}  // namespace audcast
