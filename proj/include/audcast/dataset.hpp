#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/clip.hpp"
#include "audcast/conditioning.hpp"
#include "audcast/config.hpp"
#include "audcast/refine.hpp"
#include "audcast/rng.hpp"

namespace audcast {

// One training/eval sample as laid out on disk:
//   clip.aclp, prev.aclp, ref.aclp, audio.feat, head.mask, priors.aclp, meta
struct ClipBundle {
  VideoClip clip;
  VideoClip prev;
  VideoClip ref;
  AudioFeatures audio;
  HeadMask mask;
  StructuralPrior prior;
  Meta meta;

  double fps() const { return std::stod(meta.at("fps")); }
  std::vector<double> beats() const { return parse_double_list(meta.at("beats")); }

  std::vector<Box> face_boxes() const {
    std::vector<Box> out;
    for (int f = 0;; ++f) {
      auto it = meta.find("face_box_" + std::to_string(f));
      if (it == meta.end()) break;
      out.push_back(parse_box(it->second));
    }
    return out;
  }

  // per-frame hand landmark coordinates (palms and finger tips, both hands)
  std::vector<std::vector<double>> hand_landmarks() const {
    std::vector<std::vector<double>> out;
    for (int f = 0;; ++f) {
      auto it = meta.find("landmarks_" + std::to_string(f));
      if (it == meta.end()) break;
      out.push_back(parse_double_list(it->second));
    }
    return out;
  }
};

inline void save_bundle(const std::string& dir, const ClipBundle& b) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_clip(dir + "/clip.aclp", b.clip);
  write_clip(dir + "/prev.aclp", b.prev);
  write_clip(dir + "/ref.aclp", b.ref);
  write_audio_features(dir + "/audio.feat", b.audio);
  write_mask(dir + "/head.mask", b.mask);
  write_clip(dir + "/priors.aclp", b.prior.render);
  write_meta(dir + "/meta", b.meta);
}

inline ClipBundle load_bundle(const std::string& dir) {
  ClipBundle b;
  b.clip = read_clip(dir + "/clip.aclp");
  b.prev = read_clip(dir + "/prev.aclp");
  b.ref = read_clip(dir + "/ref.aclp");
  b.audio = read_audio_features(dir + "/audio.feat");
  b.mask = read_mask(dir + "/head.mask");
  b.prior.render = read_clip(dir + "/priors.aclp");
  b.meta = read_meta(dir + "/meta");
  const int f = b.clip.frames;
  b.prior.regions.resize(static_cast<std::size_t>(f));
  for (int i = 0; i < f; ++i) {
    auto& reg = b.prior.regions[static_cast<std::size_t>(i)];
    reg.face = parse_box(b.meta.at("face_box_" + std::to_string(i)));
    reg.lhand = parse_box(b.meta.at("lhand_box_" + std::to_string(i)));
    reg.rhand = parse_box(b.meta.at("rhand_box_" + std::to_string(i)));
  }
  return b;
}

// ---------------------------------------------------------------------------
// procedural speaker

namespace synth {

struct Palette {
  double bg[3], cloth[3], skin[3], lip[3];
};

inline Palette identity_palette(int identity) {
  Rng rng(mix_seed(0x5041u, static_cast<std::uint64_t>(identity)));
  Palette p;
  // three strong binary attributes plus a hue rotation: any two identities
  // differ in at least one attribute, which keeps the frozen embedder's
  // pairwise similarities low
  const bool bright_bg = identity & 1;
  const bool warm_skin = identity & 2;
  const bool light_skin = identity & 4;
  const int rot = identity % 3;
  for (int c = 0; c < 3; ++c)
    p.bg[(c + rot) % 3] = (bright_bg ? 0.45 : 0.05) + (c == 0 ? 0.2 : 0.05) + 0.08 * rng.uniform();
  for (int c = 0; c < 3; ++c)
    p.cloth[(c + rot) % 3] = 0.12 + 0.60 * rng.uniform();
  const double level = light_skin ? 1.0 : 0.45;
  if (warm_skin) {
    p.skin[0] = level * (0.80 + 0.15 * rng.uniform());
    p.skin[1] = level * (0.45 + 0.15 * rng.uniform());
    p.skin[2] = level * (0.20 + 0.10 * rng.uniform());
  } else {
    p.skin[0] = level * (0.30 + 0.10 * rng.uniform());
    p.skin[1] = level * (0.55 + 0.15 * rng.uniform());
    p.skin[2] = level * (0.80 + 0.15 * rng.uniform());
  }
  p.lip[0] = 0.45 + 0.25 * rng.uniform();
  p.lip[1] = 0.05 + 0.10 * rng.uniform();
  p.lip[2] = 0.10 + 0.10 * rng.uniform();
  return p;
}

// soft-edged paint helpers; coverage in [0,1] composited over the canvas
inline void paint(VideoClip& v, int f, int x, int y, double alpha, const double rgb[3]) {
  if (x < 0 || x >= v.width || y < 0 || y >= v.height || alpha <= 0.0) return;
  const double a = std::min(1.0, alpha);
  for (int c = 0; c < 3; ++c)
    v.at(f, y, x, c) = (1.0 - a) * v.at(f, y, x, c) + a * rgb[c];
}

inline void draw_ellipse(VideoClip& v, int f, double cx, double cy, double rx, double ry,
                         const double rgb[3]) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx - 1)));
  const int x1 = std::min(v.width - 1, static_cast<int>(std::ceil(cx + rx + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry - 1)));
  const int y1 = std::min(v.height - 1, static_cast<int>(std::ceil(cy + ry + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      const double d = std::sqrt(dx * dx + dy * dy);
      paint(v, f, x, y, (1.0 - d) * rx * 2.0 + 0.5, rgb);  // soft rim ~half pixel
    }
}

inline void draw_ring(VideoClip& v, int f, double cx, double cy, double rx, double ry,
                      double thickness, const double rgb[3]) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx - 2)));
  const int x1 = std::min(v.width - 1, static_cast<int>(std::ceil(cx + rx + 2)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry - 2)));
  const int y1 = std::min(v.height - 1, static_cast<int>(std::ceil(cy + ry + 2)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      const double d = std::abs(std::sqrt(dx * dx + dy * dy) - 1.0) * std::min(rx, ry);
      paint(v, f, x, y, thickness - d + 0.5, rgb);
    }
}

inline void draw_disc(VideoClip& v, int f, double cx, double cy, double r, const double rgb[3]) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x1 = std::min(v.width - 1, static_cast<int>(std::ceil(cx + r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y1 = std::min(v.height - 1, static_cast<int>(std::ceil(cy + r + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      paint(v, f, x, y, r - d + 0.5, rgb);
    }
}

inline void draw_stroke(VideoClip& v, int f, double ax, double ay, double bx, double by,
                        double width, const double rgb[3]) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - width - 1)));
  const int x1 = std::min(v.width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + width + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - width - 1)));
  const int y1 = std::min(v.height - 1, static_cast<int>(std::ceil(std::max(ay, by) + width + 1)));
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - ax, py = y + 0.5 - ay;
      const double t = len2 > 0 ? std::clamp((px * vx + py * vy) / len2, 0.0, 1.0) : 0.0;
      const double d = std::hypot(px - t * vx, py - t * vy);
      paint(v, f, x, y, width - d + 0.5, rgb);
    }
}

// cosine easing between keyframes: zero velocity at each keyframe
inline double ease(double a, double b, double s) {
  return a + (b - a) * 0.5 * (1.0 - std::cos(3.14159265358979323846 * s));
}

struct HandPose {
  double x = 0, y = 0;
  double base_angle = 0;   // radians
  double spread = 0.4;     // angle between adjacent fingers
};

struct SpeakerTimeline {
  int total_frames = 0;
  double fps = 10.0;
  std::vector<int> beat_frames;             // strictly increasing, interior
  std::vector<double> envelope;             // per frame, [0,1]
  std::vector<double> head_dy;              // per frame nod offset
  std::vector<HandPose> lhand, rhand;       // per frame
};

// Keyframes sit on beat frames (plus the sequence ends); between keyframes the
// pose eases in and out, so kinematic velocity dips exactly on the beats.
inline SpeakerTimeline build_timeline(int total_frames, double fps, int first_beat_frame,
                                      int last_margin, Rng& rng, int width, int height) {
  SpeakerTimeline tl;
  tl.total_frames = total_frames;
  tl.fps = fps;
  for (int f = first_beat_frame; f <= total_frames - 1 - last_margin;) {
    tl.beat_frames.push_back(f);
    f += 3 + rng.uniform_int(5);  // irregular gaps of 3..7 frames
  }
  if (tl.beat_frames.empty()) tl.beat_frames.push_back(std::max(2, total_frames / 2));

  // hand keyframes: random targets inside each hand's working region
  auto keyframes = [&](double x_lo, double x_hi) {
    std::vector<int> kf_frames;
    kf_frames.push_back(0);
    for (int b : tl.beat_frames)
      if (b > kf_frames.back()) kf_frames.push_back(b);
    if (kf_frames.back() != total_frames - 1) kf_frames.push_back(total_frames - 1);
    std::vector<HandPose> keyposes;
    for (std::size_t i = 0; i < kf_frames.size(); ++i) {
      HandPose p;
      p.x = rng.uniform(x_lo, x_hi);
      p.y = rng.uniform(height * 0.55, height * 0.85);
      p.base_angle = rng.uniform(-2.6, -0.6);  // fingers point mostly upward
      p.spread = rng.uniform(0.25, 0.6);
      keyposes.push_back(p);
    }
    std::vector<HandPose> track(static_cast<std::size_t>(total_frames));
    for (std::size_t seg = 0; seg + 1 < kf_frames.size(); ++seg) {
      const int fa = kf_frames[seg], fb = kf_frames[seg + 1];
      for (int f = fa; f <= fb; ++f) {
        const double s = fb > fa ? static_cast<double>(f - fa) / (fb - fa) : 0.0;
        HandPose p;
        p.x = ease(keyposes[seg].x, keyposes[seg + 1].x, s);
        p.y = ease(keyposes[seg].y, keyposes[seg + 1].y, s);
        p.base_angle = ease(keyposes[seg].base_angle, keyposes[seg + 1].base_angle, s);
        p.spread = ease(keyposes[seg].spread, keyposes[seg + 1].spread, s);
        track[static_cast<std::size_t>(f)] = p;
      }
    }
    return track;
  };
  tl.lhand = keyframes(width * 0.10, width * 0.36);
  tl.rhand = keyframes(width * 0.64, width * 0.90);

  // envelope: decaying pulse after every beat over a low idle floor
  tl.envelope.assign(static_cast<std::size_t>(total_frames), 0.0);
  for (int f = 0; f < total_frames; ++f) {
    double e = 0.15;
    for (int b : tl.beat_frames) {
      const double dt = (f - b) / fps;
      if (dt >= 0.0) e += 0.85 * std::exp(-dt * 4.0);
    }
    tl.envelope[static_cast<std::size_t>(f)] = std::min(1.0, e);
  }

  // small nod dipping right after each beat
  tl.head_dy.assign(static_cast<std::size_t>(total_frames), 0.0);
  for (int f = 0; f < total_frames; ++f) {
    double dy = 0.0;
    for (int b : tl.beat_frames) {
      const double dt = (f - b) / fps;
      if (dt >= 0.0 && dt < 0.3) dy += 1.2 * std::sin(dt / 0.3 * 3.14159265358979323846);
    }
    tl.head_dy[static_cast<std::size_t>(f)] = dy;
  }
  return tl;
}

struct FrameGeometry {
  double head_cx, head_cy, head_rx, head_ry;
  Box face, lhand, rhand;
  std::vector<double> landmarks;  // palms and 3 finger tips per hand, (x,y) pairs
};

inline void finger_tips(const HandPose& p, double len, double* tips /*6 doubles*/) {
  for (int j = 0; j < 3; ++j) {
    const double ang = p.base_angle + p.spread * (j - 1);
    tips[2 * j] = p.x + len * std::cos(ang);
    tips[2 * j + 1] = p.y + len * std::sin(ang);
  }
}

inline FrameGeometry frame_geometry(const SpeakerTimeline& tl, int f, int width, int height) {
  FrameGeometry g;
  g.head_cx = width * 0.5;
  g.head_cy = height * 0.22 + tl.head_dy[static_cast<std::size_t>(f)];
  g.head_rx = width * 0.14;
  g.head_ry = height * 0.15;
  g.face = Box{g.head_cx - g.head_rx - 1, g.head_cy - g.head_ry - 1, g.head_cx + g.head_rx + 1,
               g.head_cy + g.head_ry + 1}
               .clamped(width, height);
  auto hand_box = [&](const HandPose& p) {
    return Box{p.x - 4.5, p.y - 4.5, p.x + 4.5, p.y + 4.5}.clamped(width, height);
  };
  const HandPose& lp = tl.lhand[static_cast<std::size_t>(f)];
  const HandPose& rp = tl.rhand[static_cast<std::size_t>(f)];
  g.lhand = hand_box(lp);
  g.rhand = hand_box(rp);
  double ltips[6], rtips[6];
  finger_tips(lp, 2.6, ltips);
  finger_tips(rp, 2.6, rtips);
  g.landmarks = {lp.x, lp.y, ltips[0], ltips[1], ltips[2], ltips[3], ltips[4], ltips[5],
                 rp.x, rp.y, rtips[0], rtips[1], rtips[2], rtips[3], rtips[4], rtips[5]};
  return g;
}

inline void render_frame(VideoClip& v, int f, const SpeakerTimeline& tl, const Palette& pal,
                         int width, int height) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) v.at(f, y, x, c) = pal.bg[c];
  const FrameGeometry g = frame_geometry(tl, f, width, height);
  // torso
  draw_ellipse(v, f, width * 0.5, height * 0.80, width * 0.24, height * 0.22, pal.cloth);
  // head
  draw_ellipse(v, f, g.head_cx, g.head_cy, g.head_rx, g.head_ry, pal.skin);
  // eyes
  const double dark[3] = {0.05, 0.05, 0.08};
  draw_disc(v, f, g.head_cx - g.head_rx * 0.45, g.head_cy - g.head_ry * 0.25, 0.7, dark);
  draw_disc(v, f, g.head_cx + g.head_rx * 0.45, g.head_cy - g.head_ry * 0.25, 0.7, dark);
  // lips track the envelope
  const double e = tl.envelope[static_cast<std::size_t>(f)];
  draw_stroke(v, f, g.head_cx - g.head_rx * 0.5, g.head_cy + g.head_ry * 0.45,
              g.head_cx + g.head_rx * 0.5, g.head_cy + g.head_ry * 0.45, 0.6 + 1.1 * e, pal.lip);
  // hands: palm disc plus three finger strokes
  for (const HandPose* hp : {&tl.lhand[static_cast<std::size_t>(f)],
                             &tl.rhand[static_cast<std::size_t>(f)]}) {
    draw_disc(v, f, hp->x, hp->y, 1.7, pal.skin);
    double tips[6];
    finger_tips(*hp, 2.6, tips);
    for (int j = 0; j < 3; ++j)
      draw_stroke(v, f, hp->x, hp->y, tips[2 * j], tips[2 * j + 1], 0.65, pal.skin);
  }
}

// structural prior: contour rendering confined to the region boxes; out_frame
// indexes the rendered clip, tl_frame the timeline (they differ by the
// previous-frames margin)
inline void render_prior_frame(VideoClip& p, int out_frame, const SpeakerTimeline& tl,
                               int tl_frame, int width, int height) {
  const FrameGeometry g = frame_geometry(tl, tl_frame, width, height);
  VideoClip scratch(1, height, width, 3);
  const double on[3] = {1.0, 1.0, 1.0};
  draw_ring(scratch, 0, g.head_cx, g.head_cy, g.head_rx, g.head_ry, 0.6, on);
  const double e = tl.envelope[static_cast<std::size_t>(tl_frame)];
  draw_stroke(scratch, 0, g.head_cx - g.head_rx * 0.5, g.head_cy + g.head_ry * 0.45,
              g.head_cx + g.head_rx * 0.5, g.head_cy + g.head_ry * 0.45, 0.5 + 1.1 * e, on);
  draw_disc(scratch, 0, g.head_cx - g.head_rx * 0.45, g.head_cy - g.head_ry * 0.25, 0.6, on);
  draw_disc(scratch, 0, g.head_cx + g.head_rx * 0.45, g.head_cy - g.head_ry * 0.25, 0.6, on);
  for (const HandPose* hp : {&tl.lhand[static_cast<std::size_t>(tl_frame)],
                             &tl.rhand[static_cast<std::size_t>(tl_frame)]}) {
    draw_ring(scratch, 0, hp->x, hp->y, 1.7, 1.7, 0.5, on);
    double tips[6];
    finger_tips(*hp, 2.6, tips);
    for (int j = 0; j < 3; ++j)
      draw_stroke(scratch, 0, hp->x, hp->y, tips[2 * j], tips[2 * j + 1], 0.5, on);
  }
  // confine to the region boxes so pixels outside them stay zero
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const bool inside = g.face.contains_pixel(x, y) || g.lhand.contains_pixel(x, y) ||
                          g.rhand.contains_pixel(x, y);
      p.at(out_frame, y, x, 0) = inside ? scratch.at(0, y, x, 0) : 0.0;
    }
}

// audio features: per-layer fixed mixes of beat impulse, loudness envelope and
// beat-phase signals, emulating the shape of stacked wav2vec hidden states
inline AudioFeatures render_audio(const SpeakerTimeline& tl, int frame_begin, int frame_end,
                                  int layers, int dim, Rng& noise_rng) {
  AudioFeatures a(layers, frame_end - frame_begin, dim);
  for (int f = frame_begin; f < frame_end; ++f) {
    const int i = f - frame_begin;
    double impulse = 0.0, since = 2.0, until = 2.0;
    for (int b : tl.beat_frames) {
      const double dt = (f - b) / tl.fps;
      impulse += std::exp(-dt * dt / (2.0 * 0.05 * 0.05));
      if (dt >= 0.0) since = std::min(since, dt);
      if (dt <= 0.0) until = std::min(until, -dt);
    }
    impulse = std::min(1.0, impulse);
    const double env = tl.envelope[static_cast<std::size_t>(f)];
    const double sig[4] = {impulse, env, since / 2.0, until / 2.0};
    for (int l = 0; l < layers; ++l) {
      Rng mix_rng(mix_seed(0xA0D10u, static_cast<std::uint64_t>(l)));
      for (int d = 0; d < dim; ++d) {
        double acc = 0.0;
        for (int s = 0; s < 4; ++s) acc += mix_rng.normal(0.0, 0.5) * sig[s];
        a.at(l, i, d) = acc + 0.02 * noise_rng.normal();
      }
    }
  }
  return a;
}

}  // namespace synth

// Generates one bundle: a procedural speaker with beat-locked gestures, lips
// tracking the loudness envelope, matching audio features, ground-truth boxes,
// landmarks and structural priors. total frames = overlap_m + n_chunks*frames.
inline ClipBundle generate_bundle_for_identity(const RunConfig& cfg, std::uint64_t clip_seed,
                                               int identity, int n_chunks = 1) {
  using namespace synth;
  const int m = cfg.overlap_m;
  const int body = cfg.frames * n_chunks;
  const int total = m + body;
  Rng rng(mix_seed(cfg.seed, 0x434C4950ull, clip_seed));
  const Palette pal = identity_palette(identity);
  SpeakerTimeline tl =
      build_timeline(total, cfg.fps, m + 2, 3, rng, cfg.width, cfg.height);

  VideoClip all(total, cfg.height, cfg.width, 3);
  for (int f = 0; f < total; ++f) render_frame(all, f, tl, pal, cfg.width, cfg.height);

  ClipBundle b;
  b.prev = all.slice_frames(0, m);
  b.clip = all.slice_frames(m, total);
  b.ref = all.slice_frames(m, m + 1);
  b.audio = render_audio(tl, m, total, cfg.audio_layers, cfg.d_audio, rng);

  b.prior.render = VideoClip(body, cfg.height, cfg.width, 1);
  b.prior.regions.resize(static_cast<std::size_t>(body));
  std::vector<Box> face_boxes;
  b.meta["fps"] = std::to_string(cfg.fps);
  b.meta["identity"] = std::to_string(identity);
  b.meta["clip_seed"] = std::to_string(clip_seed);
  b.meta["n_frames"] = std::to_string(body);
  b.meta["m_frames"] = std::to_string(m);
  std::vector<double> beat_times;
  for (int bf : tl.beat_frames)
    if (bf >= m) beat_times.push_back((bf - m) / cfg.fps);
  b.meta["beats"] = format_double_list(beat_times);
  for (int f = 0; f < body; ++f) {
    render_prior_frame(b.prior.render, f, tl, m + f, cfg.width, cfg.height);
    const FrameGeometry g = frame_geometry(tl, m + f, cfg.width, cfg.height);
    b.prior.regions[static_cast<std::size_t>(f)] =
        FrameRegions{g.face, g.lhand, g.rhand};
    face_boxes.push_back(g.face);
    b.meta["face_box_" + std::to_string(f)] = box_str(g.face);
    b.meta["lhand_box_" + std::to_string(f)] = box_str(g.lhand);
    b.meta["rhand_box_" + std::to_string(f)] = box_str(g.rhand);
    b.meta["landmarks_" + std::to_string(f)] = format_double_list(g.landmarks);
  }
  // prior frames beyond the first chunk keep using the same timeline; the
  // render is relative to the emitted body, matching clip.aclp frame indices
  b.mask = build_head_mask(face_boxes, body, cfg.height, cfg.width, cfg.mask_margin);
  return b;
}

inline ClipBundle generate_bundle(const RunConfig& cfg, std::uint64_t clip_seed, int n_chunks = 1) {
  Rng rng(mix_seed(cfg.seed, 0x4944u, clip_seed));
  return generate_bundle_for_identity(cfg, clip_seed, rng.uniform_int(cfg.identities), n_chunks);
}

inline std::string bundle_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%05d", index);
  return buf;
}

}  // namespace audcast
