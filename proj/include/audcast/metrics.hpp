#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "audcast/clip.hpp"

namespace audcast {

// Ordered beat timestamps in seconds.
struct BeatTrack {
  std::vector<double> times;

  void validate(double duration) const {
    double prev = -1e300;
    for (double t : times) {
      if (t < 0.0 || t > duration)
        throw std::runtime_error("beat track: timestamp outside clip duration");
      if (t <= prev) throw std::runtime_error("beat track: timestamps must strictly increase");
      prev = t;
    }
  }
};

// mean over audio beats of exp(-min_dist^2 / (2 sigma^2)); empty motion -> 0
inline double beat_alignment_score(const BeatTrack& audio, const BeatTrack& motion,
                                   double sigma) {
  if (audio.times.empty()) throw std::runtime_error("beat_alignment_score: no audio beats");
  if (sigma <= 0.0) throw std::runtime_error("beat_alignment_score: sigma must be positive");
  if (motion.times.empty()) return 0.0;
  double acc = 0.0;
  for (double b : audio.times) {
    double best = 1e300;
    for (double m : motion.times) best = std::min(best, std::abs(b - m));
    acc += std::exp(-best * best / (2.0 * sigma * sigma));
  }
  return acc / static_cast<double>(audio.times.size());
}

// Kinematic beats: local minima of the symmetric per-frame velocity estimate
// mean|frame_{i+1} - frame_{i-1}|/2, minimum separation two frames. Beats land
// on integer frames so generator keyframes are recovered without sub-frame
// bias.
inline BeatTrack motion_beats(const VideoClip& v, double fps) {
  if (v.frames < 3) throw std::runtime_error("motion_beats: need at least 3 frames");
  const std::size_t fs = v.frame_size();
  std::vector<double> vel(static_cast<std::size_t>(v.frames), 0.0);
  for (int f = 1; f + 1 < v.frames; ++f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < fs; ++i)
      acc += std::abs(v.data[(f + 1) * fs + i] - v.data[(f - 1) * fs + i]);
    vel[static_cast<std::size_t>(f)] = acc / (2.0 * static_cast<double>(fs));
  }
  BeatTrack out;
  int last = -10;
  for (int f = 2; f + 2 < v.frames; ++f) {
    // strict dip against the left neighbor so flat (static or constant-speed)
    // stretches yield no beats; plateaus are credited once at their left edge
    if (vel[static_cast<std::size_t>(f)] < vel[static_cast<std::size_t>(f - 1)] &&
        vel[static_cast<std::size_t>(f)] <= vel[static_cast<std::size_t>(f + 1)] &&
        f - last >= 2) {
      out.times.push_back(static_cast<double>(f) / fps);
      last = f;
    }
  }
  return out;
}

// Hand-V: mean over coordinates of the temporal (population) variance of the
// landmark tracks; reported x100 by the callers that format tables.
inline double hand_variance(const std::vector<std::vector<double>>& frames_of_coords) {
  if (frames_of_coords.size() < 2)
    throw std::runtime_error("hand_variance: need at least 2 frames");
  const std::size_t k = frames_of_coords[0].size();
  for (const auto& f : frames_of_coords)
    if (f.size() != k) throw std::runtime_error("hand_variance: inconsistent point count");
  if (k == 0) throw std::runtime_error("hand_variance: no landmark coordinates");
  const double n = static_cast<double>(frames_of_coords.size());
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double mean = 0.0;
    for (const auto& f : frames_of_coords) mean += f[c];
    mean /= n;
    double var = 0.0;
    for (const auto& f : frames_of_coords) var += (f[c] - mean) * (f[c] - mean);
    total += var / n;
  }
  return total / static_cast<double>(k);
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::runtime_error("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::runtime_error("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// mean over frames of cos(ref, frame)
inline double identity_cossim(const std::vector<double>& ref_embedding,
                              const std::vector<std::vector<double>>& frame_embeddings) {
  if (frame_embeddings.empty()) throw std::runtime_error("identity_cossim: no frames");
  double acc = 0.0;
  for (const auto& f : frame_embeddings) acc += cosine_similarity(ref_embedding, f);
  return acc / static_cast<double>(frame_embeddings.size());
}

namespace detail_ssim {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - half, dx = x - half;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(y) * size + x] = v;
      sum += v;
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace detail_ssim

// Standard single-scale SSIM with an 11x11 sigma-1.5 Gaussian window on the
// channel-mean luminance plane, C1=(0.01)^2, C2=(0.03)^2, window centers where
// the full window fits; frames are averaged.
inline double ssim(const VideoClip& a, const VideoClip& b) {
  if (a.frames != b.frames || a.height != b.height || a.width != b.width ||
      a.channels != b.channels)
    throw std::runtime_error("ssim: dimension mismatch");
  const int win = 11;
  if (a.height < win || a.width < win)
    throw std::runtime_error("ssim: frames smaller than the 11x11 window");
  static const std::vector<double> w = detail_ssim::gaussian_window(win, 1.5);
  const double c1 = 0.0001, c2 = 0.0009;  // (0.01)^2, (0.03)^2 at data range 1
  auto luma = [](const VideoClip& v, int f, int y, int x) {
    double acc = 0.0;
    for (int c = 0; c < v.channels; ++c) acc += v.at(f, y, x, c);
    return acc / v.channels;
  };
  double total = 0.0;
  long long count = 0;
  for (int f = 0; f < a.frames; ++f)
    for (int y = 0; y + win <= a.height; ++y)
      for (int x = 0; x + win <= a.width; ++x) {
        double ma = 0.0, mb = 0.0;
        for (int dy = 0; dy < win; ++dy)
          for (int dx = 0; dx < win; ++dx) {
            const double ww = w[static_cast<std::size_t>(dy) * win + dx];
            ma += ww * luma(a, f, y + dy, x + dx);
            mb += ww * luma(b, f, y + dy, x + dx);
          }
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (int dy = 0; dy < win; ++dy)
          for (int dx = 0; dx < win; ++dx) {
            const double ww = w[static_cast<std::size_t>(dy) * win + dx];
            const double da = luma(a, f, y + dy, x + dx) - ma;
            const double db = luma(b, f, y + dy, x + dx) - mb;
            va += ww * da * da;
            vb += ww * db * db;
            cov += ww * da * db;
          }
        const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
        ++count;
      }
  return total / static_cast<double>(count);
}

// Gaussian Frechet distance over caller-supplied feature vectors:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with the cross term
// evaluated through the symmetric PSD root sqrt(sqrt(Sa) Sb sqrt(Sa)) and
// eps*I regularization of singular covariances.
namespace detail_frechet {

// Jacobi eigen decomposition of a symmetric matrix; returns eigenvalues,
// fills v with row-major eigenvectors (columns are eigenvectors).
inline std::vector<double> sym_eigen(std::vector<double> m, int n, std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += m[static_cast<std::size_t>(p) * n + q] *
                                              m[static_cast<std::size_t>(p) * n + q];
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = m[static_cast<std::size_t>(p) * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = m[static_cast<std::size_t>(p) * n + p];
        const double aqq = m[static_cast<std::size_t>(q) * n + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = m[static_cast<std::size_t>(k) * n + p];
          const double mkq = m[static_cast<std::size_t>(k) * n + q];
          m[static_cast<std::size_t>(k) * n + p] = c * mkp - s * mkq;
          m[static_cast<std::size_t>(k) * n + q] = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m[static_cast<std::size_t>(p) * n + k];
          const double mqk = m[static_cast<std::size_t>(q) * n + k];
          m[static_cast<std::size_t>(p) * n + k] = c * mpk - s * mqk;
          m[static_cast<std::size_t>(q) * n + k] = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[static_cast<std::size_t>(k) * n + p];
          const double vkq = v[static_cast<std::size_t>(k) * n + q];
          v[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<double> evals(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) evals[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i) * n + i];
  return evals;
}

inline std::vector<double> sym_sqrt(const std::vector<double>& m, int n) {
  std::vector<double> vecs;
  std::vector<double> evals = sym_eigen(m, n, vecs);
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) {
        const double l = std::sqrt(std::max(0.0, evals[static_cast<std::size_t>(k)]));
        acc += vecs[static_cast<std::size_t>(i) * n + k] * l *
               vecs[static_cast<std::size_t>(j) * n + k];
      }
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  return out;
}

inline std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double aik = a[static_cast<std::size_t>(i) * n + k];
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] += aik * b[static_cast<std::size_t>(k) * n + j];
    }
  return out;
}

}  // namespace detail_frechet

inline double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                               const std::vector<std::vector<double>>& feats_b,
                               double eps_reg = 1e-6) {
  if (feats_a.empty() || feats_b.empty()) throw std::runtime_error("frechet: empty feature set");
  const int d = static_cast<int>(feats_a[0].size());
  if (static_cast<int>(feats_a.size()) < d + 1 || static_cast<int>(feats_b.size()) < d + 1)
    throw std::runtime_error("frechet: need at least dim+1 samples per side");
  auto stats = [&](const std::vector<std::vector<double>>& feats, std::vector<double>& mu,
                   std::vector<double>& cov) {
    const double n = static_cast<double>(feats.size());
    mu.assign(static_cast<std::size_t>(d), 0.0);
    for (const auto& f : feats) {
      if (static_cast<int>(f.size()) != d) throw std::runtime_error("frechet: ragged features");
      for (int i = 0; i < d; ++i) mu[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)] / n;
    }
    cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (const auto& f : feats)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          cov[static_cast<std::size_t>(i) * d + j] +=
              (f[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)]) *
              (f[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)]) / (n - 1.0);
    for (int i = 0; i < d; ++i) cov[static_cast<std::size_t>(i) * d + i] += eps_reg;
  };
  std::vector<double> mu_a, cov_a, mu_b, cov_b;
  stats(feats_a, mu_a, cov_a);
  stats(feats_b, mu_b, cov_b);
  double dist = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = mu_a[static_cast<std::size_t>(i)] - mu_b[static_cast<std::size_t>(i)];
    dist += diff * diff;
  }
  using namespace detail_frechet;
  const std::vector<double> root_a = sym_sqrt(cov_a, d);
  const std::vector<double> inner = matmul_sq(matmul_sq(root_a, cov_b, d), root_a, d);
  // symmetrize against roundoff before the second root
  std::vector<double> inner_sym(inner.size());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      inner_sym[static_cast<std::size_t>(i) * d + j] =
          0.5 * (inner[static_cast<std::size_t>(i) * d + j] +
                 inner[static_cast<std::size_t>(j) * d + i]);
  const std::vector<double> cross = sym_sqrt(inner_sym, d);
  double trace = 0.0;
  for (int i = 0; i < d; ++i)
    trace += cov_a[static_cast<std::size_t>(i) * d + i] + cov_b[static_cast<std::size_t>(i) * d + i] -
             2.0 * cross[static_cast<std::size_t>(i) * d + i];
  return dist + trace;
}

// Accumulated motion overlay across a set of clips, min-max scaled to [0,255].
struct MotionHeatmap {
  int height = 0, width = 0;
  std::vector<double> map;  // [y][x] in [0,255]
  double mean = 0.0;
  double stddev = 0.0;
};

inline MotionHeatmap motion_heatmap(const std::vector<VideoClip>& videos) {
  if (videos.empty()) throw std::runtime_error("motion_heatmap: no videos");
  for (const auto& v : videos)
    if (v.frames < 2) throw std::runtime_error("motion_heatmap: single-frame video");
  const int h = videos[0].height, w = videos[0].width;
  for (const auto& v : videos)
    if (v.height != h || v.width != w)
      throw std::runtime_error("motion_heatmap: dimension mismatch");
  MotionHeatmap out;
  out.height = h;
  out.width = w;
  out.map.assign(static_cast<std::size_t>(h) * w, 0.0);
  for (const auto& v : videos)
    for (int f = 1; f < v.frames; ++f)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int c = 0; c < v.channels; ++c)
            acc += std::abs(v.at(f, y, x, c) - v.at(f - 1, y, x, c));
          out.map[static_cast<std::size_t>(y) * w + x] += acc / v.channels;
        }
  double lo = out.map[0], hi = out.map[0];
  for (double m : out.map) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  if (hi > lo)
    for (auto& m : out.map) m = 255.0 * (m - lo) / (hi - lo);
  else
    for (auto& m : out.map) m = 0.0;
  double mean = 0.0;
  for (double m : out.map) mean += m;
  mean /= static_cast<double>(out.map.size());
  double var = 0.0;
  for (double m : out.map) var += (m - mean) * (m - mean);
  out.mean = mean;
  out.stddev = std::sqrt(var / static_cast<double>(out.map.size()));
  return out;
}

inline VideoClip heatmap_to_clip(const MotionHeatmap& hm) {
  VideoClip v(1, hm.height, hm.width, 1);
  for (std::size_t i = 0; i < hm.map.size(); ++i) v.data[i] = hm.map[i] / 255.0;
  return v;
}

}  // namespace audcast
