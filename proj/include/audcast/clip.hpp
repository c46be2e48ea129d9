#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace audcast {

// Pixel video clip, values in [0,1], layout [frame][y][x][channel] row-major.
struct VideoClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  VideoClip() = default;
  VideoClip(int f, int h, int w, int c)
      : frames(f), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(f) * h * w * c, 0.0) {}

  std::size_t index(int f, int y, int x, int c) const {
    return ((static_cast<std::size_t>(f) * height + y) * width + x) * channels + c;
  }
  double& at(int f, int y, int x, int c) { return data[index(f, y, x, c)]; }
  double at(int f, int y, int x, int c) const { return data[index(f, y, x, c)]; }

  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }

  VideoClip slice_frames(int begin, int end) const {
    if (begin < 0 || end > frames || begin >= end)
      throw std::runtime_error("slice_frames: bad range");
    VideoClip out(end - begin, height, width, channels);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * frame_size()),
              data.begin() + static_cast<std::ptrdiff_t>(end * frame_size()), out.data.begin());
    return out;
  }

  void append_frames(const VideoClip& other) {
    if (frames == 0 && data.empty()) {
      *this = other;
      return;
    }
    if (other.height != height || other.width != width || other.channels != channels)
      throw std::runtime_error("append_frames: geometry mismatch");
    data.insert(data.end(), other.data.begin(), other.data.end());
    frames += other.frames;
  }
};

// Synthetic stand-in for stacked wav2vec hidden states: [layer][frame][dim].
struct AudioFeatures {
  int layers = 0;
  int frames = 0;
  int dim = 0;
  std::vector<double> data;

  AudioFeatures() = default;
  AudioFeatures(int l, int f, int d)
      : layers(l), frames(f), dim(d), data(static_cast<std::size_t>(l) * f * d, 0.0) {}

  std::size_t index(int l, int f, int d) const {
    return (static_cast<std::size_t>(l) * frames + f) * dim + d;
  }
  double& at(int l, int f, int d) { return data[index(l, f, d)]; }
  double at(int l, int f, int d) const { return data[index(l, f, d)]; }

  AudioFeatures slice_frames(int begin, int end) const {
    if (begin < 0 || end > frames || begin >= end)
      throw std::runtime_error("audio slice: bad range");
    AudioFeatures out(layers, end - begin, dim);
    for (int l = 0; l < layers; ++l)
      for (int f = begin; f < end; ++f)
        for (int d = 0; d < dim; ++d) out.at(l, f - begin, d) = at(l, f, d);
    return out;
  }
};

// Binary volume, one plane per video frame; used for head masks.
struct MaskVolume {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // 0/1, [frame][y][x]

  MaskVolume() = default;
  MaskVolume(int f, int h, int w)
      : frames(f), height(h), width(w), data(static_cast<std::size_t>(f) * h * w, 0) {}

  std::size_t index(int f, int y, int x) const {
    return (static_cast<std::size_t>(f) * height + y) * width + x;
  }
  std::uint8_t& at(int f, int y, int x) { return data[index(f, y, x)]; }
  std::uint8_t at(int f, int y, int x) const { return data[index(f, y, x)]; }

  bool any() const {
    for (auto v : data)
      if (v) return true;
    return false;
  }
};

namespace io {

inline void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("unexpected end of file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is) {
  std::uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void write_magic(std::ostream& os, const char m[4]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char m[4], const std::string& what) {
  char b[4];
  is.read(b, 4);
  if (!is || std::memcmp(b, m, 4) != 0)
    throw std::runtime_error(what + ": bad magic");
}

}  // namespace io

// Clip file: magic "ACLP", version u16, dims (f,H,W,c) u32, little-endian f32
// payload, row-major [f][H][W][c].
inline void write_clip(const std::string& path, const VideoClip& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  io::write_magic(os, "ACLP");
  io::write_u16(os, 1);
  io::write_u32(os, static_cast<std::uint32_t>(v.frames));
  io::write_u32(os, static_cast<std::uint32_t>(v.height));
  io::write_u32(os, static_cast<std::uint32_t>(v.width));
  io::write_u32(os, static_cast<std::uint32_t>(v.channels));
  for (double d : v.data) io::write_f32(os, static_cast<float>(d));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline VideoClip read_clip(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  io::expect_magic(is, "ACLP", path);
  const auto ver = io::read_u16(is);
  if (ver != 1) throw std::runtime_error(path + ": unsupported clip version");
  const int f = static_cast<int>(io::read_u32(is));
  const int h = static_cast<int>(io::read_u32(is));
  const int w = static_cast<int>(io::read_u32(is));
  const int c = static_cast<int>(io::read_u32(is));
  VideoClip v(f, h, w, c);
  for (auto& d : v.data) {
    const float f = io::read_f32(is);
    if (!std::isfinite(f) || f < -1e-6f || f > 1.0f + 1e-6f)
      throw std::runtime_error(path + ": pixel value out of range");
    d = std::min(1.0, std::max(0.0, static_cast<double>(f)));
  }
  return v;
}

// Audio feature file: magic "AFEA", version u16, dims (layers,L,D) u32, f32 payload.
inline void write_audio_features(const std::string& path, const AudioFeatures& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  io::write_magic(os, "AFEA");
  io::write_u16(os, 1);
  io::write_u32(os, static_cast<std::uint32_t>(a.layers));
  io::write_u32(os, static_cast<std::uint32_t>(a.frames));
  io::write_u32(os, static_cast<std::uint32_t>(a.dim));
  for (double d : a.data) io::write_f32(os, static_cast<float>(d));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline AudioFeatures read_audio_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  io::expect_magic(is, "AFEA", path);
  const auto ver = io::read_u16(is);
  if (ver != 1) throw std::runtime_error(path + ": unsupported feature version");
  const int layers = static_cast<int>(io::read_u32(is));
  const int frames = static_cast<int>(io::read_u32(is));
  const int dim = static_cast<int>(io::read_u32(is));
  AudioFeatures a(layers, frames, dim);
  for (auto& d : a.data) {
    const float f = io::read_f32(is);
    if (!std::isfinite(f)) throw std::runtime_error(path + ": non-finite feature");
    d = static_cast<double>(f);
  }
  return a;
}

// Mask file: magic "AMSK", version u16, dims (f,H,W) u32, bit-packed payload
// LSB-first in raster order.
inline void write_mask(const std::string& path, const MaskVolume& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  io::write_magic(os, "AMSK");
  io::write_u16(os, 1);
  io::write_u32(os, static_cast<std::uint32_t>(m.frames));
  io::write_u32(os, static_cast<std::uint32_t>(m.height));
  io::write_u32(os, static_cast<std::uint32_t>(m.width));
  std::uint8_t acc = 0;
  int nbits = 0;
  for (auto v : m.data) {
    acc |= static_cast<std::uint8_t>((v ? 1u : 0u) << nbits);
    if (++nbits == 8) {
      os.put(static_cast<char>(acc));
      acc = 0;
      nbits = 0;
    }
  }
  if (nbits > 0) os.put(static_cast<char>(acc));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline MaskVolume read_mask(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  io::expect_magic(is, "AMSK", path);
  const auto ver = io::read_u16(is);
  if (ver != 1) throw std::runtime_error(path + ": unsupported mask version");
  const int f = static_cast<int>(io::read_u32(is));
  const int h = static_cast<int>(io::read_u32(is));
  const int w = static_cast<int>(io::read_u32(is));
  MaskVolume m(f, h, w);
  std::uint8_t acc = 0;
  int nbits = 0;
  for (auto& v : m.data) {
    if (nbits == 0) {
      int c = is.get();
      if (c == EOF) throw std::runtime_error(path + ": truncated mask");
      acc = static_cast<std::uint8_t>(c);
      nbits = 8;
    }
    v = acc & 1u;
    acc >>= 1;
    --nbits;
  }
  return m;
}

// key=value text metadata, one entry per line; serialized in sorted key order.
using Meta = std::map<std::string, std::string>;

inline void write_meta(const std::string& path, const Meta& meta) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& [k, v] : meta) os << k << "=" << v << "\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Meta read_meta(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Meta meta;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ": malformed meta line: " + line);
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

inline std::string format_double_list(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace audcast
