#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "audcast/rng.hpp"

namespace audcast {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::runtime_error("negative extent in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Thread-local switch; evaluation inside a NoGradGuard builds no graph.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

// Value-semantics handle to a node in the autodiff graph. Data is 64-bit
// floats, row-major. Gradient accumulation is additive; the caller resets.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw std::runtime_error("tensor data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad && grad_mode();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar_tensor(double v) { return from_data({1}, {v}); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape));
    for (auto& x : d) x = rng.normal(0.0, stddev);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }

  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const { return node_->grad; }

  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double scalar() const {
    if (numel() != 1) throw std::runtime_error("scalar() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  double at(int i) const { return node_->value[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const {
    return node_->value[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim(rank() - 1)) +
                        static_cast<std::size_t>(c)];
  }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// A named leaf in a model's parameter table.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_mode()) {
    bool need = false;
    for (const auto& t : inputs) need = need || t.requires_grad();
    if (need) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (auto& t : inputs) n->parents.push_back(t.node());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

// rows/cols view of the last axis
inline std::size_t last_dim(const Tensor& t) {
  if (t.rank() < 1) throw std::runtime_error("op requires rank >= 1");
  return static_cast<std::size_t>(t.dim(t.rank() - 1));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto &av = a.data(), &bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *o.parents[static_cast<std::size_t>(p)];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) par.grad[i] += o.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto &av = a.data(), &bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] -= o.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto &av = a.data(), &bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return detail::make_op(a.shape(), std::move(out), {a}, [s](TensorNode& o) {
    auto& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * s;
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
  return detail::make_op(a.shape(), std::move(out), {a}, [](TensorNode& o) {
    auto& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
  });
}

// a: [m,k], b: [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::runtime_error("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n), 0.0);
  const auto &av = a.data(), &bv = b.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return detail::make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = dO . B^T
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = o.grad[static_cast<std::size_t>(i) * n + j];
          if (g == 0.0) continue;
          const double* brow = &pb.value[0];
          for (int p = 0; p < k; ++p)
            pa.grad[static_cast<std::size_t>(i) * k + p] += g * brow[static_cast<std::size_t>(p) * n + j];
        }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T . dO
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = pa.value[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) continue;
          const double* grow = &o.grad[static_cast<std::size_t>(i) * n];
          double* brow = &pb.grad[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::runtime_error("transpose: rank-2 tensor required");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.numel());
  const auto& av = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  return detail::make_op({n, m}, std::move(out), {a}, [m, n](TensorNode& o) {
    auto& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        pa.grad[static_cast<std::size_t>(i) * n + j] += o.grad[static_cast<std::size_t>(j) * m + i];
  });
}

// softmax over the last axis, stabilized by per-row max subtraction
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t cols = detail::last_dim(x);
  if (cols == 0) throw std::runtime_error("softmax_rows: empty last axis");
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * cols];
    double* o = &out[r * cols];
    double mx = in[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= sum;
  }
  return detail::make_op(x.shape(), std::move(out), {x}, [rows, cols](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = &o.value[r * cols];
      const double* g = &o.grad[r * cols];
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < cols; ++j) px.grad[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
}

// layer normalization over the last axis; gain/bias have that axis's length
inline Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps = 1e-5) {
  const std::size_t cols = detail::last_dim(x);
  if (cols == 0) throw std::runtime_error("layernorm: empty last axis");
  if (gain.numel() != cols || bias.numel() != cols)
    throw std::runtime_error("layernorm: gain/bias length " + std::to_string(gain.numel()) +
                             "/" + std::to_string(bias.numel()) + " does not match axis " +
                             std::to_string(cols));
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  std::vector<double> inv_std(rows), means(rows);
  const auto &xv = x.data(), &gv = gain.data(), &bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * cols];
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += in[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    means[r] = mean;
    inv_std[r] = is;
    double* o = &out[r * cols];
    for (std::size_t j = 0; j < cols; ++j) o[j] = (in[j] - mean) * is * gv[j] + bv[j];
  }
  return detail::make_op(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, cols, means, inv_std](TensorNode& o) {
        auto& px = *o.parents[0];
        auto& pg = *o.parents[1];
        auto& pb = *o.parents[2];
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* in = &px.value[r * cols];
          const double* g = &o.grad[r * cols];
          const double mean = means[r], is = inv_std[r];
          if (pg.requires_grad || pb.requires_grad) {
            pg.ensure_grad();
            pb.ensure_grad();
            for (std::size_t j = 0; j < cols; ++j) {
              const double xhat = (in[j] - mean) * is;
              if (pg.requires_grad) pg.grad[j] += g[j] * xhat;
              if (pb.requires_grad) pb.grad[j] += g[j];
            }
          }
          if (px.requires_grad) {
            px.ensure_grad();
            // d xhat_j = gain_j * g_j; dx = is*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              const double dxh = pg.value[j] * g[j];
              const double xhat = (in[j] - mean) * is;
              s1 += dxh;
              s2 += dxh * xhat;
            }
            for (std::size_t j = 0; j < cols; ++j) {
              const double dxh = pg.value[j] * g[j];
              const double xhat = (in[j] - mean) * is;
              px.grad[r * cols + j] += is * (dxh - s1 / n - xhat * s2 / n);
            }
          }
        }
      });
}

inline Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  const double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
  return detail::make_op(x.shape(), std::move(out), {x}, [inv_sqrt2](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const double inv_sqrt2pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double x = px.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      px.grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

inline Tensor silu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  return detail::make_op(x.shape(), std::move(out), {x}, [](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double x = px.value[i];
      const double s = 1.0 / (1.0 + std::exp(-x));
      px.grad[i] += o.grad[i] * (s + x * s * (1.0 - s));
    }
  });
}

// valid-padding strided 3-D convolution
// x: [Cin, D, H, W], w: [Cout, Cin, kd, kh, kw], bias: [Cout]
inline Tensor conv3d_down(const Tensor& x, const Tensor& w, const Tensor& bias, int sd, int sh,
                          int sw) {
  if (x.rank() != 4 || w.rank() != 5)
    throw std::runtime_error("conv3d_down: expected x rank 4 and kernel rank 5, got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (sd < 1 || sh < 1 || sw < 1) throw std::runtime_error("conv3d_down: stride must be >= 1");
  const int cin = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int cout = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(1) != cin)
    throw std::runtime_error("conv3d_down: kernel channels " + std::to_string(w.dim(1)) +
                             " do not match input channels " + std::to_string(cin));
  if (kd > D || kh > H || kw > W)
    throw std::runtime_error("conv3d_down: kernel " + shape_str(w.shape()) +
                             " larger than input " + shape_str(x.shape()));
  if (static_cast<int>(bias.numel()) != cout)
    throw std::runtime_error("conv3d_down: bias length mismatch");
  const int Do = (D - kd) / sd + 1, Ho = (H - kh) / sh + 1, Wo = (W - kw) / sw + 1;

  auto xi = [=](int c, int d, int h, int ww) {
    return ((static_cast<std::size_t>(c) * D + d) * H + h) * W + ww;
  };
  auto wi = [=](int co, int ci, int d, int h, int ww) {
    return (((static_cast<std::size_t>(co) * cin + ci) * kd + d) * kh + h) * kw + ww;
  };
  auto oi = [=](int c, int d, int h, int ww) {
    return ((static_cast<std::size_t>(c) * Do + d) * Ho + h) * Wo + ww;
  };

  std::vector<double> out(static_cast<std::size_t>(cout) * Do * Ho * Wo, 0.0);
  const auto &xv = x.data(), &wv = w.data(), &bv = bias.data();
  for (int co = 0; co < cout; ++co)
    for (int od = 0; od < Do; ++od)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = bv[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int d = 0; d < kd; ++d)
              for (int h = 0; h < kh; ++h)
                for (int ww2 = 0; ww2 < kw; ++ww2)
                  acc += xv[xi(ci, od * sd + d, oh * sh + h, ow * sw + ww2)] *
                         wv[wi(co, ci, d, h, ww2)];
          out[oi(co, od, oh, ow)] = acc;
        }

  return detail::make_op(
      {cout, Do, Ho, Wo}, std::move(out), {x, w, bias},
      [=](TensorNode& o) {
        auto& px = *o.parents[0];
        auto& pw = *o.parents[1];
        auto& pbias = *o.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pbias.requires_grad) pbias.ensure_grad();
        for (int co = 0; co < cout; ++co)
          for (int od = 0; od < Do; ++od)
            for (int oh = 0; oh < Ho; ++oh)
              for (int ow = 0; ow < Wo; ++ow) {
                const double g = o.grad[oi(co, od, oh, ow)];
                if (g == 0.0) continue;
                if (pbias.requires_grad) pbias.grad[static_cast<std::size_t>(co)] += g;
                for (int ci = 0; ci < cin; ++ci)
                  for (int d = 0; d < kd; ++d)
                    for (int h = 0; h < kh; ++h)
                      for (int ww2 = 0; ww2 < kw; ++ww2) {
                        const auto xidx = xi(ci, od * sd + d, oh * sh + h, ow * sw + ww2);
                        const auto widx = wi(co, ci, d, h, ww2);
                        if (pw.requires_grad) pw.grad[widx] += g * px.value[xidx];
                        if (px.requires_grad) px.grad[xidx] += g * pw.value[widx];
                      }
              }
      });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: no inputs");
  const int cols = parts[0].dim(1);
  int rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols)
      throw std::runtime_error("concat_rows: column mismatch " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> inputs = parts;
  return detail::make_op({rows, cols}, std::move(out), std::move(inputs), [](TensorNode& o) {
    std::size_t off = 0;
    for (auto& pp : o.parents) {
      auto& p = *pp;
      const std::size_t n = p.value.size();
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[off + i];
      }
      off += n;
    }
  });
}

inline Tensor slice_rows(const Tensor& x, int begin, int end) {
  if (x.rank() != 2) throw std::runtime_error("slice_rows: rank-2 tensor required");
  if (begin < 0 || end > x.dim(0) || begin >= end)
    throw std::runtime_error("slice_rows: bad range [" + std::to_string(begin) + "," +
                             std::to_string(end) + ") for " + shape_str(x.shape()));
  const int cols = x.dim(1);
  const std::size_t o0 = static_cast<std::size_t>(begin) * cols;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(o0),
                          x.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(end) * cols));
  return detail::make_op({end - begin, cols}, std::move(out), {x}, [o0](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[o0 + i] += o.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& x, int begin, int end) {
  if (x.rank() != 2) throw std::runtime_error("slice_cols: rank-2 tensor required");
  if (begin < 0 || end > x.dim(1) || begin >= end)
    throw std::runtime_error("slice_cols: bad range [" + std::to_string(begin) + "," +
                             std::to_string(end) + ") for " + shape_str(x.shape()));
  const int rows = x.dim(0), cols = x.dim(1), out_c = end - begin;
  std::vector<double> out(static_cast<std::size_t>(rows) * out_c);
  const auto& xv = x.data();
  for (int r = 0; r < rows; ++r)
    std::copy_n(&xv[static_cast<std::size_t>(r) * cols + begin], out_c,
                &out[static_cast<std::size_t>(r) * out_c]);
  return detail::make_op({rows, out_c}, std::move(out), {x}, [rows, cols, begin, out_c](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < out_c; ++j)
        px.grad[static_cast<std::size_t>(r) * cols + begin + j] +=
            o.grad[static_cast<std::size_t>(r) * out_c + j];
  });
}

inline Tensor concat_cols_list(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols_list: no inputs");
  const int rows = parts[0].dim(0);
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows)
      throw std::runtime_error("concat_cols_list: row mismatch " + shape_str(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * total);
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].data();
    for (int r = 0; r < rows; ++r)
      std::copy_n(&pv[static_cast<std::size_t>(r) * widths[k]], widths[k],
                  &out[static_cast<std::size_t>(r) * total + off]);
    off += widths[k];
  }
  std::vector<Tensor> inputs = parts;
  return detail::make_op({rows, total}, std::move(out), std::move(inputs),
                         [rows, total, widths](TensorNode& o) {
                           int off2 = 0;
                           for (std::size_t k = 0; k < o.parents.size(); ++k) {
                             auto& p = *o.parents[k];
                             if (p.requires_grad) {
                               p.ensure_grad();
                               for (int r = 0; r < rows; ++r)
                                 for (int j = 0; j < widths[k]; ++j)
                                   p.grad[static_cast<std::size_t>(r) * widths[k] + j] +=
                                       o.grad[static_cast<std::size_t>(r) * total + off2 + j];
                             }
                             off2 += widths[k];
                           }
                         });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw std::runtime_error("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  const int rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows) * (ca + cb));
  const auto &av = a.data(), &bv = b.data();
  for (int r = 0; r < rows; ++r) {
    std::copy_n(&av[static_cast<std::size_t>(r) * ca], ca,
                &out[static_cast<std::size_t>(r) * (ca + cb)]);
    std::copy_n(&bv[static_cast<std::size_t>(r) * cb], cb,
                &out[static_cast<std::size_t>(r) * (ca + cb) + ca]);
  }
  return detail::make_op({rows, ca + cb}, std::move(out), {a, b}, [rows, ca, cb](TensorNode& o) {
    auto& pa = *o.parents[0];
    auto& pb = *o.parents[1];
    for (int r = 0; r < rows; ++r) {
      const double* g = &o.grad[static_cast<std::size_t>(r) * (ca + cb)];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (int j = 0; j < ca; ++j) pa.grad[static_cast<std::size_t>(r) * ca + j] += g[j];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (int j = 0; j < cb; ++j) pb.grad[static_cast<std::size_t>(r) * cb + j] += g[ca + j];
      }
    }
  });
}

// multiply each row of x by a fixed scalar weight (not differentiated w.r.t. weights)
inline Tensor row_scale(const Tensor& x, const std::vector<double>& w) {
  if (x.rank() != 2 || static_cast<std::size_t>(x.dim(0)) != w.size())
    throw std::runtime_error("row_scale: weight length " + std::to_string(w.size()) +
                             " does not match rows of " + shape_str(x.shape()));
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(r) * cols + j] = xv[static_cast<std::size_t>(r) * cols + j] * w[static_cast<std::size_t>(r)];
  return detail::make_op(x.shape(), std::move(out), {x}, [w, rows, cols](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < cols; ++j)
        px.grad[static_cast<std::size_t>(r) * cols + j] +=
            o.grad[static_cast<std::size_t>(r) * cols + j] * w[static_cast<std::size_t>(r)];
  });
}

// broadcast a [1,C] (or length-C) vector over all rows of x
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  const std::size_t cols = detail::last_dim(x);
  if (v.numel() != cols)
    throw std::runtime_error("add_rowvec: vector length " + std::to_string(v.numel()) +
                             " does not match row width " + std::to_string(cols));
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  const auto &xv = x.data(), &vv = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = xv[r * cols + j] + vv[j];
  return detail::make_op(x.shape(), std::move(out), {x, v}, [rows, cols](TensorNode& o) {
    auto& px = *o.parents[0];
    auto& pv = *o.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i];
    }
    if (pv.requires_grad) {
      pv.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) pv.grad[j] += o.grad[r * cols + j];
    }
  });
}

inline Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  const std::size_t cols = detail::last_dim(x);
  if (v.numel() != cols)
    throw std::runtime_error("mul_rowvec: vector length " + std::to_string(v.numel()) +
                             " does not match row width " + std::to_string(cols));
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  const auto &xv = x.data(), &vv = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = xv[r * cols + j] * vv[j];
  return detail::make_op(x.shape(), std::move(out), {x, v}, [rows, cols](TensorNode& o) {
    auto& px = *o.parents[0];
    auto& pv = *o.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
          px.grad[r * cols + j] += o.grad[r * cols + j] * pv.value[j];
    }
    if (pv.requires_grad) {
      pv.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
          pv.grad[j] += o.grad[r * cols + j] * px.value[r * cols + j];
    }
  });
}

// weighted sum of constant matrices: out = sum_i w[i] * leaves[i]
inline Tensor weighted_sum(const std::vector<Tensor>& leaves, const Tensor& w) {
  if (leaves.empty() || w.numel() != leaves.size())
    throw std::runtime_error("weighted_sum: weight count mismatch");
  for (const auto& l : leaves) detail::check_same_shape(l, leaves[0], "weighted_sum");
  std::vector<double> out(leaves[0].numel(), 0.0);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const double wi = w.data()[i];
    const auto& lv = leaves[i].data();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += wi * lv[j];
  }
  std::vector<Tensor> inputs = leaves;
  inputs.push_back(w);
  const std::size_t k = leaves.size();
  return detail::make_op(leaves[0].shape(), std::move(out), std::move(inputs), [k](TensorNode& o) {
    auto& pw = *o.parents[k];
    for (std::size_t i = 0; i < k; ++i) {
      auto& pl = *o.parents[i];
      if (pl.requires_grad) {
        pl.ensure_grad();
        const double wi = pw.value[i];
        for (std::size_t j = 0; j < o.grad.size(); ++j) pl.grad[j] += wi * o.grad[j];
      }
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      for (std::size_t i = 0; i < k; ++i) {
        const auto& lv = o.parents[i]->value;
        double acc = 0.0;
        for (std::size_t j = 0; j < o.grad.size(); ++j) acc += o.grad[j] * lv[j];
        pw.grad[i] += acc;
      }
    }
  });
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_op({1}, {s}, {x}, [](TensorNode& o) {
    auto& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    const double g = o.grad[0];
    for (auto& gv : px.grad) gv += g;
  });
}

inline Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

inline Tensor mse(const Tensor& pred, const Tensor& target) {
  detail::check_same_shape(pred, target, "mse");
  Tensor d = sub(pred, target);
  return mean_all(mul(d, d));
}

// reverse-mode sweep from a scalar loss
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::runtime_error("backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      TensorNode* p = n->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// Central-difference gradient check. Runs f once with the tape to collect
// analytic gradients, then probes every element of every trainable parameter.
// The error for a parameter tensor is max|fd - analytic| normalized by the
// largest gradient magnitude seen in that tensor, which keeps near-zero
// entries from inflating the score; returns the max over all tensors.
inline double grad_check(const std::function<Tensor()>& f, std::vector<Parameter>& params,
                         double h = 1e-5) {
  for (auto& p : params)
    if (p.trainable) p.tensor.zero_grad();
  Tensor loss = f();
  if (!std::isfinite(loss.scalar())) throw std::runtime_error("grad_check: non-finite loss");
  backward(loss);

  double worst = 0.0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    std::vector<double> analytic = p.tensor.grad();
    std::vector<double> fd(analytic.size());
    auto& data = p.tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double f1, f2;
      {
        NoGradGuard ng;
        data[i] = saved + h;
        f1 = f().scalar();
        data[i] = saved - h;
        f2 = f().scalar();
      }
      data[i] = saved;
      if (!std::isfinite(f1) || !std::isfinite(f2))
        throw std::runtime_error("grad_check: non-finite loss at " + p.name);
      fd[i] = (f1 - f2) / (2.0 * h);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i)
      norm = std::max({norm, std::abs(fd[i]), std::abs(analytic[i])});
    // floor at the central-difference noise scale so identically-zero
    // gradients do not divide roundoff by itself
    norm = std::max(norm, 1e-4);
    for (std::size_t i = 0; i < fd.size(); ++i)
      worst = std::max(worst, std::abs(fd[i] - analytic[i]) / norm);
  }
  return worst;
}

// Named-parameter registry; creation order is fixed by construction order so
// seeded initialization is reproducible.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> init,
             bool trainable = true) {
    for (const auto& p : params_)
      if (p.name == name) throw std::runtime_error("duplicate parameter name: " + name);
    Tensor t = Tensor::from_data(std::move(shape), std::move(init), trainable);
    params_.push_back(Parameter{name, t, trainable});
    return t;
  }

  Tensor add_randn(const std::string& name, Shape shape, Rng& rng, double stddev,
                   bool trainable = true) {
    std::vector<double> d(shape_numel(shape));
    for (auto& x : d) x = rng.normal(0.0, stddev);
    return add(name, std::move(shape), std::move(d), trainable);
  }

  Tensor add_zeros(const std::string& name, Shape shape, bool trainable = true) {
    return add(name, std::move(shape), std::vector<double>(shape_numel(shape), 0.0), trainable);
  }

  Tensor add_full(const std::string& name, Shape shape, double v, bool trainable = true) {
    return add(name, std::move(shape), std::vector<double>(shape_numel(shape), v), trainable);
  }

  const Parameter* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad() {
    for (auto& p : params_)
      if (p.trainable) p.tensor.zero_grad();
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

 private:
  std::vector<Parameter> params_;
};

}  // namespace audcast
