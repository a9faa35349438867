#pragma once

// Differentiable building blocks shared by the encoders, fusion block, heads
// and matching head. Every block is a plain parameter struct plus free
// forward/backward functions; backward accumulates into a gradient struct of
// the same type and returns the input gradient.

#include <cmath>
#include <string>

#include "dualspoof/matrix.hpp"

namespace dualspoof::nn {

// y = x W + b, with x of shape T x in, W of shape in x out.
struct Linear {
  Matrix weight;
  Matrix bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out) : weight(in, out), bias(1, out) {}

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight);
    f(prefix + "bias", bias);
  }
};

inline Linear make_linear(Rng& rng, std::size_t in, std::size_t out,
                          double gain = 1.0) {
  Linear l(in, out);
  l.weight = random_matrix(rng, in, out, gain / std::sqrt(double(in)));
  return l;
}

inline Matrix forward(const Linear& l, const Matrix& x) {
  if (x.cols() != l.in_dim()) {
    throw ParameterError("linear input dim " + std::to_string(x.cols()) +
                         " != expected " + std::to_string(l.in_dim()));
  }
  Matrix y = matmul(x, l.weight);
  for (std::size_t t = 0; t < y.rows(); ++t) {
    auto r = y.row(t);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += l.bias[j];
  }
  return y;
}

inline Matrix backward(const Linear& l, const Matrix& x, const Matrix& dy,
                       Linear& grad, bool need_dx = true) {
  add_matmul_tn(x, dy, grad.weight);
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    auto r = dy.row(t);
    for (std::size_t j = 0; j < r.size(); ++j) grad.bias[j] += r[j];
  }
  if (!need_dx) return {};
  return matmul_nt(dy, l.weight);
}

// ---------------------------------------------------------------------------
// GELU, tanh approximation. Smooth everywhere, which keeps finite-difference
// checks meaningful.

inline double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  const double u = k * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
  constexpr double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

inline Matrix gelu(const Matrix& x) {
  Matrix y = x;
  for (auto& v : y.storage()) v = gelu(v);
  return y;
}

inline Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= gelu_grad(x[i]);
  return dx;
}

// Full-wave rectifier; subgradient 0 at the origin.
inline Matrix abs(const Matrix& x) {
  Matrix y = x;
  for (auto& v : y.storage()) v = std::abs(v);
  return y;
}

inline Matrix abs_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
  return dx;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Per-row normalization. With affine = false the gain/shift are absent and
// the block is parameter free.

struct LayerNorm {
  Matrix gain;
  Matrix shift;
  double eps = 1e-6;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double eps_ = 1e-6)
      : gain(1, dim, 1.0), shift(1, dim), eps(eps_) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "gain", gain);
    f(prefix + "shift", shift);
  }
};

struct NormCache {
  Matrix normalized;  // pre-affine
  std::vector<double> inv_std;
};

inline Matrix normalize_rows(const Matrix& x, double eps, NormCache* cache) {
  Matrix n(x.rows(), x.cols());
  std::vector<double> inv(x.rows());
  const double d = double(x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto r = x.row(t);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= d;
    inv[t] = 1.0 / std::sqrt(var + eps);
    auto out = n.row(t);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] = (r[j] - mean) * inv[t];
  }
  if (cache) {
    cache->normalized = n;
    cache->inv_std = std::move(inv);
  }
  return n;
}

inline Matrix normalize_rows_backward(const NormCache& cache, const Matrix& dn) {
  const Matrix& n = cache.normalized;
  Matrix dx(n.rows(), n.cols());
  const double d = double(n.cols());
  for (std::size_t t = 0; t < n.rows(); ++t) {
    auto g = dn.row(t);
    auto xh = n.row(t);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      sum_g += g[j];
      sum_gx += g[j] * xh[j];
    }
    auto out = dx.row(t);
    for (std::size_t j = 0; j < g.size(); ++j) {
      out[j] = cache.inv_std[t] * (g[j] - sum_g / d - xh[j] * sum_gx / d);
    }
  }
  return dx;
}

inline Matrix forward(const LayerNorm& ln, const Matrix& x, NormCache* cache) {
  if (x.cols() != ln.gain.cols()) {
    throw ParameterError("layer norm dim " + std::to_string(x.cols()) +
                         " != expected " + std::to_string(ln.gain.cols()));
  }
  Matrix y = normalize_rows(x, ln.eps, cache);
  for (std::size_t t = 0; t < y.rows(); ++t) {
    auto r = y.row(t);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = r[j] * ln.gain[j] + ln.shift[j];
  }
  return y;
}

inline Matrix backward(const LayerNorm& ln, const NormCache& cache,
                       const Matrix& dy, LayerNorm& grad) {
  Matrix dn(dy.rows(), dy.cols());
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    auto g = dy.row(t);
    auto xh = cache.normalized.row(t);
    auto o = dn.row(t);
    for (std::size_t j = 0; j < g.size(); ++j) {
      grad.gain[j] += g[j] * xh[j];
      grad.shift[j] += g[j];
      o[j] = g[j] * ln.gain[j];
    }
  }
  return normalize_rows_backward(cache, dn);
}

// ---------------------------------------------------------------------------
// Strided, optionally dilated 1-D convolution over a time-major signal
// (T x C_in). Zero padding of dilation*(kernel-1)/2 on the left so that
// T_out = floor(T_in / stride) exactly. Weight row o holds the taps for
// output channel o laid out [k][c_in].

struct Conv1d {
  Matrix weight;  // C_out x (kernel * C_in)
  Matrix bias;    // 1 x C_out
  std::size_t kernel = 9;
  std::size_t stride = 1;
  std::size_t in_channels = 1;
  std::size_t dilation = 1;

  std::size_t out_channels() const { return weight.rows(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight);
    f(prefix + "bias", bias);
  }
};

inline Conv1d make_conv1d(Rng& rng, std::size_t in_c, std::size_t out_c,
                          std::size_t kernel, std::size_t stride, double gain = 1.0,
                          std::size_t dilation = 1) {
  Conv1d c;
  c.kernel = kernel;
  c.stride = stride;
  c.in_channels = in_c;
  c.dilation = dilation;
  c.weight = random_matrix(rng, out_c, kernel * in_c,
                           gain / std::sqrt(double(kernel * in_c)));
  c.bias = Matrix(1, out_c);
  return c;
}

inline std::size_t conv_left_pad(const Conv1d& c) { return c.dilation * ((c.kernel - 1) / 2); }

// Copies x into a zero-padded buffer so every output tap window lies inside it.
inline Matrix conv_pad_input(const Conv1d& c, const Matrix& x) {
  const std::size_t t_out = x.rows() / c.stride;
  const std::size_t left = conv_left_pad(c);
  const std::size_t needed = t_out == 0 ? 0 : (t_out - 1) * c.stride + (c.kernel - 1) * c.dilation + 1;
  Matrix padded(std::max(needed, x.rows() + left), x.cols());
  std::copy(x.storage().begin(), x.storage().end(),
            padded.data() + left * x.cols());
  return padded;
}

inline Matrix conv_forward_padded(const Conv1d& c, const Matrix& padded,
                                  std::size_t t_out) {
  const std::size_t oc = c.out_channels();
  const std::size_t ic = c.in_channels;
  const std::size_t span = c.kernel * ic;
  const std::size_t tap_step = c.dilation * ic;
  Matrix y(t_out, oc);
  for (std::size_t t = 0; t < t_out; ++t) {
    const double* window = padded.data() + t * c.stride * ic;
    double* out = y.data() + t * oc;
    for (std::size_t o = 0; o < oc; ++o) {
      const double* w = c.weight.data() + o * span;
      double s = c.bias[o];
      if (c.dilation == 1) {
        for (std::size_t i = 0; i < span; ++i) s += w[i] * window[i];
      } else {
        for (std::size_t k = 0; k < c.kernel; ++k) {
          const double* xk = window + k * tap_step;
          const double* wk = w + k * ic;
          for (std::size_t j = 0; j < ic; ++j) s += wk[j] * xk[j];
        }
      }
      out[o] = s;
    }
  }
  return y;
}

inline Matrix forward(const Conv1d& c, const Matrix& x, Matrix* padded_cache) {
  if (x.cols() != c.in_channels) {
    throw ParameterError("conv input channels " + std::to_string(x.cols()) +
                         " != expected " + std::to_string(c.in_channels));
  }
  Matrix padded = conv_pad_input(c, x);
  Matrix y = conv_forward_padded(c, padded, x.rows() / c.stride);
  if (padded_cache) *padded_cache = std::move(padded);
  return y;
}

// dx is returned in unpadded coordinates with t_in rows.
inline Matrix backward(const Conv1d& c, const Matrix& padded, std::size_t t_in,
                       const Matrix& dy, Conv1d& grad, bool need_dx = true) {
  const std::size_t oc = c.out_channels();
  const std::size_t ic = c.in_channels;
  const std::size_t span = c.kernel * ic;
  const std::size_t tap_step = c.dilation * ic;
  Matrix dpadded;
  if (need_dx) dpadded = Matrix(padded.rows(), padded.cols());
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    const double* window = padded.data() + t * c.stride * ic;
    const double* g = dy.data() + t * oc;
    double* dwin = need_dx ? dpadded.data() + t * c.stride * ic : nullptr;
    for (std::size_t o = 0; o < oc; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      grad.bias[o] += go;
      double* gw = grad.weight.data() + o * span;
      const double* w = c.weight.data() + o * span;
      for (std::size_t k = 0; k < c.kernel; ++k) {
        const double* xk = window + k * tap_step;
        double* gwk = gw + k * ic;
        for (std::size_t j = 0; j < ic; ++j) gwk[j] += go * xk[j];
        if (dwin) {
          double* dk = dwin + k * tap_step;
          const double* wk = w + k * ic;
          for (std::size_t j = 0; j < ic; ++j) dk[j] += go * wk[j];
        }
      }
    }
  }
  if (!need_dx) return {};
  Matrix dx(t_in, ic);
  const std::size_t left = conv_left_pad(c);
  std::copy(dpadded.data() + left * ic, dpadded.data() + (left + t_in) * ic, dx.data());
  return dx;
}

}  // namespace dualspoof::nn
