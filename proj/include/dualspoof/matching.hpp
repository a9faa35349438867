#pragma once

// Matching head for original-class estimation. Works on the raw encoder
// outputs (before cross-attention):
//
//   H_s = phi_s(F_speech), H_e = phi_e(F_env)          shared width D_m
//   h   = [mean | max | std | l2norm] over time         4 D_m each
//   z   = [h_s | h_e | |h_s - h_e| | h_s * h_e]         16 D_m
//   logit = W2 gelu(W1 z + b1) + b2

#include <cmath>
#include <string>
#include <vector>

#include "dualspoof/encoders.hpp"
#include "dualspoof/matrix.hpp"
#include "dualspoof/nn.hpp"

namespace dualspoof {

struct MatchingParams {
  nn::Linear phi_speech;  // D_speech -> D_m
  nn::Linear phi_env;     // D_env -> D_m
  nn::Linear hidden;      // 16 D_m -> D_h
  nn::Linear out;         // D_h -> 1

  std::size_t shared_dim() const { return phi_speech.out_dim(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    phi_speech.visit(prefix + "phi_speech.", f);
    phi_env.visit(prefix + "phi_env.", f);
    hidden.visit(prefix + "ffn_hidden.", f);
    out.visit(prefix + "ffn_out.", f);
  }
};

inline MatchingParams init_matching(std::size_t speech_dim, std::size_t env_dim,
                                    std::size_t shared_dim, std::size_t hidden_dim, Rng& rng) {
  if (shared_dim == 0 || hidden_dim == 0) throw ParameterError("matching dims must be positive");
  MatchingParams p;
  p.phi_speech = nn::make_linear(rng, speech_dim, shared_dim);
  p.phi_env = nn::make_linear(rng, env_dim, shared_dim);
  p.hidden = nn::make_linear(rng, 16 * shared_dim, hidden_dim, std::sqrt(2.0));
  p.out = nn::make_linear(rng, hidden_dim, 1);
  return p;
}

inline FrameSequence matching_project(const FrameSequence& f, const nn::Linear& phi) {
  if (f.dim() != phi.in_dim()) {
    throw ParameterError("matching_project: input dim " + std::to_string(f.dim()) +
                         " != phi input dim " + std::to_string(phi.in_dim()));
  }
  return FrameSequence{nn::forward(phi, f.frames), f.frame_hop_samples};
}

// [mean | max | std | l2norm], each of length D.
struct PooledStats {
  std::vector<double> values;

  std::size_t dim() const { return values.size() / 4; }
  std::span<const double> mean() const { return segment(0); }
  std::span<const double> max() const { return segment(1); }
  std::span<const double> std() const { return segment(2); }
  std::span<const double> norm() const { return segment(3); }

 private:
  std::span<const double> segment(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim(), dim());
  }
};

struct PoolCache {
  Matrix h;
  std::vector<std::size_t> argmax;
  PooledStats stats;
};

inline PooledStats stat_pool(const Matrix& h, PoolCache* cache = nullptr) {
  const std::size_t t = h.rows(), d = h.cols();
  if (t == 0 || d == 0) throw DegenerateInputError("stat_pool: empty frame sequence");
  PooledStats s;
  s.values.assign(4 * d, 0.0);
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0, sq = 0.0, mx = h(0, j);
    for (std::size_t i = 0; i < t; ++i) {
      const double v = h(i, j);
      sum += v;
      sq += v * v;
      if (v > mx) {
        mx = v;
        argmax[j] = i;
      }
    }
    const double mean = sum / double(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) var += (h(i, j) - mean) * (h(i, j) - mean);
    var /= double(t);
    s.values[j] = mean;
    s.values[d + j] = mx;
    s.values[2 * d + j] = std::sqrt(var);
    s.values[3 * d + j] = std::sqrt(sq);
  }
  if (cache) {
    cache->h = h;
    cache->argmax = std::move(argmax);
    cache->stats = s;
  }
  return s;
}

inline PooledStats stat_pool(const FrameSequence& f) { return stat_pool(f.frames); }

// At zero std / zero norm the subgradient 0 is used.
inline Matrix stat_pool_backward(const PoolCache& c, std::span<const double> d_stats) {
  const std::size_t t = c.h.rows(), d = c.h.cols();
  Matrix dh(t, d);
  const auto& v = c.stats.values;
  for (std::size_t j = 0; j < d; ++j) {
    const double mean = v[j], sd = v[2 * d + j], nrm = v[3 * d + j];
    const double g_mean = d_stats[j] / double(t);
    const double g_std = sd > 0.0 ? d_stats[2 * d + j] / (double(t) * sd) : 0.0;
    const double g_norm = nrm > 0.0 ? d_stats[3 * d + j] / nrm : 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double x = c.h(i, j);
      dh(i, j) = g_mean + g_std * (x - mean) + g_norm * x;
    }
    dh(c.argmax[j], j) += d_stats[d + j];
  }
  return dh;
}

inline std::vector<double> interact(const PooledStats& hs, const PooledStats& he) {
  if (hs.values.size() != he.values.size()) {
    throw ParameterError("interact: length mismatch " + std::to_string(hs.values.size()) +
                         " vs " + std::to_string(he.values.size()));
  }
  const std::size_t n = hs.values.size();
  std::vector<double> z(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = hs.values[i], b = he.values[i];
    z[i] = a;
    z[n + i] = b;
    z[2 * n + i] = std::abs(a - b);
    z[3 * n + i] = a * b;
  }
  return z;
}

// Returns (d_hs, d_he). d|a-b| uses sign(a-b) with sign(0) = 0.
inline std::pair<std::vector<double>, std::vector<double>> interact_backward(
    const PooledStats& hs, const PooledStats& he, std::span<const double> dz) {
  const std::size_t n = hs.values.size();
  std::vector<double> da(n), db(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = hs.values[i], b = he.values[i];
    const double sgn = a > b ? 1.0 : (a < b ? -1.0 : 0.0);
    da[i] = dz[i] + sgn * dz[2 * n + i] + b * dz[3 * n + i];
    db[i] = dz[n + i] - sgn * dz[2 * n + i] + a * dz[3 * n + i];
  }
  return {std::move(da), std::move(db)};
}

struct MatchingCache {
  Matrix speech_in, env_in;
  PoolCache speech_pool, env_pool;
  Matrix z;       // 1 x 16 D_m
  Matrix hidden;  // pre-activation
  Matrix act;
};

inline double matching_forward(const FrameSequence& f_speech, const FrameSequence& f_env,
                               const MatchingParams& p, MatchingCache* cache = nullptr) {
  const FrameSequence hs = matching_project(f_speech, p.phi_speech);
  const FrameSequence he = matching_project(f_env, p.phi_env);
  PoolCache* ps = cache ? &cache->speech_pool : nullptr;
  PoolCache* pe = cache ? &cache->env_pool : nullptr;
  const PooledStats s = stat_pool(hs.frames, ps);
  const PooledStats e = stat_pool(he.frames, pe);
  const std::vector<double> zv = interact(s, e);
  Matrix z(1, zv.size());
  std::copy(zv.begin(), zv.end(), z.data());
  Matrix hid = nn::forward(p.hidden, z);
  Matrix act = nn::gelu(hid);
  const double logit = nn::forward(p.out, act)[0];
  if (cache) {
    cache->speech_in = f_speech.frames;
    cache->env_in = f_env.frames;
    cache->z = std::move(z);
    cache->hidden = std::move(hid);
    cache->act = std::move(act);
  }
  return logit;
}

// Returns (d_f_speech, d_f_env) for the encoder outputs.
inline std::pair<Matrix, Matrix> matching_backward(const MatchingParams& p,
                                                   const MatchingCache& c, double d_logit,
                                                   MatchingParams& grad) {
  Matrix d_out(1, 1, d_logit);
  Matrix d_act = nn::backward(p.out, c.act, d_out, grad.out);
  Matrix d_hid = nn::gelu_backward(c.hidden, d_act);
  Matrix d_z = nn::backward(p.hidden, c.z, d_hid, grad.hidden);
  auto [d_s, d_e] = interact_backward(c.speech_pool.stats, c.env_pool.stats,
                                      std::span<const double>(d_z.storage()));
  Matrix d_hs = stat_pool_backward(c.speech_pool, d_s);
  Matrix d_he = stat_pool_backward(c.env_pool, d_e);
  Matrix d_fs = nn::backward(p.phi_speech, c.speech_in, d_hs, grad.phi_speech);
  Matrix d_fe = nn::backward(p.phi_env, c.env_in, d_he, grad.phi_env);
  return {std::move(d_fs), std::move(d_fe)};
}

}  // namespace dualspoof
