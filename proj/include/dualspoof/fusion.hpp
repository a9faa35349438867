#pragma once

// Speech-to-environment projection followed by bidirectional multi-head
// cross-attention with a post-residual layer norm in each direction:
//
//   F_hat     = F_speech W_p + b_p                    (D_speech -> D_env)
//   F_speech* = LN_s(F_hat + CrossAttn_s(F_hat, F_env))
//   F_env*    = LN_e(F_env + CrossAttn_e(F_env, F_hat))
//
// No masking and no positional information: keys are treated as a set.

#include <cmath>
#include <string>
#include <vector>

#include "dualspoof/encoders.hpp"
#include "dualspoof/matrix.hpp"
#include "dualspoof/nn.hpp"

namespace dualspoof {

using ProjectionParams = nn::Linear;

struct CrossAttnParams {
  std::size_t n_heads = 4;
  nn::Linear query, key, value, output;
  nn::LayerNorm norm;

  std::size_t model_dim() const { return query.in_dim(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    query.visit(prefix + "query.", f);
    key.visit(prefix + "key.", f);
    value.visit(prefix + "value.", f);
    output.visit(prefix + "output.", f);
    norm.visit(prefix + "norm.", f);
  }
};

inline CrossAttnParams init_cross_attn(std::size_t model_dim, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || model_dim % n_heads != 0) {
    throw ParameterError("model_dim " + std::to_string(model_dim) +
                         " is not divisible by n_heads " + std::to_string(n_heads));
  }
  CrossAttnParams p;
  p.n_heads = n_heads;
  p.query = nn::make_linear(rng, model_dim, model_dim);
  p.key = nn::make_linear(rng, model_dim, model_dim);
  p.value = nn::make_linear(rng, model_dim, model_dim);
  p.output = nn::make_linear(rng, model_dim, model_dim);
  p.norm = nn::LayerNorm(model_dim);
  return p;
}

// Identity projections, zero biases; used by degenerate-case checks.
inline CrossAttnParams identity_cross_attn(std::size_t model_dim, std::size_t n_heads) {
  CrossAttnParams p;
  p.n_heads = n_heads;
  for (nn::Linear* l : {&p.query, &p.key, &p.value, &p.output}) {
    *l = nn::Linear(model_dim, model_dim);
    l->weight = Matrix::identity(model_dim);
  }
  p.norm = nn::LayerNorm(model_dim);
  return p;
}

struct FusionParams {
  ProjectionParams projection;
  CrossAttnParams speech_dir;  // speech queries, env keys/values
  CrossAttnParams env_dir;     // env queries, speech keys/values

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    projection.visit(prefix + "projection.", f);
    speech_dir.visit(prefix + "speech_attn.", f);
    env_dir.visit(prefix + "env_attn.", f);
  }
};

inline FusionParams init_fusion(std::size_t speech_dim, std::size_t env_dim, std::size_t n_heads,
                                Rng& rng) {
  FusionParams p;
  p.projection = nn::make_linear(rng, speech_dim, env_dim);
  p.speech_dir = init_cross_attn(env_dim, n_heads, rng);
  p.env_dir = init_cross_attn(env_dim, n_heads, rng);
  return p;
}

inline FrameSequence project_speech(const FrameSequence& f, const ProjectionParams& p) {
  if (f.dim() != p.in_dim()) {
    throw ParameterError("project_speech: input dim " + std::to_string(f.dim()) +
                         " != D_speech " + std::to_string(p.in_dim()));
  }
  return FrameSequence{nn::forward(p, f.frames), f.frame_hop_samples};
}

struct AttnCache {
  Matrix queries_in, kv_in;
  Matrix q, k, v;
  std::vector<Matrix> weights;  // per head, T_q x T_kv
  Matrix heads;                 // concatenated head outputs, T_q x D
};

inline Matrix cross_attend(const Matrix& queries, const Matrix& keys_values,
                           const CrossAttnParams& p, AttnCache* cache = nullptr) {
  const std::size_t d = p.model_dim();
  if (queries.cols() != d || keys_values.cols() != d) {
    throw ParameterError("cross_attend: inputs must have model_dim " + std::to_string(d) +
                         ", got " + std::to_string(queries.cols()) + " and " +
                         std::to_string(keys_values.cols()));
  }
  if (queries.rows() == 0 || keys_values.rows() == 0) {
    throw DegenerateInputError("cross_attend: empty query or key sequence");
  }
  const std::size_t tq = queries.rows(), tk = keys_values.rows();
  const std::size_t dh = d / p.n_heads;
  const double scale = 1.0 / std::sqrt(double(dh));

  Matrix q = nn::forward(p.query, queries);
  Matrix k = nn::forward(p.key, keys_values);
  Matrix v = nn::forward(p.value, keys_values);
  Matrix heads(tq, d);
  std::vector<Matrix> weights(p.n_heads, Matrix(tq, tk));
  std::vector<double> logits(tk);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    const std::size_t off = h * dh;
    Matrix& a = weights[h];
    for (std::size_t i = 0; i < tq; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < tk; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
        logits[j] = s * scale;
        mx = std::max(mx, logits[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) z += (a(i, j) = std::exp(logits[j] - mx));
      for (std::size_t j = 0; j < tk; ++j) {
        a(i, j) /= z;
        const double w = a(i, j);
        for (std::size_t c = 0; c < dh; ++c) heads(i, off + c) += w * v(j, off + c);
      }
    }
  }
  Matrix out = nn::forward(p.output, heads);
  if (cache) {
    cache->queries_in = queries;
    cache->kv_in = keys_values;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
    cache->heads = std::move(heads);
  }
  return out;
}

inline FrameSequence cross_attend(const FrameSequence& queries, const FrameSequence& keys_values,
                                  const CrossAttnParams& p) {
  return FrameSequence{cross_attend(queries.frames, keys_values.frames, p),
                       queries.frame_hop_samples};
}

// Returns (d_queries, d_keys_values).
inline std::pair<Matrix, Matrix> cross_attend_backward(const CrossAttnParams& p,
                                                       const AttnCache& c, const Matrix& d_out,
                                                       CrossAttnParams& grad) {
  const std::size_t d = p.model_dim();
  const std::size_t tq = c.q.rows(), tk = c.k.rows();
  const std::size_t dh = d / p.n_heads;
  const double scale = 1.0 / std::sqrt(double(dh));

  Matrix d_heads = nn::backward(p.output, c.heads, d_out, grad.output);
  Matrix dq(tq, d), dk(tk, d), dv(tk, d);
  std::vector<double> da(tk);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    const std::size_t off = h * dh;
    const Matrix& a = c.weights[h];
    for (std::size_t i = 0; i < tq; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        double s = 0.0;
        for (std::size_t cc = 0; cc < dh; ++cc) {
          s += d_heads(i, off + cc) * c.v(j, off + cc);
          dv(j, off + cc) += a(i, j) * d_heads(i, off + cc);
        }
        da[j] = s;
        dot += s * a(i, j);
      }
      for (std::size_t j = 0; j < tk; ++j) {
        const double ds = a(i, j) * (da[j] - dot) * scale;
        if (ds == 0.0) continue;
        for (std::size_t cc = 0; cc < dh; ++cc) {
          dq(i, off + cc) += ds * c.k(j, off + cc);
          dk(j, off + cc) += ds * c.q(i, off + cc);
        }
      }
    }
  }
  Matrix d_queries = nn::backward(p.query, c.queries_in, dq, grad.query);
  Matrix d_kv = nn::backward(p.key, c.kv_in, dk, grad.key);
  d_kv += nn::backward(p.value, c.kv_in, dv, grad.value);
  return {std::move(d_queries), std::move(d_kv)};
}

struct FuseCache {
  AttnCache speech_attn, env_attn;
  nn::NormCache speech_norm, env_norm;
};

struct FusedPair {
  FrameSequence speech_star;
  FrameSequence env_star;
};

inline FusedPair fuse(const FrameSequence& f_hat_speech, const FrameSequence& f_env,
                      const CrossAttnParams& speech_dir, const CrossAttnParams& env_dir,
                      FuseCache* cache = nullptr) {
  Matrix s = cross_attend(f_hat_speech.frames, f_env.frames, speech_dir,
                          cache ? &cache->speech_attn : nullptr);
  s += f_hat_speech.frames;
  Matrix e = cross_attend(f_env.frames, f_hat_speech.frames, env_dir,
                          cache ? &cache->env_attn : nullptr);
  e += f_env.frames;
  FusedPair out;
  out.speech_star.frames = nn::forward(speech_dir.norm, s, cache ? &cache->speech_norm : nullptr);
  out.speech_star.frame_hop_samples = f_hat_speech.frame_hop_samples;
  out.env_star.frames = nn::forward(env_dir.norm, e, cache ? &cache->env_norm : nullptr);
  out.env_star.frame_hop_samples = f_env.frame_hop_samples;
  return out;
}

inline FusedPair fuse(const FrameSequence& f_hat_speech, const FrameSequence& f_env,
                      const FusionParams& p, FuseCache* cache = nullptr) {
  return fuse(f_hat_speech, f_env, p.speech_dir, p.env_dir, cache);
}

// Returns (d_f_hat_speech, d_f_env).
inline std::pair<Matrix, Matrix> fuse_backward(const CrossAttnParams& speech_dir,
                                               const CrossAttnParams& env_dir,
                                               const FuseCache& c, const Matrix& d_speech_star,
                                               const Matrix& d_env_star,
                                               CrossAttnParams& g_speech_dir,
                                               CrossAttnParams& g_env_dir) {
  Matrix ds = nn::backward(speech_dir.norm, c.speech_norm, d_speech_star, g_speech_dir.norm);
  Matrix de = nn::backward(env_dir.norm, c.env_norm, d_env_star, g_env_dir.norm);
  Matrix d_hat = ds;
  Matrix d_env = de;
  auto [dq_s, dkv_s] = cross_attend_backward(speech_dir, c.speech_attn, ds, g_speech_dir);
  auto [dq_e, dkv_e] = cross_attend_backward(env_dir, c.env_attn, de, g_env_dir);
  d_hat += dq_s;
  d_hat += dkv_e;
  d_env += dkv_s;
  d_env += dq_e;
  return {std::move(d_hat), std::move(d_env)};
}

// Projection + fusion, the full block between the encoders and the heads.
struct FusionCache {
  Matrix speech_in;
  FrameSequence f_hat;
  FuseCache fuse;
};

inline FusedPair fusion_forward(const FrameSequence& f_speech, const FrameSequence& f_env,
                                const FusionParams& p, FusionCache* cache = nullptr) {
  FrameSequence f_hat = project_speech(f_speech, p.projection);
  FusedPair out = fuse(f_hat, f_env, p, cache ? &cache->fuse : nullptr);
  if (cache) {
    cache->speech_in = f_speech.frames;
    cache->f_hat = std::move(f_hat);
  }
  return out;
}

// Returns (d_f_speech, d_f_env).
inline std::pair<Matrix, Matrix> fusion_backward(const FusionParams& p, const FusionCache& c,
                                                 const Matrix& d_speech_star,
                                                 const Matrix& d_env_star, FusionParams& grad) {
  auto [d_hat, d_env] = fuse_backward(p.speech_dir, p.env_dir, c.fuse, d_speech_star,
                                      d_env_star, grad.speech_dir, grad.env_dir);
  Matrix d_speech = nn::backward(p.projection, c.speech_in, d_hat, grad.projection);
  return {std::move(d_speech), std::move(d_env)};
}

}  // namespace dualspoof
