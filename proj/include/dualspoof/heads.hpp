#pragma once

// Per-component spoof classifiers (attentive pooling followed by a two-layer
// MLP) and the five-class decision rule. Logit convention: positive means
// spoof for the component heads and original for the matching head.

#include <cmath>
#include <string>

#include "dualspoof/encoders.hpp"
#include "dualspoof/labels.hpp"
#include "dualspoof/nn.hpp"

namespace dualspoof {

struct ScoreTriple {
  double speech_logit = 0.0;
  double env_logit = 0.0;
  double original_logit = 0.0;

  double p_speech_spoof() const { return nn::sigmoid(speech_logit); }
  double p_env_spoof() const { return nn::sigmoid(env_logit); }
  double p_original() const { return nn::sigmoid(original_logit); }

  static ScoreTriple from_probabilities(double p_speech, double p_env, double p_original) {
    auto logit = [](double p) { return std::log(p) - std::log1p(-p); };
    return {logit(p_speech), logit(p_env), logit(p_original)};
  }
};

struct HeadParams {
  Matrix attention;  // 1 x model_dim
  nn::Linear hidden; // model_dim -> H
  nn::Linear out;    // H -> 1
  double score_scale = 1.0;  // fixed, not trained

  std::size_t model_dim() const { return attention.cols(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "attention", attention);
    hidden.visit(prefix + "hidden.", f);
    out.visit(prefix + "out.", f);
  }
};

inline HeadParams init_head(std::size_t model_dim, std::size_t hidden_dim, Rng& rng) {
  HeadParams p;
  p.attention = random_matrix(rng, 1, model_dim, 1.0 / std::sqrt(double(model_dim)));
  p.hidden = nn::make_linear(rng, model_dim, hidden_dim, std::sqrt(2.0));
  p.out = nn::make_linear(rng, hidden_dim, 1);
  p.score_scale = 1.0;
  return p;
}

struct HeadCache {
  Matrix frames;
  std::vector<double> weights;
  Matrix pooled, hidden, act;
};

// softmax over t of scale * (a . F[t])
inline std::vector<double> attention_weights(const Matrix& f, const HeadParams& p) {
  const std::size_t t = f.rows(), d = f.cols();
  std::vector<double> w(t);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p.attention[j] * f(i, j);
    w[i] = p.score_scale * s;
    mx = std::max(mx, w[i]);
  }
  double z = 0.0;
  for (auto& v : w) z += (v = std::exp(v - mx));
  for (auto& v : w) v /= z;
  return w;
}

inline Matrix attentive_pool(const Matrix& f, const std::vector<double>& w) {
  Matrix pooled(1, f.cols());
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) pooled[j] += w[i] * f(i, j);
  return pooled;
}

inline double classify(const FrameSequence& f_star, const HeadParams& p,
                       HeadCache* cache = nullptr) {
  if (f_star.dim() != p.model_dim()) {
    throw ParameterError("classify: frame dim " + std::to_string(f_star.dim()) +
                         " != model_dim " + std::to_string(p.model_dim()));
  }
  if (f_star.num_frames() == 0) throw DegenerateInputError("classify: empty frame sequence");
  std::vector<double> w = attention_weights(f_star.frames, p);
  Matrix pooled = attentive_pool(f_star.frames, w);
  Matrix hid = nn::forward(p.hidden, pooled);
  Matrix act = nn::gelu(hid);
  const double logit = nn::forward(p.out, act)[0];
  if (cache) {
    cache->frames = f_star.frames;
    cache->weights = std::move(w);
    cache->pooled = std::move(pooled);
    cache->hidden = std::move(hid);
    cache->act = std::move(act);
  }
  return logit;
}

// Returns d_frames.
inline Matrix classify_backward(const HeadParams& p, const HeadCache& c, double d_logit,
                                HeadParams& grad) {
  Matrix d_out(1, 1, d_logit);
  Matrix d_act = nn::backward(p.out, c.act, d_out, grad.out);
  Matrix d_hid = nn::gelu_backward(c.hidden, d_act);
  Matrix d_pooled = nn::backward(p.hidden, c.pooled, d_hid, grad.hidden);
  const std::size_t t = c.frames.rows(), d = c.frames.cols();
  Matrix df(t, d);
  std::vector<double> dw(t);
  double dot = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      s += d_pooled[j] * c.frames(i, j);
      df(i, j) = c.weights[i] * d_pooled[j];
    }
    dw[i] = s;
    dot += c.weights[i] * s;
  }
  for (std::size_t i = 0; i < t; ++i) {
    const double ds = c.weights[i] * (dw[i] - dot) * p.score_scale;
    for (std::size_t j = 0; j < d; ++j) {
      grad.attention[j] += ds * c.frames(i, j);
      df(i, j) += ds * p.attention[j];
    }
  }
  return df;
}

struct Thresholds {
  double original = 0.5;
  double speech = 0.5;
  double env = 0.5;
};

inline ClassLabel decide_class(const ScoreTriple& s, double tau_original, double tau_speech,
                               double tau_env) {
  if (s.p_original() > tau_original) return Klass::original;
  return klass_from_components(s.p_speech_spoof() > tau_speech, s.p_env_spoof() > tau_env);
}

inline ClassLabel decide_class(const ScoreTriple& s, const Thresholds& t = {}) {
  return decide_class(s, t.original, t.speech, t.env);
}

}  // namespace dualspoof
