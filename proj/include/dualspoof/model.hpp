#pragma once

// The dual-branch detector: two encoders, projection + bidirectional
// cross-attention, two component heads on the fused sequences, and the
// matching head on the raw encoder outputs.

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dualspoof/encoders.hpp"
#include "dualspoof/fusion.hpp"
#include "dualspoof/heads.hpp"
#include "dualspoof/kvconfig.hpp"
#include "dualspoof/matching.hpp"

namespace dualspoof {

struct ModelConfig {
  EncoderConfig speech = default_speech_encoder();
  EncoderConfig env = default_env_encoder();
  std::size_t n_heads = 4;
  std::size_t head_hidden = 32;
  std::size_t matching_dim = 16;
  std::size_t matching_hidden = 64;
  // When false the original score is 1 - max(p_speech_spoof, p_env_spoof).
  bool matching_head = true;

  void validate() const {
    speech.validate("encoder.speech");
    env.validate("encoder.env");
    if (n_heads == 0 || env.out_dim % n_heads != 0) {
      throw ParameterError("model.n_heads (" + std::to_string(n_heads) +
                           ") must divide encoder.env.out_dim (" + std::to_string(env.out_dim) + ")");
    }
    if (head_hidden == 0 || matching_dim == 0 || matching_hidden == 0) {
      throw ParameterError("model hidden sizes must be positive");
    }
  }
};

inline void read_encoder_config(FlatConfig& c, const std::string& prefix, EncoderConfig& e) {
  auto positive = [&](const std::string& key, std::size_t fallback) {
    const long long v = c.get_int(prefix + key, (long long)fallback);
    if (v < 1) throw ConfigError("key '" + prefix + key + "' must be >= 1");
    return std::size_t(v);
  };
  e.out_dim = positive("out_dim", e.out_dim);
  e.hop = positive("hop", e.hop);
  e.n_layers = positive("n_layers", e.n_layers);
  e.channels = positive("channels", e.channels);
  e.kernel = positive("kernel", e.kernel);
  e.dilation = positive("dilation", e.dilation);
  const std::string act = c.get_string(prefix + "activation", token(e.activation));
  try {
    e.activation = parse_activation(act);
  } catch (const ParseError&) {
    throw ConfigError("key '" + prefix + "activation': expected gelu or abs, got '" + act + "'");
  }
  const std::string fe = c.get_string(prefix + "frontend", token(e.frontend));
  try {
    e.frontend = parse_frontend(fe);
  } catch (const ParseError&) {
    throw ConfigError("key '" + prefix + "frontend': expected random or cosine, got '" + fe + "'");
  }
  const long long tl = c.get_int(prefix + "trainable_layers", (long long)e.trainable_layers);
  if (tl < 0 || std::size_t(tl) > e.n_layers) {
    throw ConfigError("key '" + prefix + "trainable_layers' must lie in [0, n_layers]");
  }
  e.trainable_layers = std::size_t(tl);
}

// Reads encoder.* and model.* keys.
inline ModelConfig read_model_config(FlatConfig& c, ModelConfig m = {}) {
  read_encoder_config(c, "encoder.speech.", m.speech);
  read_encoder_config(c, "encoder.env.", m.env);
  auto positive = [&](const std::string& key, std::size_t fallback) {
    const long long v = c.get_int(key, (long long)fallback);
    if (v < 1) throw ConfigError("key '" + key + "' must be >= 1");
    return std::size_t(v);
  };
  m.n_heads = positive("model.n_heads", m.n_heads);
  m.head_hidden = positive("model.head_hidden", m.head_hidden);
  m.matching_dim = positive("model.matching_dim", m.matching_dim);
  m.matching_hidden = positive("model.matching_hidden", m.matching_hidden);
  m.matching_head = c.get_bool("model.matching_head", m.matching_head);
  if (m.env.out_dim % m.n_heads != 0) {
    throw ConfigError("key 'model.n_heads' must divide encoder.env.out_dim");
  }
  return m;
}

inline std::string write_model_config(const ModelConfig& m) {
  std::ostringstream o;
  for (const auto& [prefix, e] : {std::pair{"encoder.speech.", m.speech}, std::pair{"encoder.env.", m.env}}) {
    o << prefix << "out_dim = " << e.out_dim << '\n'
      << prefix << "hop = " << e.hop << '\n'
      << prefix << "n_layers = " << e.n_layers << '\n'
      << prefix << "trainable_layers = " << e.trainable_layers << '\n'
      << prefix << "channels = " << e.channels << '\n'
      << prefix << "kernel = " << e.kernel << '\n'
      << prefix << "dilation = " << e.dilation << '\n'
      << prefix << "activation = " << token(e.activation) << '\n'
      << prefix << "frontend = " << token(e.frontend) << '\n';
  }
  o << "model.n_heads = " << m.n_heads << '\n'
    << "model.head_hidden = " << m.head_hidden << '\n'
    << "model.matching_dim = " << m.matching_dim << '\n'
    << "model.matching_hidden = " << m.matching_hidden << '\n'
    << "model.matching_head = " << (m.matching_head ? "true" : "false") << '\n';
  return o.str();
}

struct ModelParams {
  EncoderParams speech_encoder;
  EncoderParams env_encoder;
  FusionParams fusion;
  HeadParams speech_head;
  HeadParams env_head;
  MatchingParams matching;

  template <class F>
  void visit(F&& f) {
    speech_encoder.visit("speech_encoder.", f);
    env_encoder.visit("env_encoder.", f);
    fusion.visit("fusion.", f);
    speech_head.visit("speech_head.", f);
    env_head.visit("env_head.", f);
    matching.visit("matching.", f);
  }
};

inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x1417));
  ModelParams p;
  p.speech_encoder = init_encoder(cfg.speech, rng);
  p.env_encoder = init_encoder(cfg.env, rng);
  p.fusion = init_fusion(cfg.speech.out_dim, cfg.env.out_dim, cfg.n_heads, rng);
  p.speech_head = init_head(cfg.env.out_dim, cfg.head_hidden, rng);
  p.env_head = init_head(cfg.env.out_dim, cfg.head_hidden, rng);
  p.matching = init_matching(cfg.speech.out_dim, cfg.env.out_dim, cfg.matching_dim,
                             cfg.matching_hidden, rng);
  return p;
}

struct NamedTensor {
  std::string name;
  Matrix* tensor;
  bool trainable;
};

// Flat, stable-order view of every parameter tensor with its gradient mask.
inline std::vector<NamedTensor> named_tensors(ModelParams& p, const ModelConfig& cfg) {
  std::vector<NamedTensor> out;
  p.visit([&](const std::string& name, Matrix& m) { out.push_back({name, &m, true}); });
  auto mask_encoder = [&](const std::string& prefix, const EncoderConfig& ec) {
    const std::size_t first = ec.n_layers - ec.trainable_layers;
    for (auto& t : out) {
      if (t.name.rfind(prefix, 0) != 0) continue;
      const std::size_t pos = prefix.size();
      const std::size_t idx = std::stoul(t.name.substr(pos));
      t.trainable = idx >= first;
    }
  };
  mask_encoder("speech_encoder.block", cfg.speech);
  mask_encoder("env_encoder.block", cfg.env);
  if (!cfg.matching_head) {
    for (auto& t : out)
      if (t.name.rfind("matching.", 0) == 0) t.trainable = false;
  }
  return out;
}

// Same shapes, all zeros.
inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.visit([](const std::string&, Matrix& m) { m.set_zero(); });
  return z;
}

inline void add_into(ModelParams& dst, ModelParams& src) {
  std::vector<Matrix*> a, b;
  dst.visit([&](const std::string&, Matrix& m) { a.push_back(&m); });
  src.visit([&](const std::string&, Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) *a[i] += *b[i];
}

struct ForwardCache {
  EncoderCache speech_enc, env_enc;
  FrameSequence f_speech, f_env;
  FusionCache fusion;
  HeadCache speech_head, env_head;
  MatchingCache matching;
};

inline ScoreTriple model_forward(const ModelParams& p, const ModelConfig& cfg,
                                 std::span<const double> samples, ForwardCache* cache = nullptr) {
  FrameSequence fs = encode(samples, p.speech_encoder, cache ? &cache->speech_enc : nullptr);
  FrameSequence fe = encode(samples, p.env_encoder, cache ? &cache->env_enc : nullptr);
  FusedPair fused = fusion_forward(fs, fe, p.fusion, cache ? &cache->fusion : nullptr);
  ScoreTriple s;
  s.speech_logit = classify(fused.speech_star, p.speech_head, cache ? &cache->speech_head : nullptr);
  s.env_logit = classify(fused.env_star, p.env_head, cache ? &cache->env_head : nullptr);
  if (cfg.matching_head) {
    s.original_logit = matching_forward(fs, fe, p.matching, cache ? &cache->matching : nullptr);
  } else {
    // sigmoid(-m) == 1 - sigmoid(m)
    s.original_logit = -std::max(s.speech_logit, s.env_logit);
  }
  if (cache) {
    cache->f_speech = std::move(fs);
    cache->f_env = std::move(fe);
  }
  return s;
}

inline ScoreTriple model_forward(const ModelParams& p, const ModelConfig& cfg, const AudioClip& x,
                                 ForwardCache* cache = nullptr) {
  return model_forward(p, cfg, std::span<const double>(x.samples), cache);
}

struct LogitGrads {
  double speech = 0.0;
  double env = 0.0;
  double original = 0.0;
};

// Accumulates parameter gradients into grad. Without the matching head the
// original score is a fixed function of the component logits and its loss
// is not propagated.
inline void model_backward(const ModelParams& p, const ModelConfig& cfg, const ForwardCache& c,
                           const LogitGrads& d, ModelParams& grad) {
  Matrix d_speech_star = classify_backward(p.speech_head, c.speech_head, d.speech, grad.speech_head);
  Matrix d_env_star = classify_backward(p.env_head, c.env_head, d.env, grad.env_head);
  auto [d_fs, d_fe] = fusion_backward(p.fusion, c.fusion, d_speech_star, d_env_star, grad.fusion);
  if (cfg.matching_head && d.original != 0.0) {
    auto [ms, me] = matching_backward(p.matching, c.matching, d.original, grad.matching);
    d_fs += ms;
    d_fe += me;
  }
  encoder_backward(p.speech_encoder, c.speech_enc, d_fs, cfg.speech.trainable_layers,
                   grad.speech_encoder);
  encoder_backward(p.env_encoder, c.env_enc, d_fe, cfg.env.trainable_layers, grad.env_encoder);
}

}  // namespace dualspoof
