#pragma once

// Central finite-difference checks of the hand-written backward passes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dualspoof/fusion.hpp"
#include "dualspoof/matching.hpp"
#include "dualspoof/model.hpp"

namespace dualspoof {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient
// is ~0 from turning rounding noise into a large ratio; compare_gradients
// scales it by the probe loss, since the central difference of a loss L
// carries about ulp(L) / eps of noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline void check_epsilon(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ParameterError("finite-difference epsilon " + std::to_string(eps) +
                         " outside [1e-7, 1e-3]");
  }
}

using TensorList = std::vector<std::pair<std::string, Matrix*>>;

template <class P>
TensorList tensor_list(P& p) {
  TensorList out;
  p.visit("", [&](const std::string& n, Matrix& m) { out.emplace_back(n, &m); });
  return out;
}

// Perturbs every entry of every tensor in `params` and compares the central
// difference of loss() with the matching entry of `analytic`.
inline GradCheckResult compare_gradients(const TensorList& params, const TensorList& analytic,
                                         const std::function<double()>& loss, double eps) {
  check_epsilon(eps);
  GradCheckResult r;
  const double floor = 1e-6 * std::max(1.0, std::abs(loss()));
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& m = *params[t].second;
    const Matrix& g = *analytic[t].second;
    if (!g.all_finite()) throw NumericError("non-finite analytic gradient in '" + params[t].first + "'");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = m[i];
      m[i] = orig + eps;
      const double up = loss();
      m[i] = orig - eps;
      const double down = loss();
      m[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      if (!std::isfinite(numeric)) {
        throw NumericError("non-finite loss while probing '" + params[t].first + "'");
      }
      const double e = relative_error(g[i], numeric, floor);
      ++r.n_checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst_tensor = params[t].first;
        r.worst_index = i;
      }
    }
  }
  return r;
}

inline double sum_of_squares(const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * m[i];
  return s;
}

inline Matrix scaled(const Matrix& m, double c) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

struct FusionProbe {
  Matrix speech;  // T_s x D_speech
  Matrix env;     // T_e x D_env
};

// Probe loss: sum of squares of both fusion outputs (projection included).
inline double fusion_probe_loss(const FusionParams& p, const FusionProbe& probe) {
  const FusedPair out = fusion_forward(FrameSequence{probe.speech, 1}, FrameSequence{probe.env, 1}, p);
  return sum_of_squares(out.speech_star.frames) + sum_of_squares(out.env_star.frames);
}

inline GradCheckResult grad_check_fusion_detailed(FusionParams params, const FusionProbe& probe,
                                                  double eps = 1e-5) {
  check_epsilon(eps);
  FusionCache cache;
  const FusedPair out =
      fusion_forward(FrameSequence{probe.speech, 1}, FrameSequence{probe.env, 1}, params, &cache);
  FusionParams grad = params;
  grad.visit("", [](const std::string&, Matrix& m) { m.set_zero(); });
  fusion_backward(params, cache, scaled(out.speech_star.frames, 2.0), scaled(out.env_star.frames, 2.0),
                  grad);
  return compare_gradients(tensor_list(params), tensor_list(grad),
                           [&] { return fusion_probe_loss(params, probe); }, eps);
}

inline double grad_check_fusion(const FusionParams& params, const FusionProbe& probe, double eps = 1e-5) {
  return grad_check_fusion_detailed(params, probe, eps).max_rel_error;
}

struct MatchingProbe {
  Matrix speech;  // T_s x D_speech
  Matrix env;     // T_e x D_env
};

// Probe loss: the matching logit itself.
inline GradCheckResult grad_check_matching_detailed(MatchingParams params, const MatchingProbe& probe,
                                                    double eps = 1e-5) {
  check_epsilon(eps);
  MatchingCache cache;
  matching_forward(FrameSequence{probe.speech, 1}, FrameSequence{probe.env, 1}, params, &cache);
  MatchingParams grad = params;
  grad.visit("", [](const std::string&, Matrix& m) { m.set_zero(); });
  matching_backward(params, cache, 1.0, grad);
  return compare_gradients(
      tensor_list(params), tensor_list(grad),
      [&] { return matching_forward(FrameSequence{probe.speech, 1}, FrameSequence{probe.env, 1}, params); },
      eps);
}

inline double grad_check_matching(const MatchingParams& params, const MatchingProbe& probe,
                                  double eps = 1e-5) {
  return grad_check_matching_detailed(params, probe, eps).max_rel_error;
}

// Whole model on a raw waveform, loss = a*speech + b*env + c*original logit.
// Only trainable tensors are compared; frozen encoder blocks carry zero
// analytic gradient by construction.
inline GradCheckResult grad_check_model(ModelParams params, const ModelConfig& cfg,
                                        const std::vector<double>& samples, const LogitGrads& w,
                                        double eps = 1e-5) {
  check_epsilon(eps);
  ForwardCache cache;
  model_forward(params, cfg, std::span<const double>(samples), &cache);
  ModelParams grad = zeros_like(params);
  model_backward(params, cfg, cache, w, grad);
  TensorList ps, gs;
  const auto pn = named_tensors(params, cfg);
  const auto gn = named_tensors(grad, cfg);
  for (std::size_t i = 0; i < pn.size(); ++i) {
    if (!pn[i].trainable) continue;
    ps.emplace_back(pn[i].name, pn[i].tensor);
    gs.emplace_back(gn[i].name, gn[i].tensor);
  }
  return compare_gradients(
      ps, gs,
      [&] {
        const ScoreTriple s = model_forward(params, cfg, std::span<const double>(samples));
        return w.speech * s.speech_logit + w.env * s.env_logit +
               (cfg.matching_head ? w.original * s.original_logit : 0.0);
      },
      eps);
}

}  // namespace dualspoof
