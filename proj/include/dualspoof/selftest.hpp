#pragma once

// Oracle, gradient and invariant checks shared by the `selftest` command and
// the acceptance binary. Every oracle here is written independently of the
// production code path it checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dualspoof/augment.hpp"
#include "dualspoof/eval.hpp"
#include "dualspoof/fusion.hpp"
#include "dualspoof/gradcheck.hpp"
#include "dualspoof/matching.hpp"
#include "dualspoof/training.hpp"

namespace dualspoof::selftest {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradEpsilon = 1e-5;
inline constexpr double kGradRuntimeSeconds = 60.0;
inline constexpr double kEerTolerance = 1e-9;
inline constexpr double kRankInvarianceTolerance = 1e-12;
inline constexpr double kPoolTolerance = 1e-12;
inline constexpr double kAttnTolerance = 1e-6;
inline constexpr double kSnrToleranceDb = 0.01;

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Oracles.

// Operating points at t = -inf, every score, every midpoint between adjacent
// distinct scores and +inf, counted directly; the first point with
// FAR <= FRR closes the bracketing segment.
inline double brute_force_eer(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> ts{-INFINITY};
  for (std::size_t i = 0; i < all.size(); ++i) {
    ts.push_back(all[i]);
    if (i + 1 < all.size()) ts.push_back(0.5 * (all[i] + all[i + 1]));
  }
  ts.push_back(INFINITY);
  double pf = 0.0, pr = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    std::size_t fa = 0, fr = 0;
    for (double s : neg) fa += s >= ts[i];
    for (double s : pos) fr += s < ts[i];
    const double far = double(fa) / double(neg.size());
    const double frr = double(fr) / double(pos.size());
    if (far - frr <= 0.0) {
      if (i == 0) return far;
      const double a = pf - pr, b = far - frr;
      return pf + (far - pf) * a / (a - b);
    }
    pf = far;
    pr = frr;
  }
  return 0.5;
}

struct NaiveStats {
  std::vector<double> mean, max, std, norm;
};

inline NaiveStats naive_stats(const Matrix& h) {
  NaiveStats s;
  for (std::size_t d = 0; d < h.cols(); ++d) {
    double sum = 0.0;
    for (std::size_t t = 0; t < h.rows(); ++t) sum += h(t, d);
    const double mean = sum / double(h.rows());
    double mx = -INFINITY, var = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < h.rows(); ++t) {
      mx = std::max(mx, h(t, d));
      var += (h(t, d) - mean) * (h(t, d) - mean);
      sq += h(t, d) * h(t, d);
    }
    s.mean.push_back(mean);
    s.max.push_back(mx);
    s.std.push_back(std::sqrt(var / double(h.rows())));
    s.norm.push_back(std::sqrt(sq));
  }
  return s;
}

inline double realized_snr_db(const std::vector<double>& clean, const std::vector<double>& noisy) {
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    ps += clean[i] * clean[i];
    pn += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
  }
  return 10.0 * std::log10(ps / pn);
}

inline Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(perm[i], j);
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Checks.

// Unit gain and zero shift make the sum-of-squares probe nearly constant, so
// the layer norms get random affine parameters before a gradient check.
inline void randomize_norms(FusionParams& p, Rng& rng) {
  for (nn::LayerNorm* n : {&p.speech_dir.norm, &p.env_dir.norm}) {
    for (std::size_t i = 0; i < n->gain.size(); ++i) {
      n->gain[i] = 1.0 + 0.5 * gaussian(rng);
      n->shift[i] = 0.5 * gaussian(rng);
    }
  }
}

inline CheckResult gradient_fidelity(std::uint64_t seed = 1) {
  const auto start = std::chrono::steady_clock::now();
  double worst_matching = 0.0, worst_fusion = 0.0;
  Rng rng(seed);
  for (std::size_t ts : {3, 5}) {
    for (std::size_t te : {3, 5}) {
      MatchingParams mp = init_matching(4, 8, 6, 8, rng);
      MatchingProbe probe{random_matrix(rng, ts, 4), random_matrix(rng, te, 8)};
      worst_matching = std::max(worst_matching, grad_check_matching(mp, probe, kGradEpsilon));

      FusionParams fp = init_fusion(6, 8, 2, rng);
      randomize_norms(fp, rng);
      FusionProbe fprobe{random_matrix(rng, ts, 6), random_matrix(rng, te, 8)};
      worst_fusion = std::max(worst_fusion, grad_check_fusion(fp, fprobe, kGradEpsilon));
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = worst_matching < kGradTolerance && worst_fusion < kGradTolerance &&
                  secs < kGradRuntimeSeconds;
  return {"gradient fidelity", ok,
          "matching " + fmt(worst_matching) + ", fusion " + fmt(worst_fusion) + ", " +
              fmt(secs) + " s"};
}

inline CheckResult eer_oracle(std::uint64_t seed = 2) {
  Rng rng(seed);
  double worst = 0.0, worst_rank = 0.0;
  auto pool = [&](std::size_t n, double shift, bool coarse) {
    std::vector<double> v(n);
    for (auto& x : v) {
      x = gaussian(rng) + shift;
      if (coarse) x = std::round(x * 2.0) / 2.0;  // forces ties
    }
    return v;
  };
  auto check = [&](const std::vector<double>& p, const std::vector<double>& n) {
    const double e = compute_eer(p, n);
    worst = std::max(worst, std::abs(e - brute_force_eer(p, n)));
    auto mapped = [](std::vector<double> v, auto f) {
      for (auto& x : v) x = f(x);
      return v;
    };
    auto ex = [](double x) { return std::exp(x); };
    auto af = [](double x) { return 3.0 * x - 7.0; };
    worst_rank = std::max(worst_rank, std::abs(e - compute_eer(mapped(p, ex), mapped(n, ex))));
    worst_rank = std::max(worst_rank, std::abs(e - compute_eer(mapped(p, af), mapped(n, af))));
  };
  std::uniform_int_distribution<std::size_t> size(1, 50);
  for (int i = 0; i < 200; ++i) {
    check(pool(size(rng), 1.0, i % 3 == 0), pool(size(rng), 0.0, i % 3 == 0));
  }
  check({0.4, 0.4, 0.4}, {0.4, 0.4});
  check({0.9, 0.8}, {0.1, 0.2});
  const bool edges = compute_eer({0.4, 0.4, 0.4}, {0.4, 0.4}) == 0.5 &&
                     compute_eer({0.9, 0.8}, {0.1, 0.2}) == 0.0;
  return {"eer oracle", worst <= kEerTolerance && worst_rank <= kRankInvarianceTolerance && edges,
          "oracle diff " + fmt(worst) + ", monotone diff " + fmt(worst_rank)};
}

inline CheckResult pooling_oracle(std::uint64_t seed = 3) {
  Rng rng(seed);
  double worst = 0.0, worst_perm = 0.0;
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  for (int i = 0; i < 100; ++i) {
    const Matrix h = random_matrix(rng, dim(rng), dim(rng));
    const PooledStats s = stat_pool(h);
    const NaiveStats o = naive_stats(h);
    for (std::size_t d = 0; d < h.cols(); ++d) {
      worst = std::max({worst, std::abs(s.mean()[d] - o.mean[d]), std::abs(s.max()[d] - o.max[d]),
                        std::abs(s.std()[d] - o.std[d]), std::abs(s.norm()[d] - o.norm[d])});
    }
    std::vector<std::size_t> perm(h.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const PooledStats sp = stat_pool(permute_rows(h, perm));
    for (std::size_t k = 0; k < s.values.size(); ++k)
      worst_perm = std::max(worst_perm, std::abs(s.values[k] - sp.values[k]));
  }

  const Matrix c(4, 3, 2.0);
  const PooledStats cs = stat_pool(c);
  bool closed = true;
  for (std::size_t d = 0; d < 3; ++d) {
    closed = closed && cs.mean()[d] == 2.0 && cs.max()[d] == 2.0 && cs.std()[d] == 0.0 &&
             cs.norm()[d] == 4.0;
  }
  Matrix pm(2, 1);
  pm(0, 0) = 1.0;
  pm(1, 0) = -1.0;
  const PooledStats ps = stat_pool(pm);
  closed = closed && ps.mean()[0] == 0.0 && ps.max()[0] == 1.0 && ps.std()[0] == 1.0 &&
           ps.norm()[0] == std::sqrt(2.0);
  return {"pooling oracle", worst <= kPoolTolerance && worst_perm <= kPoolTolerance && closed,
          "oracle diff " + fmt(worst) + ", permutation diff " + fmt(worst_perm) +
              (closed ? ", closed forms exact" : ", closed forms wrong")};
}

inline CheckResult attention_invariants(std::uint64_t seed = 4) {
  Rng rng(seed);
  double worst_perm = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t tq = 1 + i % 4, tk = 2 + i % 5;
    const CrossAttnParams p = init_cross_attn(8, 2, rng);
    const Matrix q = random_matrix(rng, tq, 8), kv = random_matrix(rng, tk, 8);
    AttnCache cache;
    const Matrix out = cross_attend(q, kv, p, &cache);
    for (const Matrix& w : cache.weights) {
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c);
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    }
    std::vector<std::size_t> perm(tk);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    worst_perm = std::max(worst_perm, max_abs_diff(out, cross_attend(q, permute_rows(kv, perm), p)));
  }
  const CrossAttnParams id = identity_cross_attn(8, 1);
  const Matrix kv = random_matrix(rng, 1, 8), q = random_matrix(rng, 3, 8);
  const Matrix out = cross_attend(q, kv, id);
  bool single = true;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) single = single && out(r, c) == kv(0, c);
  return {"attention invariants",
          worst_perm <= kAttnTolerance && worst_sum <= kAttnTolerance && single,
          "permutation diff " + fmt(worst_perm) + ", weight-sum diff " + fmt(worst_sum) +
              (single ? ", single key exact" : ", single key inexact")};
}

inline CheckResult augmentation_exactness(std::uint64_t seed = 5) {
  Rng rng(seed);
  double worst_snr = 0.0;
  for (int i = 0; i < 100; ++i) {
    AudioClip x{std::vector<double>(800 + 37 * i), 16000, "x"};
    const double scale = uniform(rng, 0.01, 0.5);
    for (auto& v : x.samples) v = scale * gaussian(rng);
    const double target = uniform(rng, -5.0, 30.0);
    const AudioClip y = inject_noise(x, target, derive_seed(seed, i));
    worst_snr = std::max(worst_snr, std::abs(realized_snr_db(x.samples, y.samples) - target));
  }

  AudioClip s{std::vector<double>(1600), 16000, "s"}, e{std::vector<double>(1600), 16000, "e"};
  for (auto& v : s.samples) v = uniform(rng, -0.6, 0.6);
  for (auto& v : e.samples) v = uniform(rng, -0.6, 0.6);
  AugmentSpec ws;
  ws.scheme = MixScheme::weighted_sum;
  ws.mix_ratio = 1.0;
  const bool id_s = mix(s, e, ws).samples == s.samples;
  ws.mix_ratio = 0.0;
  const bool id_e = mix(s, e, ws).samples == e.samples;

  bool lengths = true;
  for (int i = 0; i < 50; ++i) {
    const AugmentSpec spec = sample_augment_spec(Klass::spoof_spoof, derive_seed(seed, 0x1e, i),
                                                 s.duration_s());
    for (MixScheme scheme : kAllSchemes) {
      AugmentSpec t = spec;
      t.scheme = scheme;
      lengths = lengths && mix(s, e, t).size() == s.size();
    }
  }
  return {"augmentation exactness", worst_snr <= kSnrToleranceDb && id_s && id_e && lengths,
          "snr diff " + fmt(worst_snr) + " dB" + (id_s && id_e ? ", identities exact" : ", identities broken") +
              (lengths ? ", lengths preserved" : ", length changed")};
}

inline constexpr std::array<std::size_t, 5> kTable1TrainCounts = {48639, 25189, 21759, 50361, 29413};

inline CheckResult sampler_exactness(std::uint64_t seed = 6) {
  std::vector<ManifestEntry> entries;
  std::size_t total_in = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) total_in += kTable1TrainCounts[c];
  entries.reserve(total_in);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < kTable1TrainCounts[c]; ++i) {
      ManifestEntry e;
      e.utt_id = std::to_string(c) + "_" + std::to_string(i);
      e.klass = ClassLabel(kAllClasses[c]);
      entries.push_back(std::move(e));
    }
  }
  const auto out = oversample(entries, seed);
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& e : out) ++counts[std::size_t(index(e.label()))];
  bool ok = out.size() == 251805;
  std::string detail = "total " + std::to_string(out.size()) + ", per class";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    ok = ok && counts[c] == 50361;
    detail += " " + std::to_string(counts[c]);
  }
  return {"sampler exactness", ok, detail};
}

inline CheckResult loss_arithmetic(std::uint64_t seed = 7) {
  const double t = total_loss(0.5, 0.3, 1.0, 0.2, LossWeights{});
  Rng rng(seed);
  bool masked = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ScoreTriple> scores;
    BatchLabels labels;
    std::uniform_int_distribution<int> pick(1, 4);
    for (int i = 0; i < 12; ++i) {
      scores.push_back({3 * gaussian(rng), 3 * gaussian(rng), 3 * gaussian(rng)});
      labels.labels.emplace_back(kAllClasses[std::size_t(pick(rng))]);
    }
    const ComponentLosses base = component_losses(scores, labels);
    std::vector<ScoreTriple> more = scores;
    BatchLabels more_labels = labels;
    for (int i = 0; i < 7; ++i) {
      const std::size_t at = std::uniform_int_distribution<std::size_t>(0, more.size())(rng);
      more.insert(more.begin() + long(at), {3 * gaussian(rng), 3 * gaussian(rng), 3 * gaussian(rng)});
      more_labels.labels.insert(more_labels.labels.begin() + long(at), ClassLabel(Klass::original));
    }
    const ComponentLosses with = component_losses(more, more_labels);
    masked = masked && with.speech == base.speech && with.env == base.env;
  }
  return {"loss arithmetic", t == 1.1 && masked,
          "total " + std::to_string(t) + (masked ? ", masking invariant" : ", masking broken")};
}

inline std::vector<CheckResult> run_property_checks() {
  return {gradient_fidelity(), eer_oracle(),          pooling_oracle(),   attention_invariants(),
          augmentation_exactness(), sampler_exactness(), loss_arithmetic()};
}

}  // namespace dualspoof::selftest
