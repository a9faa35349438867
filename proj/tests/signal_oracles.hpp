#pragma once

// Test-only signal statistics used as independent oracles for the corpus
// generator. Nothing in the library depends on these.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace dualspoof::testing {

inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j], v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Welch-averaged power spectrum with a Hann window.
inline std::vector<double> power_spectrum(const std::vector<double>& x, std::size_t nfft = 512) {
  std::vector<double> psd(nfft / 2 + 1, 0.0);
  std::size_t frames = 0;
  for (std::size_t start = 0; start + nfft <= x.size(); start += nfft / 2, ++frames) {
    std::vector<std::complex<double>> buf(nfft);
    for (std::size_t i = 0; i < nfft; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(nfft));
      buf[i] = x[start + i] * w;
    }
    fft_inplace(buf);
    for (std::size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(buf[k]);
  }
  for (auto& v : psd) v /= double(std::max<std::size_t>(frames, 1));
  return psd;
}

// Geometric over arithmetic mean of the power spectrum inside [lo_hz, hi_hz].
inline double spectral_flatness(const std::vector<double>& x, int sample_rate,
                                double lo_hz = 100.0, double hi_hz = 4000.0) {
  const std::size_t nfft = 512;
  const auto psd = power_spectrum(x, nfft);
  double log_sum = 0.0, sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double f = double(k) * sample_rate / double(nfft);
    if (f < lo_hz || f > hi_hz) continue;
    const double p = psd[k] + 1e-20;
    log_sum += std::log(p);
    sum += p;
    ++count;
  }
  return std::exp(log_sum / double(count)) / (sum / double(count));
}

// Normalized autocorrelation at a lag, over the overlapping region.
inline double autocorrelation(const std::vector<double>& x, std::size_t lag) {
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) {
    xy += x[i] * x[i + lag];
    xx += x[i] * x[i];
    yy += x[i + lag] * x[i + lag];
  }
  return xy / std::sqrt(xx * yy + 1e-300);
}

struct Sample2 {
  double f[2];
  int label;
};

// Best depth-2 axis-aligned decision tree by exhaustive threshold search.
inline double best_depth2_tree_accuracy(const std::vector<Sample2>& data) {
  auto best_stump = [](const std::vector<Sample2>& d) -> int {
    // correct count of the best single split (or constant) on d
    int pos = 0;
    for (const auto& s : d) pos += s.label;
    int best = std::max(pos, int(d.size()) - pos);
    for (int feat = 0; feat < 2; ++feat) {
      for (const auto& cand : d) {
        const double thr = cand.f[feat];
        int lp = 0, ln = 0, rp = 0, rn = 0;
        for (const auto& s : d) {
          if (s.f[feat] <= thr) (s.label ? lp : ln)++;
          else (s.label ? rp : rn)++;
        }
        best = std::max(best, std::max(lp, ln) + std::max(rp, rn));
      }
    }
    return best;
  };
  int best = best_stump(data);
  for (int feat = 0; feat < 2; ++feat) {
    for (const auto& cand : data) {
      std::vector<Sample2> left, right;
      for (const auto& s : data) (s.f[feat] <= cand.f[feat] ? left : right).push_back(s);
      best = std::max(best, best_stump(left) + best_stump(right));
    }
  }
  return double(best) / double(data.size());
}

}  // namespace dualspoof::testing
