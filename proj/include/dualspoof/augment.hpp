#pragma once

// Task-aware augmentation x = A(s, e; theta), SNR-controlled Gaussian noise
// injection, and class-aware oversampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualspoof/audio.hpp"
#include "dualspoof/corpus.hpp"
#include "dualspoof/labels.hpp"
#include "dualspoof/matrix.hpp"

namespace dualspoof {

enum class MixScheme { plain_mix, concat_mix, weighted_sum, partial_mix, time_shift };

inline constexpr std::array<MixScheme, 5> kAllSchemes = {
    MixScheme::plain_mix, MixScheme::concat_mix, MixScheme::weighted_sum,
    MixScheme::partial_mix, MixScheme::time_shift};

inline std::string_view token(MixScheme s) {
  switch (s) {
    case MixScheme::plain_mix: return "plain_mix";
    case MixScheme::concat_mix: return "concat_mix";
    case MixScheme::weighted_sum: return "weighted_sum";
    case MixScheme::partial_mix: return "partial_mix";
    case MixScheme::time_shift: return "time_shift";
  }
  return "?";
}

inline MixScheme parse_scheme(std::string_view s) {
  for (MixScheme m : kAllSchemes)
    if (token(m) == s) return m;
  throw ParseError("unknown mix scheme '" + std::string(s) + "'");
}

struct AugmentSpec {
  MixScheme scheme = MixScheme::plain_mix;
  double mix_ratio = 0.5;
  double offset_s = 0.0;
  double segment_start_s = 0.0;
  double segment_end_s = 0.0;
  std::optional<double> noise_snr_db;

  bool operator==(const AugmentSpec&) const = default;
};

inline nlohmann::ordered_json to_json(const AugmentSpec& a) {
  nlohmann::ordered_json j;
  j["scheme"] = std::string(token(a.scheme));
  j["mix_ratio"] = a.mix_ratio;
  j["offset_s"] = a.offset_s;
  j["segment"] = {a.segment_start_s, a.segment_end_s};
  if (a.noise_snr_db) j["noise_snr_db"] = *a.noise_snr_db;
  else j["noise_snr_db"] = nullptr;
  return j;
}

inline AugmentSpec augment_spec_from_json(const nlohmann::json& j) {
  AugmentSpec a;
  try {
    a.scheme = parse_scheme(j.at("scheme").get<std::string>());
    a.mix_ratio = j.at("mix_ratio").get<double>();
    a.offset_s = j.at("offset_s").get<double>();
    a.segment_start_s = j.at("segment").at(0).get<double>();
    a.segment_end_s = j.at("segment").at(1).get<double>();
    if (!j.at("noise_snr_db").is_null()) a.noise_snr_db = j.at("noise_snr_db").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("augment_spec: ") + ex.what());
  }
  return a;
}

// Ranges used when drawing theta. Exposed through the run config.
struct AugmentRanges {
  double mix_ratio_min = 0.3;
  double mix_ratio_max = 0.7;
  double offset_min_frac = 0.1;
  double offset_max_frac = 0.9;
  double min_segment_frac = 0.25;
  double noise_prob = 0.5;
  double snr_min_db = 5.0;
  double snr_max_db = 20.0;
};

inline constexpr double kCrossfadeSeconds = 0.010;

inline AugmentSpec sample_augment_spec(ClassLabel /*klass*/, std::uint64_t rng_seed,
                                       double duration_s = 1.0,
                                       const AugmentRanges& r = {}) {
  Rng rng(derive_seed(rng_seed, 0xa09));
  AugmentSpec a;
  a.scheme = kAllSchemes[std::uniform_int_distribution<int>(0, 4)(rng)];
  a.mix_ratio = uniform(rng, r.mix_ratio_min, r.mix_ratio_max);
  a.offset_s = uniform(rng, r.offset_min_frac, r.offset_max_frac) * duration_s;
  const double len = uniform(rng, r.min_segment_frac, 1.0) * duration_s;
  a.segment_start_s = uniform(rng, 0.0, duration_s - len);
  a.segment_end_s = std::min(duration_s, a.segment_start_s + len);
  if (uniform(rng, 0.0, 1.0) < r.noise_prob) {
    a.noise_snr_db = uniform(rng, r.snr_min_db, r.snr_max_db);
  }
  return a;
}

namespace augment_detail {

inline std::size_t to_index(double seconds, int rate, std::size_t n) {
  const auto i = std::llround(seconds * rate);
  return std::size_t(std::clamp<long long>(i, 0, (long long)n));
}

}  // namespace augment_detail

// Mixes speech s and environment e under the scheme in spec. The result has
// the input length and lies in [-1, 1].
inline AudioClip mix(const AudioClip& s, const AudioClip& e, const AugmentSpec& spec) {
  if (s.sample_rate != e.sample_rate) {
    throw ParameterError("mix: sample rate mismatch " + std::to_string(s.sample_rate) +
                         " vs " + std::to_string(e.sample_rate));
  }
  if (s.size() != e.size()) {
    throw ParameterError("mix: length mismatch " + std::to_string(s.size()) + " vs " +
                         std::to_string(e.size()));
  }
  const std::size_t n = s.size();
  const int rate = s.sample_rate;
  const double duration = s.duration_s();
  AudioClip out{std::vector<double>(n), rate, s.id};
  auto& x = out.samples;

  switch (spec.scheme) {
    case MixScheme::plain_mix:
      for (std::size_t i = 0; i < n; ++i) x[i] = s.samples[i] + e.samples[i];
      limit_peak(x);
      break;
    case MixScheme::weighted_sum: {
      const double a = spec.mix_ratio;
      if (a < 0.0 || a > 1.0) throw ParameterError("mix_ratio must lie in [0, 1]");
      for (std::size_t i = 0; i < n; ++i) x[i] = a * s.samples[i] + (1.0 - a) * e.samples[i];
      limit_peak(x);
      break;
    }
    case MixScheme::concat_mix: {
      // env weight 1 on the first half, ramps to 0 over 10 ms centred on the midpoint
      const double mid = 0.5 * double(n);
      const double half_fade = 0.5 * kCrossfadeSeconds * rate;
      for (std::size_t i = 0; i < n; ++i) {
        const double pos = double(i) + 0.5;
        double w;
        if (pos <= mid - half_fade) w = 1.0;
        else if (pos >= mid + half_fade) w = 0.0;
        else w = (mid + half_fade - pos) / (2.0 * half_fade);
        x[i] = s.samples[i] + w * e.samples[i];
      }
      limit_peak(x);
      break;
    }
    case MixScheme::partial_mix: {
      if (!(spec.segment_start_s < spec.segment_end_s) ||
          spec.segment_end_s > duration + 1e-9 || spec.segment_start_s < 0.0) {
        throw ParameterError("partial_mix: segment must satisfy 0 <= start < end <= duration");
      }
      const std::size_t a = augment_detail::to_index(spec.segment_start_s, rate, n);
      const std::size_t b = augment_detail::to_index(spec.segment_end_s, rate, n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = s.samples[i] + ((i >= a && i < b) ? e.samples[i] : 0.0);
      }
      limit_peak(x);
      break;
    }
    case MixScheme::time_shift: {
      if (spec.offset_s < 0.0 || spec.offset_s >= duration) {
        throw ParameterError("time_shift: offset_s must satisfy 0 <= offset < duration");
      }
      const std::size_t shift = augment_detail::to_index(spec.offset_s, rate, n) % std::max<std::size_t>(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = s.samples[i] + e.samples[(i + n - shift) % n];
      }
      limit_peak(x);
      break;
    }
  }
  return out;
}

// Adds white Gaussian noise whose realized mean-square power sits exactly
// snr_db below that of x.
inline AudioClip inject_noise(const AudioClip& x, double snr_db, std::uint64_t seed) {
  const double ps = mean_square(x.samples);
  if (!(ps > 0.0)) throw DegenerateInputError("inject_noise: silent input, SNR undefined");
  if (!std::isfinite(snr_db)) throw ParameterError("inject_noise: non-finite snr_db");
  Rng rng(derive_seed(seed, 0x501));
  std::vector<double> noise(x.size());
  for (auto& v : noise) v = gaussian(rng);
  const double pn = mean_square(noise);
  const double k = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  AudioClip out = x;
  for (std::size_t i = 0; i < noise.size(); ++i) out.samples[i] += k * noise[i];
  return out;
}

// ---------------------------------------------------------------------------

// Repeats members of every under-represented class (uniformly, with
// replacement) until each class matches the majority count. Originals are kept
// in input order; duplicates follow, grouped by class. Every output entry gets
// a distinct aug_seed.
inline std::vector<ManifestEntry> oversample(const std::vector<ManifestEntry>& entries,
                                             std::uint64_t seed,
                                             const std::vector<Klass>& classes = {
                                                 kAllClasses.begin(), kAllClasses.end()}) {
  std::map<Klass, std::vector<std::size_t>> members;
  for (Klass k : classes) members[k];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Klass k = entries[i].label();
    auto it = members.find(k);
    if (it == members.end()) {
      throw ParameterError("oversample: entry '" + entries[i].utt_id + "' has class '" +
                           std::string(token(k)) + "' outside the requested class set");
    }
    it->second.push_back(i);
  }
  std::size_t majority = 0;
  for (const auto& [k, idx] : members) {
    if (idx.empty()) {
      throw ParameterError("oversample: class '" + std::string(token(k)) + "' is empty");
    }
    majority = std::max(majority, idx.size());
  }

  std::vector<ManifestEntry> out = entries;
  Rng rng(derive_seed(seed, 0x0e5));
  for (Klass k : classes) {
    const auto& idx = members[k];
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (std::size_t r = idx.size(); r < majority; ++r) {
      out.push_back(entries[idx[pick(rng)]]);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].aug_seed = derive_seed(seed, 0xa5eed, i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training-time application.

struct AugmentOptions {
  bool enabled = true;
  double prob = 1.0;      // probability that an entry is augmented at all
  double mix_prob = 1.0;  // probability that a combination entry is remixed
  AugmentRanges ranges;
};

// theta for one entry under `seed`, or nullopt when the entry passes through
// unaugmented.
inline std::optional<AugmentSpec> planned_augment(Klass klass, std::uint64_t seed,
                                                  double duration_s, const AugmentOptions& opt) {
  if (!opt.enabled) return std::nullopt;
  Rng gate(derive_seed(seed, 0x9a7e));
  if (uniform(gate, 0.0, 1.0) >= opt.prob) return std::nullopt;
  return sample_augment_spec(klass, seed, duration_s, opt.ranges);
}

// Produces the training waveform for one entry. Combination classes with
// stems are remixed within their own pair; originals only ever receive noise.
// The result is peak-normalized to the corpus level.
inline AudioClip augment_entry(const AudioClip& mixture, const AudioClip* speech,
                               const AudioClip* env, double env_gain, Klass klass,
                               std::uint64_t seed, const AugmentOptions& opt,
                               AugmentSpec* applied = nullptr) {
  if (!opt.enabled) return mixture;
  Rng gate(derive_seed(seed, 0x9a7e));
  if (uniform(gate, 0.0, 1.0) >= opt.prob) return mixture;
  const AugmentSpec spec = sample_augment_spec(klass, seed, mixture.duration_s(), opt.ranges);
  if (applied) *applied = spec;
  AudioClip x = mixture;
  if (klass != Klass::original && speech && env && uniform(gate, 0.0, 1.0) < opt.mix_prob) {
    // rescale both stems by one factor so they stay inside [-1, 1]
    AudioClip s = *speech, e = *env;
    for (auto& v : e.samples) v *= env_gain;
    const double p = std::max(peak(s.samples), peak(e.samples));
    if (p > 1.0) {
      for (auto& v : s.samples) v /= p;
      for (auto& v : e.samples) v /= p;
    }
    x = mix(s, e, spec);
  }
  if (spec.noise_snr_db && mean_square(x.samples) > 0.0) {
    x = inject_noise(x, *spec.noise_snr_db, derive_seed(seed, 0x7015e));
  }
  peak_normalize(x.samples, kSpeechPeak);
  return x;
}

}  // namespace dualspoof
