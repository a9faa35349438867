#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "dualspoof/augment.hpp"
#include "dualspoof/corpus.hpp"

using namespace dualspoof;

namespace {

AudioClip noise_clip(std::uint64_t seed, std::size_t n, double amp) {
  Rng rng(seed);
  AudioClip c{std::vector<double>(n), 16000, {}};
  for (auto& v : c.samples) v = amp * uniform(rng, -1.0, 1.0);
  return c;
}

double rms_of_difference(const AudioClip& a, const AudioClip& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.samples[i] - b.samples[i]) * (a.samples[i] - b.samples[i]);
  return std::sqrt(s / double(a.size()));
}

std::vector<ManifestEntry> counts_manifest(const std::vector<std::pair<Klass, int>>& counts) {
  std::vector<ManifestEntry> out;
  for (const auto& [k, n] : counts) {
    for (int i = 0; i < n; ++i) {
      ManifestEntry e;
      e.utt_id = std::string(token(k)) + "_" + std::to_string(i);
      e.klass = ClassLabel(k);
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace

TEST(Mix, WeightedSumIdentities) {
  const AudioClip s = noise_clip(1, 1000, 0.5), e = noise_clip(2, 1000, 0.5);
  AugmentSpec spec;
  spec.scheme = MixScheme::weighted_sum;
  spec.mix_ratio = 1.0;
  EXPECT_EQ(mix(s, e, spec).samples, s.samples);
  spec.mix_ratio = 0.0;
  EXPECT_EQ(mix(s, e, spec).samples, e.samples);
}

TEST(Mix, PartialMixOverFullClipEqualsPlainMix) {
  const AudioClip s = noise_clip(3, 1600, 0.4), e = noise_clip(4, 1600, 0.4);
  AugmentSpec plain, partial;
  partial.scheme = MixScheme::partial_mix;
  partial.segment_start_s = 0.0;
  partial.segment_end_s = s.duration_s();
  const AudioClip a = mix(s, e, plain), b = mix(s, e, partial);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.samples[i], b.samples[i], 1e-12);
}

TEST(Mix, SchemeSemantics) {
  const AudioClip s = noise_clip(5, 1600, 0.3), e = noise_clip(6, 1600, 0.3);
  AugmentSpec spec;
  spec.scheme = MixScheme::concat_mix;
  const AudioClip c = mix(s, e, spec);
  // away from the 10 ms crossfade: first half s + e, second half s alone
  EXPECT_DOUBLE_EQ(c.samples[100], s.samples[100] + e.samples[100]);
  EXPECT_DOUBLE_EQ(c.samples[1500], s.samples[1500]);

  spec.scheme = MixScheme::time_shift;
  spec.offset_s = 0.01;  // 160 samples
  const AudioClip t = mix(s, e, spec);
  EXPECT_DOUBLE_EQ(t.samples[200], s.samples[200] + e.samples[40]);
  EXPECT_DOUBLE_EQ(t.samples[10], s.samples[10] + e.samples[1600 - 150]);

  spec.scheme = MixScheme::partial_mix;
  spec.segment_start_s = 0.025;
  spec.segment_end_s = 0.05;
  const AudioClip p = mix(s, e, spec);
  EXPECT_DOUBLE_EQ(p.samples[399], s.samples[399]);
  EXPECT_DOUBLE_EQ(p.samples[400], s.samples[400] + e.samples[400]);
  EXPECT_DOUBLE_EQ(p.samples[800], s.samples[800]);
}

TEST(Mix, LengthAndAmplitudeSafety) {
  const AudioClip s = noise_clip(7, 2000, 0.95), e = noise_clip(8, 2000, 0.95);
  for (int i = 0; i < 100; ++i) {
    const AugmentSpec spec = sample_augment_spec(Klass::spoof_spoof, std::uint64_t(i), s.duration_s());
    const AudioClip x = mix(s, e, spec);
    ASSERT_EQ(x.size(), s.size());
    EXPECT_LE(peak(x.samples), 1.0 + 1e-15);
  }
}

TEST(Mix, Errors) {
  const AudioClip s = noise_clip(1, 100, 0.1);
  AudioClip other = noise_clip(2, 101, 0.1);
  EXPECT_THROW(mix(s, other, AugmentSpec{}), ParameterError);
  other = noise_clip(2, 100, 0.1);
  other.sample_rate = 8000;
  EXPECT_THROW(mix(s, other, AugmentSpec{}), ParameterError);
  AugmentSpec bad;
  bad.scheme = MixScheme::partial_mix;
  bad.segment_start_s = 0.004;
  bad.segment_end_s = 0.002;
  EXPECT_THROW(mix(s, noise_clip(3, 100, 0.1), bad), ParameterError);
  bad.scheme = MixScheme::time_shift;
  bad.offset_s = 1.0;
  EXPECT_THROW(mix(s, noise_clip(3, 100, 0.1), bad), ParameterError);
}

TEST(InjectNoise, DefinitionExamples) {
  AudioClip x{std::vector<double>(4000), 16000, {}};
  for (std::size_t i = 0; i < x.size(); ++i) x.samples[i] = (i % 2 ? 0.1 : -0.1);
  EXPECT_NEAR(rms_of_difference(inject_noise(x, 20.0, 1), x), 0.01, 1e-9);
  EXPECT_NEAR(rms_of_difference(inject_noise(x, 0.0, 2), x), 0.1, 1e-9);
}

TEST(InjectNoise, DeterministicAndSeeded) {
  const AudioClip x = noise_clip(9, 500, 0.2);
  EXPECT_EQ(inject_noise(x, 10.0, 4).samples, inject_noise(x, 10.0, 4).samples);
  EXPECT_NE(inject_noise(x, 10.0, 4).samples, inject_noise(x, 10.0, 5).samples);
}

TEST(InjectNoise, SilentInputIsDegenerate) {
  const AudioClip z{std::vector<double>(100, 0.0), 16000, {}};
  EXPECT_THROW(inject_noise(z, 10.0, 1), DegenerateInputError);
}

TEST(Oversample, Table1Counts) {
  const auto in = counts_manifest({{Klass::original, 48639},
                                   {Klass::bonafide_bonafide, 25189},
                                   {Klass::spoof_bonafide, 21759},
                                   {Klass::bonafide_spoof, 50361},
                                   {Klass::spoof_spoof, 29413}});
  const auto out = oversample(in, 0);
  EXPECT_EQ(out.size(), 251805u);
  std::map<Klass, int> hist;
  for (const auto& e : out) ++hist[e.label()];
  for (Klass k : kAllClasses) EXPECT_EQ(hist[k], 50361);
}

TEST(Oversample, BalancedInputIsFixedPoint) {
  const auto in = counts_manifest({{Klass::original, 3},
                                   {Klass::bonafide_bonafide, 3},
                                   {Klass::spoof_bonafide, 3},
                                   {Klass::bonafide_spoof, 3},
                                   {Klass::spoof_spoof, 3}});
  const auto out = oversample(in, 1);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i].utt_id, in[i].utt_id);
}

TEST(Oversample, TwoClassDuplicatesComeFromMinorityOriginals) {
  const std::vector<Klass> classes{Klass::original, Klass::spoof_spoof};
  const auto in = counts_manifest({{Klass::original, 2}, {Klass::spoof_spoof, 5}});
  const auto out = oversample(in, 0, classes);
  ASSERT_EQ(out.size(), 10u);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i].utt_id, in[i].utt_id);
  int dup = 0;
  for (std::size_t i = in.size(); i < out.size(); ++i) {
    EXPECT_EQ(out[i].label(), Klass::original);
    EXPECT_TRUE(out[i].utt_id == "original_0" || out[i].utt_id == "original_1");
    ++dup;
  }
  EXPECT_EQ(dup, 3);
  std::set<std::uint64_t> seeds;
  for (const auto& e : out) seeds.insert(*e.aug_seed);
  EXPECT_EQ(seeds.size(), out.size());
}

TEST(Oversample, EmptyClassIsRejected) {
  const auto in = counts_manifest({{Klass::original, 2}});
  EXPECT_THROW(oversample(in, 0), ParameterError);
}

TEST(SampleAugmentSpec, DeterministicFrequenciesAndRanges) {
  EXPECT_EQ(sample_augment_spec(Klass::original, 77), sample_augment_spec(Klass::original, 77));
  std::map<MixScheme, int> freq;
  int with_noise = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const AugmentSpec a = sample_augment_spec(Klass::spoof_bonafide, i, 2.0);
    ++freq[a.scheme];
    EXPECT_GE(a.segment_end_s - a.segment_start_s, 0.25 * 2.0 - 1e-12);
    EXPECT_GE(a.segment_start_s, 0.0);
    EXPECT_LE(a.segment_end_s, 2.0);
    EXPECT_GE(a.mix_ratio, 0.3);
    EXPECT_LE(a.mix_ratio, 0.7);
    EXPECT_GE(a.offset_s, 0.2);
    EXPECT_LE(a.offset_s, 1.8);
    if (a.noise_snr_db) {
      ++with_noise;
      EXPECT_GE(*a.noise_snr_db, 5.0);
      EXPECT_LE(*a.noise_snr_db, 20.0);
    }
  }
  for (MixScheme m : kAllSchemes) {
    EXPECT_GE(freq[m] / 10000.0, 0.18);
    EXPECT_LE(freq[m] / 10000.0, 0.22);
  }
  EXPECT_NEAR(with_noise / 10000.0, 0.5, 0.03);
}

TEST(SampleAugmentSpec, JsonRoundTrip) {
  for (std::uint64_t i = 0; i < 20; ++i) {
    const AugmentSpec a = sample_augment_spec(Klass::bonafide_spoof, i);
    EXPECT_EQ(augment_spec_from_json(nlohmann::json::parse(to_json(a).dump())), a);
  }
  EXPECT_THROW(augment_spec_from_json(nlohmann::json::parse(R"({"scheme":"stretch"})")), ParseError);
}

TEST(AugmentEntry, OriginalsOnlyReceiveNoise) {
  const AudioClip x = render_original(3, 0.25, 16000, 5.0);
  AugmentOptions opt;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    AugmentSpec applied;
    const AudioClip y = augment_entry(x, nullptr, nullptr, 1.0, Klass::original, seed, opt, &applied);
    ASSERT_EQ(y.size(), x.size());
    if (!applied.noise_snr_db) {
      for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(y.samples[i], x.samples[i], 1e-15);
    } else {
      EXPECT_GT(rms_of_difference(x, y), 0.0);
    }
  }
}

TEST(AugmentEntry, DisabledOrGatedReturnsInput) {
  const MixedClip m = render_combination(4, Klass::spoof_spoof, 0.25, 16000, 3.0);
  AugmentOptions off;
  off.enabled = false;
  EXPECT_EQ(augment_entry(m.mixture, &m.speech, &m.env, m.env_gain, Klass::spoof_spoof, 1, off).samples,
            m.mixture.samples);
  AugmentOptions never;
  never.prob = 0.0;
  EXPECT_EQ(augment_entry(m.mixture, &m.speech, &m.env, m.env_gain, Klass::spoof_spoof, 1, never).samples,
            m.mixture.samples);
  EXPECT_FALSE(planned_augment(Klass::spoof_spoof, 1, 0.25, never).has_value());
}

TEST(AugmentEntry, RemixedCombinationStaysInRange) {
  const MixedClip m = render_combination(5, Klass::bonafide_spoof, 0.25, 16000, 0.0);
  AugmentOptions opt;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const AudioClip y = augment_entry(m.mixture, &m.speech, &m.env, m.env_gain, Klass::bonafide_spoof, seed, opt);
    ASSERT_EQ(y.size(), m.mixture.size());
    EXPECT_NEAR(peak(y.samples), 0.9, 1e-12);
    const auto planned = planned_augment(Klass::bonafide_spoof, seed, 0.25, opt);
    ASSERT_TRUE(planned.has_value());
  }
}
