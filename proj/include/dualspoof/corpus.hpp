#pragma once

// Deterministic synthetic five-class corpus plus manifest I/O.
//
// Speech stand-in: a gliding 5-harmonic series with a 4 Hz envelope. A spoofed
// speech component additionally goes through 4-bit quantization and a 2 ms
// feed-forward comb. Environment stand-in: band-limited pink noise; a spoofed
// environment component loops a 250 ms slice of the same texture.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dualspoof/audio.hpp"
#include "dualspoof/labels.hpp"
#include "dualspoof/matrix.hpp"

namespace dualspoof {

enum class Split { train, val, eval, test };

inline constexpr std::array<Split, 4> kAllSplits = {Split::train, Split::val,
                                                    Split::eval, Split::test};

inline std::string_view token(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::eval: return "eval";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  for (Split x : kAllSplits) {
    if (token(x) == s) return x;
  }
  throw ParseError("unknown split token '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string utt_id;
  std::string wav_path;  // relative to the manifest directory
  std::optional<ClassLabel> klass;
  Split split = Split::train;

  // Component stems for the four combination classes; x = speech + env_gain * env.
  std::string speech_path;
  std::string env_path;
  double env_gain = 1.0;

  // Set by oversampling so duplicates draw distinct augmentation instances.
  std::optional<std::uint64_t> aug_seed;
  std::optional<nlohmann::ordered_json> augment_spec;

  Klass label() const {
    if (!klass) throw LookupError("entry '" + utt_id + "' carries no class label");
    return klass->klass;
  }
};

// ---------------------------------------------------------------------------
// Synthesis.

namespace synth_detail {

inline void check_params(double duration_s, int sample_rate) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw ParameterError("duration_s must be > 0, got " + std::to_string(duration_s));
  }
  if (sample_rate < 8000) {
    throw ParameterError("sample_rate must be >= 8000, got " + std::to_string(sample_rate));
  }
}

inline std::size_t num_samples(double duration_s, int sample_rate) {
  return std::size_t(std::llround(duration_s * sample_rate));
}

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  static Biquad bandpass(double center_hz, double q, double fs) {
    const double w0 = 2.0 * std::numbers::pi * center_hz / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad f;
    f.b0 = alpha / a0;
    f.b1 = 0.0;
    f.b2 = -alpha / a0;
    f.a1 = -2.0 * std::cos(w0) / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }

  double operator()(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Paul Kellet's refined pink filter over white Gaussian input.
struct PinkNoise {
  double b[7] = {0, 0, 0, 0, 0, 0, 0};

  double operator()(double w) {
    b[0] = 0.99886 * b[0] + w * 0.0555179;
    b[1] = 0.99332 * b[1] + w * 0.0750759;
    b[2] = 0.96900 * b[2] + w * 0.1538520;
    b[3] = 0.86650 * b[3] + w * 0.3104856;
    b[4] = 0.55000 * b[4] + w * 0.5329522;
    b[5] = -0.7616 * b[5] - w * 0.0168980;
    const double pink = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
    b[6] = w * 0.115926;
    return pink;
  }
};

}  // namespace synth_detail

// Texture bands (Hz) for the environment stand-in.
inline constexpr std::array<std::array<double, 2>, 4> kEnvBands = {{
    {150.0, 400.0}, {400.0, 1000.0}, {1000.0, 2500.0}, {2500.0, 6000.0}}};

inline constexpr double kSpeechPeak = 0.9;
inline constexpr double kLoopSeconds = 0.25;
inline constexpr double kCombDelaySeconds = 0.002;
inline constexpr double kCombGain = 0.7;
inline constexpr int kQuantBits = 4;

// Midrise uniform quantizer on [-1, 1].
inline double quantize(double x, int bits) {
  const double half_levels = double(1 << (bits - 1));
  const double q = std::clamp(std::floor(x * half_levels), -half_levels, half_levels - 1.0);
  return (q + 0.5) / half_levels;
}

inline AudioClip synth_speech(std::uint64_t seed, double duration_s, int sample_rate,
                              bool spoofed) {
  synth_detail::check_params(duration_s, sample_rate);
  const std::size_t n = synth_detail::num_samples(duration_s, sample_rate);
  Rng rng(derive_seed(seed, 0x5bee));
  const double f0 = uniform(rng, 90.0, 300.0);
  const double glide = uniform(rng, 0.0, 1.0) < 0.5 ? -0.1 : 0.1;
  std::array<double, 5> phase{};
  for (auto& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double am_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  const double fs = sample_rate;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / fs;
    const double progress = n > 1 ? double(i) / double(n - 1) : 0.0;
    const double f = f0 * (1.0 + glide * (2.0 * progress - 1.0));
    const double envelope = 0.55 + 0.45 * std::sin(2.0 * std::numbers::pi * 4.0 * t + am_phase);
    double s = 0.0;
    for (std::size_t k = 0; k < phase.size(); ++k) {
      s += std::sin(phase[k]) / double(k + 1);
      phase[k] += 2.0 * std::numbers::pi * double(k + 1) * f / fs;
    }
    x[i] = envelope * s;
  }

  if (spoofed) {
    peak_normalize(x, 1.0);
    for (auto& v : x) v = quantize(v, kQuantBits);
    const auto delay = std::size_t(std::llround(kCombDelaySeconds * fs));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = x[i] + (i >= delay ? kCombGain * x[i - delay] : 0.0);
    }
    x = std::move(y);
  }
  peak_normalize(x, kSpeechPeak);
  return AudioClip{std::move(x), sample_rate, {}};
}

// Raw (unnormalized) texture samples; also used for the spoofed loop source.
inline std::vector<double> env_texture(std::uint64_t seed, std::size_t n, int sample_rate,
                                       int* band_out = nullptr) {
  Rng rng(derive_seed(seed, 0xe17));
  const int band = int(std::uniform_int_distribution<int>(0, 3)(rng));
  if (band_out) *band_out = band;
  const double lo = kEnvBands[band][0];
  const double hi = std::min(kEnvBands[band][1], 0.45 * sample_rate);
  const double center = std::sqrt(lo * hi);
  const double q = center / (hi - lo);
  auto f1 = synth_detail::Biquad::bandpass(center, q, sample_rate);
  auto f2 = synth_detail::Biquad::bandpass(center, q, sample_rate);
  synth_detail::PinkNoise pink;
  constexpr std::size_t warmup = 4096;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < warmup + n; ++i) {
    const double v = f2(f1(pink(gaussian(rng))));
    if (i >= warmup) x[i - warmup] = v;
  }
  return x;
}

inline AudioClip synth_env(std::uint64_t seed, double duration_s, int sample_rate,
                           bool spoofed) {
  synth_detail::check_params(duration_s, sample_rate);
  const std::size_t n = synth_detail::num_samples(duration_s, sample_rate);
  std::vector<double> x = env_texture(seed, n, sample_rate);
  if (spoofed) {
    const auto loop = std::max<std::size_t>(1, std::llround(kLoopSeconds * sample_rate));
    if (loop < n) {
      for (std::size_t i = loop; i < n; ++i) x[i] = x[i % loop];
    }
  }
  peak_normalize(x, kSpeechPeak);
  return AudioClip{std::move(x), sample_rate, {}};
}

// Gain applied to e so that 10 log10(P_s / P_(g e)) == snr_db.
inline double snr_gain(const std::vector<double>& s, const std::vector<double>& e,
                       double snr_db) {
  const double ps = mean_square(s), pe = mean_square(e);
  if (pe == 0.0) return 0.0;
  return std::sqrt(ps / (pe * std::pow(10.0, snr_db / 10.0)));
}

inline constexpr double kOriginalSmoothing = 0.2;

// Single-pass rendering of an unmixed recording: both bona fide components
// pass through one shared one-pole smoother, y += 0.2 (x - y), then one gain.
inline AudioClip render_original(std::uint64_t seed, double duration_s, int sample_rate,
                                 double snr_db) {
  const AudioClip s = synth_speech(derive_seed(seed, 1), duration_s, sample_rate, false);
  const AudioClip e = synth_env(derive_seed(seed, 2), duration_s, sample_rate, false);
  const double g = snr_gain(s.samples, e.samples, snr_db);
  std::vector<double> x(s.size());
  double y = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y += kOriginalSmoothing * (s.samples[i] + g * e.samples[i] - y);
    x[i] = y;
  }
  peak_normalize(x, kSpeechPeak);
  return AudioClip{std::move(x), sample_rate, {}};
}

struct MixedClip {
  AudioClip mixture;
  AudioClip speech;
  AudioClip env;
  double env_gain = 1.0;
};

// Independently synthesized components hard-mixed at snr_db (speech over env).
inline MixedClip render_combination(std::uint64_t seed, Klass klass, double duration_s,
                                    int sample_rate, double snr_db) {
  const ClassLabel label(klass);
  if (klass == Klass::original) throw ParameterError("render_combination: original class");
  MixedClip out;
  out.speech = synth_speech(derive_seed(seed, 1), duration_s, sample_rate,
                            label.speech_label() == Authenticity::spoof);
  out.env = synth_env(derive_seed(seed, 2), duration_s, sample_rate,
                      label.env_label() == Authenticity::spoof);
  out.env_gain = snr_gain(out.speech.samples, out.env.samples, snr_db);
  std::vector<double> x(out.speech.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = out.speech.samples[i] + out.env_gain * out.env.samples[i];
  }
  peak_normalize(x, kSpeechPeak);
  out.mixture = AudioClip{std::move(x), sample_rate, {}};
  return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O (JSON lines).

inline nlohmann::ordered_json to_json(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["utt_id"] = e.utt_id;
  j["wav_path"] = e.wav_path;
  if (e.klass) j["klass"] = std::string(token(e.klass->klass));
  j["split"] = std::string(token(e.split));
  if (!e.speech_path.empty()) {
    j["speech_path"] = e.speech_path;
    j["env_path"] = e.env_path;
    j["env_gain"] = e.env_gain;
  }
  if (e.aug_seed) j["aug_seed"] = *e.aug_seed;
  if (e.augment_spec) j["augment_spec"] = *e.augment_spec;
  return j;
}

inline std::string manifest_line(const ManifestEntry& e) { return to_json(e).dump(); }

inline void write_manifest(const std::vector<ManifestEntry>& entries,
                           const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& e : entries) f << manifest_line(e) << '\n';
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

struct ManifestOptions {
  bool check_files = true;    // every wav_path must exist
  bool require_labels = true; // klass must be present; when false it is never read
};

inline ManifestEntry parse_manifest_line(const std::string& line, const ManifestOptions& opt,
                                         const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(where + ": invalid JSON (" + ex.what() + ")");
  }
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  auto get_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(where + ": missing key '" + key + "'");
    if (!it->is_string()) throw ParseError(where + ": key '" + key + "' is not a string");
    return it->get<std::string>();
  };
  ManifestEntry e;
  e.utt_id = get_string("utt_id");
  e.wav_path = get_string("wav_path");
  e.split = parse_split(get_string("split"));
  if (opt.require_labels) {
    const std::string k = get_string("klass");
    try {
      e.klass = ClassLabel(parse_klass(k));
    } catch (const ParseError&) {
      throw ParseError(where + ": unknown class token '" + k + "'");
    }
  }
  if (j.contains("speech_path")) {
    e.speech_path = get_string("speech_path");
    e.env_path = get_string("env_path");
    e.env_gain = j.at("env_gain").get<double>();
  }
  if (j.contains("aug_seed")) e.aug_seed = j.at("aug_seed").get<std::uint64_t>();
  if (j.contains("augment_spec")) e.augment_spec = nlohmann::ordered_json(j.at("augment_spec"));
  return e;
}

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path,
                                                const ManifestOptions& opt = {}) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    ManifestEntry e = parse_manifest_line(line, opt, where);
    if (!seen.insert(e.utt_id).second) {
      throw ParseError(where + ": duplicate utt_id '" + e.utt_id + "'");
    }
    if (opt.check_files && !std::filesystem::is_regular_file(base / e.wav_path)) {
      throw IoError(where + ": wav_path '" + (base / e.wav_path).string() + "' does not exist");
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus generation.

struct CorpusConfig {
  std::uint64_t seed = 42;
  std::map<Split, int> per_class = {{Split::train, 400}, {Split::val, 100}};
  double duration_s = 1.0;
  int sample_rate = 16000;
  double snr_min_db = 0.0;
  double snr_max_db = 10.0;
  bool write_stems = true;
  int threads = 1;
};

inline std::string utt_name(Split split, Klass klass, int idx) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", idx);
  return std::string(token(split)) + "_" + std::string(token(klass)) + "_" + buf;
}

// Renders one manifest entry (and its stems) to disk.
inline ManifestEntry render_entry(const CorpusConfig& cfg, Split split, Klass klass, int idx,
                                  const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const std::uint64_t seed =
      derive_seed(cfg.seed, std::uint64_t(split) + 1, std::uint64_t(klass) + 1, std::uint64_t(idx));
  Rng rng(derive_seed(seed, 0x5a5));
  const double snr = uniform(rng, cfg.snr_min_db, cfg.snr_max_db);
  ManifestEntry e;
  e.utt_id = utt_name(split, klass, idx);
  e.klass = ClassLabel(klass);
  e.split = split;
  e.wav_path = "wav/" + std::string(token(split)) + "/" + e.utt_id + ".wav";
  if (klass == Klass::original) {
    AudioClip x = render_original(seed, cfg.duration_s, cfg.sample_rate, snr);
    write_wav(x, out_dir / e.wav_path);
  } else {
    MixedClip m = render_combination(seed, klass, cfg.duration_s, cfg.sample_rate, snr);
    write_wav(m.mixture, out_dir / e.wav_path);
    if (cfg.write_stems) {
      e.speech_path = "stems/" + std::string(token(split)) + "/" + e.utt_id + "_speech.wav";
      e.env_path = "stems/" + std::string(token(split)) + "/" + e.utt_id + "_env.wav";
      e.env_gain = m.env_gain;
      write_wav(m.speech, out_dir / e.speech_path);
      write_wav(m.env, out_dir / e.env_path);
    }
  }
  return e;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& dir, Split split) {
  return dir / (std::string(token(split)) + ".jsonl");
}

// Writes wav files and one <split>.jsonl manifest per requested split.
// Returns the manifest paths in split order.
inline std::vector<std::filesystem::path> build_corpus(const CorpusConfig& cfg,
                                                       const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (cfg.per_class.empty()) throw ParameterError("corpus config requests no splits");
  for (const auto& [split, count] : cfg.per_class) {
    if (count < 1) {
      throw ParameterError("per-class count for split '" + std::string(token(split)) +
                           "' must be >= 1, got " + std::to_string(count));
    }
  }
  synth_detail::check_params(cfg.duration_s, cfg.sample_rate);
  if (!(cfg.snr_min_db <= cfg.snr_max_db)) throw ParameterError("snr_min_db > snr_max_db");

  std::vector<fs::path> manifests;
  std::error_code ec;
  for (const auto& [split, count] : cfg.per_class) {
    fs::create_directories(out_dir / "wav" / token(split), ec);
    if (!ec && cfg.write_stems) fs::create_directories(out_dir / "stems" / token(split), ec);
    if (ec) throw IoError("cannot create directories under '" + out_dir.string() + "': " + ec.message());

    std::vector<std::pair<Klass, int>> jobs;
    for (Klass k : kAllClasses)
      for (int i = 0; i < count; ++i) jobs.emplace_back(k, i);
    std::vector<ManifestEntry> entries(jobs.size());
    std::vector<std::string> failures(std::max(1, cfg.threads));
    auto work = [&](int worker, int workers) {
      try {
        for (std::size_t j = std::size_t(worker); j < jobs.size(); j += std::size_t(workers)) {
          entries[j] = render_entry(cfg, split, jobs[j].first, jobs[j].second, out_dir);
        }
      } catch (const std::exception& ex) {
        failures[std::size_t(worker)] = ex.what();
      }
    };
    const int workers = std::max(1, cfg.threads);
    if (workers == 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
      for (auto& t : pool) t.join();
    }
    for (const auto& f : failures) {
      if (!f.empty()) throw IoError(f);
    }
    const auto mpath = manifest_path(out_dir, split);
    write_manifest(entries, mpath);
    manifests.push_back(mpath);
  }
  return manifests;
}

}  // namespace dualspoof
