#pragma once

// Toy trainable front ends. Both branches share one recipe: a stack of strided
// kernel-9 convolutions whose strides multiply to the configured hop, GELU
// between blocks, and a parameter-free per-frame normalization at the output.
// Only the last `trainable_layers` blocks receive gradients.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "dualspoof/audio.hpp"
#include "dualspoof/matrix.hpp"
#include "dualspoof/nn.hpp"

namespace dualspoof {

struct FrameSequence {
  Matrix frames;  // T x D, time-major
  std::size_t frame_hop_samples = 1;

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

enum class Activation { gelu, abs };

inline const char* token(Activation a) { return a == Activation::gelu ? "gelu" : "abs"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "abs") return Activation::abs;
  throw ParseError("unknown activation '" + s + "'");
}

// Initialization of the first block: random, or a fixed bank of unit-norm
// cosine/sine taps (DCT-II rows k = 0..K-1, then sine rows k = 1..K-1).
// Channels beyond the 2K-1 basis rows keep their random taps.
enum class Frontend { random, cosine };

inline const char* token(Frontend f) { return f == Frontend::random ? "random" : "cosine"; }

inline Frontend parse_frontend(const std::string& s) {
  if (s == "random") return Frontend::random;
  if (s == "cosine") return Frontend::cosine;
  throw ParseError("unknown frontend '" + s + "'");
}

struct EncoderConfig {
  std::size_t out_dim = 32;
  std::size_t hop = 320;
  std::size_t n_layers = 3;
  std::size_t trainable_layers = 2;
  std::size_t channels = 16;  // width of the hidden blocks
  std::size_t kernel = 9;
  // Dilation of the second block (the first block when n_layers == 1).
  std::size_t dilation = 1;
  Activation activation = Activation::gelu;  // between blocks
  Frontend frontend = Frontend::cosine;

  void validate(const std::string& name) const {
    if (out_dim == 0 || hop == 0 || n_layers == 0 || channels == 0 || kernel == 0 || dilation == 0) {
      throw ParameterError(name + 
                           ": out_dim, hop, n_layers, channels, kernel and dilation must be positive");
    }
    if (trainable_layers > n_layers) {
      throw ParameterError(name + ": trainable_layers (" + std::to_string(trainable_layers) +
                           ") exceeds n_layers (" + std::to_string(n_layers) + ")");
    }
  }
};

inline EncoderConfig default_speech_encoder() { return EncoderConfig{32, 320, 3, 2, 16, 9, 1}; }
inline EncoderConfig default_env_encoder() { return EncoderConfig{24, 640, 3, 2, 16, 9, 500, Activation::abs}; }

// Splits hop into n_layers integer strides whose product is exactly hop,
// balancing prime factors across blocks; smallest stride first.
inline std::vector<std::size_t> block_strides(std::size_t hop, std::size_t n_layers) {
  std::vector<std::size_t> primes;
  for (std::size_t h = hop, p = 2; h > 1;) {
    if (p * p > h) {
      primes.push_back(h);
      break;
    }
    if (h % p == 0) {
      primes.push_back(p);
      h /= p;
    } else {
      ++p;
    }
  }
  std::sort(primes.rbegin(), primes.rend());
  std::vector<std::size_t> strides(n_layers, 1);
  for (std::size_t p : primes) {
    *std::min_element(strides.begin(), strides.end()) *= p;
  }
  std::sort(strides.begin(), strides.end());
  return strides;
}

inline std::size_t num_frames_for(std::size_t clip_length, std::size_t hop) {
  return clip_length / hop;
}

struct EncoderParams {
  std::vector<nn::Conv1d> blocks;
  Activation activation = Activation::gelu;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].visit(prefix + "block" + std::to_string(i) + ".", f);
    }
  }
};

inline void cosine_frontend(nn::Conv1d& c) {
  const std::size_t k = c.kernel, ic = c.in_channels;
  std::vector<std::vector<double>> basis;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<double> row(k);
    for (std::size_t n = 0; n < k; ++n) row[n] = std::cos(std::numbers::pi * (double(n) + 0.5) * double(f) / double(k));
    basis.push_back(row);
  }
  for (std::size_t f = 1; f < k; ++f) {
    std::vector<double> row(k);
    for (std::size_t n = 0; n < k; ++n) row[n] = std::sin(std::numbers::pi * (double(n) + 0.5) * double(f) / double(k));
    basis.push_back(row);
  }
  for (auto& row : basis) {
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : row) v /= norm;
  }
  for (std::size_t o = 0; o < std::min(c.out_channels(), basis.size() * ic); ++o) {
    const auto& b = basis[o % basis.size()];
    auto row = c.weight.row(o);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t n = 0; n < k; ++n) row[n * ic + o / basis.size()] = b[n];
  }
}

inline EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate("encoder");
  const auto strides = block_strides(cfg.hop, cfg.n_layers);
  EncoderParams p;
  p.activation = cfg.activation;
  std::size_t in_c = 1;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::size_t out_c = i + 1 == cfg.n_layers ? cfg.out_dim : cfg.channels;
    const std::size_t dil = i == std::min<std::size_t>(1, cfg.n_layers - 1) ? cfg.dilation : 1;
    p.blocks.push_back(nn::make_conv1d(rng, in_c, out_c, cfg.kernel, strides[i], std::sqrt(2.0), dil));
    if (i == 0 && cfg.frontend == Frontend::cosine) cosine_frontend(p.blocks.back());
    if (dil > 1 && cfg.kernel > 1) {
      // Dilated block starts as pairs over the input channels: the centre
      // tap alone, and the centre tap minus its right neighbour.
      nn::Conv1d& c = p.blocks.back();
      const std::size_t centre = (cfg.kernel - 1) / 2;
      for (std::size_t o = 0; o < out_c; ++o) {
        auto row = c.weight.row(o);
        std::fill(row.begin(), row.end(), 0.0);
        const std::size_t j = (o / 2) % in_c;
        row[centre * in_c + j] = 1.0;
        if (o % 2 == 1) row[(centre + 1) * in_c + j] = -1.0;
      }
    }
    in_c = out_c;
  }
  return p;
}

struct EncoderCache {
  std::vector<Matrix> padded;  // padded block inputs
  std::vector<std::size_t> input_rows;
  std::vector<Matrix> pre;     // block outputs before the nonlinearity
  nn::NormCache norm;
};

inline constexpr double kFrameNormEps = 1e-5;

inline FrameSequence encode(std::span<const double> samples, const EncoderParams& p,
                            EncoderCache* cache = nullptr) {
  std::size_t hop = 1;
  for (const auto& b : p.blocks) hop *= b.stride;
  if (samples.size() < hop) {
    throw DegenerateInputError("clip of " + std::to_string(samples.size()) +
                               " samples is shorter than one hop (" + std::to_string(hop) + ")");
  }
  Matrix x(samples.size(), 1);
  std::copy(samples.begin(), samples.end(), x.data());
  if (cache) {
    cache->padded.assign(p.blocks.size(), {});
    cache->pre.assign(p.blocks.size(), {});
    cache->input_rows.assign(p.blocks.size(), 0);
  }
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    Matrix padded;
    Matrix y = nn::forward(p.blocks[i], x, &padded);
    if (cache) {
      cache->padded[i] = std::move(padded);
      cache->input_rows[i] = x.rows();
    }
    if (i + 1 < p.blocks.size()) {
      if (cache) cache->pre[i] = y;
      x = p.activation == Activation::gelu ? nn::gelu(y) : nn::abs(y);
    } else {
      x = std::move(y);
    }
  }
  FrameSequence out;
  out.frames = nn::normalize_rows(x, kFrameNormEps, cache ? &cache->norm : nullptr);
  out.frame_hop_samples = hop;
  return out;
}

inline FrameSequence encode(const AudioClip& clip, const EncoderParams& p,
                            EncoderCache* cache = nullptr) {
  return encode(std::span<const double>(clip.samples), p, cache);
}

// Speech and environment branches differ only in configuration.
inline FrameSequence encode_speech(const AudioClip& x, const EncoderParams& p,
                                   EncoderCache* cache = nullptr) {
  return encode(x, p, cache);
}
inline FrameSequence encode_env(const AudioClip& x, const EncoderParams& p,
                                EncoderCache* cache = nullptr) {
  return encode(x, p, cache);
}

// Accumulates gradients for the last `trainable` blocks only; earlier blocks
// are never touched.
inline void encoder_backward(const EncoderParams& p, const EncoderCache& cache,
                             const Matrix& d_frames, std::size_t trainable,
                             EncoderParams& grad) {
  if (trainable == 0) return;
  const std::size_t n = p.blocks.size();
  const std::size_t first = n - std::min(trainable, n);
  Matrix d = nn::normalize_rows_backward(cache.norm, d_frames);
  for (std::size_t i = n; i-- > first;) {
    if (i + 1 < n) {
      d = p.activation == Activation::gelu ? nn::gelu_backward(cache.pre[i], d)
                                           : nn::abs_backward(cache.pre[i], d);
    }
    d = nn::backward(p.blocks[i], cache.padded[i], cache.input_rows[i], d, grad.blocks[i],
                     /*need_dx=*/i > first);
  }
}

// ---------------------------------------------------------------------------
// Precomputed feature container: sequence of records
//   u32 id_len | id bytes | u64 T | u64 D | u64 hop | u64 payload_bytes | T*D f64
// preceded by the 8-byte magic "DSFEAT1\n". Values are stored verbatim.

inline constexpr char kFeatureMagic[8] = {'D', 'S', 'F', 'E', 'A', 'T', '1', '\n'};

namespace feat_detail {
template <class T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
bool get(std::ifstream& f, T& v) {
  return bool(f.read(reinterpret_cast<char*>(&v), sizeof v));
}
}  // namespace feat_detail

inline void store_precomputed(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, FrameSequence>>& items) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(kFeatureMagic, sizeof kFeatureMagic);
  for (const auto& [id, seq] : items) {
    feat_detail::put(f, std::uint32_t(id.size()));
    f.write(id.data(), std::streamsize(id.size()));
    feat_detail::put(f, std::uint64_t(seq.frames.rows()));
    feat_detail::put(f, std::uint64_t(seq.frames.cols()));
    feat_detail::put(f, std::uint64_t(seq.frame_hop_samples));
    feat_detail::put(f, std::uint64_t(seq.frames.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(seq.frames.data()),
            std::streamsize(seq.frames.size() * sizeof(double)));
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline FrameSequence load_precomputed(const std::filesystem::path& path, const std::string& utt_id) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open feature file '" + path.string() + "'");
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kFeatureMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad feature-file magic");
  }
  while (true) {
    std::uint32_t id_len;
    if (!feat_detail::get(f, id_len)) break;
    std::string id(id_len, '\0');
    std::uint64_t t, d, hop, payload;
    if (!f.read(id.data(), id_len) || !feat_detail::get(f, t) || !feat_detail::get(f, d) ||
        !feat_detail::get(f, hop) || !feat_detail::get(f, payload)) {
      throw FormatError(path.string() + ": truncated record header");
    }
    if (t * d * sizeof(double) != payload) {
      throw FormatError(path.string() + ": record '" + id + "' declares T*D = " +
                        std::to_string(t * d) + " values but payload holds " +
                        std::to_string(payload / sizeof(double)));
    }
    if (id != utt_id) {
      f.seekg(std::streamoff(payload), std::ios::cur);
      continue;
    }
    if (t == 0 || d == 0 || hop == 0) {
      throw FormatError(path.string() + ": record '" + id + "' has a zero T, D or hop");
    }
    FrameSequence seq;
    seq.frames = Matrix(t, d);
    seq.frame_hop_samples = hop;
    if (!f.read(reinterpret_cast<char*>(seq.frames.data()), std::streamsize(payload))) {
      throw FormatError(path.string() + ": record '" + id + "' payload truncated");
    }
    return seq;
  }
  throw LookupError("utt_id '" + utt_id + "' not found in '" + path.string() + "'");
}

}  // namespace dualspoof
