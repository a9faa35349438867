#pragma once

// Multi-task objective, Adam, the epoch loop and checkpoints.
//
// L = w_s L_speech + w_e L_env + w_o L_original + w_r L_rank
//
// L_speech / L_env are mean BCE over the combination classes only (original
// clips carry no component labels), L_original is mean BCE over everything,
// and L_rank is a hinge asking the spoofed component of an asymmetric clip to
// out-score the genuine one by rank_margin.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dualspoof/augment.hpp"
#include "dualspoof/corpus.hpp"
#include "dualspoof/eval.hpp"
#include "dualspoof/model.hpp"

namespace dualspoof {

struct LossWeights {
  double w_speech = 1.0;
  double w_env = 1.0;
  double w_original = 0.2;
  double w_rank = 0.5;
  double rank_margin = 0.2;

  // Uniform weighting of every term.
  static LossWeights average() { return {1.0, 1.0, 1.0, 1.0, 0.2}; }
};

enum class Scheduler { none, cosine };

// Training-run augmentation: half the entries pass through clean, and noise
// is drawn for a quarter of the augmented ones.
inline AugmentOptions default_train_augment() {
  AugmentOptions a;
  a.prob = 0.5;
  a.ranges.noise_prob = 0.25;
  return a;
}

struct TrainConfig {
  double learning_rate = 3e-3;
  int batch_size = 64;
  int epochs = 12;
  Scheduler scheduler = Scheduler::cosine;
  double min_lr_frac = 0.1;  // cosine floor, as a fraction of the initial rate
  std::uint64_t seed = 42;
  int threads = 1;
  bool original_as_bonafide = false;
  bool oversample = true;
  AugmentOptions augment = default_train_augment();
  Thresholds thresholds;
  LossWeights weights;
  bool verbose = false;
};

// ---------------------------------------------------------------------------
// Losses.

struct BatchLabels {
  std::vector<ClassLabel> labels;
  bool original_as_bonafide = false;

  std::size_t size() const { return labels.size(); }

  // Component target for sample i, or nullopt when the loss is masked.
  std::optional<double> speech_target(std::size_t i) const {
    if (auto s = labels[i].speech_label()) return *s == Authenticity::spoof ? 1.0 : 0.0;
    if (original_as_bonafide) return 0.0;
    return std::nullopt;
  }
  std::optional<double> env_target(std::size_t i) const {
    if (auto s = labels[i].env_label()) return *s == Authenticity::spoof ? 1.0 : 0.0;
    if (original_as_bonafide) return 0.0;
    return std::nullopt;
  }
  double original_target(std::size_t i) const { return double(labels[i].original_label()); }

  std::size_t component_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i) n += speech_target(i).has_value();
    return n;
  }
  std::size_t asymmetric_count() const {
    std::size_t n = 0;
    for (const auto& l : labels)
      n += l.klass == Klass::spoof_bonafide || l.klass == Klass::bonafide_spoof;
    return n;
  }
};

// Numerically stable binary cross-entropy on a logit.
inline double bce_with_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

struct ComponentLosses {
  double speech = 0.0;
  double env = 0.0;
  double original = 0.0;
};

inline void check_finite_scores(std::span<const ScoreTriple> scores) {
  for (const auto& s : scores) {
    if (!std::isfinite(s.speech_logit) || !std::isfinite(s.env_logit) ||
        !std::isfinite(s.original_logit)) {
      throw NumericError("non-finite logit in loss computation");
    }
  }
}

inline ComponentLosses component_losses(std::span<const ScoreTriple> scores, const BatchLabels& labels) {
  if (scores.empty()) throw ParameterError("component_losses: empty batch");
  if (scores.size() != labels.size()) throw ParameterError("component_losses: size mismatch");
  check_finite_scores(scores);
  ComponentLosses l;
  std::size_t ns = 0, ne = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (auto y = labels.speech_target(i)) {
      l.speech += bce_with_logit(scores[i].speech_logit, *y);
      ++ns;
    }
    if (auto y = labels.env_target(i)) {
      l.env += bce_with_logit(scores[i].env_logit, *y);
      ++ne;
    }
    l.original += bce_with_logit(scores[i].original_logit, labels.original_target(i));
  }
  l.speech = ns ? l.speech / double(ns) : 0.0;
  l.env = ne ? l.env / double(ne) : 0.0;
  l.original /= double(scores.size());
  return l;
}

inline double rank_term(const ScoreTriple& s, Klass k, double margin) {
  if (k == Klass::spoof_bonafide) return std::max(0.0, margin - (s.p_speech_spoof() - s.p_env_spoof()));
  if (k == Klass::bonafide_spoof) return std::max(0.0, margin - (s.p_env_spoof() - s.p_speech_spoof()));
  return 0.0;
}

inline double ranking_reg(std::span<const ScoreTriple> scores, const BatchLabels& labels, double margin) {
  if (margin < 0.0) throw ParameterError("ranking_reg: margin must be >= 0");
  double sum = 0.0;
  const std::size_t n = labels.asymmetric_count();
  if (n == 0) return 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) sum += rank_term(scores[i], labels.labels[i].klass, margin);
  return sum / double(n);
}

inline double total_loss(double l_speech, double l_env, double l_original, double l_rank,
                         const LossWeights& w) {
  for (double v : {l_speech, l_env, l_original, l_rank}) {
    if (!std::isfinite(v)) throw NumericError("total_loss: non-finite component loss");
  }
  const double t = w.w_speech * l_speech + w.w_env * l_env + w.w_original * l_original +
                   w.w_rank * l_rank;
  if (!std::isfinite(t)) throw NumericError("total_loss: non-finite result");
  return t;
}

// Gradient of the batch objective w.r.t. sample i's three logits. Only the
// label-determined denominators couple samples, so this can be evaluated
// right after the sample's own forward pass.
struct BatchDenominators {
  std::size_t speech = 0, env = 0, all = 0, asymmetric = 0;

  static BatchDenominators of(const BatchLabels& b) {
    BatchDenominators d;
    for (std::size_t i = 0; i < b.size(); ++i) {
      d.speech += b.speech_target(i).has_value();
      d.env += b.env_target(i).has_value();
    }
    d.all = b.size();
    d.asymmetric = b.asymmetric_count();
    return d;
  }
};

inline LogitGrads sample_logit_grads(const ScoreTriple& s, const BatchLabels& b, std::size_t i,
                                     const BatchDenominators& d, const LossWeights& w) {
  LogitGrads g;
  if (auto y = b.speech_target(i)) g.speech += w.w_speech * (s.p_speech_spoof() - *y) / double(d.speech);
  if (auto y = b.env_target(i)) g.env += w.w_env * (s.p_env_spoof() - *y) / double(d.env);
  g.original = w.w_original * (s.p_original() - b.original_target(i)) / double(d.all);
  const Klass k = b.labels[i].klass;
  if (d.asymmetric && rank_term(s, k, w.rank_margin) > 0.0) {
    const double ps = s.p_speech_spoof(), pe = s.p_env_spoof();
    const double c = w.w_rank / double(d.asymmetric);
    const double sign = k == Klass::spoof_bonafide ? 1.0 : -1.0;
    g.speech -= sign * c * ps * (1.0 - ps);
    g.env += sign * c * pe * (1.0 - pe);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  std::vector<Matrix> m, v;
  long long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline void adam_step(std::vector<NamedTensor>& params, std::vector<NamedTensor>& grads,
                      AdamState& st, double lr) {
  if (st.m.empty()) {
    for (auto& p : params) {
      st.m.emplace_back(p.tensor->rows(), p.tensor->cols());
      st.v.emplace_back(p.tensor->rows(), p.tensor->cols());
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    Matrix& p = *params[i].tensor;
    const Matrix& g = *grads[i].tensor;
    Matrix& m = st.m[i];
    Matrix& v = st.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g[j];
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g[j] * g[j];
      const double mh = m[j] / bc1, vh = v[j] / bc2;
      p[j] -= lr * mh / (std::sqrt(vh) + st.eps);
    }
  }
}

inline double scheduled_lr(const TrainConfig& c, long long step, long long total_steps) {
  if (c.scheduler == Scheduler::none || total_steps <= 1) return c.learning_rate;
  const double progress = double(step) / double(total_steps - 1);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return c.learning_rate * (c.min_lr_frac + (1.0 - c.min_lr_frac) * cosine);
}

// ---------------------------------------------------------------------------
// Checkpoints: "DSCKPT1\n" | u32 meta_len | meta (model config text) |
// u32 count | per tensor: u32 name_len | name | u64 rows | u64 cols | f64 data

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'C', 'K', 'P', 'T', '1', '\n'};

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const ModelConfig& cfg) {
  ModelParams copy = params;
  auto tensors = named_tensors(copy, cfg);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    auto put32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto put64 = [&](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    f.write(kCheckpointMagic, 8);
    const std::string meta = write_model_config(cfg);
    put32(std::uint32_t(meta.size()));
    f.write(meta.data(), std::streamsize(meta.size()));
    put32(std::uint32_t(tensors.size()));
    for (const auto& t : tensors) {
      put32(std::uint32_t(t.name.size()));
      f.write(t.name.data(), std::streamsize(t.name.size()));
      put64(t.tensor->rows());
      put64(t.tensor->cols());
      f.write(reinterpret_cast<const char*>(t.tensor->data()), std::streamsize(t.tensor->size() * 8));
    }
    if (!f) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  auto fail = [&](const std::string& what) { throw FormatError(path.string() + ": " + what); };
  auto get32 = [&]() {
    std::uint32_t v;
    if (!f.read(reinterpret_cast<char*>(&v), 4)) fail("truncated");
    return v;
  };
  auto get64 = [&]() {
    std::uint64_t v;
    if (!f.read(reinterpret_cast<char*>(&v), 8)) fail("truncated");
    return v;
  };
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) fail("bad checkpoint magic");
  std::string meta(get32(), '\0');
  if (!f.read(meta.data(), std::streamsize(meta.size()))) fail("truncated metadata");
  FlatConfig mc = FlatConfig::parse(meta, path.string() + "[meta]");
  Checkpoint ck;
  ck.config = read_model_config(mc);
  mc.reject_unconsumed();
  ck.params = init_model(ck.config, 0);
  auto tensors = named_tensors(ck.params, ck.config);
  const std::uint32_t count = get32();
  if (count != tensors.size()) {
    fail("holds " + std::to_string(count) + " tensors, model expects " + std::to_string(tensors.size()));
  }
  for (auto& t : tensors) {
    std::string name(get32(), '\0');
    if (!f.read(name.data(), std::streamsize(name.size()))) fail("truncated tensor name");
    if (name != t.name) fail("tensor '" + name + "' where '" + t.name + "' was expected");
    const std::uint64_t r = get64(), c = get64();
    if (r != t.tensor->rows() || c != t.tensor->cols()) {
      fail("tensor '" + name + "' has shape " + std::to_string(r) + "x" + std::to_string(c) +
           ", expected " + shape_string(*t.tensor));
    }
    if (!f.read(reinterpret_cast<char*>(t.tensor->data()), std::streamsize(r * c * 8))) {
      fail("tensor '" + name + "' payload truncated");
    }
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Data.

// In-memory audio for one manifest, stored as float (16-bit PCM fits exactly).
struct ClipStore {
  std::vector<ManifestEntry> entries;
  std::vector<std::vector<float>> mixture, speech, env;
  int sample_rate = 16000;

  static std::vector<float> to_float(const AudioClip& c) {
    return std::vector<float>(c.samples.begin(), c.samples.end());
  }

  static ClipStore load(std::vector<ManifestEntry> entries, const std::filesystem::path& base,
                        bool with_stems) {
    ClipStore s;
    s.entries = std::move(entries);
    for (const auto& e : s.entries) {
      AudioClip x = read_wav(base / e.wav_path);
      s.sample_rate = x.sample_rate;
      s.mixture.push_back(to_float(x));
      if (with_stems && !e.speech_path.empty()) {
        s.speech.push_back(to_float(read_wav(base / e.speech_path)));
        s.env.push_back(to_float(read_wav(base / e.env_path)));
      } else {
        s.speech.emplace_back();
        s.env.emplace_back();
      }
    }
    return s;
  }

  AudioClip clip(const std::vector<float>& v) const {
    return AudioClip{std::vector<double>(v.begin(), v.end()), sample_rate, {}};
  }
};

// Runs fn(i) for i in [0, n) over `threads` workers, each taking a contiguous
// chunk. Exceptions are rethrown on the calling thread.
template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::size_t(threads), n));
  if (workers == 1) {
    fn(std::size_t(0), n, std::size_t(0));
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t a = std::min(n, w * chunk), b = std::min(n, a + chunk);
        fn(a, b, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<ScoreRecord> score_store(const ModelParams& p, const ModelConfig& cfg,
                                            const ClipStore& store, const Thresholds& thr,
                                            int threads) {
  std::vector<ScoreRecord> out(store.entries.size());
  parallel_chunks(out.size(), threads, [&](std::size_t a, std::size_t b, std::size_t) {
    for (std::size_t i = a; i < b; ++i) {
      std::vector<double> x(store.mixture[i].begin(), store.mixture[i].end());
      const ScoreTriple s = model_forward(p, cfg, std::span<const double>(x));
      out[i] = ScoreRecord{store.entries[i].utt_id, s.speech_logit, s.env_logit, s.original_logit,
                           decide_class(s, thr).klass};
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training loop.

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  EerTriple val_eer;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_f1 = -1.0;
  ModelParams best_params;
};

inline constexpr const char* kMetricsHeader =
    "epoch,train_loss,val_f1,val_eer_original,val_eer_speech,val_eer_env";

inline std::string metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g", m.epoch, m.train_loss, m.val_f1,
                m.val_eer.original, m.val_eer.speech, m.val_eer.env);
  return buf;
}

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) throw ParameterError("learning_rate must be >= 0");
  if (c.batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (c.epochs < 1) throw ParameterError("epochs must be >= 1");
  if (c.threads < 1) throw ParameterError("threads must be >= 1");
  const auto& w = c.weights;
  for (double v : {w.w_speech, w.w_env, w.w_original, w.w_rank, w.rank_margin}) {
    if (!(v >= 0.0)) throw ParameterError("loss weights and rank_margin must be >= 0");
  }
}

// Trains from `init` on train_store, validating on val_store after every
// epoch. When out_dir is non-empty, writes metrics.csv and the best-val-F1
// checkpoint (checkpoint.bin) there. A non-finite loss aborts with a
// NumericError; the last written checkpoint is left untouched.
inline TrainResult train(const ClipStore& train_store, const ClipStore& val_store,
                         ModelParams params, const ModelConfig& mcfg, const TrainConfig& cfg,
                         const std::filesystem::path& out_dir = {}) {
  validate(cfg);
  mcfg.validate();
  if (train_store.entries.empty()) throw ParameterError("train: empty training manifest");
  if (val_store.entries.empty()) throw ParameterError("train: empty validation manifest");

  std::vector<ManifestEntry> plan;
  if (cfg.oversample) {
    plan = oversample(train_store.entries, cfg.seed);
  } else {
    plan = train_store.entries;
    for (std::size_t i = 0; i < plan.size(); ++i) plan[i].aug_seed = derive_seed(cfg.seed, 0xa5eed, i);
  }
  // map a plan entry back to its stored audio
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < train_store.entries.size(); ++i) where[train_store.entries[i].utt_id] = i;
  std::vector<std::size_t> plan_src;
  for (const auto& e : plan) plan_src.push_back(where.at(e.utt_id));

  std::vector<Klass> val_truth;
  for (const auto& e : val_store.entries) val_truth.push_back(e.label());

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    // sidecar: the sampling plan with each entry's first-epoch theta
    std::vector<ManifestEntry> logged = plan;
    for (std::size_t i = 0; i < logged.size(); ++i) {
      const auto& x = train_store.mixture[plan_src[i]];
      const auto spec = planned_augment(logged[i].label(), derive_seed(*logged[i].aug_seed, 1),
                                        double(x.size()) / train_store.sample_rate, cfg.augment);
      if (spec) logged[i].augment_spec = nlohmann::ordered_json(to_json(*spec));
    }
    write_manifest(logged, out_dir / "train_plan.jsonl");
    log.open(out_dir / "metrics.csv");
    if (!log) throw IoError("cannot open '" + (out_dir / "metrics.csv").string() + "'");
    log << kMetricsHeader << '\n';
  }

  auto param_view = named_tensors(params, mcfg);
  AdamState adam;
  const std::size_t n = plan.size();
  const std::size_t bs = std::size_t(cfg.batch_size);
  const long long steps_per_epoch = (long long)((n + bs - 1) / bs);
  const long long total_steps = steps_per_epoch * cfg.epochs;
  long long step = 0;

  const int workers = std::max(1, std::min(cfg.threads, cfg.batch_size));
  std::vector<ModelParams> thread_grads(std::size_t(workers), zeros_like(params));
  ModelParams grad = zeros_like(params);
  auto grad_view = named_tensors(grad, mcfg);

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5f1e, std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      BatchLabels labels;
      labels.original_as_bonafide = cfg.original_as_bonafide;
      for (std::size_t i = start; i < end; ++i) labels.labels.push_back(plan[order[i]].label());
      const BatchDenominators den = BatchDenominators::of(labels);
      std::vector<ScoreTriple> scores(end - start);

      for (auto& g : thread_grads) g.visit([](const std::string&, Matrix& m) { m.set_zero(); });
      parallel_chunks(end - start, workers, [&](std::size_t a, std::size_t b, std::size_t w) {
        for (std::size_t j = a; j < b; ++j) {
          const ManifestEntry& e = plan[order[start + j]];
          const std::size_t src = plan_src[order[start + j]];
          const AudioClip mixture = train_store.clip(train_store.mixture[src]);
          AudioClip x;
          if (!train_store.speech[src].empty()) {
            const AudioClip s = train_store.clip(train_store.speech[src]);
            const AudioClip en = train_store.clip(train_store.env[src]);
            x = augment_entry(mixture, &s, &en, e.env_gain, e.label(),
                              derive_seed(*e.aug_seed, std::uint64_t(epoch)), cfg.augment);
          } else {
            x = augment_entry(mixture, nullptr, nullptr, 1.0, e.label(),
                              derive_seed(*e.aug_seed, std::uint64_t(epoch)), cfg.augment);
          }
          ForwardCache cache;
          scores[j] = model_forward(params, mcfg, x, &cache);
          check_finite_scores(std::span<const ScoreTriple>(&scores[j], 1));
          const LogitGrads lg = sample_logit_grads(scores[j], labels, j, den, cfg.weights);
          model_backward(params, mcfg, cache, lg, thread_grads[w]);
        }
      });

      const ComponentLosses cl = component_losses(scores, labels);
      const double lr_term = ranking_reg(scores, labels, cfg.weights.rank_margin);
      const double l_orig = mcfg.matching_head ? cl.original : 0.0;
      const double loss = total_loss(cl.speech, cl.env, l_orig, lr_term, cfg.weights);
      grad.visit([](const std::string&, Matrix& m) { m.set_zero(); });
      for (auto& g : thread_grads) add_into(grad, g);
      for (const auto& g : grad_view) {
        if (!g.tensor->all_finite()) throw NumericError("non-finite gradient in '" + g.name + "'");
      }
      adam_step(param_view, grad_view, adam, scheduled_lr(cfg, step, total_steps));
      ++step;
      loss_sum += loss;
      ++loss_batches;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / double(loss_batches);
    const auto records = score_store(params, mcfg, val_store, cfg.thresholds, cfg.threads);
    const Metrics vm = compute_metrics(records, val_truth, cfg.original_as_bonafide);
    m.val_f1 = vm.f1;
    m.val_eer = vm.eer;
    result.history.push_back(m);
    if (log) {
      log << metrics_row(m) << '\n';
      log.flush();
    }
    if (m.val_f1 > result.best_f1) {
      result.best_f1 = m.val_f1;
      result.best_epoch = epoch;
      result.best_params = params;
      if (!out_dir.empty()) save_checkpoint(out_dir / "checkpoint.bin", params, mcfg);
    }
    if (cfg.verbose) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "epoch %d  %s  (%.1fs)\n", epoch, metrics_row(m).c_str(), secs);
    }
  }
  return result;
}

}  // namespace dualspoof
