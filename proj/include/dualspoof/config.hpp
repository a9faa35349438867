#pragma once

// One configuration object for the whole pipeline, read from a flat
// key = value file plus --key=value overrides. Every key is validated when
// read and any key left unread is rejected.
//
//   seed, threads
//   corpus.seed, corpus.train_per_class, corpus.val_per_class,
//   corpus.eval_per_class, corpus.test_per_class, corpus.duration_s,
//   corpus.sample_rate, corpus.snr_min_db, corpus.snr_max_db, corpus.write_stems
//   lr, batch_size, epochs, scheduler (none|cosine), min_lr_frac,
//   loss_preset (paper|avg), weights.speech, weights.env, weights.original,
//   weights.rank, rank_margin, original_as_bonafide, oversample
//   augment.enabled, augment.prob, augment.mix_prob, augment.mix_ratio_min/max,
//   augment.offset_min/max, augment.min_segment, augment.noise_prob,
//   augment.snr_min_db/max_db
//   encoder.{speech,env}.{out_dim,hop,n_layers,trainable_layers,channels,kernel,dilation,
//                         activation,frontend}
//   model.{n_heads,head_hidden,matching_dim,matching_hidden,matching_head}
//   eval.tau_original, eval.tau_speech, eval.tau_env

#include <string>

#include "dualspoof/corpus.hpp"
#include "dualspoof/kvconfig.hpp"
#include "dualspoof/model.hpp"
#include "dualspoof/training.hpp"

namespace dualspoof {

struct RunConfig {
  CorpusConfig corpus;
  TrainConfig train;
  ModelConfig model;
};

namespace detail {

inline double probability(FlatConfig& c, const std::string& key, double fallback) {
  const double v = c.get_double(key, fallback);
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("key '" + key + "' must lie in [0, 1]");
  return v;
}

inline double non_negative(FlatConfig& c, const std::string& key, double fallback) {
  const double v = c.get_double(key, fallback);
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("key '" + key + "' must be >= 0");
  return v;
}

inline int positive_int(FlatConfig& c, const std::string& key, long long fallback) {
  const long long v = c.get_int(key, fallback);
  if (v < 1 || v > 1'000'000'000) throw ConfigError("key '" + key + "' must be a positive integer");
  return int(v);
}

inline std::uint64_t seed_value(FlatConfig& c, const std::string& key, std::uint64_t fallback) {
  const long long v = c.get_int(key, (long long)fallback);
  if (v < 0) throw ConfigError("key '" + key + "' must be >= 0");
  return std::uint64_t(v);
}

inline void ordered_range(const std::string& lo_key, double lo, double hi) {
  if (lo > hi) throw ConfigError("key '" + lo_key + "' exceeds its upper bound");
}

}  // namespace detail

inline RunConfig read_run_config(FlatConfig& c) {
  using namespace detail;
  RunConfig r;
  const std::uint64_t seed = seed_value(c, "seed", 42);
  const int threads = positive_int(c, "threads", 1);

  CorpusConfig& cc = r.corpus;
  cc.seed = seed_value(c, "corpus.seed", seed);
  cc.threads = threads;
  for (Split s : {Split::train, Split::val, Split::eval, Split::test}) {
    const std::string key = "corpus." + std::string(token(s)) + "_per_class";
    const long long fallback = cc.per_class.count(s) ? cc.per_class.at(s) : 0;
    const long long n = c.get_int(key, fallback);
    if (n < 0) throw ConfigError("key '" + key + "' must be >= 0");
    if (n == 0) {
      cc.per_class.erase(s);
    } else {
      cc.per_class[s] = int(n);
    }
  }
  cc.duration_s = c.get_double("corpus.duration_s", cc.duration_s);
  if (!(cc.duration_s > 0.0)) throw ConfigError("key 'corpus.duration_s' must be > 0");
  cc.sample_rate = positive_int(c, "corpus.sample_rate", cc.sample_rate);
  cc.snr_min_db = c.get_double("corpus.snr_min_db", cc.snr_min_db);
  cc.snr_max_db = c.get_double("corpus.snr_max_db", cc.snr_max_db);
  ordered_range("corpus.snr_min_db", cc.snr_min_db, cc.snr_max_db);
  cc.write_stems = c.get_bool("corpus.write_stems", cc.write_stems);

  TrainConfig& t = r.train;
  t.seed = seed;
  t.threads = threads;
  t.learning_rate = non_negative(c, "lr", t.learning_rate);
  t.batch_size = positive_int(c, "batch_size", t.batch_size);
  t.epochs = positive_int(c, "epochs", t.epochs);
  const std::string sched = c.get_string("scheduler", "cosine");
  if (sched == "cosine") {
    t.scheduler = Scheduler::cosine;
  } else if (sched == "none") {
    t.scheduler = Scheduler::none;
  } else {
    throw ConfigError("key 'scheduler': expected none or cosine, got '" + sched + "'");
  }
  t.min_lr_frac = probability(c, "min_lr_frac", t.min_lr_frac);

  const std::string preset = c.get_string("loss_preset", "paper");
  if (preset == "avg") {
    t.weights = LossWeights::average();
  } else if (preset != "paper") {
    throw ConfigError("key 'loss_preset': expected paper or avg, got '" + preset + "'");
  }
  t.weights.w_speech = non_negative(c, "weights.speech", t.weights.w_speech);
  t.weights.w_env = non_negative(c, "weights.env", t.weights.w_env);
  t.weights.w_original = non_negative(c, "weights.original", t.weights.w_original);
  t.weights.w_rank = non_negative(c, "weights.rank", t.weights.w_rank);
  t.weights.rank_margin = non_negative(c, "rank_margin", t.weights.rank_margin);
  t.original_as_bonafide = c.get_bool("original_as_bonafide", t.original_as_bonafide);
  t.oversample = c.get_bool("oversample", t.oversample);

  AugmentOptions& a = t.augment;
  a.enabled = c.get_bool("augment.enabled", a.enabled);
  a.prob = probability(c, "augment.prob", a.prob);
  a.mix_prob = probability(c, "augment.mix_prob", a.mix_prob);
  AugmentRanges& g = a.ranges;
  g.mix_ratio_min = probability(c, "augment.mix_ratio_min", g.mix_ratio_min);
  g.mix_ratio_max = probability(c, "augment.mix_ratio_max", g.mix_ratio_max);
  ordered_range("augment.mix_ratio_min", g.mix_ratio_min, g.mix_ratio_max);
  g.offset_min_frac = probability(c, "augment.offset_min", g.offset_min_frac);
  g.offset_max_frac = probability(c, "augment.offset_max", g.offset_max_frac);
  ordered_range("augment.offset_min", g.offset_min_frac, g.offset_max_frac);
  g.min_segment_frac = probability(c, "augment.min_segment", g.min_segment_frac);
  g.noise_prob = probability(c, "augment.noise_prob", g.noise_prob);
  g.snr_min_db = c.get_double("augment.snr_min_db", g.snr_min_db);
  g.snr_max_db = c.get_double("augment.snr_max_db", g.snr_max_db);
  ordered_range("augment.snr_min_db", g.snr_min_db, g.snr_max_db);

  r.model = read_model_config(c);

  t.thresholds.original = probability(c, "eval.tau_original", t.thresholds.original);
  t.thresholds.speech = probability(c, "eval.tau_speech", t.thresholds.speech);
  t.thresholds.env = probability(c, "eval.tau_env", t.thresholds.env);
  return r;
}

// Reads everything and fails on keys nobody consumed.
inline RunConfig load_run_config(FlatConfig c) {
  RunConfig r = read_run_config(c);
  c.reject_unconsumed();
  return r;
}

}  // namespace dualspoof
