#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "dualspoof/gradcheck.hpp"
#include "dualspoof/training.hpp"
#include "temp_dir.hpp"

using namespace dualspoof;
namespace dt = dualspoof::testing;

namespace {

std::vector<ScoreTriple> random_scores(Rng& rng, std::size_t n) {
  std::vector<ScoreTriple> s(n);
  for (auto& t : s) t = {2.0 * gaussian(rng), 2.0 * gaussian(rng), 2.0 * gaussian(rng)};
  return s;
}

BatchLabels labels_of(std::initializer_list<Klass> ks, bool oab = false) {
  BatchLabels b;
  for (Klass k : ks) b.labels.push_back(k);
  b.original_as_bonafide = oab;
  return b;
}

double batch_objective(const std::vector<ScoreTriple>& s, const BatchLabels& b, const LossWeights& w) {
  const ComponentLosses c = component_losses(s, b);
  return total_loss(c.speech, c.env, c.original, ranking_reg(s, b, w.rank_margin), w);
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.speech = EncoderConfig{8, 80, 2, 1, 4, 5, 1};
  m.env = EncoderConfig{8, 160, 2, 1, 4, 5, 20, Activation::abs};
  m.n_heads = 2;
  m.head_hidden = 8;
  m.matching_dim = 4;
  m.matching_hidden = 8;
  return m;
}

// A 5-class corpus of 0.25 s clips, built once per test binary.
struct TinyCorpus {
  dt::TempDir dir;
  ClipStore train, val;

  TinyCorpus() {
    CorpusConfig c;
    c.per_class = {{Split::train, 4}, {Split::val, 2}};
    c.duration_s = 0.25;
    build_corpus(c, dir.path());
    train = ClipStore::load(load_manifest(manifest_path(dir.path(), Split::train)), dir.path(), true);
    val = ClipStore::load(load_manifest(manifest_path(dir.path(), Split::val)), dir.path(), false);
  }
};

const TinyCorpus& corpus() {
  static const TinyCorpus c;
  return c;
}

TrainConfig tiny_train(int epochs = 2) {
  TrainConfig t;
  t.learning_rate = 3e-3;
  t.batch_size = 8;
  t.epochs = epochs;
  return t;
}

std::vector<Matrix> snapshot(ModelParams p) {
  std::vector<Matrix> out;
  p.visit([&](const std::string&, Matrix& m) { out.push_back(m); });
  return out;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST(Losses, BceLimitsAndMasking) {
  const std::vector<ScoreTriple> perfect{{40, -40, -40}, {-40, 40, -40}, {0, 0, 40}};
  const auto c = component_losses(perfect, labels_of({Klass::spoof_bonafide, Klass::bonafide_spoof, Klass::original}));
  EXPECT_LT(c.speech, 1e-6);
  EXPECT_LT(c.env, 1e-6);
  EXPECT_LT(c.original, 1e-6);
  const std::vector<ScoreTriple> any{{3, -2, 0.1}, {-1, 5, 2}};
  const auto o = component_losses(any, labels_of({Klass::original, Klass::original}));
  EXPECT_EQ(o.speech, 0.0);
  EXPECT_EQ(o.env, 0.0);
  EXPECT_GT(o.original, 0.0);
  EXPECT_NEAR(bce_with_logit(0.0, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logit(800.0, 0.0), 800.0, 1e-9);
  EXPECT_THROW(component_losses(std::vector<ScoreTriple>{{NAN, 0, 0}}, labels_of({Klass::original})), NumericError);
  EXPECT_THROW(component_losses(any, labels_of({Klass::original})), ParameterError);
}

TEST(Losses, MatchesLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    BatchLabels b;
    for (int i = 0; i < 12; ++i) b.labels.push_back(kAllClasses[std::size_t(rng() % 5)]);
    b.labels[0] = Klass::spoof_spoof;
    const auto s = random_scores(rng, 12);
    auto bce = [](double z, double y) {
      const double p = 1.0 / (1.0 + std::exp(-z));
      return -(y * std::log(p) + (1 - y) * std::log(1 - p));
    };
    double ls = 0, le = 0, lo = 0;
    int n = 0;
    for (std::size_t i = 0; i < 12; ++i) {
      const Klass k = b.labels[i].klass;
      lo += bce(s[i].original_logit, k == Klass::original);
      if (k == Klass::original) continue;
      ++n;
      ls += bce(s[i].speech_logit, k == Klass::spoof_bonafide || k == Klass::spoof_spoof);
      le += bce(s[i].env_logit, k == Klass::bonafide_spoof || k == Klass::spoof_spoof);
    }
    const auto c = component_losses(s, b);
    EXPECT_NEAR(c.speech, ls / n, 1e-12);
    EXPECT_NEAR(c.env, le / n, 1e-12);
    EXPECT_NEAR(c.original, lo / 12, 1e-12);
  }
}

TEST(Losses, OriginalsEnterComponentLossesAsBonafideWhenConfigured) {
  const std::vector<ScoreTriple> s{{1.0, -1.0, 0.0}};
  const auto c = component_losses(s, labels_of({Klass::original}, true));
  EXPECT_NEAR(c.speech, bce_with_logit(1.0, 0.0), 1e-15);
  EXPECT_NEAR(c.env, bce_with_logit(-1.0, 0.0), 1e-15);
}

TEST(Losses, AddingOriginalsLeavesComponentLossesUnchanged) {
  Rng rng(2);
  const auto base = random_scores(rng, 4);
  auto more = base;
  for (const auto& s : random_scores(rng, 3)) more.push_back(s);
  const auto a = component_losses(base, labels_of({Klass::spoof_bonafide, Klass::bonafide_spoof,
                                                   Klass::spoof_spoof, Klass::bonafide_bonafide}));
  const auto b = component_losses(more, labels_of({Klass::spoof_bonafide, Klass::bonafide_spoof,
                                                   Klass::spoof_spoof, Klass::bonafide_bonafide,
                                                   Klass::original, Klass::original, Klass::original}));
  EXPECT_EQ(a.speech, b.speech);
  EXPECT_EQ(a.env, b.env);
}

TEST(RankingReg, Examples) {
  const auto sb = labels_of({Klass::spoof_bonafide});
  EXPECT_EQ(ranking_reg(std::vector{ScoreTriple::from_probabilities(0.9, 0.1, 0.5)}, sb, 0.2), 0.0);
  EXPECT_NEAR(ranking_reg(std::vector{ScoreTriple{0, 0, 0}}, sb, 0.2), 0.2, 1e-15);
  EXPECT_NEAR(ranking_reg(std::vector{ScoreTriple::from_probabilities(0.1, 0.9, 0.5)},
                          labels_of({Klass::bonafide_spoof}), 0.2),
              0.0, 1e-15);
  const std::vector<ScoreTriple> sym{{0, 0, 0}, {1, 2, 3}, {-3, 0, 1}};
  EXPECT_EQ(ranking_reg(sym, labels_of({Klass::spoof_spoof, Klass::bonafide_bonafide, Klass::original}), 0.2), 0.0);
  EXPECT_THROW(ranking_reg(sym, sb, -0.1), ParameterError);
}

TEST(TotalLoss, WorkedExampleAndLinearity) {
  EXPECT_EQ(total_loss(0.5, 0.3, 1.0, 0.2, LossWeights{}), 1.1);
  EXPECT_EQ(total_loss(0, 0, 0, 0, LossWeights{}), 0.0);
  EXPECT_EQ(total_loss(0.5, 0.3, 1.0, 0.2, LossWeights{0, 0, 0, 0, 0.2}), 0.0);
  const LossWeights avg = LossWeights::average();
  EXPECT_EQ(total_loss(1, 2, 3, 4, avg), 10.0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double l[4] = {uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2)};
    LossWeights w{uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1), 0.2};
    const double base = total_loss(l[0], l[1], l[2], l[3], w);
    LossWeights w2 = w;
    w2.w_env *= 4.0;
    EXPECT_NEAR(total_loss(l[0], l[1], l[2], l[3], w2) - base, 3.0 * w.w_env * l[1], 1e-12);
  }
  EXPECT_THROW(total_loss(NAN, 0, 0, 0, LossWeights{}), NumericError);
  EXPECT_THROW(total_loss(INFINITY, 0, 0, 0, LossWeights{}), NumericError);
}

TEST(LogitGrads, MatchFiniteDifferencesOfBatchObjective) {
  Rng rng(4);
  for (bool oab : {false, true}) {
    const BatchLabels b = labels_of({Klass::spoof_bonafide, Klass::bonafide_spoof, Klass::original,
                                     Klass::spoof_spoof, Klass::bonafide_bonafide, Klass::spoof_bonafide},
                                    oab);
    const LossWeights w;
    auto s = random_scores(rng, b.size());
    const BatchDenominators d = BatchDenominators::of(b);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const LogitGrads g = sample_logit_grads(s[i], b, i, d, w);
      double* fields[3] = {&s[i].speech_logit, &s[i].env_logit, &s[i].original_logit};
      const double analytic[3] = {g.speech, g.env, g.original};
      for (int f = 0; f < 3; ++f) {
        const double old = *fields[f];
        *fields[f] = old + 1e-6;
        const double up = batch_objective(s, b, w);
        *fields[f] = old - 1e-6;
        const double down = batch_objective(s, b, w);
        *fields[f] = old;
        EXPECT_NEAR(analytic[f], (up - down) / 2e-6, 1e-7) << i << " " << f;
      }
    }
  }
}

TEST(Adam, StepOpposesGradientSign) {
  Rng rng(5);
  Matrix p = random_matrix(rng, 3, 4, 1.0), g = random_matrix(rng, 3, 4, 1.0);
  const Matrix before = p;
  std::vector<NamedTensor> ps{{"p", &p, true}}, gs{{"p", &g, true}};
  AdamState st;
  adam_step(ps, gs, st, 1e-2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_LT((p[i] - before[i]) * g[i], 0.0);
    EXPECT_NEAR(std::abs(p[i] - before[i]), 1e-2, 1e-7);  // first bias-corrected step is lr * sign(g)
  }
  Matrix q = before;
  std::vector<NamedTensor> frozen{{"q", &q, false}};
  adam_step(frozen, gs, st, 1e-2);
  EXPECT_TRUE(bit_equal(q, before));
}

TEST(Scheduler, CosineFromFullRateToFloor) {
  TrainConfig c;
  c.learning_rate = 2e-3;
  EXPECT_EQ(scheduled_lr(c, 0, 100), 2e-3);
  EXPECT_NEAR(scheduled_lr(c, 99, 100), 2e-4, 1e-18);
  for (long long s = 1; s < 100; ++s) EXPECT_LE(scheduled_lr(c, s, 100), scheduled_lr(c, s - 1, 100));
  c.scheduler = Scheduler::none;
  EXPECT_EQ(scheduled_lr(c, 50, 100), 2e-3);
}

TEST(ModelGradient, EndToEndMatchesFiniteDifferences) {
  ModelConfig m = tiny_model();
  m.speech.trainable_layers = 2;
  m.env.trainable_layers = 2;
  const ModelParams p = init_model(m, 7);
  Rng rng(6);
  std::vector<double> x(800);
  for (double& v : x) v = 0.3 * gaussian(rng);
  const GradCheckResult r = grad_check_model(p, m, x, LogitGrads{0.7, -0.4, 0.9});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "]";
}

TEST(Train, DeterministicForFixedSeed) {
  const auto& c = corpus();
  const ModelConfig m = tiny_model();
  const TrainResult a = train(c.train, c.val, init_model(m, 1), m, tiny_train());
  const TrainResult b = train(c.train, c.val, init_model(m, 1), m, tiny_train());
  ASSERT_EQ(a.history.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) EXPECT_EQ(metrics_row(a.history[e]), metrics_row(b.history[e]));
  const auto sa = snapshot(a.best_params), sb = snapshot(b.best_params);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_TRUE(bit_equal(sa[i], sb[i])) << i;
}

TEST(Train, ZeroLearningRateIsAFixedPoint) {
  const auto& c = corpus();
  const ModelConfig m = tiny_model();
  TrainConfig t = tiny_train(1);
  t.learning_rate = 0.0;
  const ModelParams init = init_model(m, 2);
  const TrainResult r = train(c.train, c.val, init, m, t);
  const auto a = snapshot(init), b = snapshot(r.best_params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i], b[i])) << i;
}

TEST(Train, FrozenEncoderBlocksNeverMove) {
  const auto& c = corpus();
  ModelConfig m = tiny_model();
  m.speech.trainable_layers = 0;
  m.env.trainable_layers = 1;
  ModelParams init = init_model(m, 3);
  TrainResult r = train(c.train, c.val, init, m, tiny_train(1));
  const auto before = named_tensors(init, m);
  const auto after = named_tensors(r.best_params, m);
  bool some_moved = false;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool same = bit_equal(*before[i].tensor, *after[i].tensor);
    if (!before[i].trainable) EXPECT_TRUE(same) << before[i].name;
    some_moved = some_moved || !same;
  }
  EXPECT_TRUE(some_moved);
}

TEST(Train, WritesLogCheckpointAndPlan) {
  const auto& c = corpus();
  dt::TempDir out;
  const ModelConfig m = tiny_model();
  const TrainResult r = train(c.train, c.val, init_model(m, 4), m, tiny_train(), out.path());
  std::ifstream log(out.path() / "metrics.csv");
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, kMetricsHeader);
  int rows = 0;
  while (std::getline(log, line)) EXPECT_EQ(line, metrics_row(r.history[std::size_t(rows++)]));
  EXPECT_EQ(rows, 2);
  const auto plan = load_manifest(out.path() / "train_plan.jsonl", ManifestOptions{false, true});
  EXPECT_EQ(plan.size(), 20u);
  for (const auto& e : plan) EXPECT_TRUE(e.aug_seed.has_value());

  // reloading the best checkpoint reproduces its validation metrics bit-exactly
  const Checkpoint ck = load_checkpoint(out.path() / "checkpoint.bin");
  std::vector<Klass> truth;
  for (const auto& e : c.val.entries) truth.push_back(e.label());
  const Metrics a = compute_metrics(score_store(ck.params, ck.config, c.val, {}, 1), truth, false);
  const EpochMetrics& best = r.history[std::size_t(r.best_epoch - 1)];
  EXPECT_EQ(a.f1, best.val_f1);
  EXPECT_EQ(a.eer.original, best.val_eer.original);
  EXPECT_EQ(a.eer.speech, best.val_eer.speech);
  EXPECT_EQ(a.eer.env, best.val_eer.env);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  dt::TempDir dir;
  const ModelConfig m = tiny_model();
  const ModelParams p = init_model(m, 5);
  save_checkpoint(dir.path() / "c.bin", p, m);
  const Checkpoint ck = load_checkpoint(dir.path() / "c.bin");
  EXPECT_EQ(write_model_config(ck.config), write_model_config(m));
  const auto a = snapshot(p), b = snapshot(ck.params);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i], b[i]));

  std::string bytes = read_file_bytes(dir.path() / "c.bin");
  {
    std::ofstream f(dir.path() / "t.bin", std::ios::binary);
    f << bytes.substr(0, bytes.size() - 16);
  }
  EXPECT_THROW(load_checkpoint(dir.path() / "t.bin"), FormatError);
  bytes[0] = 'X';
  {
    std::ofstream f(dir.path() / "m.bin", std::ios::binary);
    f << bytes;
  }
  EXPECT_THROW(load_checkpoint(dir.path() / "m.bin"), FormatError);
  EXPECT_THROW(load_checkpoint(dir.path() / "absent.bin"), IoError);
}

TEST(Train, RejectsInvalidConfig) {
  const auto& c = corpus();
  const ModelConfig m = tiny_model();
  TrainConfig t = tiny_train();
  t.batch_size = 0;
  EXPECT_THROW(train(c.train, c.val, init_model(m, 1), m, t), ParameterError);
  t = tiny_train();
  t.learning_rate = -1.0;
  EXPECT_THROW(train(c.train, c.val, init_model(m, 1), m, t), ParameterError);
}
