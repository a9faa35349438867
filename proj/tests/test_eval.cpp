#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

#include "dualspoof/eval.hpp"
#include "dualspoof/selftest.hpp"
#include "temp_dir.hpp"

using namespace dualspoof;
namespace dt = dualspoof::testing;

namespace {

// 10 utterances per class, indicator scores (the perfect detector).
std::pair<std::vector<ScoreRecord>, std::vector<Klass>> oracle_set(int per_class = 10) {
  std::vector<ScoreRecord> r;
  std::vector<Klass> t;
  int n = 0;
  for (Klass k : kAllClasses) {
    const ClassLabel l(k);
    for (int i = 0; i < per_class; ++i) {
      ScoreRecord s;
      s.utt_id = "u" + std::to_string(n++);
      s.speech_score = l.speech_label() == Authenticity::spoof ? 1.0 : 0.0;
      s.env_score = l.env_label() == Authenticity::spoof ? 1.0 : 0.0;
      s.original_score = k == Klass::original ? 1.0 : 0.0;
      s.predicted_class = k;
      r.push_back(s);
      t.push_back(k);
    }
  }
  return {r, t};
}

}  // namespace

TEST(Eer, Examples) {
  EXPECT_EQ(compute_eer({0.9, 0.8}, {0.1, 0.2}), 0.0);
  EXPECT_NEAR(compute_eer({0.2, 0.8}, {0.3, 0.7}), 0.5, 1e-12);
  EXPECT_NEAR(compute_eer({0.4, 0.4, 0.4}, {0.4, 0.4}), 0.5, 1e-12);
  EXPECT_EQ(compute_eer({0.1, 0.2}, {0.9, 0.8}), 1.0);
  EXPECT_THROW(compute_eer({}, {0.1}), ParameterError);
  EXPECT_THROW(compute_eer({0.1}, {}), ParameterError);
}

TEST(Eer, MatchesBruteForceSweep) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pos(1 + rng() % 30), neg(1 + rng() % 30);
    const bool ties = trial % 3 == 0;
    for (double& v : pos) v = ties ? double(rng() % 4) : gaussian(rng) + 0.8;
    for (double& v : neg) v = ties ? double(rng() % 4) : gaussian(rng);
    EXPECT_NEAR(compute_eer(pos, neg), selftest::brute_force_eer(pos, neg), 1e-9) << trial;
  }
}

TEST(Eer, InvariantUnderMonotoneTransforms) {
  Rng rng(2);
  std::vector<double> pos(25), neg(30);
  for (double& v : pos) v = gaussian(rng) + 1.0;
  for (double& v : neg) v = gaussian(rng);
  const double e = compute_eer(pos, neg);
  auto map = [](std::vector<double> v, auto f) {
    for (double& x : v) x = f(x);
    return v;
  };
  auto ex = [](double x) { return std::exp(x); };
  auto af = [](double x) { return 3.0 * x - 7.0; };
  EXPECT_NEAR(compute_eer(map(pos, ex), map(neg, ex)), e, 1e-12);
  EXPECT_NEAR(compute_eer(map(pos, af), map(neg, af)), e, 1e-12);
}

TEST(EerPools, OracleScoresGiveZeroAndPoolCounts) {
  const auto [r, t] = oracle_set();
  const EerTriple e = eer_pools(r, t);
  EXPECT_EQ(e.original, 0.0);
  EXPECT_EQ(e.speech, 0.0);
  EXPECT_EQ(e.env, 0.0);
  EXPECT_EQ(e.original_pool.positives, 10u);
  EXPECT_EQ(e.original_pool.negatives, 40u);
  EXPECT_EQ(e.speech_pool.positives, 20u);
  EXPECT_EQ(e.speech_pool.negatives, 20u);
  EXPECT_EQ(e.env_pool.positives, 20u);
  EXPECT_EQ(e.env_pool.negatives, 20u);
  const EerTriple b = eer_pools(r, t, true);
  EXPECT_EQ(b.speech_pool.negatives, 30u);
  EXPECT_EQ(b.env_pool.negatives, 30u);
}

TEST(EerPools, FlippingOneHeadComplementsItsEer) {
  Rng rng(3);
  auto [r, t] = oracle_set();
  for (auto& s : r) {
    s.speech_score += 0.8 * gaussian(rng);
    s.env_score += 0.8 * gaussian(rng);
    s.original_score += 0.8 * gaussian(rng);
  }
  const EerTriple a = eer_pools(r, t);
  for (auto& s : r) s.speech_score = -s.speech_score;
  const EerTriple b = eer_pools(r, t);
  EXPECT_NEAR(b.speech, 1.0 - a.speech, 1e-9);
  EXPECT_EQ(b.env, a.env);
  EXPECT_EQ(b.original, a.original);
}

TEST(EerPools, EmptyPoolIsNamed) {
  auto [r, t] = oracle_set();
  std::vector<ScoreRecord> rr;
  std::vector<Klass> tt;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (t[i] == Klass::original) continue;
    rr.push_back(r[i]);
    tt.push_back(t[i]);
  }
  try {
    eer_pools(rr, tt);
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("original"), std::string::npos);
  }
}

TEST(MacroF1, Examples) {
  EXPECT_NEAR(macro_f1({0, 1, 1, 1}, {0, 0, 1, 1}, {0, 1}), 11.0 / 15.0, 1e-15);
  const auto [r, t] = oracle_set(3);
  EXPECT_EQ(macro_f1(t, t), 1.0);
  const std::vector<Klass> collapse(t.size(), Klass::original);
  EXPECT_NEAR(macro_f1(collapse, t), (2.0 * 3 / (2 * 3 + 12)) / 5.0, 1e-15);
  // a class absent from truth and predictions scores 1
  EXPECT_EQ(macro_f1({0, 0}, {0, 0}, {0, 1}), 1.0);
  EXPECT_EQ(macro_f1({1, 1}, {0, 0}, {0, 1}), 0.0);
  EXPECT_THROW(macro_f1({0}, {0, 1}, {0, 1}), ParameterError);
}

TEST(MacroF1, MatchesCountingOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Klass> p, t;
    for (int i = 0; i < 40; ++i) {
      t.push_back(kAllClasses[rng() % 5]);
      p.push_back(rng() % 3 == 0 ? kAllClasses[rng() % 5] : t.back());
    }
    const ConfusionMatrix m = confusion_matrix(p, t);
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      double tp = double(m[c][c]), row = 0, col = 0;
      for (std::size_t j = 0; j < 5; ++j) row += double(m[c][j]), col += double(m[j][c]);
      const double prec = col > 0 ? tp / col : 0.0, rec = row > 0 ? tp / row : 0.0;
      sum += row == 0 && col == 0 ? 1.0 : (prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0);
    }
    EXPECT_NEAR(macro_f1(p, t), sum / 5.0, 1e-12);
  }
}

TEST(Confusion, CountsAndCsv) {
  const std::vector<Klass> truth{Klass::original, Klass::original, Klass::spoof_spoof};
  const std::vector<Klass> pred{Klass::original, Klass::spoof_spoof, Klass::spoof_spoof};
  const ConfusionMatrix m = confusion_matrix(pred, truth);
  EXPECT_EQ(m[index(Klass::original)][index(Klass::original)], 1u);
  EXPECT_EQ(m[index(Klass::original)][index(Klass::spoof_spoof)], 1u);
  EXPECT_EQ(m[index(Klass::spoof_spoof)][index(Klass::spoof_spoof)], 1u);
  dt::TempDir dir;
  write_confusion_csv(m, dir.path() / "c.csv");
  std::ifstream f(dir.path() / "c.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_NE(header.find(token(Klass::bonafide_spoof)), std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  EXPECT_EQ(rows, 5);
}

TEST(ScoreFile, RoundTripIsExact) {
  dt::TempDir dir;
  Rng rng(5);
  auto [r, t] = oracle_set(2);
  for (auto& s : r) {
    s.speech_score = 1e3 * gaussian(rng);
    s.env_score = 1e-7 * gaussian(rng);
    s.original_score = gaussian(rng);
  }
  write_scores(r, dir.path() / "s.tsv");
  EXPECT_EQ(read_scores(dir.path() / "s.tsv"), r);
}

TEST(ScoreFile, MalformedRowsRejected) {
  dt::TempDir dir;
  auto write = [&](const std::string& body) {
    std::ofstream f(dir.path() / "b.tsv");
    f << body;
  };
  write("wrong header\n");
  EXPECT_THROW(read_scores(dir.path() / "b.tsv"), FormatError);
  write(std::string(kScoreHeader) + "\na\t1\t2\toriginal\n");
  EXPECT_THROW(read_scores(dir.path() / "b.tsv"), FormatError);
  write(std::string(kScoreHeader) + "\na\t1\tx\t3\toriginal\n");
  EXPECT_THROW(read_scores(dir.path() / "b.tsv"), FormatError);
  write(std::string(kScoreHeader) + "\na\t1\t2\t3\tfake\n");
  EXPECT_THROW(read_scores(dir.path() / "b.tsv"), FormatError);
}

TEST(Report, JsonCarriesMetricsAndPools) {
  dt::TempDir dir;
  const auto [r, t] = oracle_set();
  const Metrics m = report(r, t, dir.path() / "m.json");
  EXPECT_EQ(m.f1, 1.0);
  std::ifstream f(dir.path() / "m.json");
  const auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j["f1"].get<double>(), 1.0);
  EXPECT_EQ(j["eer_original"].get<double>(), 0.0);
  EXPECT_EQ(j["pools"]["speech"]["positives"].get<int>(), 20);
  EXPECT_EQ(j["n_records"].get<int>(), 50);
}

TEST(TruthFor, MissingLabelIsLookupError) {
  const auto [r, t] = oracle_set(1);
  std::map<std::string, Klass> labels;
  for (std::size_t i = 1; i < r.size(); ++i) labels[r[i].utt_id] = t[i];
  EXPECT_THROW(truth_for(r, labels), LookupError);
}

TEST(OracleThresholds, RecoversAShiftedOperatingPoint) {
  // logits whose best operating point is far from 0.5: everything is shifted
  // down so that true positives sit near p = 0.27 and the 0.5 rule misses them
  auto [r, t] = oracle_set();
  Rng rng(6);
  for (auto& s : r) {
    s.speech_score = 4.0 * s.speech_score - 5.0 + 0.3 * gaussian(rng);
    s.env_score = 4.0 * s.env_score - 5.0 + 0.3 * gaussian(rng);
    s.original_score = 4.0 * s.original_score - 5.0 + 0.3 * gaussian(rng);
    s.predicted_class = decide_class(ScoreTriple{s.speech_score, s.env_score, s.original_score}).klass;
  }
  std::vector<Klass> before;
  for (const auto& s : r) before.push_back(s.predicted_class);
  const ThresholdSearch ts = oracle_thresholds(r, t);
  std::vector<Klass> after;
  for (const auto& s : redecide(r, ts.thresholds)) after.push_back(s.predicted_class);
  EXPECT_EQ(ts.f1, macro_f1(after, t));
  EXPECT_EQ(ts.f1, 1.0);
  EXPECT_LT(macro_f1(before, t), 1.0);
  EXPECT_EQ(threshold_grid().size(), 50u);
  EXPECT_NEAR(threshold_grid().front(), 0.01, 1e-15);
  EXPECT_NEAR(threshold_grid().back(), 0.99, 1e-12);
}
