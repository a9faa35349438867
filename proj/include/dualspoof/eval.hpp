#pragma once

// Detection and classification metrics: interpolated EER over three score
// pools, macro F1 over the five classes, confusion matrix, and the score /
// report file formats.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualspoof/error.hpp"
#include "dualspoof/heads.hpp"
#include "dualspoof/labels.hpp"

namespace dualspoof {

// FAR(t) = |{neg >= t}| / |neg|, FRR(t) = |{pos < t}| / |pos|, evaluated at
// every distinct score and at +inf. The EER is read off where FAR - FRR
// changes sign, interpolating linearly between the two operating points that
// bracket the crossing. Runs of tied scores therefore split at their midpoint.
inline double compute_eer(std::vector<double> positives, std::vector<double> negatives) {
  if (positives.empty()) throw ParameterError("compute_eer: empty positive list");
  if (negatives.empty()) throw ParameterError("compute_eer: empty negative list");
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());
  std::vector<double> thresholds;
  thresholds.reserve(positives.size() + negatives.size());
  std::merge(positives.begin(), positives.end(), negatives.begin(), negatives.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double np = double(positives.size()), nn = double(negatives.size());
  auto point = [&](double t, bool infinite) {
    if (infinite) return std::pair<double, double>{0.0, 1.0};
    const auto pos_below = std::lower_bound(positives.begin(), positives.end(), t) - positives.begin();
    const auto neg_below = std::lower_bound(negatives.begin(), negatives.end(), t) - negatives.begin();
    return std::pair<double, double>{(nn - double(neg_below)) / nn, double(pos_below) / np};
  };

  double prev_far = 1.0, prev_frr = 0.0;  // below every score
  for (std::size_t i = 0; i <= thresholds.size(); ++i) {
    const bool inf = i == thresholds.size();
    const auto [far, frr] = point(inf ? 0.0 : thresholds[i], inf);
    const double d = far - frr;
    if (d <= 0.0) {
      const double d_prev = prev_far - prev_frr;
      const double lambda = d_prev / (d_prev - d);
      return prev_far + lambda * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 0.5;  // unreachable: FAR - FRR is -1 at +inf
}

struct ScoreRecord {
  std::string utt_id;
  double speech_score = 0.0;
  double env_score = 0.0;
  double original_score = 0.0;
  Klass predicted_class = Klass::original;

  bool operator==(const ScoreRecord&) const = default;
};

struct PoolSizes {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct EerTriple {
  double original = 0.0;
  double speech = 0.0;
  double env = 0.0;
  PoolSizes original_pool, speech_pool, env_pool;
};

// Pools: original (original vs rest, original_score); speech and env over the
// four combination classes only, spoof as positive. With original_as_bonafide
// the original utterances join the speech/env pools as bona fide negatives.
inline EerTriple eer_pools(const std::vector<ScoreRecord>& records, const std::vector<Klass>& truth,
                           bool original_as_bonafide = false) {
  if (records.size() != truth.size()) {
    throw ParameterError("eer_pools: " + std::to_string(records.size()) + " records but " +
                         std::to_string(truth.size()) + " labels");
  }
  std::vector<double> op, on, sp, sn, ep, en;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const ClassLabel l(truth[i]);
    (l.original_label() ? op : on).push_back(r.original_score);
    if (l.klass == Klass::original) {
      if (original_as_bonafide) {
        sn.push_back(r.speech_score);
        en.push_back(r.env_score);
      }
      continue;
    }
    (l.speech_label() == Authenticity::spoof ? sp : sn).push_back(r.speech_score);
    (l.env_label() == Authenticity::spoof ? ep : en).push_back(r.env_score);
  }
  auto check = [](const char* pool, const std::vector<double>& p, const std::vector<double>& n) {
    if (p.empty() || n.empty()) {
      throw ParameterError(std::string("eer_pools: ") + pool + " pool has an empty " +
                           (p.empty() ? "positive" : "negative") + " side");
    }
  };
  check("original", op, on);
  check("speech", sp, sn);
  check("env", ep, en);
  EerTriple t;
  t.original_pool = {op.size(), on.size()};
  t.speech_pool = {sp.size(), sn.size()};
  t.env_pool = {ep.size(), en.size()};
  t.original = compute_eer(std::move(op), std::move(on));
  t.speech = compute_eer(std::move(sp), std::move(sn));
  t.env = compute_eer(std::move(ep), std::move(en));
  return t;
}

inline std::vector<Klass> truth_for(const std::vector<ScoreRecord>& records,
                                    const std::map<std::string, Klass>& labels) {
  std::vector<Klass> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = labels.find(r.utt_id);
    if (it == labels.end()) throw LookupError("no label for utt_id '" + r.utt_id + "'");
    out.push_back(it->second);
  }
  return out;
}

// Unweighted mean of per-class F1 over `classes`. A class absent from both
// truth and predictions scores 1; absent from only one side scores 0.
inline double macro_f1(const std::vector<int>& predicted, const std::vector<int>& truth,
                       const std::vector<int>& classes) {
  if (predicted.size() != truth.size()) {
    throw ParameterError("macro_f1: " + std::to_string(predicted.size()) + " predictions but " +
                         std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ParameterError("macro_f1: empty input");
  if (classes.empty()) throw ParameterError("macro_f1: empty class set");
  double sum = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predicted[i] == c, t = truth[i] == c;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    if (tp + fp + fn == 0) {
      sum += 1.0;
    } else {
      sum += 2.0 * double(tp) / double(2 * tp + fp + fn);
    }
  }
  return sum / double(classes.size());
}

inline double macro_f1(const std::vector<Klass>& predicted, const std::vector<Klass>& truth) {
  std::vector<int> p, t, classes;
  for (Klass k : predicted) p.push_back(index(k));
  for (Klass k : truth) t.push_back(index(k));
  for (Klass k : kAllClasses) classes.push_back(index(k));
  return macro_f1(p, t, classes);
}

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

// rows = truth, columns = predicted, both in the canonical class order
inline ConfusionMatrix confusion_matrix(const std::vector<Klass>& predicted,
                                        const std::vector<Klass>& truth) {
  if (predicted.size() != truth.size()) throw ParameterError("confusion_matrix: length mismatch");
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < truth.size(); ++i) ++m[index(truth[i])][index(predicted[i])];
  return m;
}

inline void write_confusion_csv(const ConfusionMatrix& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << "truth\\predicted";
  for (Klass k : kAllClasses) f << ',' << token(k);
  f << '\n';
  for (Klass r : kAllClasses) {
    f << token(r);
    for (Klass c : kAllClasses) f << ',' << m[index(r)][index(c)];
    f << '\n';
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Score file: tab-separated, fixed header, %.17g so values round-trip.

inline constexpr const char* kScoreHeader =
    "utt_id\tspeech_score\tenv_score\toriginal_score\tpredicted_class";

inline void write_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << kScoreHeader << '\n';
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g\t%.17g\t", r.speech_score, r.env_score,
                  r.original_score);
    f << r.utt_id << buf << token(r.predicted_class) << '\n';
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open score file '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != kScoreHeader) {
    throw FormatError(path.string() + ": missing or malformed score header");
  }
  std::vector<ScoreRecord> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 5) throw FormatError(where + ": expected 5 tab-separated columns");
    ScoreRecord r;
    r.utt_id = cols[0];
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      r.speech_score = num(cols[1]);
      r.env_score = num(cols[2]);
      r.original_score = num(cols[3]);
    } catch (const std::exception&) {
      throw FormatError(where + ": non-numeric score");
    }
    try {
      r.predicted_class = parse_klass(cols[4]);
    } catch (const ParseError& e) {
      throw FormatError(where + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct Metrics {
  double f1 = 0.0;
  EerTriple eer;
  ConfusionMatrix confusion{};
  std::size_t n_records = 0;
};

inline Metrics compute_metrics(const std::vector<ScoreRecord>& records, const std::vector<Klass>& truth,
                               bool original_as_bonafide = false) {
  Metrics m;
  std::vector<Klass> pred;
  for (const auto& r : records) pred.push_back(r.predicted_class);
  m.f1 = macro_f1(pred, truth);
  m.eer = eer_pools(records, truth, original_as_bonafide);
  m.confusion = confusion_matrix(pred, truth);
  m.n_records = records.size();
  return m;
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["f1"] = m.f1;
  j["eer_original"] = m.eer.original;
  j["eer_speech"] = m.eer.speech;
  j["eer_env"] = m.eer.env;
  j["n_records"] = m.n_records;
  auto pool = [](const PoolSizes& p) {
    return nlohmann::ordered_json{{"positives", p.positives}, {"negatives", p.negatives}};
  };
  j["pools"] = {{"original", pool(m.eer.original_pool)},
                {"speech", pool(m.eer.speech_pool)},
                {"env", pool(m.eer.env_pool)}};
  nlohmann::ordered_json cm = nlohmann::ordered_json::array();
  for (const auto& row : m.confusion) cm.push_back(row);
  j["confusion"] = cm;
  return j;
}

// ---------------------------------------------------------------------------
// Oracle thresholds: the grid point (step 0.02, centred in (0, 1)) that
// maximizes macro F1 on the given records. Ties keep the first point found,
// scanning tau_original, then tau_speech, then tau_env upward.

struct ThresholdSearch {
  Thresholds thresholds;
  double f1 = 0.0;
};

inline std::vector<double> threshold_grid() {
  std::vector<double> g;
  for (int i = 0; i < 50; ++i) g.push_back(0.01 + 0.02 * i);
  return g;
}

inline ThresholdSearch oracle_thresholds(const std::vector<ScoreRecord>& records,
                                         const std::vector<Klass>& truth) {
  if (records.empty()) throw ParameterError("oracle_thresholds: no records");
  if (records.size() != truth.size()) throw ParameterError("oracle_thresholds: size mismatch");
  const std::vector<double> grid = threshold_grid();
  const std::size_t n = records.size();
  std::vector<double> po(n), ps(n), pe(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ScoreTriple t{records[i].speech_score, records[i].env_score, records[i].original_score};
    po[i] = t.p_original();
    ps[i] = t.p_speech_spoof();
    pe[i] = t.p_env_spoof();
  }
  std::vector<Klass> pred(n);
  ThresholdSearch best;
  best.f1 = -1.0;
  for (double to : grid) {
    for (double ts : grid) {
      for (double te : grid) {
        for (std::size_t i = 0; i < n; ++i) {
          pred[i] = po[i] > to ? Klass::original : klass_from_components(ps[i] > ts, pe[i] > te);
        }
        const double f = macro_f1(pred, truth);
        if (f > best.f1) best = {{to, ts, te}, f};
      }
    }
  }
  return best;
}

inline std::vector<ScoreRecord> redecide(std::vector<ScoreRecord> records, const Thresholds& t) {
  for (auto& r : records) {
    r.predicted_class = decide_class(ScoreTriple{r.speech_score, r.env_score, r.original_score}, t).klass;
  }
  return records;
}

inline nlohmann::ordered_json to_json(const ThresholdSearch& t) {
  return {{"tau_original", t.thresholds.original},
          {"tau_speech", t.thresholds.speech},
          {"tau_env", t.thresholds.env},
          {"f1", t.f1}};
}

// Computes the metrics, writes them as JSON to path and returns them.
inline Metrics report(const std::vector<ScoreRecord>& records, const std::vector<Klass>& truth,
                      const std::filesystem::path& path, bool original_as_bonafide = false) {
  Metrics m = compute_metrics(records, truth, original_as_bonafide);
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << to_json(m).dump(2) << '\n';
  if (!f) throw IoError("write failed for '" + path.string() + "'");
  return m;
}

}  // namespace dualspoof
