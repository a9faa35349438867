// dualspoof command-line driver: gen-data, train, score, evaluate, selftest.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualspoof/config.hpp"
#include "dualspoof/selftest.hpp"

namespace fs = std::filesystem;
using namespace dualspoof;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> overrides;  // --key=value leftovers
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "flat key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed (overrides the config key 'seed')");
  cmd->add_option("--threads", o.threads, "worker threads; 1 is bit-reproducible")
      ->check(CLI::PositiveNumber);
  cmd->allow_extras();
}

FlatConfig gather(const CommonOptions& o, const std::vector<std::string>& extras) {
  FlatConfig c = o.config.empty() ? FlatConfig{} : FlatConfig::load(o.config);
  for (const std::string& a : extras) {
    const auto eq = a.find('=');
    if (a.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2) {
      throw ConfigError("unrecognized argument '" + a + "' (overrides take the form --key=value)");
    }
    c.set(a.substr(2, eq - 2), a.substr(eq + 1));
  }
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (o.threads) c.set("threads", std::to_string(*o.threads));
  return c;
}

std::map<std::string, Klass> label_map(const std::vector<ManifestEntry>& entries) {
  std::map<std::string, Klass> m;
  for (const auto& e : entries) m[e.utt_id] = e.label();
  return m;
}

int cmd_gen_data(const RunConfig& rc, const fs::path& out) {
  for (const auto& m : build_corpus(rc.corpus, out)) std::cout << m.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& rc, const fs::path& data, const fs::path& out) {
  const ManifestOptions mo;
  const auto tr = ClipStore::load(load_manifest(manifest_path(data, Split::train), mo), data, true);
  const auto va = ClipStore::load(load_manifest(manifest_path(data, Split::val), mo), data, false);
  TrainConfig tc = rc.train;
  tc.verbose = true;
  const TrainResult r = train(tr, va, init_model(rc.model, tc.seed), rc.model, tc, out);
  std::printf("best epoch %d, val f1 %.6f\n", r.best_epoch, r.best_f1);
  return 0;
}

int cmd_score(const RunConfig& rc, const fs::path& checkpoint, const fs::path& manifest,
              const fs::path& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  ManifestOptions mo;
  mo.require_labels = false;
  const auto store = ClipStore::load(load_manifest(manifest, mo), manifest.parent_path(), false);
  write_scores(score_store(ck.params, ck.config, store, rc.train.thresholds, rc.train.threads), out);
  std::cout << out.string() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& rc, const fs::path& scores, const fs::path& manifest,
                 const fs::path& out, fs::path confusion, const std::string& tune_scores,
                 const std::string& tune_manifest) {
  ManifestOptions mo;
  mo.check_files = false;
  const auto records = read_scores(scores);
  const auto truth = truth_for(records, label_map(load_manifest(manifest, mo)));
  const bool oab = rc.train.original_as_bonafide;
  Metrics m = compute_metrics(records, truth, oab);

  // Secondary number: thresholds tuned on a validation score file when one is
  // given, else on the evaluated records themselves.
  ThresholdSearch tuned;
  std::string tuned_on = "self";
  if (!tune_scores.empty()) {
    const auto vr = read_scores(tune_scores);
    tuned = oracle_thresholds(vr, truth_for(vr, label_map(load_manifest(tune_manifest, mo))));
    tuned_on = tune_scores;
  } else {
    tuned = oracle_thresholds(records, truth);
  }
  const double tuned_f1 = macro_f1(
      [&] {
        std::vector<Klass> p;
        for (const auto& r : redecide(records, tuned.thresholds)) p.push_back(r.predicted_class);
        return p;
      }(),
      truth);

  nlohmann::ordered_json j = to_json(m);
  nlohmann::ordered_json t = to_json(tuned);
  t["f1"] = tuned_f1;
  t["tuned_on"] = tuned_on;
  j["oracle_thresholds"] = t;
  std::ofstream f(out);
  if (!f) throw IoError("cannot open '" + out.string() + "' for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed for '" + out.string() + "'");

  if (confusion.empty()) confusion = out.parent_path() / "confusion.csv";
  write_confusion_csv(m.confusion, confusion);
  std::printf("f1 %.6f  eer original %.6f speech %.6f env %.6f\n", m.f1, m.eer.original,
              m.eer.speech, m.eer.env);
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : selftest::run_property_checks()) {
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-branch component-level audio spoof detector"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, score_o, eval_o;
  std::string gen_out, train_data, train_out, ck, score_manifest, score_out;
  std::string eval_scores, eval_manifest, eval_out, eval_confusion, tune_scores, tune_manifest;

  auto* gen = app.add_subcommand("gen-data", "synthesize the five-class corpus");
  add_common(gen, gen_o);
  gen->add_option("--out", gen_out, "corpus directory")->required();

  auto* tr = app.add_subcommand("train", "train on <data>/train.jsonl, validate on val.jsonl");
  add_common(tr, train_o);
  tr->add_option("--data", train_data, "corpus directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", train_out, "run directory for metrics.csv and checkpoint.bin")->required();

  auto* sc = app.add_subcommand("score", "score a manifest without reading its labels");
  add_common(sc, score_o);
  sc->add_option("--checkpoint", ck, "checkpoint file")->required()->check(CLI::ExistingFile);
  sc->add_option("--manifest", score_manifest, "manifest to score")->required()->check(CLI::ExistingFile);
  sc->add_option("--out", score_out, "score file (TSV)")->required();

  auto* ev = app.add_subcommand("evaluate", "metrics from a score file and labelled manifest");
  add_common(ev, eval_o);
  ev->add_option("--scores", eval_scores, "score file")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", eval_manifest, "labelled manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", eval_out, "metrics report (JSON)")->required();
  ev->add_option("--confusion", eval_confusion, "confusion matrix CSV (default: next to --out)");
  auto* ts = ev->add_option("--tune-scores", tune_scores, "validation score file for threshold tuning")
                 ->check(CLI::ExistingFile);
  auto* tm = ev->add_option("--tune-manifest", tune_manifest, "labelled manifest for --tune-scores")
                 ->check(CLI::ExistingFile);
  ts->needs(tm);
  tm->needs(ts);

  auto* st = app.add_subcommand("selftest", "oracle, gradient and invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*st) return cmd_selftest();
    auto run = [&](CLI::App* cmd, const CommonOptions& o) {
      return load_run_config(gather(o, cmd->remaining()));
    };
    if (*gen) return cmd_gen_data(run(gen, gen_o), gen_out);
    if (*tr) return cmd_train(run(tr, train_o), train_data, train_out);
    if (*sc) return cmd_score(run(sc, score_o), ck, score_manifest, score_out);
    if (*ev) {
      return cmd_evaluate(run(ev, eval_o), eval_scores, eval_manifest, eval_out, eval_confusion,
                          tune_scores, tune_manifest);
    }
  } catch (const Error& e) {
    std::cerr << e.line() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
