// Command-line front end: data preparation, training, evaluation,
// experiment tables and the HTTP session service.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "coqac/config.hpp"
#include "coqac/encoder_model.hpp"
#include "coqac/error.hpp"
#include "coqac/evaluation.hpp"
#include "coqac/harness.hpp"
#include "coqac/quac.hpp"
#include "coqac/service.hpp"
#include "coqac/synthetic.hpp"
#include "coqac/tokenizer.hpp"
#include "coqac/trainer.hpp"

namespace fs = std::filesystem;
using namespace coqac;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.model.seed = *c.seed;
  }
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value experiment file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "seed for model init and shuffling");
  app->add_option("--out-dir", c.out_dir, "output directory");
  app->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
}

Corpus require_corpus(const std::string& path, const std::string& what, const std::string& split) {
  if (path.empty()) throw UsageError("no " + what + " corpus given (flag or data." + what + " key)");
  return load_corpus(path, split);
}

Vocabulary vocab_for(const ExperimentConfig& cfg, const Corpus& train_set) {
  if (!cfg.vocab_path.empty()) return load_vocab(cfg.vocab_path);
  return build_vocab(train_set, cfg.vocab_max_size);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational span QA: history selection, history answer marks, span decoding"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  Common common;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a QuAC file and write its canonical form");
  std::string ingest_in, ingest_split = "train";
  ingest->add_option("input", ingest_in, "QuAC JSON file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--split", ingest_split, "split name");
  add_common(ingest, common);

  // build-vocab
  auto* vocab_cmd = app.add_subcommand("build-vocab", "build a wordpiece vocabulary from a corpus");
  std::string vocab_in;
  std::size_t vocab_size = 8000;
  vocab_cmd->add_option("corpus", vocab_in, "QuAC JSON file")->required()->check(CLI::ExistingFile);
  vocab_cmd->add_option("--max-size", vocab_size, "vocabulary size cap");
  add_common(vocab_cmd, common);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic history-dependent corpus");
  SyntheticConfig scfg;
  std::string synth_split = "synthetic";
  synth->add_option("--dialogues", scfg.dialogues);
  synth->add_option("--turns", scfg.turns);
  synth->add_option("--records", scfg.records);
  synth->add_option("--pool", scfg.pool);
  synth->add_option("--follow-up-rate", scfg.follow_up_rate);
  synth->add_option("--split", synth_split);
  add_common(synth, common);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  std::string train_in, train_vocab;
  train_cmd->add_option("--train", train_in, "training corpus (else data.train)");
  train_cmd->add_option("--vocab", train_vocab, "vocabulary file (else data.vocab or built)");
  add_common(train_cmd, common);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "predict and score a corpus");
  std::string eval_ckpt, eval_vocab, eval_corpus, eval_preds;
  std::optional<bool> eval_selector;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--vocab", eval_vocab)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", eval_corpus, "corpus to score (else data.dev)");
  eval_cmd->add_option("--predictions", eval_preds, "score this JSON-lines file instead of predicting");
  eval_cmd->add_option("--selector", eval_selector, "override train.use_selector");
  add_common(eval_cmd, common);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "retrain per history length k and tabulate");
  std::vector<std::size_t> ablate_k;
  ablate->add_option("--k", ablate_k, "k values (else harness.k_values)");
  add_common(ablate, common);

  // compare
  auto* compare = app.add_subcommand("compare", "selector on versus off");
  add_common(compare, common);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  std::string serve_ckpt, serve_vocab, serve_corpus, serve_host = "127.0.0.1", serve_persist;
  int serve_port = 8080;
  serve->add_option("--checkpoint", serve_ckpt)->required()->check(CLI::ExistingFile);
  serve->add_option("--vocab", serve_vocab)->required()->check(CLI::ExistingFile);
  serve->add_option("--corpus", serve_corpus, "corpus whose dialogues sessions may open")
      ->check(CLI::ExistingFile);
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--persist", serve_persist, "write sessions here on shutdown, reload at start");
  add_common(serve, common);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const ExperimentConfig cfg = resolve_config(common);
    const fs::path out_dir = common.out_dir;

    if (*ingest) {
      const Corpus c = load_corpus(ingest_in, ingest_split);
      fs::create_directories(out_dir);
      save_corpus(c, (out_dir / (ingest_split + ".json")).string());
      std::cout << to_json(corpus_stats(c)).dump(2) << '\n';
    } else if (*vocab_cmd) {
      const Vocabulary v = build_vocab(load_corpus(vocab_in, "train"), vocab_size);
      fs::create_directories(out_dir);
      save_vocab(v, (out_dir / "vocab.txt").string());
      std::cout << "wrote " << v.size() << " tokens to " << (out_dir / "vocab.txt").string() << '\n';
    } else if (*synth) {
      if (common.seed) scfg.seed = *common.seed;
      const Corpus c = make_synthetic_corpus(scfg, synth_split);
      fs::create_directories(out_dir);
      save_corpus(c, (out_dir / (synth_split + ".json")).string());
      std::cout << to_json(corpus_stats(c)).dump(2) << '\n';
    } else if (*train_cmd) {
      const Corpus train_set = require_corpus(train_in.empty() ? cfg.train_path : train_in, "train", "train");
      ExperimentConfig run = cfg;
      if (!train_vocab.empty()) run.vocab_path = train_vocab;
      const Vocabulary vocab = vocab_for(run, train_set);
      fs::create_directories(out_dir);
      save_vocab(vocab, (out_dir / "vocab.txt").string());
      ModelConfig mcfg = run.model;
      mcfg.vocab_size = vocab.size();
      SpanModel model(mcfg);
      TrainHooks hooks;
      hooks.loss_log_path = (out_dir / "loss.jsonl").string();
      const TrainResult r = train(model, train_set, vocab, run.input, run.train, hooks);
      save_model((out_dir / "model.ckpt").string(), model, run.input);
      write_text(out_dir / "config.json", to_json(run).dump(2) + "\n");
      std::cout << "trained " << r.epochs_run << " epochs over " << r.instance_count
                << " windows in " << r.train_seconds << " s; final loss "
                << (r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()) << '\n';
    } else if (*eval_cmd) {
      const Corpus corpus = require_corpus(eval_corpus.empty() ? cfg.dev_path : eval_corpus, "dev", "dev");
      std::vector<Prediction> preds;
      if (!eval_preds.empty()) {
        preds = load_predictions(eval_preds);
      } else {
        const Vocabulary vocab = load_vocab(eval_vocab);
        const LoadedModel lm = load_model(eval_ckpt);
        SelectionPolicy policy = cfg.train.policy();
        if (eval_selector) policy.use_selector = *eval_selector;
        preds = predict_corpus(lm.model, vocab, corpus, policy, lm.input);
      }
      const EvalReport report = score_predictions(corpus, preds);
      fs::create_directories(out_dir);
      save_predictions(preds, (out_dir / "predictions.jsonl").string());
      write_text(out_dir / "report.json", to_json(report).dump(2) + "\n");
      const std::string table = format_report(report);
      write_text(out_dir / "report.txt", table);
      std::cout << table;
    } else if (*ablate) {
      const Corpus train_set = require_corpus(cfg.train_path, "train", "train");
      const Corpus dev_set = require_corpus(cfg.dev_path, "dev", "dev");
      const Vocabulary vocab = vocab_for(cfg, train_set);
      const auto table = run_ablation(train_set, dev_set, vocab, cfg,
                                      ablate_k.empty() ? cfg.k_values : ablate_k, out_dir.string());
      std::cout << ablation_markdown(table);
    } else if (*compare) {
      const Corpus train_set = require_corpus(cfg.train_path, "train", "train");
      const Corpus dev_set = require_corpus(cfg.dev_path, "dev", "dev");
      const Vocabulary vocab = vocab_for(cfg, train_set);
      const auto table = run_comparison(train_set, dev_set, vocab, cfg,
                                        selector_comparison_configs(cfg.train), out_dir.string());
      std::cout << comparison_markdown(table);
    } else if (*serve) {
      Vocabulary vocab = load_vocab(serve_vocab);
      LoadedModel lm = load_model(serve_ckpt);
      ServiceOptions opts;
      opts.input = lm.input;
      opts.policy = cfg.train.policy();
      opts.persist_path = serve_persist;
      std::optional<Corpus> corpus;
      if (!serve_corpus.empty()) corpus = load_corpus(serve_corpus, "serve");
      SessionService service(std::make_shared<const SpanModel>(std::move(lm.model)), std::move(vocab),
                             opts, std::move(corpus));
      if (!serve_persist.empty() && fs::exists(serve_persist)) {
        std::ifstream in(serve_persist);
        service.restore(nlohmann::json::parse(in));
      }
      run_http_server(service, serve_host, serve_port);
    }
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
