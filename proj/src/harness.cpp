#include "coqac/harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <spdlog/spdlog.h>

#include "coqac/error.hpp"

namespace coqac {

namespace fs = std::filesystem;

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

RunOutcome train_and_evaluate(const Corpus& train_set, const Corpus& dev_set,
                              const Vocabulary& vocab, const ExperimentConfig& cfg) {
  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  SpanModel model(mcfg);
  RunOutcome out;
  out.training = train(model, train_set, vocab, cfg.input, cfg.train);
  const auto preds = predict_corpus(model, vocab, dev_set, cfg.train.policy(), cfg.input);
  out.report = score_predictions(dev_set, preds);
  return out;
}

std::size_t AblationTable::best_row() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].f1 > rows[best].f1) best = i;
  }
  return best;
}

std::string ablation_markdown(const AblationTable& t) {
  std::string s = "| k | F1 | HEQ-Q | HEQ-D |\n|---:|---:|---:|---:|\n";
  const std::size_t best = t.rows.empty() ? 0 : t.best_row();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string b = i == best ? "**" : "";
    s += "| " + b + std::to_string(r.k) + b + " | " + b + fixed2(r.f1) + b + " | " + b +
         fixed2(r.heq_q) + b + " | " + b + fixed2(r.heq_d) + b + " |\n";
  }
  return s;
}

std::string ablation_tsv(const AblationTable& t) {
  std::string s = "k\tF1\tHEQ-Q\tHEQ-D\n";
  for (const auto& r : t.rows) {
    s += std::to_string(r.k) + "\t" + fixed2(r.f1) + "\t" + fixed2(r.heq_q) + "\t" +
         fixed2(r.heq_d) + "\n";
  }
  return s;
}

nlohmann::ordered_json to_json(const AblationTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"k", r.k}, {"f1", r.f1}, {"heq_q", r.heq_q}, {"heq_d", r.heq_d}});
  }
  nlohmann::ordered_json j;
  j["rows"] = std::move(rows);
  j["best_k"] = t.rows.empty() ? nlohmann::ordered_json(nullptr)
                               : nlohmann::ordered_json(t.rows[t.best_row()].k);
  return j;
}

AblationTable run_ablation(const Corpus& train_set, const Corpus& dev_set, const Vocabulary& vocab,
                           const ExperimentConfig& cfg, const std::vector<std::size_t>& k_values,
                           const std::string& out_dir) {
  if (k_values.empty()) throw UsageError("ablation needs at least one k value");
  fs::create_directories(out_dir);
  const fs::path partial = fs::path(out_dir) / "ablation.partial.tsv";
  write_file(partial, "k\tF1\tHEQ-Q\tHEQ-D\n");
  AblationTable table;
  for (std::size_t k : k_values) {
    ExperimentConfig run = cfg;
    run.train.use_selector = false;
    run.train.history_k = k;
    try {
      const RunOutcome o = train_and_evaluate(train_set, dev_set, vocab, run);
      table.rows.push_back({k, o.report.f1, o.report.heq_q, o.report.heq_d});
    } catch (const std::exception& e) {
      spdlog::error("ablation run k={} failed: {}; partial results kept in {}", k, e.what(),
                    partial.string());
      throw;
    }
    spdlog::info("ablation k={} F1={:.2f}", k, table.rows.back().f1);
    std::ofstream(partial, std::ios::app)
        << std::to_string(k) << '\t' << fixed2(table.rows.back().f1) << '\t'
        << fixed2(table.rows.back().heq_q) << '\t' << fixed2(table.rows.back().heq_d) << '\n';
  }
  write_file(fs::path(out_dir) / "ablation.md", ablation_markdown(table));
  write_file(fs::path(out_dir) / "ablation.tsv", ablation_tsv(table));
  write_file(fs::path(out_dir) / "ablation.json", to_json(table).dump(2) + "\n");
  fs::remove(partial);
  return table;
}

std::string comparison_markdown(const ComparisonTable& t) {
  std::string s = "| name | F1 | HEQ-Q | HEQ-D | train_time_s |\n|:---|---:|---:|---:|---:|\n";
  for (const auto& r : t.rows) {
    s += "| " + r.name + " | " + fixed2(r.f1) + " | " + fixed2(r.heq_q) + " | " + fixed2(r.heq_d) +
         " | " + fixed2(r.train_time_s) + " |\n";
  }
  return s;
}

std::string comparison_tsv(const ComparisonTable& t) {
  std::string s = "name\tF1\tHEQ-Q\tHEQ-D\ttrain_time_s\n";
  for (const auto& r : t.rows) {
    s += r.name + "\t" + fixed2(r.f1) + "\t" + fixed2(r.heq_q) + "\t" + fixed2(r.heq_d) + "\t" +
         fixed2(r.train_time_s) + "\n";
  }
  return s;
}

nlohmann::ordered_json to_json(const ComparisonTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"name", r.name},
                    {"f1", r.f1},
                    {"heq_q", r.heq_q},
                    {"heq_d", r.heq_d},
                    {"train_time_s", r.train_time_s}});
  }
  return {{"rows", std::move(rows)}};
}

ComparisonTable run_comparison(const Corpus& train_set, const Corpus& dev_set,
                               const Vocabulary& vocab, const ExperimentConfig& base,
                               const std::vector<NamedConfig>& configs, const std::string& out_dir) {
  if (configs.empty()) throw UsageError("comparison needs at least one configuration");
  fs::create_directories(out_dir);
  const fs::path partial = fs::path(out_dir) / "compare.partial.tsv";
  write_file(partial, "name\tF1\tHEQ-Q\tHEQ-D\ttrain_time_s\n");
  ComparisonTable table;
  for (const auto& nc : configs) {
    ExperimentConfig run = base;
    run.train = nc.train;
    try {
      const RunOutcome o = train_and_evaluate(train_set, dev_set, vocab, run);
      table.rows.push_back(
          {nc.name, o.report.f1, o.report.heq_q, o.report.heq_d, o.training.train_seconds});
    } catch (const std::exception& e) {
      spdlog::error("comparison run '{}' failed: {}; partial results kept in {}", nc.name, e.what(),
                    partial.string());
      throw;
    }
    const auto& r = table.rows.back();
    spdlog::info("comparison {} F1={:.2f}", r.name, r.f1);
    std::ofstream(partial, std::ios::app) << r.name << '\t' << fixed2(r.f1) << '\t'
                                          << fixed2(r.heq_q) << '\t' << fixed2(r.heq_d) << '\t'
                                          << fixed2(r.train_time_s) << '\n';
  }
  write_file(fs::path(out_dir) / "compare.md", comparison_markdown(table));
  write_file(fs::path(out_dir) / "compare.tsv", comparison_tsv(table));
  write_file(fs::path(out_dir) / "compare.json", to_json(table).dump(2) + "\n");
  fs::remove(partial);
  return table;
}

std::vector<NamedConfig> selector_comparison_configs(const TrainConfig& base) {
  TrainConfig on = base;
  on.use_selector = true;
  TrainConfig off = base;
  off.use_selector = false;
  return {{"selector_on", on}, {"selector_off", off}};
}

}  // namespace coqac
