#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "coqac/config.hpp"
#include "coqac/evaluation.hpp"
#include "coqac/quac.hpp"
#include "coqac/tokenizer.hpp"
#include "coqac/trainer.hpp"

namespace coqac {

struct RunOutcome {
  EvalReport report;
  TrainResult training;
};

// Trains a fresh model with cfg on train and scores it on dev, answering
// with the same selection policy it was trained with.
RunOutcome train_and_evaluate(const Corpus& train_set, const Corpus& dev_set,
                              const Vocabulary& vocab, const ExperimentConfig& cfg);

struct AblationRow {
  std::size_t k = 0;
  double f1 = 0.0;
  double heq_q = 0.0;
  double heq_d = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::size_t best_row() const;  // highest F1, earliest on ties
};

std::string ablation_markdown(const AblationTable& t);
std::string ablation_tsv(const AblationTable& t);
nlohmann::ordered_json to_json(const AblationTable& t);

// One retrained model per k with the selector off (the k most recent turns).
// Writes ablation.{md,tsv,json} into out_dir. Rows are appended to
// ablation.partial.tsv as they finish; on failure that file is kept and the
// error is rethrown. Throws UsageError for an empty k list.
AblationTable run_ablation(const Corpus& train_set, const Corpus& dev_set, const Vocabulary& vocab,
                           const ExperimentConfig& cfg, const std::vector<std::size_t>& k_values,
                           const std::string& out_dir);

struct NamedConfig {
  std::string name;
  TrainConfig train;
};

struct ComparisonRow {
  std::string name;
  double f1 = 0.0;
  double heq_q = 0.0;
  double heq_d = 0.0;
  double train_time_s = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

std::string comparison_markdown(const ComparisonTable& t);
std::string comparison_tsv(const ComparisonTable& t);
nlohmann::ordered_json to_json(const ComparisonTable& t);

// One row per named configuration, written to compare.{md,tsv,json}.
// Throws UsageError for an empty list.
ComparisonTable run_comparison(const Corpus& train_set, const Corpus& dev_set,
                               const Vocabulary& vocab, const ExperimentConfig& base,
                               const std::vector<NamedConfig>& configs, const std::string& out_dir);

// Selector on versus selector off over the most recent max_history_k turns.
std::vector<NamedConfig> selector_comparison_configs(const TrainConfig& base);

}  // namespace coqac
