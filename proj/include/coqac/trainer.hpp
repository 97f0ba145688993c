#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coqac/encoder_model.hpp"
#include "coqac/history_selector.hpp"
#include "coqac/input_builder.hpp"
#include "coqac/quac.hpp"
#include "coqac/tokenizer.hpp"
#include "json.hpp"

namespace coqac {

struct TrainConfig {
  std::size_t batch_size = 12;
  std::size_t epochs = 3;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t history_k = 11;
  bool use_selector = true;
  double threshold = 0.5;
  double clip_norm = 1.0;

  void validate() const;  // throws ConfigError
  SelectionPolicy policy() const { return {use_selector, threshold, history_k}; }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;  // mean window loss of the batch
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since training began
};

nlohmann::ordered_json to_json(const LossRecord& r);

struct TrainResult {
  std::vector<LossRecord> log;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
  std::size_t epochs_run = 0;
  std::size_t instance_count = 0;  // windows per epoch
  double train_seconds = 0.0;
};

struct TrainHooks {
  // Called after each epoch (1-based); returning true stops training.
  std::function<bool(std::size_t epoch, const SpanModel& model)> on_epoch;
  // Append-only JSON-lines loss log; empty disables it.
  std::string loss_log_path;
};

// Order in which an epoch visits n instances; a pure function of
// (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Labelled windows for every turn of the corpus, with history chosen by the
// policy against the given embedding table.
std::vector<EncodedWindow> build_instances(const Corpus& corpus, const Vocabulary& vocab,
                                           const InputConfig& input, const SelectionPolicy& policy,
                                           const EmbeddingView& embeddings);

// Adam on the mean span loss of each batch with global-norm clipping.
// Selection is recomputed at the start of each epoch from the current token
// embeddings. Throws ConfigError when the corpus yields no instances.
TrainResult train(SpanModel& model, const Corpus& corpus, const Vocabulary& vocab,
                  const InputConfig& input, const TrainConfig& cfg, const TrainHooks& hooks = {});

// Runs gradient steps over a fixed window list, returning the batch loss
// before each step.
std::vector<double> train_steps(SpanModel& model, const std::vector<EncodedWindow>& batch,
                                std::size_t steps, double learning_rate, double clip_norm = 1.0);

}  // namespace coqac
