#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "coqac/encoder_model.hpp"
#include "coqac/input_builder.hpp"
#include "coqac/trainer.hpp"
#include "json.hpp"

namespace coqac {

// Everything an experiment needs, loaded from a key = value file:
//
//   # comment
//   model.hidden = 64
//   train.use_selector = false
//   harness.k_values = 1,2,3
//
// Keys are listed in config_keys(). Unknown keys and malformed values throw
// ConfigError naming the line.
struct ExperimentConfig {
  ModelConfig model;
  InputConfig input;
  TrainConfig train;
  std::size_t vocab_max_size = 8000;
  std::string train_path;
  std::string dev_path;
  std::string vocab_path;
  std::vector<std::size_t> k_values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
};

std::vector<std::string> config_keys();
// Applies one key/value pair on top of cfg.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base = {});
ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base = {});

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

}  // namespace coqac
