#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coqac/autograd.hpp"
#include "coqac/checkpoint.hpp"
#include "coqac/history_selector.hpp"
#include "coqac/input_builder.hpp"
#include "json.hpp"

namespace coqac {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 512;
  std::size_t type_vocab = 2;
  std::size_t hae_vocab = 2;
  double init_std = 0.02;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  // Throws ConfigError. With an input config, also checks that positions
  // cover max_seq_len.
  void validate() const;
  void validate(const InputConfig& input) const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr double kMaskedLogit = -1e9;

// Positions the span softmax may use: [CLS] and passage tokens.
std::vector<bool> span_domain(const EncodedWindow& w, std::size_t length);

struct SpanLogits {
  nn::Var start;  // [n], masked positions hold kMaskedLogit
  nn::Var end;
};

// S.T_i and E.T_i over every position, with positions outside the span
// domain pushed to kMaskedLogit.
SpanLogits span_logits(nn::Var tokens, nn::Var start_vec, nn::Var end_vec,
                       const std::vector<bool>& domain);
// Softmax of the masked logits.
std::pair<nn::Var, nn::Var> span_probabilities(const SpanLogits& logits);
// Mean of start and end cross entropy. Throws UsageError if a label is
// outside the domain.
nn::Var span_loss(const SpanLogits& logits, const std::vector<bool>& domain,
                  std::size_t start_label, std::size_t end_label);

// Pre-norm transformer encoder whose input is the sum of token, position,
// segment and history-answer embeddings, topped with start/end vectors.
class SpanModel {
 public:
  explicit SpanModel(ModelConfig cfg);
  // Adopts trained parameters; throws CheckpointError on missing or
  // mis-shaped arrays.
  SpanModel(ModelConfig cfg, nn::ParameterSet params);

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  EmbeddingView token_embeddings() const;

  // Per-token representations [length, hidden]. pad_to > window size pads
  // with masked positions; the first window-size rows are unaffected.
  nn::Var encode(nn::Graph& g, const EncodedWindow& w, std::size_t pad_to = 0) const;
  nn::Var encode_trainable(nn::Graph& g, const EncodedWindow& w, std::size_t pad_to = 0,
                           std::uint64_t dropout_seed = 0);

  SpanLogits logits(nn::Graph& g, const EncodedWindow& w) const;
  // Training loss for one labelled window.
  nn::Var loss(nn::Graph& g, const EncodedWindow& w, std::uint64_t dropout_seed = 0);

 private:
  template <typename Bind>
  nn::Var forward(nn::Graph& g, const EncodedWindow& w, std::size_t pad_to, Bind&& bind,
                  std::uint64_t dropout_seed, bool training) const;

  ModelConfig cfg_;
  nn::ParameterSet params_;
};

nlohmann::json checkpoint_header(const ModelConfig& model, const InputConfig& input);

void save_model(const std::string& path, const SpanModel& model, const InputConfig& input);

struct LoadedModel {
  SpanModel model;
  InputConfig input;
};
// With expected set, a differing stored ModelConfig throws CheckpointError.
LoadedModel load_model(const std::string& path, const std::optional<ModelConfig>& expected = {});
LoadedModel model_from_checkpoint(nn::Checkpoint ck, const std::optional<ModelConfig>& expected = {});

}  // namespace coqac
