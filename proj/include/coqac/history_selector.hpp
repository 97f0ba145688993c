#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coqac/tokenizer.hpp"
#include "json.hpp"

namespace coqac {

// Read-only view over a row-major (rows x dim) embedding table.
struct EmbeddingView {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t dim = 0;

  std::span<const double> row(std::size_t r) const { return values.subspan(r * dim, dim); }
};

struct TurnRepresentation {
  std::vector<double> vector;
};

struct HistoryTurnText {
  std::string question;
  std::string answer;
};

struct SelectionResult {
  std::vector<double> scores;         // cosine per history turn, oldest first
  std::vector<double> probabilities;  // softmax over all scores
  std::vector<std::size_t> selected;  // chronological history indices
  double threshold = 0.5;

  friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

nlohmann::ordered_json to_json(const SelectionResult& r);
SelectionResult selection_from_json(const nlohmann::json& j);

// Mean of the token-embedding rows of the tokenized text, specials and [UNK]
// pieces excluded.
// Empty or all-[UNK] text yields the [UNK] row.
TurnRepresentation embed_turn(std::string_view text, const Vocabulary& vocab,
                              const EmbeddingView& embeddings);

// Cosine similarity. A zero vector scores 0 (logged); unequal dimensions
// throw UsageError.
double relevance_score(const TurnRepresentation& h, const TurnRepresentation& q);

// Numerically stable softmax. Throws UsageError on empty input.
std::vector<double> normalize_scores(std::span<const double> scores);

// Scores each history turn against current_q as the larger cosine of its
// question alone and of "question answer" (a repeated question scores 1),
// keeps the turns whose score reaches threshold, capped to the max_k most
// recent, in chronological order.
SelectionResult select_turns(std::span<const HistoryTurnText> history, std::string_view current_q,
                             double threshold, std::size_t max_k, const Vocabulary& vocab,
                             const EmbeddingView& embeddings);

// How the engine picks history turns for the input sequence.
struct SelectionPolicy {
  bool use_selector = true;  // false: the max_k most recent turns
  double threshold = 0.5;
  std::size_t max_k = 11;
};

// Applies the policy. Scores and probabilities are always reported; with the
// selector off only the retained set differs.
SelectionResult apply_policy(const SelectionPolicy& policy, std::span<const HistoryTurnText> history,
                             std::string_view current_q, const Vocabulary& vocab,
                             const EmbeddingView& embeddings);

}  // namespace coqac
