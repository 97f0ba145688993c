#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coqac/encoder_model.hpp"
#include "coqac/history_selector.hpp"
#include "coqac/input_builder.hpp"
#include "coqac/quac.hpp"
#include "coqac/tokenizer.hpp"

namespace coqac {

// One answered turn as the engine sees it. An absent span means the turn was
// unanswerable and contributes no answer marks.
struct HistoryEntry {
  std::string question;
  std::string answer_text;
  std::optional<CharSpan> answer_span;
};

// Gold history of dialogue.turns[turn_index] (first reference per turn).
std::vector<HistoryEntry> gold_history(const Dialogue& dialogue, std::size_t turn_index);

// Best span over all windows of one question.
struct SpanChoice {
  std::size_t window = 0;
  std::size_t start = 0;  // window-local token indices; (0, 0) is [CLS]
  std::size_t end = 0;
  double score = 0.0;

  bool cannot_answer() const { return start == 0 && end == 0; }
  friend bool operator==(const SpanChoice&, const SpanChoice&) = default;
};

// Highest start[i] + end[j] over [CLS] (i = j = 0) and passage pairs
// i <= j, j - i + 1 <= max_answer_len. Ties keep the smallest (i, j).
SpanChoice decode_window(std::span<const double> start, std::span<const double> end,
                         const EncodedWindow& w, std::size_t max_answer_len);
// Across windows the highest score wins; ties keep the earliest window.
// Throws UsageError on empty input or mismatched lengths.
SpanChoice decode_span(const std::vector<std::vector<double>>& start,
                       const std::vector<std::vector<double>>& end,
                       const std::vector<EncodedWindow>& windows, std::size_t max_answer_len);

struct AnswerResult {
  std::string text;  // kCannotAnswer when unanswerable
  CharSpan span;     // (-1, -1) when unanswerable
  bool unanswerable = true;
  double score = 0.0;
  std::size_t window = 0;
  SelectionResult selection;
  std::vector<double> window_scores;  // best candidate score per window
  std::size_t dropped_history = 0;
};

nlohmann::ordered_json to_json(const AnswerResult& r);

// Selection -> input building -> encoder -> span decode for one question.
AnswerResult answer_question(const SpanModel& model, const Vocabulary& vocab,
                             std::string_view passage, std::span<const HistoryEntry> history,
                             std::string_view question, const SelectionPolicy& policy,
                             const InputConfig& input);

}  // namespace coqac
