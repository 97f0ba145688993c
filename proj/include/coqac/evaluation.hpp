#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coqac/encoder_model.hpp"
#include "coqac/engine.hpp"
#include "coqac/quac.hpp"
#include "json.hpp"

namespace coqac {

struct Prediction {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::string answer;  // passage substring or kCannotAnswer
  double score = 0.0;
  std::size_t window = 0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

nlohmann::ordered_json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

// JSON-lines, one prediction per line.
void save_predictions(const std::vector<Prediction>& preds, const std::string& path);
std::vector<Prediction> load_predictions(const std::string& path);

// Lowercase, drop punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(std::string_view text);

// Bag-of-words F1 over whitespace tokens, maximized over references.
// A kCannotAnswer prediction scores 1 iff some reference is kCannotAnswer;
// a kCannotAnswer reference scores 0 against any other prediction. Two
// empty strings score 1. Throws UsageError with no references.
double word_f1(std::string_view prediction, std::span<const std::string> references);
// word_f1 after normalize_answer on both sides (sentinels untouched).
double quac_f1(std::string_view prediction, std::span<const std::string> references);

// Leave-one-out agreement among references, 1.0 with fewer than two.
double human_f1(std::span<const std::string> references);

struct HeqResult {
  double heq_q = 0.0;  // percent
  double heq_d = 0.0;  // percent
};

// dialogue_of[i] names the dialogue question i belongs to. Throws
// UsageError on length mismatch or zero questions.
HeqResult heq(std::span<const double> system_f1, std::span<const double> human,
              std::span<const std::string> dialogue_of);

struct QuestionRecord {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::string prediction;
  double f1 = 0.0;        // percent
  double human_f1 = 0.0;  // percent
};

struct EvalReport {
  double f1 = 0.0;  // percent
  double heq_q = 0.0;
  double heq_d = 0.0;
  std::size_t question_count = 0;
  std::size_t dialogue_count = 0;
  std::vector<QuestionRecord> records;
};

nlohmann::ordered_json to_json(const EvalReport& r, bool with_records = true);
// Aligned summary table followed by one row per question.
std::string format_report(const EvalReport& r);

// Scores predictions against every question of the corpus. Throws
// ValidationError if a question has no prediction or a prediction matches no
// question.
EvalReport score_predictions(const Corpus& corpus, const std::vector<Prediction>& preds);

// Answers every question of the corpus with gold history.
std::vector<Prediction> predict_corpus(const SpanModel& model, const Vocabulary& vocab,
                                       const Corpus& corpus, const SelectionPolicy& policy,
                                       const InputConfig& input);

}  // namespace coqac
