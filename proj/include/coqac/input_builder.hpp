#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coqac/history_selector.hpp"
#include "coqac/quac.hpp"
#include "coqac/tokenizer.hpp"
#include "json.hpp"

namespace coqac {

struct InputConfig {
  std::size_t max_seq_len = 384;
  std::size_t doc_stride = 128;
  std::size_t max_answer_len = 40;
  std::size_t max_history_k = 11;
  // Cap on the question block (current question + [SEP] + history
  // questions); oldest history questions are dropped first to fit.
  std::size_t max_query_len = 128;

  void validate() const;
  friend bool operator==(const InputConfig&, const InputConfig&) = default;
};

nlohmann::ordered_json to_json(const InputConfig& cfg);
InputConfig input_config_from_json(const nlohmann::json& j);

// Full token sequence before windowing:
//   [CLS] current_q [SEP] hq_1 ... hq_k [SEP] passage [SEP]
struct PreWindowSequence {
  std::vector<TokenId> prefix_ids;  // [CLS] q [SEP] hqs [SEP]
  TokenizedText passage;
  std::vector<std::uint8_t> passage_hae;  // one per passage token
  std::size_t dropped_history = 0;        // history questions truncated away

  // Tokens strictly between [CLS] and the [SEP] that precedes the passage.
  std::size_t question_block_len() const { return prefix_ids.size() - 2; }
  std::size_t passage_start() const { return prefix_ids.size(); }

  std::vector<TokenId> token_ids() const;
  std::vector<std::uint8_t> segment_ids() const;
  std::vector<std::uint8_t> hae_ids() const;
};

struct EncodedWindow {
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> segment_ids;
  std::vector<std::uint8_t> hae_ids;  // 1 = inside a selected history answer
  std::vector<std::int32_t> position_ids;
  // Window indices [passage_begin, passage_end) hold passage tokens.
  std::size_t passage_begin = 0;
  std::size_t passage_end = 0;
  std::size_t window_passage_offset = 0;
  std::size_t start_label = 0;  // 0 = [CLS]
  std::size_t end_label = 0;
  std::vector<CharSpan> char_spans;  // passage tokens only; others (-1, -1)

  std::size_t size() const { return token_ids.size(); }
  bool in_passage(std::size_t i) const { return i >= passage_begin && i < passage_end; }
  friend bool operator==(const EncodedWindow&, const EncodedWindow&) = default;
};

nlohmann::ordered_json to_json(const EncodedWindow& w);
EncodedWindow window_from_json(const nlohmann::json& j);

// history_answer_spans mark passage tokens whose character span intersects
// any of them with hae = 1.
PreWindowSequence build_sequence(std::string_view current_q,
                                 std::span<const std::string> history_qs,
                                 std::string_view passage,
                                 std::span<const CharSpan> history_answer_spans,
                                 const Vocabulary& vocab, const InputConfig& cfg);

// Passage capacity per window: max_seq_len - (question block + 3 specials).
// Windows advance by min(doc_stride, capacity) passage tokens. Throws
// BuildError when the question block leaves no room for passage tokens.
std::vector<EncodedWindow> windowize(const PreWindowSequence& seq, const InputConfig& cfg);

// Passage token range [first, last] covered by a gold answer, if any.
std::optional<std::pair<std::size_t, std::size_t>> answer_token_range(
    const AnswerSpan& gold, const TokenizedText& passage);

// Sets labels to the window-local token indices of the gold span when it lies
// fully inside the window, otherwise (0, 0).
EncodedWindow label_window(EncodedWindow w, const AnswerSpan& gold, const TokenizedText& passage);

// History turns of dialogue.turns[turn_index] as plain text (first gold
// answer; unanswerable answers become empty text).
std::vector<HistoryTurnText> history_texts(const Dialogue& dialogue, std::size_t turn_index);

// Selected history questions + first gold answers as hae spans, windowed
// and labelled with the turn's first gold answer.
std::vector<EncodedWindow> build_training_instance(const Dialogue& dialogue, std::size_t turn_index,
                                                   const SelectionResult& selection,
                                                   const Vocabulary& vocab, const InputConfig& cfg);

}  // namespace coqac
