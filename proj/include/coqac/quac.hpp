#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace coqac {

inline constexpr std::string_view kCannotAnswer = "CANNOTANSWER";
inline constexpr std::size_t kMaxDialogueTurns = 12;

struct AnswerSpan {
  std::string text;
  // Code-point offset into the passage; -1 marks the unanswerable sentinel.
  std::int64_t char_start = -1;

  bool is_sentinel() const { return char_start < 0; }
  // Code-point end offset (exclusive). Undefined for the sentinel.
  std::int64_t char_end() const;

  friend bool operator==(const AnswerSpan&, const AnswerSpan&) = default;
};

struct Turn {
  std::size_t turn_index = 0;
  std::string question;
  std::vector<AnswerSpan> gold_answers;
  bool is_unanswerable = false;

  // Training reference: the first gold answer.
  const AnswerSpan& primary_answer() const { return gold_answers.front(); }

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Dialogue {
  std::string id;
  std::string title;
  std::string section_title;
  std::string passage;
  std::vector<Turn> turns;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  std::string split_name;

  const Dialogue* find(std::string_view dialogue_id) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct CorpusStats {
  std::size_t dialogue_count = 0;
  std::size_t question_count = 0;
  std::size_t max_turns = 0;
  double unanswerable_fraction = 0.0;
};

// Parses QuAC v0.2 layout: {"data": [{"title", "section_title",
// "paragraphs": [{"id", "context", "qas": [{"question", "answers": [...]}]}]}]}.
// A trailing " CANNOTANSWER" appended to the context is stripped, and every
// CANNOTANSWER answer maps to char_start = -1.
// Throws ParseError (with byte offset) on malformed JSON and ValidationError
// naming dialogue id and turn index on offset/text mismatches.
Corpus parse_corpus(std::string_view raw, std::string split_name);
Corpus load_corpus(const std::string& path, std::string split_name);

// Writes the external QuAC layout; parse_corpus(to_quac_json(c)) == c.
nlohmann::ordered_json to_quac_json(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path);

// Canonical internal dump with a stable key order, used for fixtures.
nlohmann::ordered_json canonical_dump(const Corpus& corpus);

CorpusStats corpus_stats(const Corpus& corpus);
nlohmann::ordered_json to_json(const CorpusStats& stats);

}  // namespace coqac
