#include "coqac/input_builder.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "coqac/error.hpp"

namespace coqac {

void InputConfig::validate() const {
  if (doc_stride == 0 || doc_stride >= max_seq_len) {
    throw ConfigError("doc_stride must satisfy 0 < doc_stride < max_seq_len");
  }
  if (max_answer_len < 1) throw ConfigError("max_answer_len must be >= 1");
  if (max_query_len < 1 || max_query_len + 3 >= max_seq_len) {
    throw ConfigError("max_query_len + 3 must be below max_seq_len");
  }
}

nlohmann::ordered_json to_json(const InputConfig& cfg) {
  return {{"max_seq_len", cfg.max_seq_len},   {"doc_stride", cfg.doc_stride},
          {"max_answer_len", cfg.max_answer_len}, {"max_history_k", cfg.max_history_k},
          {"max_query_len", cfg.max_query_len}};
}

InputConfig input_config_from_json(const nlohmann::json& j) {
  InputConfig cfg;
  cfg.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  cfg.doc_stride = j.at("doc_stride").get<std::size_t>();
  cfg.max_answer_len = j.at("max_answer_len").get<std::size_t>();
  cfg.max_history_k = j.at("max_history_k").get<std::size_t>();
  cfg.max_query_len = j.at("max_query_len").get<std::size_t>();
  return cfg;
}

std::vector<TokenId> PreWindowSequence::token_ids() const {
  std::vector<TokenId> ids = prefix_ids;
  ids.insert(ids.end(), passage.ids.begin(), passage.ids.end());
  ids.push_back(prefix_ids.back());  // trailing [SEP]
  return ids;
}

std::vector<std::uint8_t> PreWindowSequence::segment_ids() const {
  std::vector<std::uint8_t> seg(prefix_ids.size(), 0);
  seg.resize(prefix_ids.size() + passage.size() + 1, 1);
  return seg;
}

std::vector<std::uint8_t> PreWindowSequence::hae_ids() const {
  std::vector<std::uint8_t> hae(prefix_ids.size(), 0);
  hae.insert(hae.end(), passage_hae.begin(), passage_hae.end());
  hae.push_back(0);
  return hae;
}

namespace {

nlohmann::ordered_json spans_json(const std::vector<CharSpan>& spans) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : spans) arr.push_back({s.start, s.end});
  return arr;
}

}  // namespace

nlohmann::ordered_json to_json(const EncodedWindow& w) {
  return {{"token_ids", w.token_ids},
          {"segment_ids", w.segment_ids},
          {"hae_ids", w.hae_ids},
          {"position_ids", w.position_ids},
          {"passage_token_range", {w.passage_begin, w.passage_end}},
          {"window_passage_offset", w.window_passage_offset},
          {"start_label", w.start_label},
          {"end_label", w.end_label},
          {"char_spans", spans_json(w.char_spans)}};
}

EncodedWindow window_from_json(const nlohmann::json& j) {
  EncodedWindow w;
  w.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
  w.segment_ids = j.at("segment_ids").get<std::vector<std::uint8_t>>();
  w.hae_ids = j.at("hae_ids").get<std::vector<std::uint8_t>>();
  w.position_ids = j.at("position_ids").get<std::vector<std::int32_t>>();
  const auto& range = j.at("passage_token_range");
  w.passage_begin = range.at(0).get<std::size_t>();
  w.passage_end = range.at(1).get<std::size_t>();
  w.window_passage_offset = j.at("window_passage_offset").get<std::size_t>();
  w.start_label = j.at("start_label").get<std::size_t>();
  w.end_label = j.at("end_label").get<std::size_t>();
  for (const auto& s : j.at("char_spans")) {
    w.char_spans.push_back({s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>()});
  }
  return w;
}

PreWindowSequence build_sequence(std::string_view current_q,
                                 std::span<const std::string> history_qs,
                                 std::string_view passage,
                                 std::span<const CharSpan> history_answer_spans,
                                 const Vocabulary& vocab, const InputConfig& cfg) {
  PreWindowSequence seq;
  std::vector<TokenId> q_ids = tokenize(vocab, current_q).ids;
  std::vector<std::vector<TokenId>> hq_ids;
  hq_ids.reserve(history_qs.size());
  std::size_t block = q_ids.size() + 1;
  for (const auto& hq : history_qs) {
    hq_ids.push_back(tokenize(vocab, hq).ids);
    block += hq_ids.back().size();
  }
  std::size_t first_kept = 0;
  while (block > cfg.max_query_len && first_kept < hq_ids.size()) {
    block -= hq_ids[first_kept].size();
    ++first_kept;
  }
  if (first_kept > 0) {
    spdlog::debug("question block over {} tokens: dropped {} oldest history question(s)",
                  cfg.max_query_len, first_kept);
  }
  seq.dropped_history = first_kept;
  if (block > cfg.max_query_len) {
    spdlog::debug("current question truncated to {} tokens", cfg.max_query_len - 1);
    q_ids.resize(cfg.max_query_len - 1);
  }

  seq.prefix_ids.push_back(vocab.cls_id());
  seq.prefix_ids.insert(seq.prefix_ids.end(), q_ids.begin(), q_ids.end());
  seq.prefix_ids.push_back(vocab.sep_id());
  for (std::size_t i = first_kept; i < hq_ids.size(); ++i) {
    seq.prefix_ids.insert(seq.prefix_ids.end(), hq_ids[i].begin(), hq_ids[i].end());
  }
  seq.prefix_ids.push_back(vocab.sep_id());

  seq.passage = tokenize(vocab, passage);
  seq.passage_hae.assign(seq.passage.size(), 0);
  for (std::size_t i = 0; i < seq.passage.size(); ++i) {
    for (const auto& span : history_answer_spans) {
      if (seq.passage.char_spans[i].intersects(span)) {
        seq.passage_hae[i] = 1;
        break;
      }
    }
  }
  return seq;
}

std::vector<EncodedWindow> windowize(const PreWindowSequence& seq, const InputConfig& cfg) {
  const std::size_t block = seq.question_block_len();
  if (block + 3 >= cfg.max_seq_len) {
    throw BuildError("question block of " + std::to_string(block) +
                     " tokens plus 3 specials leaves no passage room within max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  }
  const std::size_t capacity = cfg.max_seq_len - block - 3;
  const std::size_t step = std::min(capacity, cfg.doc_stride);
  const std::size_t total = seq.passage.size();
  const std::size_t prefix = seq.prefix_ids.size();

  std::vector<EncodedWindow> windows;
  std::size_t offset = 0;
  while (true) {
    const std::size_t len = std::min(capacity, total - offset);
    EncodedWindow w;
    w.token_ids = seq.prefix_ids;
    w.token_ids.insert(w.token_ids.end(), seq.passage.ids.begin() + static_cast<std::ptrdiff_t>(offset),
                       seq.passage.ids.begin() + static_cast<std::ptrdiff_t>(offset + len));
    w.token_ids.push_back(seq.prefix_ids.back());
    const std::size_t n = w.token_ids.size();

    w.segment_ids.assign(prefix, 0);
    w.segment_ids.resize(n, 1);
    w.hae_ids.assign(prefix, 0);
    w.hae_ids.insert(w.hae_ids.end(), seq.passage_hae.begin() + static_cast<std::ptrdiff_t>(offset),
                     seq.passage_hae.begin() + static_cast<std::ptrdiff_t>(offset + len));
    w.hae_ids.push_back(0);
    w.position_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) w.position_ids[i] = static_cast<std::int32_t>(i);
    w.char_spans.assign(prefix, CharSpan{});
    w.char_spans.insert(w.char_spans.end(),
                        seq.passage.char_spans.begin() + static_cast<std::ptrdiff_t>(offset),
                        seq.passage.char_spans.begin() + static_cast<std::ptrdiff_t>(offset + len));
    w.char_spans.push_back(CharSpan{});
    w.passage_begin = prefix;
    w.passage_end = prefix + len;
    w.window_passage_offset = offset;
    windows.push_back(std::move(w));

    if (offset + capacity >= total) break;
    offset += step;
  }
  return windows;
}

std::optional<std::pair<std::size_t, std::size_t>> answer_token_range(
    const AnswerSpan& gold, const TokenizedText& passage) {
  if (gold.is_sentinel()) return std::nullopt;
  const CharSpan g{gold.char_start, gold.char_end()};
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t i = 0; i < passage.size(); ++i) {
    if (passage.char_spans[i].intersects(g)) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) return std::nullopt;
  return std::make_pair(*first, last);
}

EncodedWindow label_window(EncodedWindow w, const AnswerSpan& gold, const TokenizedText& passage) {
  w.start_label = 0;
  w.end_label = 0;
  const auto range = answer_token_range(gold, passage);
  if (!range) return w;
  const std::size_t lo = w.window_passage_offset;
  const std::size_t hi = lo + (w.passage_end - w.passage_begin);
  if (range->first >= lo && range->second < hi) {
    w.start_label = w.passage_begin + (range->first - lo);
    w.end_label = w.passage_begin + (range->second - lo);
  }
  return w;
}

std::vector<HistoryTurnText> history_texts(const Dialogue& dialogue, std::size_t turn_index) {
  std::vector<HistoryTurnText> out;
  for (std::size_t i = 0; i < turn_index && i < dialogue.turns.size(); ++i) {
    const auto& t = dialogue.turns[i];
    out.push_back({t.question, t.is_unanswerable ? std::string() : t.primary_answer().text});
  }
  return out;
}

std::vector<EncodedWindow> build_training_instance(const Dialogue& dialogue, std::size_t turn_index,
                                                   const SelectionResult& selection,
                                                   const Vocabulary& vocab, const InputConfig& cfg) {
  if (turn_index >= dialogue.turns.size()) {
    throw UsageError("turn index " + std::to_string(turn_index) + " out of range for dialogue " +
                     dialogue.id);
  }
  std::vector<std::string> questions;
  std::vector<CharSpan> spans;
  for (std::size_t idx : selection.selected) {
    if (idx >= turn_index) throw UsageError("selection refers to a turn that is not history");
    const Turn& h = dialogue.turns[idx];
    questions.push_back(h.question);
    const AnswerSpan& a = h.primary_answer();
    if (!a.is_sentinel()) spans.push_back({a.char_start, a.char_end()});
  }
  const Turn& turn = dialogue.turns[turn_index];
  const PreWindowSequence seq =
      build_sequence(turn.question, questions, dialogue.passage, spans, vocab, cfg);
  std::vector<EncodedWindow> windows = windowize(seq, cfg);
  for (auto& w : windows) w = label_window(std::move(w), turn.primary_answer(), seq.passage);
  return windows;
}

}  // namespace coqac
