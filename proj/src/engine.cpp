#include "coqac/engine.hpp"

#include "coqac/error.hpp"
#include "coqac/utf8.hpp"

namespace coqac {

std::vector<HistoryEntry> gold_history(const Dialogue& dialogue, std::size_t turn_index) {
  std::vector<HistoryEntry> out;
  for (std::size_t i = 0; i < turn_index && i < dialogue.turns.size(); ++i) {
    const Turn& t = dialogue.turns[i];
    const AnswerSpan& a = t.primary_answer();
    HistoryEntry e{t.question, {}, std::nullopt};
    if (!a.is_sentinel()) {
      e.answer_text = a.text;
      e.answer_span = CharSpan{a.char_start, a.char_end()};
    }
    out.push_back(std::move(e));
  }
  return out;
}

SpanChoice decode_window(std::span<const double> start, std::span<const double> end,
                         const EncodedWindow& w, std::size_t max_answer_len) {
  if (start.size() != w.size() || end.size() != w.size() || w.size() == 0) {
    throw UsageError("decode_window: logits of length " + std::to_string(start.size()) + "/" +
                     std::to_string(end.size()) + " for a window of " + std::to_string(w.size()));
  }
  SpanChoice best{0, 0, 0, start[0] + end[0]};
  for (std::size_t i = w.passage_begin; i < w.passage_end; ++i) {
    const std::size_t last = std::min(w.passage_end, i + max_answer_len);
    for (std::size_t j = i; j < last; ++j) {
      const double s = start[i] + end[j];
      if (s > best.score) best = {0, i, j, s};
    }
  }
  return best;
}

SpanChoice decode_span(const std::vector<std::vector<double>>& start,
                       const std::vector<std::vector<double>>& end,
                       const std::vector<EncodedWindow>& windows, std::size_t max_answer_len) {
  if (windows.empty() || start.size() != windows.size() || end.size() != windows.size()) {
    throw UsageError("decode_span: need one start/end logit vector per window");
  }
  SpanChoice best;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    SpanChoice c = decode_window(start[k], end[k], windows[k], max_answer_len);
    c.window = k;
    if (k == 0 || c.score > best.score) best = c;
  }
  return best;
}

nlohmann::ordered_json to_json(const AnswerResult& r) {
  nlohmann::ordered_json j;
  j["answer"] = r.text;
  j["unanswerable"] = r.unanswerable;
  j["char_span"] = r.unanswerable ? nlohmann::ordered_json(nullptr)
                                  : nlohmann::ordered_json::array({r.span.start, r.span.end});
  j["score"] = r.score;
  j["window"] = r.window;
  j["selection"] = to_json(r.selection);
  j["window_scores"] = r.window_scores;
  j["dropped_history"] = r.dropped_history;
  return j;
}

AnswerResult answer_question(const SpanModel& model, const Vocabulary& vocab,
                             std::string_view passage, std::span<const HistoryEntry> history,
                             std::string_view question, const SelectionPolicy& policy,
                             const InputConfig& input) {
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("model vocabulary has " + std::to_string(model.config().vocab_size) +
                      " entries but the tokenizer vocabulary has " + std::to_string(vocab.size()));
  }
  std::vector<HistoryTurnText> texts;
  texts.reserve(history.size());
  for (const auto& h : history) texts.push_back({h.question, h.answer_text});

  AnswerResult result;
  result.selection = apply_policy(policy, texts, question, vocab, model.token_embeddings());

  std::vector<std::string> questions;
  std::vector<CharSpan> spans;
  for (std::size_t idx : result.selection.selected) {
    questions.push_back(history[idx].question);
    if (history[idx].answer_span) spans.push_back(*history[idx].answer_span);
  }
  const PreWindowSequence seq = build_sequence(question, questions, passage, spans, vocab, input);
  result.dropped_history = seq.dropped_history;
  const std::vector<EncodedWindow> windows = windowize(seq, input);

  std::vector<std::vector<double>> starts, ends;
  for (const auto& w : windows) {
    nn::Graph g(false);
    const SpanLogits lg = model.logits(g, w);
    const auto& sv = lg.start.value().values();
    const auto& ev = lg.end.value().values();
    starts.emplace_back(sv.begin(), sv.end());
    ends.emplace_back(ev.begin(), ev.end());
    result.window_scores.push_back(decode_window(starts.back(), ends.back(), w, input.max_answer_len).score);
  }
  const SpanChoice best = decode_span(starts, ends, windows, input.max_answer_len);
  result.score = best.score;
  result.window = best.window;
  if (best.cannot_answer()) {
    result.text = std::string(kCannotAnswer);
    result.span = CharSpan{};
    result.unanswerable = true;
  } else {
    const EncodedWindow& w = windows[best.window];
    result.span = CharSpan{w.char_spans[best.start].start, w.char_spans[best.end].end};
    result.text = utf8::substr(passage, static_cast<std::size_t>(result.span.start),
                               static_cast<std::size_t>(result.span.end - result.span.start));
    result.unanswerable = false;
  }
  return result;
}

}  // namespace coqac
