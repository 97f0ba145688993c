#include "coqac/history_selector.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "coqac/error.hpp"

namespace coqac {

nlohmann::ordered_json to_json(const SelectionResult& r) {
  return {{"scores", r.scores},
          {"probabilities", r.probabilities},
          {"selected", r.selected},
          {"threshold", r.threshold}};
}

SelectionResult selection_from_json(const nlohmann::json& j) {
  SelectionResult r;
  r.scores = j.at("scores").get<std::vector<double>>();
  r.probabilities = j.at("probabilities").get<std::vector<double>>();
  r.selected = j.at("selected").get<std::vector<std::size_t>>();
  r.threshold = j.at("threshold").get<double>();
  return r;
}

TurnRepresentation embed_turn(std::string_view text, const Vocabulary& vocab,
                              const EmbeddingView& embeddings) {
  if (embeddings.rows != vocab.size()) {
    throw UsageError("embedding table has " + std::to_string(embeddings.rows) +
                     " rows but vocabulary has " + std::to_string(vocab.size()));
  }
  TurnRepresentation rep{std::vector<double>(embeddings.dim, 0.0)};
  std::size_t count = 0;
  for (TokenId id : tokenize(vocab, text).ids) {
    if (vocab.is_special(id)) continue;
    const auto row = embeddings.row(static_cast<std::size_t>(id));
    for (std::size_t k = 0; k < row.size(); ++k) rep.vector[k] += row[k];
    ++count;
  }
  if (count == 0) {
    const auto row = embeddings.row(static_cast<std::size_t>(vocab.unk_id()));
    rep.vector.assign(row.begin(), row.end());
    return rep;
  }
  for (double& v : rep.vector) v /= static_cast<double>(count);
  return rep;
}

double relevance_score(const TurnRepresentation& h, const TurnRepresentation& q) {
  if (h.vector.size() != q.vector.size()) {
    throw UsageError("relevance_score: dimension mismatch " + std::to_string(h.vector.size()) +
                     " vs " + std::to_string(q.vector.size()));
  }
  double dot = 0.0, hh = 0.0, qq = 0.0;
  for (std::size_t k = 0; k < h.vector.size(); ++k) {
    dot += h.vector[k] * q.vector[k];
    hh += h.vector[k] * h.vector[k];
    qq += q.vector[k] * q.vector[k];
  }
  if (hh == 0.0 || qq == 0.0) {
    spdlog::debug("relevance_score: zero vector, scoring 0");
    return 0.0;
  }
  return std::clamp(dot / (std::sqrt(hh) * std::sqrt(qq)), -1.0, 1.0);
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("normalize_scores: no scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

namespace {

SelectionResult score_history(std::span<const HistoryTurnText> history, std::string_view current_q,
                              double threshold, const Vocabulary& vocab,
                              const EmbeddingView& embeddings) {
  SelectionResult r;
  r.threshold = threshold;
  if (history.empty()) return r;
  const TurnRepresentation q = embed_turn(current_q, vocab, embeddings);
  r.scores.reserve(history.size());
  for (const auto& turn : history) {
    const double asked = relevance_score(embed_turn(turn.question, vocab, embeddings), q);
    if (turn.answer.empty()) {
      r.scores.push_back(asked);
      continue;
    }
    const std::string text = turn.question + " " + turn.answer;
    r.scores.push_back(std::max(asked, relevance_score(embed_turn(text, vocab, embeddings), q)));
  }
  r.probabilities = normalize_scores(r.scores);
  return r;
}

void keep_most_recent(std::vector<std::size_t>& selected, std::size_t max_k) {
  if (selected.size() > max_k) {
    selected.erase(selected.begin(), selected.end() - static_cast<std::ptrdiff_t>(max_k));
  }
}

}  // namespace

SelectionResult select_turns(std::span<const HistoryTurnText> history, std::string_view current_q,
                             double threshold, std::size_t max_k, const Vocabulary& vocab,
                             const EmbeddingView& embeddings) {
  if (threshold < -1.0 || threshold > 1.0) {
    throw UsageError("select_turns: threshold must lie in [-1, 1]");
  }
  SelectionResult r = score_history(history, current_q, threshold, vocab, embeddings);
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    if (r.scores[i] >= threshold) r.selected.push_back(i);
  }
  keep_most_recent(r.selected, max_k);
  return r;
}

SelectionResult apply_policy(const SelectionPolicy& policy, std::span<const HistoryTurnText> history,
                             std::string_view current_q, const Vocabulary& vocab,
                             const EmbeddingView& embeddings) {
  if (policy.use_selector) {
    return select_turns(history, current_q, policy.threshold, policy.max_k, vocab, embeddings);
  }
  SelectionResult r = score_history(history, current_q, policy.threshold, vocab, embeddings);
  for (std::size_t i = 0; i < history.size(); ++i) r.selected.push_back(i);
  keep_most_recent(r.selected, policy.max_k);
  return r;
}

}  // namespace coqac
