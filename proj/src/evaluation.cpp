#include "coqac/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "coqac/error.hpp"

namespace coqac {

nlohmann::ordered_json to_json(const Prediction& p) {
  return {{"dialogue_id", p.dialogue_id}, {"turn_index", p.turn_index}, {"answer", p.answer},
          {"score", p.score},             {"window", p.window}};
}

Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  p.dialogue_id = j.at("dialogue_id").get<std::string>();
  p.turn_index = j.at("turn_index").get<std::size_t>();
  p.answer = j.at("answer").get<std::string>();
  p.score = j.value("score", 0.0);
  p.window = j.value("window", std::size_t{0});
  return p;
}

void save_predictions(const std::vector<Prediction>& preds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write predictions to " + path);
  for (const auto& p : preds) out << to_json(p).dump() << '\n';
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read predictions from " + path);
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), 0);
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double pair_f1(std::string_view pred, std::string_view ref) {
  const auto p = split_ws(pred);
  const auto r = split_ws(ref);
  if (p.empty() && r.empty()) return 1.0;
  if (p.empty() || r.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& w : r) ++counts[w];
  int common = 0;
  for (const auto& w : p) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

template <typename Norm>
double best_f1(std::string_view prediction, std::span<const std::string> references, Norm norm) {
  if (references.empty()) throw UsageError("word_f1 needs at least one reference");
  if (prediction == kCannotAnswer) {
    return std::any_of(references.begin(), references.end(),
                       [](const std::string& r) { return r == kCannotAnswer; })
               ? 1.0
               : 0.0;
  }
  const std::string p = norm(prediction);
  double best = 0.0;
  for (const auto& r : references) {
    if (r == kCannotAnswer) continue;
    best = std::max(best, pair_f1(p, norm(r)));
  }
  return best;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    cleaned.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::string out;
  for (const auto& w : split_ws(cleaned)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

double word_f1(std::string_view prediction, std::span<const std::string> references) {
  return best_f1(prediction, references, [](std::string_view s) { return std::string(s); });
}

double quac_f1(std::string_view prediction, std::span<const std::string> references) {
  return best_f1(prediction, references, normalize_answer);
}

double human_f1(std::span<const std::string> references) {
  if (references.size() < 2) return 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    std::vector<std::string> others;
    for (std::size_t k = 0; k < references.size(); ++k) {
      if (k != i) others.push_back(references[k]);
    }
    total += quac_f1(references[i], others);
  }
  return total / static_cast<double>(references.size());
}

HeqResult heq(std::span<const double> system_f1, std::span<const double> human,
              std::span<const std::string> dialogue_of) {
  if (system_f1.size() != human.size() || system_f1.size() != dialogue_of.size()) {
    throw UsageError("heq: " + std::to_string(system_f1.size()) + " system scores, " +
                     std::to_string(human.size()) + " human scores, " +
                     std::to_string(dialogue_of.size()) + " dialogue labels");
  }
  if (system_f1.empty()) throw UsageError("heq: no questions");
  std::size_t met = 0;
  std::map<std::string, bool> all_met;
  for (std::size_t i = 0; i < system_f1.size(); ++i) {
    const bool ok = system_f1[i] >= human[i];
    met += ok ? 1 : 0;
    auto it = all_met.emplace(dialogue_of[i], true).first;
    it->second = it->second && ok;
  }
  std::size_t dialogues_met = 0;
  for (const auto& [id, ok] : all_met) dialogues_met += ok ? 1 : 0;
  return {100.0 * static_cast<double>(met) / static_cast<double>(system_f1.size()),
          100.0 * static_cast<double>(dialogues_met) / static_cast<double>(all_met.size())};
}

nlohmann::ordered_json to_json(const EvalReport& r, bool with_records) {
  nlohmann::ordered_json j;
  j["f1"] = r.f1;
  j["heq_q"] = r.heq_q;
  j["heq_d"] = r.heq_d;
  j["questions"] = r.question_count;
  j["dialogues"] = r.dialogue_count;
  if (with_records) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& q : r.records) {
      arr.push_back({{"dialogue_id", q.dialogue_id},
                     {"turn_index", q.turn_index},
                     {"prediction", q.prediction},
                     {"f1", q.f1},
                     {"human_f1", q.human_f1}});
    }
    j["records"] = std::move(arr);
  }
  return j;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(12) << "metric" << std::right << std::setw(10) << "value" << '\n';
  out << std::left << std::setw(12) << "F1" << std::right << std::setw(10) << r.f1 << '\n';
  out << std::left << std::setw(12) << "HEQ-Q" << std::right << std::setw(10) << r.heq_q << '\n';
  out << std::left << std::setw(12) << "HEQ-D" << std::right << std::setw(10) << r.heq_d << '\n';
  out << std::left << std::setw(12) << "questions" << std::right << std::setw(10)
      << r.question_count << '\n';
  out << std::left << std::setw(12) << "dialogues" << std::right << std::setw(10)
      << r.dialogue_count << '\n';
  if (!r.records.empty()) {
    std::size_t id_width = 8;
    for (const auto& q : r.records) id_width = std::max(id_width, q.dialogue_id.size());
    out << '\n'
        << std::left << std::setw(static_cast<int>(id_width + 2)) << "dialogue" << std::right
        << std::setw(5) << "turn" << std::setw(9) << "f1" << std::setw(9) << "human"
        << "  prediction\n";
    for (const auto& q : r.records) {
      out << std::left << std::setw(static_cast<int>(id_width + 2)) << q.dialogue_id << std::right
          << std::setw(5) << q.turn_index << std::setw(9) << q.f1 << std::setw(9) << q.human_f1
          << "  " << q.prediction << '\n';
    }
  }
  return out.str();
}

EvalReport score_predictions(const Corpus& corpus, const std::vector<Prediction>& preds) {
  std::map<std::pair<std::string, std::size_t>, const Prediction*> by_key;
  for (const auto& p : preds) {
    if (!by_key.emplace(std::make_pair(p.dialogue_id, p.turn_index), &p).second) {
      throw ValidationError("duplicate prediction for " + p.dialogue_id + " turn " +
                            std::to_string(p.turn_index));
    }
  }
  EvalReport report;
  std::vector<double> sys, hum;
  std::vector<std::string> groups;
  for (const auto& d : corpus.dialogues) {
    for (const auto& t : d.turns) {
      auto it = by_key.find({d.id, t.turn_index});
      if (it == by_key.end()) {
        throw ValidationError("no prediction for " + d.id + " turn " + std::to_string(t.turn_index));
      }
      std::vector<std::string> refs;
      for (const auto& a : t.gold_answers) {
        refs.push_back(a.is_sentinel() ? std::string(kCannotAnswer) : a.text);
      }
      QuestionRecord rec{d.id, t.turn_index, it->second->answer,
                         100.0 * quac_f1(it->second->answer, refs), 100.0 * human_f1(refs)};
      sys.push_back(rec.f1);
      hum.push_back(rec.human_f1);
      groups.push_back(d.id);
      report.records.push_back(std::move(rec));
      by_key.erase(it);
    }
  }
  if (!by_key.empty()) {
    const auto& [key, p] = *by_key.begin();
    throw ValidationError("prediction for " + key.first + " turn " + std::to_string(key.second) +
                          " matches no question");
  }
  report.question_count = sys.size();
  report.dialogue_count = corpus.dialogues.size();
  if (sys.empty()) return report;
  double total = 0.0;
  for (double f : sys) total += f;
  report.f1 = total / static_cast<double>(sys.size());
  const HeqResult h = heq(sys, hum, groups);
  report.heq_q = h.heq_q;
  report.heq_d = h.heq_d;
  return report;
}

std::vector<Prediction> predict_corpus(const SpanModel& model, const Vocabulary& vocab,
                                       const Corpus& corpus, const SelectionPolicy& policy,
                                       const InputConfig& input) {
  std::vector<Prediction> out;
  for (const auto& d : corpus.dialogues) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const auto history = gold_history(d, i);
      const AnswerResult r =
          answer_question(model, vocab, d.passage, history, d.turns[i].question, policy, input);
      out.push_back({d.id, d.turns[i].turn_index, r.text, r.score, r.window});
    }
  }
  return out;
}

}  // namespace coqac
