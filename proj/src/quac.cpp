#include "coqac/quac.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "coqac/error.hpp"
#include "coqac/utf8.hpp"

namespace coqac {

using nlohmann::json;
using nlohmann::ordered_json;

std::int64_t AnswerSpan::char_end() const {
  return char_start + static_cast<std::int64_t>(utf8::length(text));
}

const Dialogue* Corpus::find(std::string_view dialogue_id) const {
  for (const auto& d : dialogues) {
    if (d.id == dialogue_id) return &d;
  }
  return nullptr;
}

namespace {

std::string string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw ValidationError(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::string strip_sentinel(std::string context) {
  const std::string suffix = std::string(kCannotAnswer);
  if (context.size() >= suffix.size() &&
      context.compare(context.size() - suffix.size(), suffix.size(), suffix) == 0) {
    context.resize(context.size() - suffix.size());
    while (!context.empty() && context.back() == ' ') context.pop_back();
  }
  return context;
}

AnswerSpan parse_answer(const json& a, const std::u32string& passage_cps,
                        const std::string& dialogue_id, std::size_t turn_index) {
  if (!a.is_object()) {
    throw ValidationError("dialogue " + dialogue_id + " turn " + std::to_string(turn_index) +
                          ": answer must be an object");
  }
  AnswerSpan span;
  span.text = string_field(a, "text");
  if (span.text == kCannotAnswer) {
    span.char_start = -1;
    return span;
  }
  auto it = a.find("answer_start");
  if (it == a.end() || !it->is_number_integer()) {
    throw ValidationError("dialogue " + dialogue_id + " turn " + std::to_string(turn_index) +
                          ": answer_start missing or not an integer");
  }
  span.char_start = it->get<std::int64_t>();
  const std::u32string text_cps = utf8::decode(span.text);
  const auto start = span.char_start;
  if (start < 0 || static_cast<std::size_t>(start) + text_cps.size() > passage_cps.size() ||
      passage_cps.compare(static_cast<std::size_t>(start), text_cps.size(), text_cps) != 0) {
    throw ValidationError("dialogue " + dialogue_id + " turn " + std::to_string(turn_index) +
                          ": answer text does not match passage at offset " +
                          std::to_string(start));
  }
  return span;
}

Dialogue parse_paragraph(const json& para, const std::string& title,
                         const std::string& section_title, std::size_t ordinal) {
  Dialogue d;
  d.title = title;
  d.section_title = section_title;
  d.id = string_field(para, "id");
  if (d.id.empty()) d.id = "dialogue_" + std::to_string(ordinal);
  d.passage = strip_sentinel(string_field(para, "context"));
  if (d.passage.empty()) throw ValidationError("dialogue " + d.id + ": passage is empty");
  const std::u32string passage_cps = utf8::decode(d.passage);

  auto qas = para.find("qas");
  if (qas == para.end() || !qas->is_array() || qas->empty()) {
    throw ValidationError("dialogue " + d.id + ": no turns");
  }
  for (const auto& qa : *qas) {
    Turn turn;
    turn.turn_index = d.turns.size();
    turn.question = string_field(qa, "question");
    const json* answers = nullptr;
    if (auto it = qa.find("answers"); it != qa.end() && it->is_array() && !it->empty()) {
      answers = &*it;
    }
    if (answers != nullptr) {
      for (const auto& a : *answers) {
        turn.gold_answers.push_back(parse_answer(a, passage_cps, d.id, turn.turn_index));
      }
    } else if (auto orig = qa.find("orig_answer"); orig != qa.end() && orig->is_object()) {
      turn.gold_answers.push_back(parse_answer(*orig, passage_cps, d.id, turn.turn_index));
    } else {
      throw ValidationError("dialogue " + d.id + " turn " + std::to_string(turn.turn_index) +
                            ": no gold answers");
    }
    turn.is_unanswerable = turn.gold_answers.front().is_sentinel();
    d.turns.push_back(std::move(turn));
  }
  if (d.turns.size() > kMaxDialogueTurns) {
    spdlog::warn("dialogue {} has {} turns (more than {})", d.id, d.turns.size(),
                 kMaxDialogueTurns);
  }
  return d;
}

}  // namespace

Corpus parse_corpus(std::string_view raw, std::string split_name) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  Corpus corpus;
  corpus.split_name = std::move(split_name);
  if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array()) {
    throw ValidationError("corpus must be an object with a \"data\" array");
  }
  std::unordered_set<std::string> seen;
  for (const auto& article : doc["data"]) {
    if (!article.is_object()) throw ValidationError("data entries must be objects");
    const std::string title = string_field(article, "title");
    const std::string section = string_field(article, "section_title");
    auto paras = article.find("paragraphs");
    if (paras == article.end() || !paras->is_array()) {
      throw ValidationError("article '" + title + "' has no paragraphs array");
    }
    for (const auto& para : *paras) {
      Dialogue d = parse_paragraph(para, title, section, corpus.dialogues.size());
      if (!seen.insert(d.id).second) {
        throw ValidationError("duplicate dialogue id " + d.id);
      }
      corpus.dialogues.push_back(std::move(d));
    }
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, std::string split_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), std::move(split_name));
}

ordered_json to_quac_json(const Corpus& corpus) {
  ordered_json data = ordered_json::array();
  for (const auto& d : corpus.dialogues) {
    ordered_json qas = ordered_json::array();
    for (const auto& t : d.turns) {
      ordered_json answers = ordered_json::array();
      for (const auto& a : t.gold_answers) {
        answers.push_back({{"text", a.text}, {"answer_start", a.char_start}});
      }
      qas.push_back({{"id", d.id + "_q#" + std::to_string(t.turn_index)},
                     {"question", t.question},
                     {"answers", answers}});
    }
    ordered_json para = {{"id", d.id}, {"context", d.passage}, {"qas", qas}};
    data.push_back({{"title", d.title},
                    {"section_title", d.section_title},
                    {"paragraphs", ordered_json::array({para})}});
  }
  return {{"data", data}};
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path);
  out << to_quac_json(corpus).dump(1) << '\n';
}

ordered_json canonical_dump(const Corpus& corpus) {
  ordered_json dialogues = ordered_json::array();
  for (const auto& d : corpus.dialogues) {
    ordered_json turns = ordered_json::array();
    for (const auto& t : d.turns) {
      ordered_json answers = ordered_json::array();
      for (const auto& a : t.gold_answers) {
        answers.push_back({{"text", a.text}, {"char_start", a.char_start}});
      }
      turns.push_back({{"turn_index", t.turn_index},
                       {"question", t.question},
                       {"is_unanswerable", t.is_unanswerable},
                       {"gold_answers", answers}});
    }
    dialogues.push_back({{"id", d.id},
                         {"title", d.title},
                         {"section_title", d.section_title},
                         {"passage", d.passage},
                         {"turns", turns}});
  }
  return {{"split_name", corpus.split_name}, {"dialogues", dialogues}};
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  s.dialogue_count = corpus.dialogues.size();
  std::size_t unanswerable = 0;
  for (const auto& d : corpus.dialogues) {
    s.question_count += d.turns.size();
    s.max_turns = std::max(s.max_turns, d.turns.size());
    for (const auto& t : d.turns) unanswerable += t.is_unanswerable ? 1 : 0;
  }
  if (s.question_count > 0) {
    s.unanswerable_fraction =
        static_cast<double>(unanswerable) / static_cast<double>(s.question_count);
  }
  return s;
}

ordered_json to_json(const CorpusStats& stats) {
  return {{"dialogues", stats.dialogue_count},
          {"questions", stats.question_count},
          {"max_turns", stats.max_turns},
          {"unanswerable_fraction", stats.unanswerable_fraction}};
}

}  // namespace coqac
