#include "coqac/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "coqac/error.hpp"
#include "coqac/utf8.hpp"

namespace coqac {

namespace {

constexpr std::size_t kMaxCharsPerWord = 100;

bool is_space(char32_t c) {
  if (c <= 0x20 || c == 0x7F) return true;  // controls count as separators
  return c == 0x00A0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200B) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000 || c == 0xFEFF;
}

bool is_punct(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
      (c >= 123 && c <= 126)) {
    return true;
  }
  return (c >= 0x00A1 && c <= 0x00BF) || c == 0x00D7 || c == 0x00F7 ||
         (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x303F) || (c >= 0xFF01 && c <= 0xFF0F);
}

char32_t lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  return c;
}

std::vector<std::u32string> words_of(std::string_view text) {
  std::vector<std::u32string> out;
  for (auto& [w, span] : split_words(text)) out.push_back(std::move(w));
  return out;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : id_to_token_(std::move(tokens)) {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary entry '" + id_to_token_[i] + "'");
    }
  }
  pad_ = find(kPadToken);
  unk_ = find(kUnkToken);
  cls_ = find(kClsToken);
  sep_ = find(kSepToken);
  if (pad_ < 0 || unk_ < 0 || cls_ < 0 || sep_ < 0) {
    throw ConfigError("vocabulary must contain [PAD], [UNK], [CLS] and [SEP]");
  }
}

TokenId Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? -1 : it->second;
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocab file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write vocab file " + path);
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

std::vector<std::pair<std::u32string, CharSpan>> split_words(std::string_view text) {
  const std::u32string cps = utf8::decode(text);
  std::vector<std::pair<std::u32string, CharSpan>> out;
  std::u32string cur;
  std::int64_t cur_start = 0;
  auto flush = [&](std::int64_t end) {
    if (!cur.empty()) out.push_back({cur, {cur_start, end}});
    cur.clear();
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    const auto pos = static_cast<std::int64_t>(i);
    if (is_space(c)) {
      flush(pos);
    } else if (is_punct(c)) {
      flush(pos);
      out.push_back({std::u32string(1, lower(c)), {pos, pos + 1}});
    } else {
      if (cur.empty()) cur_start = pos;
      cur.push_back(lower(c));
    }
  }
  flush(static_cast<std::int64_t>(cps.size()));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t max_size) {
  std::map<std::u32string, std::size_t> word_counts;
  for (const auto& text : texts) {
    for (auto& w : words_of(text)) ++word_counts[w];
  }

  std::vector<std::string> tokens = {std::string(kPadToken), std::string(kUnkToken),
                                     std::string(kClsToken), std::string(kSepToken)};
  std::set<std::string> alphabet;
  for (const auto& [w, n] : word_counts) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string ch = utf8::encode(w[i]);
      alphabet.insert(i == 0 ? ch : std::string(kContinuationPrefix) + ch);
    }
  }
  if (tokens.size() + alphabet.size() > max_size) {
    throw ConfigError("vocab max_size " + std::to_string(max_size) + " cannot hold " +
                      std::to_string(tokens.size()) + " specials plus " +
                      std::to_string(alphabet.size()) + " character pieces");
  }
  std::set<std::string> present(tokens.begin(), tokens.end());
  tokens.insert(tokens.end(), alphabet.begin(), alphabet.end());
  present.insert(alphabet.begin(), alphabet.end());

  auto add_ranked = [&](const std::map<std::string, std::size_t>& counts) {
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [piece, n] : ranked) {
      if (tokens.size() >= max_size) return;
      if (present.insert(piece).second) tokens.push_back(piece);
    }
  };

  std::map<std::string, std::size_t> whole;
  std::map<std::string, std::size_t> suffixes;
  for (const auto& [w, n] : word_counts) {
    whole[utf8::encode(w)] += n;
    for (std::size_t p = 1; p + 2 <= w.size(); ++p) {
      suffixes[std::string(kContinuationPrefix) + utf8::encode(std::u32string_view(w).substr(p))] += n;
    }
  }
  add_ranked(whole);
  add_ranked(suffixes);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size) {
  std::vector<std::string> texts;
  for (const auto& d : corpus.dialogues) {
    texts.push_back(d.passage);
    for (const auto& t : d.turns) texts.push_back(t.question);
  }
  return build_vocab(texts, max_size);
}

TokenizedText tokenize(const Vocabulary& vocab, std::string_view text) {
  TokenizedText out;
  for (const auto& [word, span] : split_words(text)) {
    auto push = [&](std::string tok, TokenId id, CharSpan s) {
      out.tokens.push_back(std::move(tok));
      out.ids.push_back(id);
      out.char_spans.push_back(s);
    };
    if (word.size() > kMaxCharsPerWord) {
      push(std::string(kUnkToken), vocab.unk_id(), span);
      continue;
    }
    const std::size_t before = out.size();
    bool bad = false;
    std::size_t start = 0;
    while (start < word.size()) {
      std::size_t end = word.size();
      TokenId found = -1;
      std::string piece;
      while (start < end) {
        piece = utf8::encode(std::u32string_view(word).substr(start, end - start));
        if (start > 0) piece = std::string(kContinuationPrefix) + piece;
        found = vocab.find(piece);
        if (found >= 0) break;
        --end;
      }
      if (found < 0) {
        bad = true;
        break;
      }
      push(piece, found,
           {span.start + static_cast<std::int64_t>(start), span.start + static_cast<std::int64_t>(end)});
      start = end;
    }
    if (bad) {
      out.tokens.resize(before);
      out.ids.resize(before);
      out.char_spans.resize(before);
      push(std::string(kUnkToken), vocab.unk_id(), span);
    }
  }
  return out;
}

std::string detokenize(const TokenizedText& t) {
  std::string out;
  for (const auto& tok : t.tokens) {
    if (tok.starts_with(kContinuationPrefix)) {
      out += tok.substr(kContinuationPrefix.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

CharSpan span_to_chars(const TokenizedText& t, std::size_t tok_start, std::size_t tok_end) {
  if (tok_start > tok_end) throw UsageError("span_to_chars: tok_start > tok_end");
  if (tok_end >= t.size()) throw UsageError("span_to_chars: token index out of range");
  if (t.char_spans[tok_start].is_special() || t.char_spans[tok_end].is_special()) {
    throw UsageError("span_to_chars: endpoint is a special token");
  }
  return {t.char_spans[tok_start].start, t.char_spans[tok_end].end};
}

}  // namespace coqac
