#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coqac/quac.hpp"

namespace coqac {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kContinuationPrefix = "##";

using TokenId = std::int32_t;

// Half-open code-point range [start, end). Specials carry (-1, -1).
struct CharSpan {
  std::int64_t start = -1;
  std::int64_t end = -1;

  bool is_special() const { return start < 0; }
  bool intersects(const CharSpan& other) const {
    return !is_special() && !other.is_special() && start < other.end && other.start < end;
  }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

class Vocabulary {
 public:
  // tokens[i] gets id i. All four specials must be present and distinct.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  const std::string& token(TokenId id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  // Returns -1 when absent.
  TokenId find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token) >= 0; }

  TokenId pad_id() const { return pad_; }
  TokenId unk_id() const { return unk_; }
  TokenId cls_id() const { return cls_; }
  TokenId sep_id() const { return sep_; }
  bool is_special(TokenId id) const { return id == pad_ || id == unk_ || id == cls_ || id == sep_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_token_ == b.id_to_token_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  TokenId pad_ = -1, unk_ = -1, cls_ = -1, sep_ = -1;
};

// Vocab file: one token per line, line number = id.
Vocabulary load_vocab(const std::string& path);
void save_vocab(const Vocabulary& vocab, const std::string& path);

// Builds a wordpiece vocabulary from passages and questions: the four
// specials, every single-character piece seen (word-initial "c" and
// continuation "##c"), then whole words by descending frequency, then
// suffix pieces "##xyz" by descending frequency, until max_size.
// Ties break lexicographically. Throws ConfigError when max_size cannot hold
// the specials plus the character alphabet.
Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size);
Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t max_size);

struct TokenizedText {
  std::vector<std::string> tokens;
  std::vector<TokenId> ids;
  std::vector<CharSpan> char_spans;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

// Lowercases ASCII, splits on whitespace and punctuation (every punctuation
// character is its own token), then runs greedy longest-match wordpiece.
// A word with no complete segmentation becomes one [UNK] spanning the word.
TokenizedText tokenize(const Vocabulary& vocab, std::string_view text);

// Joins pieces back into a surface string ("##" pieces glue to the previous
// token, everything else is space separated).
std::string detokenize(const TokenizedText& t);

// (char_spans[tok_start].start, char_spans[tok_end].end). Throws UsageError
// if the range is inverted, out of bounds, or touches a special token.
CharSpan span_to_chars(const TokenizedText& t, std::size_t tok_start, std::size_t tok_end);

// Pre-tokenizer pieces: (lowercased word, span) pairs.
std::vector<std::pair<std::u32string, CharSpan>> split_words(std::string_view text);

}  // namespace coqac
