#include "coqac/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "coqac/error.hpp"

namespace coqac {

std::vector<std::string> synthetic_words(std::size_t count, std::uint64_t seed) {
  static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w;
    for (int s = 0; s < 3; ++s) {
      w.push_back(kOnsets[rng() % kOnsets.size()]);
      w.push_back(kVowels[rng() % kVowels.size()]);
    }
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

namespace {

std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

Corpus make_synthetic_corpus(const SyntheticConfig& cfg, const std::string& split_name) {
  if (cfg.turns == 0 || cfg.turns > kMaxDialogueTurns) {
    throw ConfigError("synthetic turns must lie in [1, " + std::to_string(kMaxDialogueTurns) + "]");
  }
  if (cfg.records == 0) throw ConfigError("synthetic records must be positive");
  if (cfg.pool < 3 * cfg.records + 2 * cfg.turns) {
    throw ConfigError("synthetic pool of " + std::to_string(cfg.pool) +
                      " words cannot fill a passage and its tags");
  }
  const auto words = synthetic_words(cfg.pool, cfg.pool_seed);
  std::mt19937_64 rng(cfg.seed);
  Corpus corpus;
  corpus.split_name = split_name;

  for (std::size_t d = 0; d < cfg.dialogues; ++d) {
    std::vector<std::size_t> perm(words.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[draw(rng, i)]);
    std::size_t next = 0;
    auto take = [&]() -> const std::string& { return words[perm[next++]]; };

    struct Record {
      std::string name, v1, v2;
      std::int64_t v1_start = 0, v2_start = 0;
    };
    std::vector<Record> records(cfg.records);
    std::string passage;
    for (auto& r : records) {
      r.name = take();
      r.v1 = take();
      r.v2 = take();
      if (!passage.empty()) passage += ' ';
      passage += r.name + ' ';
      r.v1_start = static_cast<std::int64_t>(passage.size());
      passage += r.v1 + ' ';
      r.v2_start = static_cast<std::int64_t>(passage.size());
      passage += r.v2 + " .";
    }
    // Tags never collide with passage words of the same dialogue.
    Dialogue dlg;
    dlg.id = split_name + "_" + std::to_string(d);
    dlg.title = "synthetic " + std::to_string(d);
    dlg.section_title = "records";
    dlg.passage = passage;

    struct Direct {
      std::string tags;
      std::size_t record;
    };
    std::vector<Direct> open;  // direct turns not yet followed up
    for (std::size_t t = 0; t < cfg.turns; ++t) {
      Turn turn;
      turn.turn_index = t;
      const bool follow = !open.empty() && std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
                                               cfg.follow_up_rate;
      if (follow) {
        const std::size_t pick = draw(rng, open.size());
        const Direct ref = open[pick];
        open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
        const Record& r = records[ref.record];
        turn.question = ref.tags;
        turn.gold_answers.push_back({r.v2, r.v2_start});
      } else {
        const std::size_t rec = draw(rng, records.size());
        const std::string tags = take() + " " + take();
        const Record& r = records[rec];
        turn.question = tags + " " + r.name;
        turn.gold_answers.push_back({r.v1, r.v1_start});
        open.push_back({tags, rec});
      }
      dlg.turns.push_back(std::move(turn));
    }
    corpus.dialogues.push_back(std::move(dlg));
  }
  return corpus;
}

}  // namespace coqac
