#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "coqac/quac.hpp"

namespace coqac {

// History-dependent toy dialogues. A passage lists records "name v1 v2 .".
// A direct turn asks "tagA tagB name" and is answered by v1. A follow-up
// turn asks "tagA tagB" with the tags of an earlier direct turn and is
// answered by v2 of that turn's record, so the answer depends on exactly one
// prior turn and every other turn is a distractor.
struct SyntheticConfig {
  std::size_t dialogues = 20;
  std::size_t turns = 8;     // per dialogue, at most kMaxDialogueTurns
  std::size_t records = 6;   // per passage
  std::size_t pool = 120;    // distinct words shared by names, values and tags
  double follow_up_rate = 0.5;
  std::uint64_t seed = 0;       // dialogue layout
  std::uint64_t pool_seed = 0;  // word pool; keep it fixed across splits
};

// Pronounceable distinct words, deterministic in (count, seed).
std::vector<std::string> synthetic_words(std::size_t count, std::uint64_t seed);

// Throws ConfigError when the pool cannot fill a passage plus the tags.
Corpus make_synthetic_corpus(const SyntheticConfig& cfg, const std::string& split_name);

}  // namespace coqac
