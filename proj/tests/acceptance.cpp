// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <spdlog/spdlog.h>

#include "coqac/engine.hpp"
#include "coqac/evaluation.hpp"
#include "coqac/harness.hpp"
#include "coqac/history_selector.hpp"
#include "coqac/input_builder.hpp"
#include "coqac/service.hpp"
#include "coqac/synthetic.hpp"
#include "coqac/trainer.hpp"
#include "coqac/utf8.hpp"
#include "support.hpp"

using namespace coqac;
using namespace coqac::nn;
using coqac::testing::check_gradients;
using coqac::testing::GradCheck;
using coqac::testing::make_window;
using coqac::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures without stopping at the first one.
class Tally {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 3) failures_.push_back(what);
    failed_ += ok ? 0 : 1;
  }
  std::size_t checks() const { return checks_; }
  Outcome outcome(const std::string& summary) const {
    if (failed_ == 0) return {true, summary};
    std::string d = std::to_string(failed_) + "/" + std::to_string(checks_) + " checks failed";
    for (const auto& f : failures_) d += "; " + f;
    return {false, d};
  }

 private:
  std::size_t checks_ = 0, failed_ = 0;
  std::vector<std::string> failures_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome selector_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  Tally t;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 1.0);
  std::size_t cases = 0;
  for (int trial = 0; trial < 1000; ++trial, ++cases) {
    const std::size_t d = 1 + rng() % 32;
    TurnRepresentation h, q;
    for (std::size_t k = 0; k < d; ++k) {
      h.vector.push_back(n(rng));
      q.vector.push_back(n(rng));
    }
    const double s = relevance_score(h, q);
    t.expect(s >= -1.0 && s <= 1.0, "cosine range");
    t.expect(std::abs(s - relevance_score(q, h)) < 1e-12, "cosine symmetry");
    TurnRepresentation scaled = h;
    const double alpha = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
    for (double& v : scaled.vector) v *= alpha;
    t.expect(std::abs(relevance_score(scaled, q) - s) < 1e-9, "cosine scale invariance");

    std::vector<double> scores(1 + rng() % 11);
    for (double& v : scores) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto p = normalize_scores(scores);
    t.expect(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9, "softmax sum");
    std::vector<double> shifted = scores;
    const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
    for (double& v : shifted) v += c;
    const auto ps = normalize_scores(shifted);
    bool same = true;
    for (std::size_t i = 0; i < p.size(); ++i) same = same && std::abs(p[i] - ps[i]) < 1e-9;
    t.expect(same, "softmax shift invariance");
  }

  // Threshold monotonicity over real selections.
  std::vector<std::string> toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (int i = 0; i < 16; ++i) toks.push_back("w" + std::to_string(i));
  std::vector<double> table(toks.size() * 4);
  for (double& x : table) x = n(rng);
  const Vocabulary vocab(toks);
  const EmbeddingView view{table, vocab.size(), 4};
  for (int trial = 0; trial < 1000; ++trial, ++cases) {
    std::vector<HistoryTurnText> history(rng() % 12);
    for (auto& ht : history) {
      ht.question = "w" + std::to_string(rng() % 16) + " w" + std::to_string(rng() % 16);
      if (rng() % 2) ht.answer = "w" + std::to_string(rng() % 16);
    }
    const std::string q = "w" + std::to_string(rng() % 16);
    const double lo = std::uniform_real_distribution<double>(-1, 1)(rng);
    const double hi = std::uniform_real_distribution<double>(lo, 1)(rng);
    const auto a = select_turns(history, q, lo, 11, vocab, view);
    const auto b = select_turns(history, q, hi, 11, vocab, view);
    bool subset = true;
    for (std::size_t i : b.selected) {
      subset = subset && std::find(a.selected.begin(), a.selected.end(), i) != a.selected.end();
    }
    t.expect(subset, "threshold monotonicity");
    bool exact = true;
    for (std::size_t i = 0; i < a.scores.size(); ++i) {
      const bool in = std::find(a.selected.begin(), a.selected.end(), i) != a.selected.end();
      // With at most 11 history turns the cap never binds.
      exact = exact && in == (a.scores[i] >= lo);
    }
    t.expect(exact, "selected iff score >= threshold");
  }
  const double secs = seconds_since(t0);
  t.expect(secs < 10.0, "runtime " + fmt(secs) + " s >= 10 s");
  return t.outcome(std::to_string(cases) + " cases, " + std::to_string(t.checks()) + " checks, " +
                   fmt(secs, 3) + " s");
}

Outcome selector_fixtures() {
  Tally t;
  const double cos = relevance_score({{1, 0}}, {{1, 1}});
  // 0.70710678 is 1/sqrt(2) printed to 8 places; the tolerance applies to the
  // exact value, and the printed digits must match.
  t.expect(std::abs(cos - 1.0 / std::sqrt(2.0)) <= 1e-9, "cosine " + fmt(cos, 10));
  t.expect(fmt(cos, 8) == "0.70710678", "cosine digits " + fmt(cos, 8));
  const std::vector<double> s = {1, 0};
  const auto p = normalize_scores(s);
  t.expect(std::abs(p[0] - 0.73105858) <= 1e-6, "p0 " + fmt(p[0], 8));
  t.expect(std::abs(p[1] - 0.26894142) <= 1e-6, "p1 " + fmt(p[1], 8));
  return t.outcome("cos=" + fmt(cos, 10) + ", softmax=[" + fmt(p[0], 8) + ", " + fmt(p[1], 8) + "]");
}

Outcome windowing() {
  Tally t;
  const InputConfig cfg;  // 384 / 128
  const Vocabulary v = coqac::testing::tiny_vocab();
  std::mt19937_64 rng(202);
  std::size_t windows_total = 0;
  for (int pair = 0; pair < 200; ++pair) {
    const std::size_t q_len = 1 + rng() % (cfg.max_query_len - 1);
    const std::size_t p_len = 1 + rng() % 2000;
    std::string q, p;
    for (std::size_t i = 0; i < q_len; ++i) q += "cat ";
    for (std::size_t i = 0; i < p_len; ++i) p += "mat ";
    const auto seq = build_sequence(q, {}, p, {}, v, cfg);
    const std::size_t block = seq.question_block_len();
    const std::size_t cap = cfg.max_seq_len - block - 3;
    const auto ws = windowize(seq, cfg);
    windows_total += ws.size();
    const std::size_t expect_count = p_len <= cap ? 1 : (p_len - cap + cfg.doc_stride - 1) / cfg.doc_stride + 1;
    t.expect(ws.size() == expect_count, "window count");
    std::vector<int> covered(p_len, 0);
    for (std::size_t k = 0; k < ws.size(); ++k) {
      const auto& w = ws[k];
      t.expect(w.window_passage_offset == k * cfg.doc_stride, "offset");
      t.expect(w.size() <= cfg.max_seq_len, "length");
      const std::size_t len = w.passage_end - w.passage_begin;
      t.expect(len == std::min(cap, p_len - w.window_passage_offset), "slice length");
      for (std::size_t i = 0; i < len; ++i) ++covered[w.window_passage_offset + i];
      if (k + 1 < ws.size()) {
        const std::size_t next_begin = ws[k + 1].window_passage_offset;
        const std::size_t overlap = w.window_passage_offset + len - next_begin;
        t.expect(overlap == cap - cfg.doc_stride, "overlap");
      }
      t.expect(w.token_ids.size() == w.segment_ids.size() && w.token_ids.size() == w.hae_ids.size() &&
                   w.token_ids.size() == w.position_ids.size(),
               "lane lengths");
    }
    t.expect(std::all_of(covered.begin(), covered.end(), [](int c) { return c >= 1; }), "coverage");
  }
  return t.outcome("200 pairs, " + std::to_string(windows_total) + " windows");
}

Outcome hae_lane() {
  Tally t;
  std::vector<std::string> tokens = coqac::testing::tiny_vocab().tokens();
  const Vocabulary v(tokens);
  const std::vector<std::string> words = {"the", "cat",       "sat",     "on",    "mat",  "unaffable",
                                          "dog", "playing",   "Zürich",  "home",  "(it)", "ran,",
                                          "go?", "ünaffable", "catsat",  "a"};
  std::mt19937_64 rng(303);
  Dialogue d;
  d.id = "hae50";
  for (int i = 0; i < 220; ++i) d.passage += (i ? " " : "") + words[rng() % words.size()];
  const auto cps = utf8::decode(d.passage);
  const auto n_cp = static_cast<std::int64_t>(cps.size());
  for (std::size_t i = 0; i < 50; ++i) {
    Turn turn;
    turn.turn_index = i;
    turn.question = "where did the " + words[rng() % 5] + " go";
    if (rng() % 6 == 0) {
      turn.gold_answers.push_back({std::string(kCannotAnswer), -1});
      turn.is_unanswerable = true;
    } else {
      // Arbitrary code-point spans, including ones that cut words in half.
      const std::int64_t a = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n_cp - 1));
      const std::int64_t len = 1 + static_cast<std::int64_t>(rng() % 30);
      const std::int64_t b = std::min(n_cp, a + len);
      turn.gold_answers.push_back({utf8::substr(d.passage, static_cast<std::size_t>(a),
                                                static_cast<std::size_t>(b - a)),
                                   a});
    }
    d.turns.push_back(std::move(turn));
  }
  InputConfig cfg;
  cfg.max_seq_len = 128;
  cfg.doc_stride = 48;
  cfg.max_query_len = 100;
  const TokenizedText passage = tokenize(v, d.passage);
  std::size_t tokens_checked = 0, marked = 0;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    SelectionResult sel;
    for (std::size_t k = i > 11 ? i - 11 : 0; k < i; ++k) {
      if (rng() % 2) sel.selected.push_back(k);
    }
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    for (std::size_t k : sel.selected) {
      const auto& a = d.turns[k].primary_answer();
      if (!a.is_sentinel()) spans.emplace_back(a.char_start, a.char_end());
    }
    const auto ws = build_training_instance(d, i, sel, v, cfg);
    for (const auto& w : ws) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (!w.in_passage(j)) {
          t.expect(w.hae_ids[j] == 0, "hae outside passage");
          continue;
        }
        const std::size_t p = w.window_passage_offset + (j - w.passage_begin);
        const auto s = passage.char_spans[p].start, e = passage.char_spans[p].end;
        bool hit = false;
        for (const auto& [a, b] : spans) hit = hit || (s < b && a < e);
        t.expect(w.hae_ids[j] == (hit ? 1 : 0), "turn " + std::to_string(i) + " token " + std::to_string(p));
        ++tokens_checked;
        marked += hit ? 1 : 0;
      }
    }
  }
  return t.outcome("50 turns, " + std::to_string(tokens_checked) + " passage tokens, " +
                   std::to_string(marked) + " marked");
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  Tally t;
  std::mt19937_64 rng(404);
  auto weighted = [](Graph& g, Var x) {
    std::mt19937_64 r(99);
    return sum(mul(x, g.constant(random_tensor(x.shape(), r))));
  };
  using Fn = std::function<Var(Graph&, std::vector<Var>&)>;
  const std::vector<std::tuple<std::string, std::vector<Tensor>, Fn>> ops = {
      {"matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, matmul(v[0], v[1])); }},
      {"add", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, add(v[0], v[1])); }},
      {"mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, mul(v[0], v[1])); }},
      {"scale", {random_tensor({5}, rng)}, [&](Graph& g, auto& v) { return weighted(g, scale(v[0], -0.7)); }},
      {"sum", {random_tensor({2, 3}, rng)}, [&](Graph&, auto& v) { return sum(mul(v[0], v[0])); }},
      {"embedding", {random_tensor({5, 3}, rng)},
       [&](Graph& g, auto& v) {
         static const std::vector<std::int32_t> ids = {4, 1, 4, 0};
         return weighted(g, embedding(v[0], ids));
       }},
      {"layer_norm", {random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, layer_norm(v[0], v[1], v[2])); }},
      {"softmax", {random_tensor({3, 5}, rng, 2.0)}, [&](Graph& g, auto& v) { return weighted(g, softmax(v[0])); }},
      {"gelu", {random_tensor({4, 4}, rng, 2.0)}, [&](Graph& g, auto& v) { return weighted(g, gelu(v[0])); }},
      {"dropout", {random_tensor({4, 6}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, dropout(v[0], 0.3, 17)); }},
      {"reshape", {random_tensor({2, 6}, rng)}, [&](Graph& g, auto& v) { return weighted(g, reshape(v[0], {4, 3})); }},
      {"transpose", {random_tensor({2, 5}, rng)}, [&](Graph& g, auto& v) { return weighted(g, transpose(v[0])); }},
      {"slice_cols", {random_tensor({3, 5}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, slice_cols(v[0], 1, 3)); }},
      {"concat_cols", {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)},
       [&](Graph& g, auto& v) { return weighted(g, concat_cols({v[0], v[1]})); }},
      {"cross_entropy", {random_tensor({7}, rng, 2.0)}, [&](Graph&, auto& v) { return cross_entropy(v[0], 3); }},
  };
  double worst_op = 0;
  for (const auto& [name, inputs, f] : ops) {
    std::vector<Tensor> in = inputs;
    const GradCheck r = check_gradients(in, f);
    t.expect(r.checked > 0 && r.max_rel < 1e-4, name + " rel " + fmt(r.max_rel, 8));
    worst_op = std::max(worst_op, r.max_rel);
  }

  // Full model: every coordinate of every parameter array.
  ModelConfig mc;
  mc.layers = 2;
  mc.hidden = 16;
  mc.heads = 2;
  mc.ffn = 32;
  mc.vocab_size = 24;
  mc.max_positions = 24;
  mc.init_std = 0.2;
  mc.seed = 5;
  SpanModel model(mc);
  EncodedWindow w = make_window(3, 8, 24, rng);
  w.start_label = w.passage_begin + 2;
  w.end_label = w.passage_begin + 4;
  model.parameters().zero_grad();
  {
    Graph g;
    g.backward(model.loss(g, w));
  }
  auto loss_at = [&]() {
    Graph g(false);
    return model.loss(g, w).value().item();
  };
  double worst_model = 0;
  std::size_t coords = 0;
  for (auto& p : model.parameters().all()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + 1e-5;
      const double up = loss_at();
      p.value[i] = orig - 1e-5;
      const double down = loss_at();
      p.value[i] = orig;
      const double num = (up - down) / 2e-5;
      const double ana = p.grad.size() ? p.grad[i] : 0.0;
      if (std::abs(num) < 1e-7 && std::abs(ana) < 1e-7) continue;
      worst_model = std::max(worst_model, std::abs(num - ana) / std::max(std::abs(num), std::abs(ana)));
      ++coords;
    }
  }
  t.expect(worst_model < 1e-3, "model rel " + fmt(worst_model, 8));
  const double secs = seconds_since(t0);
  t.expect(secs < 60.0, "runtime " + fmt(secs) + " s >= 60 s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu ops max rel %.2e; model %zu coords max rel %.2e; %.2f s", ops.size(),
                worst_op, coords, worst_model, secs);
  return t.outcome(buf);
}

SpanChoice brute_force(const std::vector<std::vector<double>>& start, const std::vector<std::vector<double>>& end,
                       const std::vector<EncodedWindow>& windows, std::size_t max_len) {
  std::vector<std::tuple<double, std::size_t, std::size_t, std::size_t>> all;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& w = windows[k];
    all.emplace_back(-(start[k][0] + end[k][0]), k, 0, 0);
    for (std::size_t i = w.passage_begin; i < w.passage_end; ++i) {
      for (std::size_t j = i; j < w.passage_end; ++j) {
        if (j - i + 1 <= max_len) all.emplace_back(-(start[k][i] + end[k][j]), k, i, j);
      }
    }
  }
  const auto best = *std::min_element(all.begin(), all.end());
  return {std::get<1>(best), std::get<2>(best), std::get<3>(best), -std::get<0>(best)};
}

Outcome span_decode() {
  Tally t;
  std::mt19937_64 rng(505);
  std::size_t windows_seen = 0, cls_wins = 0, length_bound = 0;
  for (int q = 0; q < 50; ++q) {
    std::vector<EncodedWindow> ws;
    std::vector<std::vector<double>> s, e;
    for (std::size_t k = 1 + rng() % 3; k > 0; --k) {
      ws.push_back(make_window(1 + rng() % 8, 1 + rng() % 120, 40, rng));
      s.emplace_back(ws.back().size());
      e.emplace_back(ws.back().size());
      for (auto* vec : {&s.back(), &e.back()}) {
        for (double& x : *vec) {
          x = q % 2 ? static_cast<double>(rng() % 3) : std::normal_distribution<double>(0, 2)(rng);
        }
      }
      // Plant a long, strong pair so the length cap matters.
      if (q % 3 == 0 && ws.back().passage_end - ws.back().passage_begin > 45) {
        s.back()[ws.back().passage_begin] += 50;
        e.back()[ws.back().passage_begin + 44] += 50;
        e.back()[ws.back().passage_begin + 39] += 30;
      }
    }
    windows_seen += ws.size();
    const SpanChoice got = decode_span(s, e, ws, 40);
    const SpanChoice want = brute_force(s, e, ws, 40);
    t.expect(got == want, "question " + std::to_string(q));
    cls_wins += got.cannot_answer() ? 1 : 0;
    length_bound += got.end - got.start + 1 == 40 ? 1 : 0;
  }
  // CLS tie: an equal-scoring passage pair must lose to [CLS].
  EncodedWindow w = make_window(2, 6, 40, rng);
  std::vector<double> zs(w.size(), 0.0);
  t.expect(decode_window(zs, zs, w, 40).cannot_answer(), "cls tie");
  std::vector<double> st(w.size(), 0.0);
  st[0] = 1.0;
  st[w.passage_begin + 1] = 1.0;
  t.expect(decode_window(st, zs, w, 40).cannot_answer(), "cls tie with peak");
  return t.outcome(std::to_string(windows_seen) + " windows over 50 questions, " + std::to_string(cls_wins) +
                   " CANNOTANSWER, " + std::to_string(length_bound) + " at the length bound");
}

Outcome metric_oracles() {
  Tally t;
  const std::vector<std::string> ref = {"b c d"};
  t.expect(word_f1("a b c", ref) == 2.0 / 3.0, "word_f1 " + fmt(word_f1("a b c", ref), 17));
  const std::vector<double> sys = {90, 10, 80, 70};
  const std::vector<double> hum = {80, 50, 80, 60};
  const std::vector<std::string> ds = {"d1", "d1", "d1", "d2"};
  const HeqResult r = heq(sys, hum, ds);
  t.expect(r.heq_q == 75.0 && r.heq_d == 50.0, "heq " + fmt(r.heq_q) + "/" + fmt(r.heq_d));
  std::mt19937_64 rng(606);
  std::size_t full = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<double> s(n), h(n);
    std::vector<std::string> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 3);
      h[i] = static_cast<double>(rng() % 3);
      d[i] = "d" + std::to_string(rng() % 3);
    }
    const HeqResult x = heq(s, h, d);
    if (x.heq_d == 100.0) {
      ++full;
      t.expect(x.heq_q == 100.0, "heq_d=100 with heq_q=" + fmt(x.heq_q));
    }
  }
  return t.outcome("word_f1=2/3, HEQ fixture 75/50, " + std::to_string(full) + " full-HEQ-D cases");
}

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  sc.dialogues = 20;
  sc.turns = 8;
  sc.seed = 1;
  const Corpus corpus = make_synthetic_corpus(sc, "train");
  const Vocabulary vocab = build_vocab(corpus, 4000);
  ModelConfig mc;
  mc.layers = 2;
  mc.hidden = 64;
  mc.vocab_size = vocab.size();
  mc.seed = 1;
  const InputConfig input;
  TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 1;

  SpanModel model(mc);
  double best = 0;
  std::size_t reached_at = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t epoch, const SpanModel& m) {
    if (epoch % 5 != 0) return false;
    const auto preds = predict_corpus(m, vocab, corpus, tc.policy(), input);
    best = score_predictions(corpus, preds).f1;
    if (best >= 90.0) reached_at = epoch;
    return best >= 90.0;
  };
  const TrainResult run = train(model, corpus, vocab, input, tc, hooks);
  const double secs = seconds_since(t0);

  // Determinism: a fresh model with the same seeds repeats the first epoch.
  SpanModel again(mc);
  TrainConfig one = tc;
  one.epochs = 1;
  const TrainResult rerun = train(again, corpus, vocab, input, one);
  bool same = true;
  for (std::size_t i = 0; i < rerun.log.size(); ++i) same = same && rerun.log[i].loss == run.log[i].loss;

  Tally t;
  t.expect(reached_at > 0, "train F1 " + fmt(best) + " after " + std::to_string(run.epochs_run) + " epochs");
  t.expect(secs < 600.0, "runtime " + fmt(secs) + " s >= 600 s");
  t.expect(same, "rerun loss log differs");
  return t.outcome("train F1 " + fmt(best) + " at epoch " + std::to_string(reached_at) + ", " + fmt(secs, 1) +
                   " s, rerun identical");
}

Outcome efficacy() {
  const auto t0 = std::chrono::steady_clock::now();
  double on_total = 0, off_total = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticConfig sc;
    sc.dialogues = 150;
    sc.turns = 8;
    sc.seed = 100 + seed;
    const Corpus train_set = make_synthetic_corpus(sc, "train");
    sc.dialogues = 50;
    sc.seed = 900 + seed;
    const Corpus dev_set = make_synthetic_corpus(sc, "dev");
    const Vocabulary vocab = build_vocab(train_set, 4000);
    ExperimentConfig cfg;
    cfg.model.hidden = 32;
    cfg.model.ffn = 128;
    cfg.model.seed = seed;
    cfg.train.seed = seed;
    cfg.train.epochs = 30;
    cfg.train.learning_rate = 3e-3;
    cfg.train.history_k = 11;
    double f1[2] = {0, 0};
    for (int arm = 0; arm < 2; ++arm) {
      cfg.train.use_selector = arm == 0;
      f1[arm] = train_and_evaluate(train_set, dev_set, vocab, cfg).report.f1;
    }
    on_total += f1[0];
    off_total += f1[1];
    per_seed += (seed > 1 ? ", " : "") + std::string("seed ") + std::to_string(seed) + " on " + fmt(f1[0]) +
                " off " + fmt(f1[1]);
  }
  const double on = on_total / 3, off = off_total / 3;
  Tally t;
  t.expect(on >= off + 5.0, "gap " + fmt(on - off));
  return t.outcome("mean on " + fmt(on) + " vs off " + fmt(off) + " (gap " + fmt(on - off) + "); " + per_seed +
                   "; " + fmt(seconds_since(t0), 1) + " s");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome harness_ablate() {
  SyntheticConfig sc;
  sc.dialogues = 6;
  sc.turns = 12;
  sc.records = 4;
  sc.pool = 40;
  sc.seed = 7;
  const Corpus train_set = make_synthetic_corpus(sc, "train");
  sc.dialogues = 3;
  sc.seed = 8;
  const Corpus dev_set = make_synthetic_corpus(sc, "dev");
  const Vocabulary vocab = build_vocab(train_set, 500);
  ExperimentConfig cfg;
  cfg.model.layers = 1;
  cfg.model.hidden = 16;
  cfg.model.heads = 2;
  cfg.model.ffn = 32;
  cfg.model.max_positions = 128;
  cfg.input.max_seq_len = 128;
  cfg.input.doc_stride = 64;
  cfg.input.max_query_len = 96;
  cfg.train.epochs = 2;
  cfg.train.seed = 3;
  cfg.model.seed = 3;
  std::vector<std::size_t> ks(11);
  std::iota(ks.begin(), ks.end(), std::size_t{1});
  const fs::path a = fs::temp_directory_path() / "coqac_accept_ablate_a";
  const fs::path b = fs::temp_directory_path() / "coqac_accept_ablate_b";
  fs::remove_all(a);
  fs::remove_all(b);
  fs::create_directories(a);
  fs::create_directories(b);
  const AblationTable table = run_ablation(train_set, dev_set, vocab, cfg, ks, a.string());
  run_ablation(train_set, dev_set, vocab, cfg, ks, b.string());
  Tally t;
  t.expect(table.rows.size() == 11, "rows " + std::to_string(table.rows.size()));
  const std::string md = slurp(a / "ablation.md");
  t.expect(md.rfind("| k | F1 | HEQ-Q | HEQ-D |", 0) == 0, "markdown header");
  t.expect(std::count(md.begin(), md.end(), '\n') == 13, "markdown line count");
  for (const char* f : {"ablation.md", "ablation.tsv", "ablation.json"}) {
    t.expect(slurp(a / f) == slurp(b / f), std::string(f) + " differs between runs");
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return t.outcome("11 rows, best k=" + std::to_string(table.rows[table.best_row()].k) +
                   ", md/tsv/json byte-identical across runs");
}

Outcome service() {
  Tally t;
  const Vocabulary vocab = coqac::testing::tiny_vocab();
  ModelConfig mc;
  mc.layers = 1;
  mc.hidden = 16;
  mc.heads = 2;
  mc.ffn = 32;
  mc.vocab_size = vocab.size();
  mc.max_positions = 128;
  mc.init_std = 0.3;
  mc.seed = 2;
  const auto model = std::make_shared<const SpanModel>(mc);
  ServiceOptions opts;
  opts.input.max_seq_len = 128;
  opts.input.doc_stride = 64;
  opts.input.max_query_len = 96;
  const std::string passage = "The cat sat on the mat. The dog ran home. Where did it go? It went home.";
  const std::string create = nlohmann::json{{"passage", passage}}.dump();
  auto ask_body = [](const std::string& q) { return nlohmann::json{{"question", q}}.dump(); };
  const std::vector<std::string> script = {"where did the dog go?", "who sat on the mat?", "where did it go?"};

  SessionService svc(model, vocab, opts);
  const std::string a = svc.create_session(create).body.at("session_id");
  const std::string b = svc.create_session(create).body.at("session_id");
  std::vector<std::string> answers_a;
  for (const auto& q : script) answers_a.push_back(svc.ask(a, ask_body(q)).body.dump());
  const std::string b_before = svc.get_session(b).body.dump();
  svc.ask(a, ask_body("who ran home?"));
  t.expect(svc.get_session(b).body.dump() == b_before, "session b changed by asks on a");
  for (std::size_t i = 0; i < script.size(); ++i) {
    t.expect(svc.ask(b, ask_body(script[i])).body.dump() == answers_a[i], "answer differs for same history");
  }
  t.expect(svc.delete_session(a).status == 200, "delete a");
  t.expect(svc.get_session(b).body.at("turns").size() == script.size(), "b transcript after deleting a");

  SessionService other(model, vocab, opts);
  const std::string c = other.create_session(create).body.at("session_id");
  for (std::size_t i = 0; i < script.size(); ++i) {
    t.expect(other.ask(c, ask_body(script[i])).body.dump() == answers_a[i], "answer differs across services");
  }

  const std::string capped = svc.create_session(create).body.at("session_id");
  int last = 0;
  for (int i = 0; i < 12; ++i) last = svc.ask(capped, ask_body("who ran home?")).status;
  t.expect(last == 200, "12th ask status " + std::to_string(last));
  const int thirteenth = svc.ask(capped, ask_body("who ran home?")).status;
  t.expect(thirteenth == 409, "13th ask status " + std::to_string(thirteenth));
  return t.outcome("isolation and determinism hold; 13th ask -> " + std::to_string(thirteenth));
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"selector_properties", selector_properties},
      {"selector_fixtures", selector_fixtures},
      {"windowing", windowing},
      {"hae_lane", hae_lane},
      {"gradient_checks", gradient_checks},
      {"span_decode", span_decode},
      {"metric_oracles", metric_oracles},
      {"overfit", overfit},
      {"efficacy", efficacy},
      {"harness_ablate", harness_ablate},
      {"service", service},
  };
  // Optional arguments restrict the run to the named criteria.
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
