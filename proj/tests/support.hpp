#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "coqac/autograd.hpp"
#include "coqac/encoder_model.hpp"
#include "coqac/input_builder.hpp"
#include "coqac/tokenizer.hpp"

namespace coqac::testing {

inline std::string data_path(const std::string& name) { return std::string(COQAC_TEST_DATA) + "/" + name; }

// Small wordpiece vocabulary covering the fixtures used across tests.
inline Vocabulary tiny_vocab() {
  std::vector<std::string> t = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (const char* w : {"the", "cat", "sat", "on", "mat", "dog", "ran", "home", "where", "did",
                        "it", "go", "what", "who", "when", "was", "born", "in", "he", "a",
                        "un", "##aff", "##able", "play", "##ing", ".", ",", "?", "(", ")"}) {
    t.emplace_back(w);
  }
  return Vocabulary(std::move(t));
}

// Largest relative error between the analytic gradient of f at the leaves
// and central differences with step h. Relative error uses
// |a - n| / max(1e-8, |a| + |n|) * 2 on each coordinate, ignoring
// coordinates where both are below abs_floor.
struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t checked = 0;
};

inline GradCheck check_gradients(std::vector<nn::Tensor>& inputs,
                                 const std::function<nn::Var(nn::Graph&, std::vector<nn::Var>&)>& f,
                                 double h = 1e-5, double abs_floor = 1e-7) {
  std::vector<nn::Tensor> analytic;
  {
    nn::Graph g(true);
    std::vector<nn::Var> vars;
    for (auto& t : inputs) vars.push_back(g.variable(t));
    nn::Var out = f(g, vars);
    g.backward(out);
    for (auto& v : vars) analytic.push_back(g.grad(v));
  }
  auto eval = [&]() {
    nn::Graph g(false);
    std::vector<nn::Var> vars;
    for (auto& t : inputs) vars.push_back(g.constant(t));
    return f(g, vars).value().item();
  };
  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = eval();
      inputs[k][i] = orig - h;
      const double down = eval();
      inputs[k][i] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = analytic[k].size() == 0 ? 0.0 : analytic[k][i];
      const double diff = std::abs(num - ana);
      r.max_abs = std::max(r.max_abs, diff);
      if (std::abs(num) < abs_floor && std::abs(ana) < abs_floor) continue;
      r.max_rel = std::max(r.max_rel, diff / std::max(std::abs(num), std::abs(ana)));
      ++r.checked;
    }
  }
  return r;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.values()) v = n(rng);
  return t;
}

// A hand-made window: [CLS] q.. [SEP] passage.. [SEP] with the passage
// occupying [passage_begin, passage_end).
inline EncodedWindow make_window(std::size_t q_len, std::size_t p_len, std::size_t vocab_size,
                                 std::mt19937_64& rng) {
  EncodedWindow w;
  auto tok = [&]() { return static_cast<TokenId>(4 + rng() % (vocab_size - 4)); };
  auto push = [&](TokenId id, std::uint8_t seg, std::uint8_t hae, CharSpan span) {
    w.position_ids.push_back(static_cast<std::int32_t>(w.token_ids.size()));
    w.token_ids.push_back(id);
    w.segment_ids.push_back(seg);
    w.hae_ids.push_back(hae);
    w.char_spans.push_back(span);
  };
  push(2, 0, 0, {});
  for (std::size_t i = 0; i < q_len; ++i) push(tok(), 0, 0, {});
  push(3, 0, 0, {});
  w.passage_begin = w.token_ids.size();
  for (std::size_t i = 0; i < p_len; ++i) {
    const auto s = static_cast<std::int64_t>(4 * i);
    push(tok(), 1, static_cast<std::uint8_t>(rng() % 2), {s, s + 3});
  }
  w.passage_end = w.token_ids.size();
  push(3, 1, 0, {});
  return w;
}

}  // namespace coqac::testing
