#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "coqac/encoder_model.hpp"
#include "coqac/error.hpp"
#include "support.hpp"

using namespace coqac;
using namespace coqac::nn;
using coqac::testing::make_window;

namespace {

ModelConfig small_config(std::size_t layers = 2, std::size_t hidden = 16) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.hidden = hidden;
  cfg.heads = 2;
  cfg.ffn = 2 * hidden;
  cfg.vocab_size = 40;
  cfg.max_positions = 64;
  cfg.init_std = 0.2;
  cfg.seed = 3;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::size_t domain_size(const std::vector<bool>& d) {
  return static_cast<std::size_t>(std::count(d.begin(), d.end(), true));
}

// Loss of one labelled window, no tape.
double loss_value(SpanModel& m, const EncodedWindow& w) {
  Graph g(false);
  return m.loss(g, w).value().item();
}

}  // namespace

TEST_SUITE("encoder_model") {

TEST_CASE("config validation and json round trip") {
  ModelConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  CHECK(model_config_from_json(nlohmann::json::parse(to_json(cfg).dump())) == cfg);
  ModelConfig bad = cfg;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.vocab_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  InputConfig in;
  CHECK_THROWS_AS(cfg.validate(in), ConfigError);
  in.max_seq_len = 64;
  in.doc_stride = 16;
  in.max_query_len = 20;
  CHECK_NOTHROW(cfg.validate(in));
}

TEST_CASE("encode shape and id range") {
  std::mt19937_64 rng(1);
  const SpanModel m(small_config());
  const EncodedWindow w = make_window(3, 9, 40, rng);
  Graph g(false);
  CHECK(m.encode(g, w).shape() == Shape{w.size(), 16});
  EncodedWindow bad = w;
  bad.token_ids[1] = 40;
  Graph g2(false);
  CHECK_THROWS_AS(m.encode(g2, bad), UsageError);
}

TEST_CASE("flipping one hae id changes the representation") {
  std::mt19937_64 rng(2);
  const SpanModel m(small_config());
  EncodedWindow w = make_window(3, 9, 40, rng);
  Graph g(false);
  const Tensor before = m.encode(g, w).value();
  w.hae_ids[w.passage_begin + 2] ^= 1;
  const Tensor after = m.encode(g, w).value();
  CHECK(max_abs_diff(before, after) > 1e-6);
}

TEST_CASE("zero layers reduce to the final norm of the embedding sum") {
  std::mt19937_64 rng(3);
  const SpanModel m(small_config(0, 8));
  const EncodedWindow w = make_window(2, 5, 40, rng);
  Graph g(false);
  const Tensor t = m.encode(g, w).value();
  const auto& P = m.parameters();
  const Tensor& tok = P.get("embeddings.token").value;
  const Tensor& pos = P.get("embeddings.position").value;
  const Tensor& seg = P.get("embeddings.segment").value;
  const Tensor& hae = P.get("embeddings.hae").value;
  const Tensor& gain = P.get("final_ln.gain").value;
  const Tensor& bias = P.get("final_ln.bias").value;
  double worst = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::vector<double> x(8);
    for (std::size_t k = 0; k < 8; ++k) {
      x[k] = tok.at(static_cast<std::size_t>(w.token_ids[i]), k) +
             pos.at(static_cast<std::size_t>(w.position_ids[i]), k) + seg.at(w.segment_ids[i], k) +
             hae.at(w.hae_ids[i], k);
    }
    double mean = 0, var = 0;
    for (double v : x) mean += v / 8;
    for (double v : x) var += (v - mean) * (v - mean) / 8;
    for (std::size_t k = 0; k < 8; ++k) {
      const double expect = (x[k] - mean) / std::sqrt(var + 1e-12) * gain[k] + bias[k];
      worst = std::max(worst, std::abs(expect - t.at(i, k)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("span probabilities") {
  std::mt19937_64 rng(4);
  const EncodedWindow w = make_window(3, 6, 40, rng);
  const auto domain = span_domain(w, w.size());
  const std::size_t m = domain_size(domain);
  CHECK(m == 7);
  Graph g(false);
  const Var tokens = g.constant(coqac::testing::random_tensor({w.size(), 4}, rng));

  SUBCASE("zero vectors give uniform mass over the domain") {
    const Var zero = g.constant(Tensor({4}, 0.0));
    const auto [ps, pe] = span_probabilities(span_logits(tokens, zero, zero, domain));
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (domain[i]) {
        CHECK(std::abs(ps.value()[i] - 1.0 / 7) < 1e-12);
      } else {
        CHECK(ps.value()[i] < 1e-12);
      }
    }
    const double loss = span_loss(span_logits(tokens, zero, zero, domain), domain, 0, 0).value().item();
    CHECK(std::abs(loss - std::log(7.0)) < 1e-12);
  }
  SUBCASE("random vectors: normalized and masked") {
    const Var s = g.constant(coqac::testing::random_tensor({4}, rng, 3.0));
    const Var e = g.constant(coqac::testing::random_tensor({4}, rng, 3.0));
    const auto [ps, pe] = span_probabilities(span_logits(tokens, s, e, domain));
    double ts = 0, te = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      ts += ps.value()[i];
      te += pe.value()[i];
      if (!domain[i]) {
        CHECK(ps.value()[i] < 1e-12);
        CHECK(pe.value()[i] < 1e-12);
      }
    }
    CHECK(std::abs(ts - 1) < 1e-9);
    CHECK(std::abs(te - 1) < 1e-9);
  }
  SUBCASE("a row dominating by 20 takes the mass") {
    Tensor t({w.size(), 2}, 0.0);
    const std::size_t j = w.passage_begin + 3;
    t.at(j, 0) = 20;
    const Var s = g.constant(Tensor({2}, {1, 0}));
    const auto [ps, pe] = span_probabilities(span_logits(g.constant(t), s, s, domain));
    CHECK(ps.value()[j] > 0.999);
    CHECK(std::abs(ps.value()[j] - std::exp(20.0) / (std::exp(20.0) + 6)) < 1e-12);
  }
}

TEST_CASE("span loss examples") {
  Graph g(false);
  const std::vector<bool> domain = {true, true};
  const Var t = g.constant(Tensor({2, 1}, {2, 0}));
  const Var one = g.constant(Tensor({1}, {1.0}));
  const double loss = span_loss(span_logits(t, one, one, domain), domain, 0, 0).value().item();
  CHECK(std::abs(loss - -std::log(std::exp(2.0) / (std::exp(2.0) + 1))) < 1e-12);
  CHECK(std::abs(loss - 0.1269) < 1e-4);
  const Var peaked = g.constant(Tensor({2, 1}, {60, 0}));
  CHECK(span_loss(span_logits(peaked, one, one, domain), domain, 0, 0).value().item() < 1e-20);
  const std::vector<bool> partial = {true, false};
  CHECK_THROWS_AS(span_loss(span_logits(t, one, one, partial), partial, 1, 1), UsageError);
}

TEST_CASE("padding leaves the real rows unchanged") {
  std::mt19937_64 rng(5);
  const SpanModel m(small_config());
  const EncodedWindow w = make_window(4, 10, 40, rng);
  Graph g(false);
  const Tensor plain = m.encode(g, w).value();
  const Tensor padded = m.encode(g, w, w.size() + 7).value();
  REQUIRE(padded.dim(0) == w.size() + 7);
  double worst = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t k = 0; k < 16; ++k) worst = std::max(worst, std::abs(plain.at(i, k) - padded.at(i, k)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("end-to-end gradient check on a two layer d=16 model") {
  std::mt19937_64 rng(6);
  SpanModel m(small_config(2, 16));
  EncodedWindow w = make_window(3, 8, 40, rng);
  w.start_label = w.passage_begin + 2;
  w.end_label = w.passage_begin + 4;
  m.parameters().zero_grad();
  {
    Graph g;
    g.backward(m.loss(g, w));
  }
  // Every parameter array is probed at up to 12 coordinates.
  const double h = 1e-5;
  double worst = 0;
  std::size_t checked = 0;
  for (auto& p : m.parameters().all()) {
    for (int probe = 0; probe < 12; ++probe) {
      const std::size_t i = rng() % p.value.size();
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = loss_value(m, w);
      p.value[i] = orig - h;
      const double down = loss_value(m, w);
      p.value[i] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = p.grad.size() ? p.grad[i] : 0.0;
      if (std::abs(num) < 1e-7 && std::abs(ana) < 1e-7) continue;
      worst = std::max(worst, std::abs(num - ana) / std::max(std::abs(num), std::abs(ana)));
      ++checked;
    }
  }
  CHECK(checked > 100);
  CHECK(worst < 1e-3);
}

TEST_CASE("the history answer embedding receives gradient") {
  std::mt19937_64 rng(7);
  SpanModel m(small_config());
  m.parameters().zero_grad();
  for (int b = 0; b < 3; ++b) {
    EncodedWindow w = make_window(2, 8, 40, rng);
    w.hae_ids[w.passage_begin] = 1;
    w.start_label = w.passage_begin + 1;
    w.end_label = w.passage_begin + 1;
    Graph g;
    g.backward(m.loss(g, w));
  }
  const Tensor& grad = m.parameters().get("embeddings.hae").grad;
  double row1 = 0;
  for (std::size_t k = 0; k < 16; ++k) row1 += std::abs(grad.at(1, k));
  CHECK(row1 > 0);
}

TEST_CASE("save and load keep outputs identical and reject config mismatches") {
  std::mt19937_64 rng(8);
  const SpanModel m(small_config());
  InputConfig in;
  in.max_seq_len = 64;
  in.doc_stride = 16;
  in.max_query_len = 20;
  const auto path = (std::filesystem::temp_directory_path() / "coqac_model_test.ckpt").string();
  save_model(path, m, in);
  const LoadedModel back = load_model(path, small_config());
  CHECK(back.input == in);
  const EncodedWindow w = make_window(3, 7, 40, rng);
  Graph g(false);
  CHECK(m.encode(g, w).value() == back.model.encode(g, w).value());

  ModelConfig other = small_config();
  other.hidden = 8;
  CHECK_THROWS_AS(load_model(path, other), CheckpointError);

  ParameterSet missing;
  for (const auto& p : m.parameters().all()) {
    if (p.name != "span.start") missing.add(p.name, p.value);
  }
  CHECK_THROWS_AS(SpanModel(small_config(), std::move(missing)), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("initialization is seed-deterministic") {
  const SpanModel a(small_config()), b(small_config());
  ModelConfig c = small_config();
  c.seed = 4;
  const SpanModel d(c);
  CHECK(a.parameters().get("layer0.attn.wq").value == b.parameters().get("layer0.attn.wq").value);
  CHECK(a.parameters().get("layer0.attn.wq").value != d.parameters().get("layer0.attn.wq").value);
  CHECK(a.parameters().get("final_ln.gain").value == Tensor({16}, 1.0));
}

}  // TEST_SUITE
