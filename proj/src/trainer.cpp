#include "coqac/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "coqac/adam.hpp"
#include "coqac/error.hpp"

namespace coqac {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (threshold < -1.0 || threshold > 1.0) throw ConfigError("threshold must lie in [-1, 1]");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"learning_rate", c.learning_rate}, {"seed", c.seed},
          {"history_k", c.history_k},   {"use_selector", c.use_selector},
          {"threshold", c.threshold},   {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.history_k = j.at("history_k").get<std::size_t>();
  c.use_selector = j.at("use_selector").get<bool>();
  c.threshold = j.at("threshold").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

nlohmann::ordered_json to_json(const LossRecord& r) {
  return {{"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss}, {"lr", r.lr},
          {"wall_time", r.wall_time}};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with our own index draws keeps the order independent of the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<EncodedWindow> build_instances(const Corpus& corpus, const Vocabulary& vocab,
                                           const InputConfig& input, const SelectionPolicy& policy,
                                           const EmbeddingView& embeddings) {
  std::vector<EncodedWindow> out;
  for (const auto& d : corpus.dialogues) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const auto history = history_texts(d, i);
      const SelectionResult sel = apply_policy(policy, history, d.turns[i].question, vocab, embeddings);
      for (auto& w : build_training_instance(d, i, sel, vocab, input)) out.push_back(std::move(w));
    }
  }
  return out;
}

namespace {

// One optimizer step over the windows; returns the mean loss.
double batch_step(SpanModel& model, nn::Adam& adam, const std::vector<const EncodedWindow*>& batch,
                  double clip_norm, std::uint64_t dropout_seed) {
  auto& params = model.parameters();
  params.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    nn::Graph g(true);
    nn::Var loss = model.loss(g, *batch[k], dropout_seed + k);
    total += loss.value().item();
    g.backward(nn::scale(loss, inv));
  }
  params.clip_grad_norm(clip_norm);
  adam.step(params);
  return total * inv;
}

}  // namespace

TrainResult train(SpanModel& model, const Corpus& corpus, const Vocabulary& vocab,
                  const InputConfig& input, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  input.validate();
  model.config().validate(input);
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("model vocabulary has " + std::to_string(model.config().vocab_size) +
                      " entries but the tokenizer vocabulary has " + std::to_string(vocab.size()));
  }
  std::ofstream log_file;
  if (!hooks.loss_log_path.empty()) {
    log_file.open(hooks.loss_log_path, std::ios::app);
    if (!log_file) throw Error("cannot open loss log " + hooks.loss_log_path);
  }

  nn::AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;
  nn::Adam adam(acfg, model.parameters());
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Snapshot so selection sees one embedding table for the whole epoch.
    const nn::Tensor snapshot = model.parameters().get("embeddings.token").value;
    const EmbeddingView view{snapshot.values(), snapshot.dim(0), snapshot.dim(1)};
    const auto instances = build_instances(corpus, vocab, input, cfg.policy(), view);
    if (instances.empty()) throw ConfigError("training corpus yields no instances");
    result.instance_count = instances.size();

    const auto order = epoch_order(instances.size(), cfg.seed, epoch);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const EncodedWindow*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k) {
        batch.push_back(&instances[order[k]]);
      }
      const double loss = batch_step(model, adam, batch, cfg.clip_norm, cfg.seed ^ (step << 20));
      ++step;
      ++batches;
      epoch_total += loss;
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      LossRecord rec{step, epoch, loss, cfg.learning_rate, wall};
      if (log_file) log_file << to_json(rec).dump() << '\n';
      result.log.push_back(rec);
    }
    result.epoch_losses.push_back(epoch_total / static_cast<double>(batches));
    result.epochs_run = epoch;
    spdlog::debug("epoch {} mean loss {:.6f}", epoch, result.epoch_losses.back());
    if (hooks.on_epoch && hooks.on_epoch(epoch, model)) break;
  }
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<double> train_steps(SpanModel& model, const std::vector<EncodedWindow>& batch,
                                std::size_t steps, double learning_rate, double clip_norm) {
  if (batch.empty()) throw ConfigError("train_steps: empty batch");
  nn::AdamConfig acfg;
  acfg.learning_rate = learning_rate;
  nn::Adam adam(acfg, model.parameters());
  std::vector<const EncodedWindow*> ptrs;
  for (const auto& w : batch) ptrs.push_back(&w);
  std::vector<double> losses;
  for (std::size_t s = 0; s < steps; ++s) losses.push_back(batch_step(model, adam, ptrs, clip_norm, s));
  return losses;
}

}  // namespace coqac
