#include "coqac/encoder_model.hpp"

#include <cmath>
#include <random>

#include "coqac/error.hpp"

namespace coqac {

using nn::Graph;
using nn::Shape;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("hidden (" + std::to_string(hidden) + ") must be a positive multiple of heads (" +
                      std::to_string(heads) + ")");
  }
  if (ffn == 0) throw ConfigError("ffn size must be positive");
  if (vocab_size < 4) throw ConfigError("vocab_size must cover at least the 4 specials");
  if (type_vocab != 2 || hae_vocab != 2) throw ConfigError("segment and hae vocabularies have 2 entries");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

void ModelConfig::validate(const InputConfig& input) const {
  validate();
  if (max_positions < input.max_seq_len) {
    throw ConfigError("max_positions " + std::to_string(max_positions) + " below max_seq_len " +
                      std::to_string(input.max_seq_len));
  }
}

nlohmann::ordered_json to_json(const ModelConfig& cfg) {
  return {{"layers", cfg.layers},         {"hidden", cfg.hidden},
          {"heads", cfg.heads},           {"ffn", cfg.ffn},
          {"vocab_size", cfg.vocab_size}, {"max_positions", cfg.max_positions},
          {"type_vocab", cfg.type_vocab}, {"hae_vocab", cfg.hae_vocab},
          {"init_std", cfg.init_std},     {"dropout", cfg.dropout},
          {"seed", cfg.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.type_vocab = j.at("type_vocab").get<std::size_t>();
  c.hae_vocab = j.at("hae_vocab").get<std::size_t>();
  c.init_std = j.at("init_std").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<bool> span_domain(const EncodedWindow& w, std::size_t length) {
  std::vector<bool> domain(length, false);
  if (length > 0) domain[0] = true;
  for (std::size_t i = w.passage_begin; i < w.passage_end && i < length; ++i) domain[i] = true;
  return domain;
}

namespace {

Tensor mask_tensor(const std::vector<bool>& domain) {
  Tensor m({domain.size()});
  for (std::size_t i = 0; i < domain.size(); ++i) m[i] = domain[i] ? 0.0 : kMaskedLogit;
  return m;
}

Var head_logits(Var tokens, Var vec, Var mask) {
  const std::size_t n = tokens.value().dim(0);
  const std::size_t d = tokens.value().dim(1);
  Var col = nn::reshape(vec, {d, 1});
  Var scores = nn::reshape(nn::matmul(tokens, col), {n});
  return nn::add(scores, mask);
}

std::vector<std::string> parameter_names(const ModelConfig& cfg) {
  std::vector<std::string> names = {"embeddings.token", "embeddings.position",
                                    "embeddings.segment", "embeddings.hae"};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* s : {"attn_ln.gain", "attn_ln.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk",
                          "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ffn_ln.gain", "ffn_ln.bias",
                          "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2"}) {
      names.push_back(p + s);
    }
  }
  for (const char* s : {"final_ln.gain", "final_ln.bias", "span.start", "span.end"}) names.push_back(s);
  return names;
}

Shape parameter_shape(const ModelConfig& cfg, const std::string& name) {
  const std::size_t d = cfg.hidden;
  if (name == "embeddings.token") return {cfg.vocab_size, d};
  if (name == "embeddings.position") return {cfg.max_positions, d};
  if (name == "embeddings.segment") return {cfg.type_vocab, d};
  if (name == "embeddings.hae") return {cfg.hae_vocab, d};
  if (name.ends_with("ffn.w1")) return {d, cfg.ffn};
  if (name.ends_with("ffn.b1")) return {cfg.ffn};
  if (name.ends_with("ffn.w2")) return {cfg.ffn, d};
  if (name.ends_with(".wq") || name.ends_with(".wk") || name.ends_with(".wv") ||
      name.ends_with(".wo")) {
    return {d, d};
  }
  return {d};
}

}  // namespace

SpanLogits span_logits(Var tokens, Var start_vec, Var end_vec, const std::vector<bool>& domain) {
  if (tokens.value().rank() != 2 || tokens.value().dim(0) != domain.size()) {
    throw UsageError("span_logits: token matrix " + nn::shape_string(tokens.value().shape()) +
                     " does not match domain of " + std::to_string(domain.size()));
  }
  Var mask = tokens.graph()->constant(mask_tensor(domain));
  return {head_logits(tokens, start_vec, mask), head_logits(tokens, end_vec, mask)};
}

std::pair<Var, Var> span_probabilities(const SpanLogits& logits) {
  return {nn::softmax(logits.start), nn::softmax(logits.end)};
}

Var span_loss(const SpanLogits& logits, const std::vector<bool>& domain, std::size_t start_label,
              std::size_t end_label) {
  if (start_label >= domain.size() || !domain[start_label] || end_label >= domain.size() ||
      !domain[end_label]) {
    throw UsageError("span_loss: label (" + std::to_string(start_label) + ", " +
                     std::to_string(end_label) + ") falls on a masked position");
  }
  Var total = nn::add(nn::cross_entropy(logits.start, start_label),
                      nn::cross_entropy(logits.end, end_label));
  return nn::scale(total, 0.5);
}

SpanModel::SpanModel(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> normal(0.0, cfg_.init_std);
  for (const auto& name : parameter_names(cfg_)) {
    Tensor t(parameter_shape(cfg_, name));
    if (name.ends_with(".gain")) {
      t.fill(1.0);
    } else if (name.ends_with(".bias") || name.ends_with(".bq") || name.ends_with(".bk") ||
               name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1") ||
               name.ends_with(".b2")) {
      t.fill(0.0);
    } else {
      for (double& v : t.values()) v = normal(rng);
    }
    params_.add(name, std::move(t));
  }
}

SpanModel::SpanModel(ModelConfig cfg, nn::ParameterSet params) : cfg_(cfg) {
  cfg_.validate();
  for (const auto& name : parameter_names(cfg_)) {
    if (!params.contains(name)) throw CheckpointError("checkpoint lacks parameter " + name);
    const Tensor& v = params.get(name).value;
    if (v.shape() != parameter_shape(cfg_, name)) {
      throw CheckpointError("parameter " + name + " has shape " + nn::shape_string(v.shape()) +
                            ", config expects " + nn::shape_string(parameter_shape(cfg_, name)));
    }
    params_.add(name, v);
  }
}

EmbeddingView SpanModel::token_embeddings() const {
  const Tensor& t = params_.get("embeddings.token").value;
  return {t.values(), t.dim(0), t.dim(1)};
}

template <typename Bind>
Var SpanModel::forward(Graph& g, const EncodedWindow& w, std::size_t pad_to, Bind&& bind,
                       std::uint64_t dropout_seed, bool training) const {
  const std::size_t n = w.size();
  const std::size_t len = std::max(n, pad_to);
  if (len == 0) throw UsageError("encode: empty window");
  if (len > cfg_.max_positions) {
    throw UsageError("encode: length " + std::to_string(len) + " exceeds max_positions " +
                     std::to_string(cfg_.max_positions));
  }
  if (w.segment_ids.size() != n || w.hae_ids.size() != n || w.position_ids.size() != n) {
    throw UsageError("encode: window lanes have unequal lengths");
  }
  std::vector<std::int32_t> tok(len, 0), pos(len), seg(len, 0), hae(len, 0);
  for (std::size_t i = 0; i < len; ++i) {
    pos[i] = static_cast<std::int32_t>(i);
    if (i < n) {
      tok[i] = w.token_ids[i];
      pos[i] = w.position_ids[i];
      seg[i] = w.segment_ids[i];
      hae[i] = w.hae_ids[i];
    }
  }

  Var x = nn::embedding(bind("embeddings.token"), tok);
  x = nn::add(x, nn::embedding(bind("embeddings.position"), pos));
  x = nn::add(x, nn::embedding(bind("embeddings.segment"), seg));
  x = nn::add(x, nn::embedding(bind("embeddings.hae"), hae));

  std::optional<Var> attn_mask;
  if (len > n) {
    Tensor m({len, len});
    for (std::size_t r = 0; r < len; ++r) {
      for (std::size_t c = n; c < len; ++c) m[r * len + c] = kMaskedLogit;
    }
    attn_mask = g.constant(std::move(m));
  }

  const std::size_t d = cfg_.hidden;
  const std::size_t dh = d / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const double p_drop = training ? cfg_.dropout : 0.0;
  std::uint64_t drop_counter = dropout_seed;

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Var h = nn::layer_norm(x, bind(p + "attn_ln.gain"), bind(p + "attn_ln.bias"));
    Var q = nn::add(nn::matmul(h, bind(p + "attn.wq")), bind(p + "attn.bq"));
    Var k = nn::add(nn::matmul(h, bind(p + "attn.wk")), bind(p + "attn.bk"));
    Var v = nn::add(nn::matmul(h, bind(p + "attn.wv")), bind(p + "attn.bv"));
    std::vector<Var> heads;
    heads.reserve(cfg_.heads);
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      Var qh = nn::slice_cols(q, hd * dh, dh);
      Var kh = nn::slice_cols(k, hd * dh, dh);
      Var vh = nn::slice_cols(v, hd * dh, dh);
      Var scores = nn::scale(nn::matmul(qh, nn::transpose(kh)), inv_sqrt_dh);
      if (attn_mask) scores = nn::add(scores, *attn_mask);
      heads.push_back(nn::matmul(nn::softmax(scores), vh));
    }
    Var attn = nn::add(nn::matmul(nn::concat_cols(heads), bind(p + "attn.wo")), bind(p + "attn.bo"));
    x = nn::add(x, nn::dropout(attn, p_drop, drop_counter++));

    Var h2 = nn::layer_norm(x, bind(p + "ffn_ln.gain"), bind(p + "ffn_ln.bias"));
    Var f = nn::gelu(nn::add(nn::matmul(h2, bind(p + "ffn.w1")), bind(p + "ffn.b1")));
    f = nn::add(nn::matmul(f, bind(p + "ffn.w2")), bind(p + "ffn.b2"));
    x = nn::add(x, nn::dropout(f, p_drop, drop_counter++));
  }
  return nn::layer_norm(x, bind("final_ln.gain"), bind("final_ln.bias"));
}

Var SpanModel::encode(Graph& g, const EncodedWindow& w, std::size_t pad_to) const {
  auto bind = [&](const std::string& name) { return g.constant_ref(params_.get(name).value); };
  return forward(g, w, pad_to, bind, 0, false);
}

Var SpanModel::encode_trainable(Graph& g, const EncodedWindow& w, std::size_t pad_to,
                                std::uint64_t dropout_seed) {
  auto bind = [&](const std::string& name) { return g.parameter(params_.get(name)); };
  return forward(g, w, pad_to, bind, dropout_seed, true);
}

SpanLogits SpanModel::logits(Graph& g, const EncodedWindow& w) const {
  Var t = encode(g, w);
  return span_logits(t, g.constant_ref(params_.get("span.start").value),
                     g.constant_ref(params_.get("span.end").value), span_domain(w, w.size()));
}

Var SpanModel::loss(Graph& g, const EncodedWindow& w, std::uint64_t dropout_seed) {
  Var t = encode_trainable(g, w, 0, dropout_seed);
  const auto domain = span_domain(w, w.size());
  SpanLogits lg = span_logits(t, g.parameter(params_.get("span.start")),
                              g.parameter(params_.get("span.end")), domain);
  return span_loss(lg, domain, w.start_label, w.end_label);
}

nlohmann::json checkpoint_header(const ModelConfig& model, const InputConfig& input) {
  return {{"model", to_json(model)}, {"input", to_json(input)}};
}

void save_model(const std::string& path, const SpanModel& model, const InputConfig& input) {
  nn::save_checkpoint(path, checkpoint_header(model.config(), input), model.parameters());
}

LoadedModel model_from_checkpoint(nn::Checkpoint ck, const std::optional<ModelConfig>& expected) {
  if (!ck.header.contains("model") || !ck.header.contains("input")) {
    throw CheckpointError("checkpoint header lacks model/input configuration");
  }
  const ModelConfig stored = model_config_from_json(ck.header["model"]);
  if (expected && !(*expected == stored)) {
    throw CheckpointError("checkpoint model config " + to_json(stored).dump() +
                          " does not match requested " + to_json(*expected).dump());
  }
  return {SpanModel(stored, std::move(ck.params)), input_config_from_json(ck.header["input"])};
}

LoadedModel load_model(const std::string& path, const std::optional<ModelConfig>& expected) {
  return model_from_checkpoint(nn::load_checkpoint(path), expected);
}

}  // namespace coqac
