#include "coqac/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "coqac/error.hpp"

namespace coqac {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key " + std::string(key) + ": cannot parse '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key " + std::string(key) + ": cannot parse '" + std::string(v) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("key " + std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;

template <typename T>
Setter size_field(T ExperimentConfig::*group, std::size_t T::*field) {
  return [group, field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    c.*group.*field = parse_number<std::size_t>(k, v);
  };
}

template <typename T>
Setter double_field(T ExperimentConfig::*group, double T::*field) {
  return [group, field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    c.*group.*field = parse_double(k, v);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"model.layers", size_field(&ExperimentConfig::model, &ModelConfig::layers)},
      {"model.hidden", size_field(&ExperimentConfig::model, &ModelConfig::hidden)},
      {"model.heads", size_field(&ExperimentConfig::model, &ModelConfig::heads)},
      {"model.ffn", size_field(&ExperimentConfig::model, &ModelConfig::ffn)},
      {"model.max_positions", size_field(&ExperimentConfig::model, &ModelConfig::max_positions)},
      {"model.init_std", double_field(&ExperimentConfig::model, &ModelConfig::init_std)},
      {"model.dropout", double_field(&ExperimentConfig::model, &ModelConfig::dropout)},
      {"model.seed",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.model.seed = parse_number<std::uint64_t>(k, v);
       }},
      {"input.max_seq_len", size_field(&ExperimentConfig::input, &InputConfig::max_seq_len)},
      {"input.doc_stride", size_field(&ExperimentConfig::input, &InputConfig::doc_stride)},
      {"input.max_answer_len", size_field(&ExperimentConfig::input, &InputConfig::max_answer_len)},
      {"input.max_history_k", size_field(&ExperimentConfig::input, &InputConfig::max_history_k)},
      {"input.max_query_len", size_field(&ExperimentConfig::input, &InputConfig::max_query_len)},
      {"train.batch_size", size_field(&ExperimentConfig::train, &TrainConfig::batch_size)},
      {"train.epochs", size_field(&ExperimentConfig::train, &TrainConfig::epochs)},
      {"train.learning_rate", double_field(&ExperimentConfig::train, &TrainConfig::learning_rate)},
      {"train.seed",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.train.seed = parse_number<std::uint64_t>(k, v);
       }},
      {"train.history_k", size_field(&ExperimentConfig::train, &TrainConfig::history_k)},
      {"train.use_selector",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.train.use_selector = parse_bool(k, v);
       }},
      {"train.threshold", double_field(&ExperimentConfig::train, &TrainConfig::threshold)},
      {"train.clip_norm", double_field(&ExperimentConfig::train, &TrainConfig::clip_norm)},
      {"vocab.max_size",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.vocab_max_size = parse_number<std::size_t>(k, v);
       }},
      {"data.train",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.train_path = v; }},
      {"data.dev", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.dev_path = v; }},
      {"data.vocab",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.vocab_path = v; }},
      {"harness.k_values",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         std::vector<std::size_t> ks;
         std::size_t pos = 0;
         while (pos <= v.size()) {
           const auto comma = v.find(',', pos);
           const auto item = trim(v.substr(pos, comma == std::string_view::npos ? v.npos : comma - pos));
           if (item.empty()) throw ConfigError("key " + std::string(k) + ": empty list item");
           ks.push_back(parse_number<std::size_t>(k, item));
           if (comma == std::string_view::npos) break;
           pos = comma + 1;
         }
         c.k_values = std::move(ks);
       }},
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, trim(value));
}

ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = line;
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(cfg, trim(l.substr(0, eq)), l.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  return {{"model", to_json(cfg.model)},
          {"input", to_json(cfg.input)},
          {"train", to_json(cfg.train)},
          {"vocab_max_size", cfg.vocab_max_size},
          {"train_path", cfg.train_path},
          {"dev_path", cfg.dev_path},
          {"vocab_path", cfg.vocab_path},
          {"k_values", cfg.k_values}};
}

}  // namespace coqac
