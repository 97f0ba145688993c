#include "coqac/service.hpp"

#include <csignal>
#include <ctime>
#include <fstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "coqac/error.hpp"

namespace coqac {

namespace {

ServiceResponse error_response(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::optional<nlohmann::json> parse_body(const std::string& body) {
  if (blank(body)) return std::nullopt;
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

}  // namespace

SessionService::SessionService(std::shared_ptr<const SpanModel> model, Vocabulary vocab,
                               ServiceOptions options, std::optional<Corpus> corpus)
    : model_(std::move(model)),
      vocab_(std::move(vocab)),
      options_(std::move(options)),
      corpus_(std::move(corpus)),
      id_rng_(std::random_device{}()) {
  if (!model_) throw UsageError("service needs a model");
  if (model_->config().vocab_size != vocab_.size()) {
    throw ConfigError("model vocabulary has " + std::to_string(model_->config().vocab_size) +
                      " entries but the tokenizer vocabulary has " + std::to_string(vocab_.size()));
  }
  options_.input.validate();
}

std::string SessionService::new_id() {
  std::lock_guard lock(id_mutex_);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_()));
  return buf;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ServiceResponse SessionService::create_session(const std::string& body) {
  const auto req = parse_body(body);
  if (!req) return error_response(400, "request body must be a JSON object");
  auto s = std::make_shared<Session>();
  s->created_at = utc_now();
  if (req->contains("dialogue_id")) {
    if (!(*req)["dialogue_id"].is_string()) return error_response(400, "dialogue_id must be a string");
    const std::string id = (*req)["dialogue_id"].get<std::string>();
    const Dialogue* d = corpus_ ? corpus_->find(id) : nullptr;
    if (d == nullptr) return error_response(404, "unknown dialogue id '" + id + "'");
    s->passage = d->passage;
    s->title = d->title;
  } else {
    const auto it = req->find("passage");
    if (it == req->end() || !it->is_string() || blank(it->get<std::string>())) {
      return error_response(400, "passage must be a nonempty string");
    }
    s->passage = it->get<std::string>();
    if (req->contains("title") && (*req)["title"].is_string()) s->title = (*req)["title"];
  }
  {
    std::unique_lock lock(sessions_mutex_);
    do {
      s->id = new_id();
    } while (sessions_.count(s->id) != 0);
    sessions_.emplace(s->id, s);
  }
  return {201, {{"session_id", s->id}, {"title", s->title}, {"passage", s->passage}}};
}

nlohmann::ordered_json SessionService::turn_json(std::size_t index, const TurnLog& t) {
  nlohmann::ordered_json j;
  j["turn_index"] = index;
  j["question"] = t.question;
  const auto result = to_json(t.result);
  for (const auto& [k, v] : result.items()) j[k] = v;
  return j;
}

nlohmann::ordered_json SessionService::session_json(const Session& s) const {
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.turns.size(); ++i) turns.push_back(turn_json(i, s.turns[i]));
  return {{"session_id", s.id}, {"title", s.title},          {"passage", s.passage},
          {"created_at", s.created_at}, {"turn_cap", options_.turn_cap}, {"turns", std::move(turns)}};
}

ServiceResponse SessionService::ask(const std::string& session_id, const std::string& body) {
  const auto s = find(session_id);
  if (!s) return error_response(404, "unknown session '" + session_id + "'");
  const auto req = parse_body(body);
  if (!req) return error_response(400, "request body must be a JSON object");
  const auto it = req->find("question");
  if (it == req->end() || !it->is_string() || blank(it->get<std::string>())) {
    return error_response(422, "question must be a nonempty string");
  }
  const std::string question = it->get<std::string>();

  std::lock_guard lock(s->mutex);
  if (s->turns.size() >= options_.turn_cap) {
    return error_response(409, "this session already holds " + std::to_string(options_.turn_cap) +
                                   " turns; start a new session to keep asking");
  }
  std::vector<HistoryEntry> history;
  for (const auto& t : s->turns) {
    HistoryEntry e{t.question, {}, std::nullopt};
    if (!t.result.unanswerable) {
      e.answer_text = t.result.text;
      e.answer_span = t.result.span;
    }
    history.push_back(std::move(e));
  }
  AnswerResult result;
  try {
    result = answer_question(*model_, vocab_, s->passage, history, question, options_.policy,
                             options_.input);
  } catch (const BuildError& e) {
    return error_response(422, e.what());
  }
  s->turns.push_back({question, std::move(result)});
  return {200, turn_json(s->turns.size() - 1, s->turns.back())};
}

ServiceResponse SessionService::get_session(const std::string& session_id) const {
  const auto s = find(session_id);
  if (!s) return error_response(404, "unknown session '" + session_id + "'");
  std::lock_guard lock(s->mutex);
  return {200, session_json(*s)};
}

ServiceResponse SessionService::delete_session(const std::string& session_id) {
  std::unique_lock lock(sessions_mutex_);
  if (sessions_.erase(session_id) == 0) {
    return error_response(404, "unknown session '" + session_id + "'");
  }
  return {200, {{"deleted", session_id}}};
}

ServiceResponse SessionService::list_dialogues() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  if (corpus_) {
    for (const auto& d : corpus_->dialogues) {
      arr.push_back({{"dialogue_id", d.id}, {"title", d.title}, {"section_title", d.section_title}});
    }
  }
  return {200, {{"dialogues", std::move(arr)}}};
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

nlohmann::ordered_json SessionService::snapshot() const {
  std::shared_lock lock(sessions_mutex_);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& [id, s] : sessions_) {
    std::lock_guard slock(s->mutex);
    arr.push_back(session_json(*s));
  }
  return {{"sessions", std::move(arr)}};
}

void SessionService::restore(const nlohmann::json& snap) {
  std::map<std::string, std::shared_ptr<Session>> restored;
  for (const auto& sj : snap.at("sessions")) {
    auto s = std::make_shared<Session>();
    s->id = sj.at("session_id").get<std::string>();
    s->title = sj.value("title", "");
    s->passage = sj.at("passage").get<std::string>();
    s->created_at = sj.value("created_at", "");
    for (const auto& tj : sj.at("turns")) {
      TurnLog t;
      t.question = tj.at("question").get<std::string>();
      t.result.text = tj.at("answer").get<std::string>();
      t.result.unanswerable = tj.at("unanswerable").get<bool>();
      if (!t.result.unanswerable) {
        t.result.span = {tj.at("char_span").at(0).get<std::int64_t>(),
                         tj.at("char_span").at(1).get<std::int64_t>()};
      }
      t.result.score = tj.at("score").get<double>();
      t.result.window = tj.at("window").get<std::size_t>();
      t.result.selection = selection_from_json(tj.at("selection"));
      t.result.window_scores = tj.at("window_scores").get<std::vector<double>>();
      t.result.dropped_history = tj.value("dropped_history", std::size_t{0});
      s->turns.push_back(std::move(t));
    }
    restored.emplace(s->id, std::move(s));
  }
  std::unique_lock lock(sessions_mutex_);
  sessions_ = std::move(restored);
}

void SessionService::persist() const {
  if (options_.persist_path.empty()) return;
  std::ofstream out(options_.persist_path);
  if (!out) throw Error("cannot write sessions to " + options_.persist_path);
  out << snapshot().dump(2) << '\n';
  spdlog::info("saved {} sessions to {}", session_count(), options_.persist_path);
}

namespace {

HttpFrontend* g_frontend = nullptr;

void stop_frontend(int) {
  if (g_frontend != nullptr) g_frontend->stop();
}

void reply(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

struct HttpFrontend::Impl {
  httplib::Server server;
};

HttpFrontend::HttpFrontend(SessionService& service) : impl_(std::make_unique<Impl>()) {
  httplib::Server& server = impl_->server;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.create_session(req.body));
  });
  server.Post(R"(/sessions/([^/]+)/ask)", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.ask(req.matches[1], req.body));
  });
  server.Get(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_session(req.matches[1]));
  });
  server.Delete(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.delete_session(req.matches[1]));
  });
  server.Get("/dialogues", [&service](const httplib::Request&, httplib::Response& res) {
    reply(res, service.list_dialogues());
  });
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    }
    spdlog::error("request failed: {}", msg);
    res.status = 500;
    res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpFrontend::serve() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() { impl_->server.stop(); }

void HttpFrontend::wait_until_ready() const { impl_->server.wait_until_ready(); }

void run_http_server(SessionService& service, const std::string& host, int port) {
  HttpFrontend frontend(service);
  const int bound = frontend.bind(host, port);
  g_frontend = &frontend;
  std::signal(SIGINT, stop_frontend);
  std::signal(SIGTERM, stop_frontend);
  spdlog::info("listening on {}:{}", host, bound);
  frontend.serve();
  g_frontend = nullptr;
  service.persist();
}

}  // namespace coqac
