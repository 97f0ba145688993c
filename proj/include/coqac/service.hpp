#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "coqac/encoder_model.hpp"
#include "coqac/engine.hpp"
#include "coqac/quac.hpp"
#include "coqac/tokenizer.hpp"
#include "json.hpp"

namespace coqac {

struct ServiceResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

struct ServiceOptions {
  InputConfig input;
  SelectionPolicy policy;
  std::size_t turn_cap = kMaxDialogueTurns;
  std::string persist_path;  // empty: sessions live in memory only
};

// Multi-turn QA sessions over one immutable model. Handlers take raw request
// bodies and return a status plus a JSON body, so they run the same with or
// without an HTTP server in front. Requests on different sessions run
// concurrently; requests on one session are serialized.
//
//   POST   /sessions            {"passage", "title"} | {"dialogue_id"}  -> 201
//   POST   /sessions/{id}/ask   {"question"}                           -> 200
//   GET    /sessions/{id}                                              -> 200
//   DELETE /sessions/{id}                                              -> 200
//   GET    /dialogues                                                  -> 200
class SessionService {
 public:
  SessionService(std::shared_ptr<const SpanModel> model, Vocabulary vocab, ServiceOptions options,
                 std::optional<Corpus> corpus = std::nullopt);

  ServiceResponse create_session(const std::string& body);
  ServiceResponse ask(const std::string& session_id, const std::string& body);
  ServiceResponse get_session(const std::string& session_id) const;
  ServiceResponse delete_session(const std::string& session_id);
  ServiceResponse list_dialogues() const;

  std::size_t session_count() const;
  // All sessions as JSON, and the reverse. restore() replaces live sessions.
  nlohmann::ordered_json snapshot() const;
  void restore(const nlohmann::json& snapshot);
  // Writes snapshot() to options.persist_path when one is set.
  void persist() const;

 private:
  struct TurnLog {
    std::string question;
    AnswerResult result;
  };
  struct Session {
    std::string id;
    std::string title;
    std::string passage;
    std::string created_at;
    std::vector<TurnLog> turns;
    mutable std::mutex mutex;
  };

  static nlohmann::ordered_json turn_json(std::size_t index, const TurnLog& t);
  nlohmann::ordered_json session_json(const Session& s) const;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_id();

  std::shared_ptr<const SpanModel> model_;
  Vocabulary vocab_;
  ServiceOptions options_;
  std::optional<Corpus> corpus_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex id_mutex_;
  std::mt19937_64 id_rng_;
};

// HTTP/1.1 routes for a service with permissive CORS. bind() takes port 0
// for any free port and returns the bound port; serve() blocks until stop().
class HttpFrontend {
 public:
  explicit HttpFrontend(SessionService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  int bind(const std::string& host, int port);
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Serves the handlers over HTTP/1.1 with permissive CORS until SIGINT or
// SIGTERM, then persists sessions.
void run_http_server(SessionService& service, const std::string& host, int port);

}  // namespace coqac
