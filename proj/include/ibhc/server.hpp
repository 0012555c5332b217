#pragma once

// HTTP front end for interactive sessions.
//
//   POST /sessions               {"dataset": name, ...session config} -> 201 {"id", "status"}
//   GET  /sessions/{id}/query    blocks until the next query is ready
//   POST /sessions/{id}/answer   {"accept": true} | {"triplet": [a, b, c]}
//                                | {"pair": [a, b], "outgroup": c}
//   GET  /sessions/{id}/state
//   GET  /healthz
//
// Errors carry {"code", "message"}.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ibhc/session.hpp"

namespace ibhc {

struct ServerOptions {
  // When set, each session writes <dir>/<id>.jsonl (answers) and
  // <dir>/<id>.jsonl.config.json.
  std::optional<std::filesystem::path> log_dir;
  std::chrono::milliseconds query_timeout{30000};
  // Served at / when set (the browser UI).
  std::optional<std::filesystem::path> static_dir;
};

// Parses an answer body. nullopt means accept. Throws AnswerError(400).
std::optional<Triplet> ParseAnswer(const nlohmann::json& body);

class SessionServer {
 public:
  SessionServer(std::vector<std::shared_ptr<const DatasetEntry>> datasets,
                ServerOptions options = {});
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  // Returns the bound port, or -1.
  int BindToAnyPort(const std::string& host);
  bool Bind(const std::string& host, int port);
  // Serves until Stop().
  bool ListenAfterBind();
  void Stop();
  void WaitUntilReady() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ibhc
