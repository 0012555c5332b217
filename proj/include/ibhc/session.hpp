#pragma once

// Live interactive sessions: a sampler that pauses at every query boundary
// until the user answers, and its single-threaded core used for replay.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ibhc/dataset.hpp"
#include "ibhc/querying.hpp"
#include "ibhc/sampler.hpp"

namespace ibhc {

// A dataset the server can open sessions on, with its target when known.
struct DatasetEntry {
  std::string name;
  Dataset data;
  std::optional<Tree> target;
};

struct SessionConfig {
  std::string dataset;
  QueryScheme scheme;
  std::size_t iterations_per_query = 100;
  std::uint64_t seed = 0;
  std::optional<double> sigma2;
  double c = 1.0;
  std::size_t trace_capacity = 20;
  std::size_t snapshot_stride = 5;
  bool track_target = true;  // report triplet distance when a target exists
  SamplerOptions sampler;
};

// Throws std::invalid_argument on bad fields.
SessionConfig ParseSessionConfig(const nlohmann::json& j);
nlohmann::json ToJson(const SessionConfig& config);

// Rejected answer; `status` is the HTTP status to report (400 or 409).
class AnswerError : public std::runtime_error {
 public:
  AnswerError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct PendingQuery {
  std::size_t query_index = 0;
  SchemeKind turn = SchemeKind::kRandom;
  std::vector<int> subset;
  Tree shown;
};

// Tree as Newick (leaves labeled by dataset index) plus one entry per node in
// preorder, children in Newick order: {"id", "parent", "time", "leaf"}.
nlohmann::json TreePayload(const Tree& tree);

// Deterministic session state machine: sample a block, pose a query, take
// the answer, repeat. Not thread-safe.
class SessionEngine {
 public:
  SessionEngine(std::shared_ptr<const DatasetEntry> data, const SessionConfig& config);

  // One sampler iteration. Not allowed while a query is pending.
  void Iterate();
  std::size_t iterations_per_query() const { return config_.iterations_per_query; }
  // Picks the next query from the current state.
  const PendingQuery& PoseQuery();
  const std::optional<PendingQuery>& pending() const { return pending_; }
  // nullopt accepts the shown tree. Throws AnswerError, leaving the query
  // pending and the state unchanged.
  void Answer(const std::optional<Triplet>& answer);

  const Chain& chain() const { return chain_; }
  const std::vector<QueryRecord>& log() const { return log_; }
  nlohmann::json QueryJson() const;
  nlohmann::json StateJson() const;

 private:
  void RecordSeries();

  std::shared_ptr<const DatasetEntry> data_;
  SessionConfig config_;
  std::vector<int> leaves_;
  std::optional<LcaIndex> target_;
  Chain chain_;
  SampleTrace trace_;
  Rng query_rng_;
  std::uint64_t block_iterations_ = 0;
  std::optional<PendingQuery> pending_;
  std::vector<QueryRecord> log_;
  std::vector<double> log_posterior_series_;
  std::vector<double> distance_series_;
};

// Re-runs a session from its config and query log; returns the final tree.
// Throws std::runtime_error if the log does not match the replayed queries.
Tree ReplaySession(std::shared_ptr<const DatasetEntry> data, const SessionConfig& config,
                   const std::vector<QueryRecord>& log);

// A session driven by its own worker thread. Handlers talk to the worker
// through a command queue and read immutable published snapshots.
class Session {
 public:
  Session(std::string id, std::shared_ptr<const DatasetEntry> data, const SessionConfig& config,
          std::optional<std::filesystem::path> log_path = std::nullopt);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }

  // Waits for the worker to reach the query boundary. nullopt on timeout.
  std::optional<nlohmann::json> GetQuery(std::chrono::milliseconds timeout);
  // Throws AnswerError.
  nlohmann::json PostAnswer(const std::optional<Triplet>& answer);
  nlohmann::json GetState() const;

 private:
  struct Command {
    std::optional<Triplet> answer;
    std::promise<nlohmann::json> reply;
  };

  void Work(std::unique_ptr<SessionEngine> engine);
  void Publish(const SessionEngine& engine, std::string status, bool with_query);

  std::string id_;
  std::optional<std::filesystem::path> log_path_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Command> inbox_;
  bool stop_ = false;
  std::shared_ptr<const nlohmann::json> state_;
  std::shared_ptr<const nlohmann::json> query_;
  std::string failure_;
  std::thread worker_;
};

}  // namespace ibhc
