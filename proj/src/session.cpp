#include "ibhc/session.hpp"

#include <algorithm>

#include "ibhc/constraints.hpp"
#include "ibhc/newick.hpp"
#include "ibhc/tree_metrics.hpp"

namespace ibhc {

namespace {

using nlohmann::json;

DdtParams MakeParams(const DatasetEntry& data, const SessionConfig& config) {
  DdtParams params;
  params.dim = data.data.dim();
  params.c = config.c;
  params.sigma2 = config.sigma2 ? *config.sigma2 : EstimateSigma2(data.data.features);
  params.Validate();
  return params;
}

Tree InitialTree(const DatasetEntry& data, const DdtParams& params, std::uint64_t seed) {
  std::vector<int> leaves(data.data.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i] = static_cast<int>(i);
  Rng rng(Rng::Derive(seed, 0));
  return SimulatePriorTree(leaves, leaves.size(), params, rng);
}

std::size_t Field(const json& j, const char* key, std::size_t fallback, std::size_t min) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    throw std::invalid_argument(std::string("'") + key + "' must be an integer >= " +
                                std::to_string(min));
  return v.get<std::size_t>();
}

}  // namespace

SessionConfig ParseSessionConfig(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("session config must be an object");
  static const char* kKeys[] = {"dataset", "scheme",   "iterations_per_query", "subset_size",
                                "candidates_L", "seed", "sigma2", "c", "trace_capacity",
                                "snapshot_stride", "track_target", "mh_steps_per_iteration"};
  for (const auto& [key, _] : j.items())
    if (std::none_of(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }))
      throw std::invalid_argument("unknown key '" + key + "'");
  SessionConfig c;
  if (!j.contains("dataset") || !j.at("dataset").is_string())
    throw std::invalid_argument("'dataset' must name a dataset");
  c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("scheme")) {
    if (!j.at("scheme").is_string()) throw std::invalid_argument("'scheme' must be a string");
    c.scheme.kind = ParseScheme(j.at("scheme").get<std::string>());
  }
  c.iterations_per_query = Field(j, "iterations_per_query", 100, 1);
  c.scheme.subset_size = Field(j, "subset_size", 10, 3);
  c.scheme.candidates = Field(j, "candidates_L", 20, 1);
  c.seed = Field(j, "seed", 0, 0);
  if (j.contains("sigma2")) {
    const json& s = j.at("sigma2");
    if (s.is_number() && s.get<double>() > 0)
      c.sigma2 = s.get<double>();
    else if (!(s.is_string() && s.get<std::string>() == "auto"))
      throw std::invalid_argument("'sigma2' must be \"auto\" or a positive number");
  }
  if (j.contains("c")) {
    if (!j.at("c").is_number() || !(j.at("c").get<double>() > 0))
      throw std::invalid_argument("'c' must be a positive number");
    c.c = j.at("c").get<double>();
  }
  c.trace_capacity = Field(j, "trace_capacity", 20, 1);
  c.snapshot_stride = Field(j, "snapshot_stride", 5, 1);
  c.sampler.mh_steps_per_iteration = static_cast<int>(Field(j, "mh_steps_per_iteration", 1, 1));
  if (j.contains("track_target")) {
    if (!j.at("track_target").is_boolean())
      throw std::invalid_argument("'track_target' must be a boolean");
    c.track_target = j.at("track_target").get<bool>();
  }
  return c;
}

json ToJson(const SessionConfig& c) {
  json j = {{"dataset", c.dataset},
            {"scheme", SchemeName(c.scheme.kind)},
            {"iterations_per_query", c.iterations_per_query},
            {"subset_size", c.scheme.subset_size},
            {"candidates_L", c.scheme.candidates},
            {"seed", c.seed},
            {"c", c.c},
            {"trace_capacity", c.trace_capacity},
            {"snapshot_stride", c.snapshot_stride},
            {"track_target", c.track_target},
            {"mh_steps_per_iteration", c.sampler.mh_steps_per_iteration}};
  if (c.sigma2)
    j["sigma2"] = *c.sigma2;
  else
    j["sigma2"] = "auto";
  return j;
}

json TreePayload(const Tree& tree) {
  json nodes = json::array();
  std::vector<int> index(tree.capacity(), -1);
  for (NodeId v : tree.Preorder()) {
    index[v.value()] = static_cast<int>(nodes.size());
    NodeId p = tree.parent(v);
    json node = {{"id", nodes.size()},
                 {"parent", p == tree.stem() ? -1 : index[p.value()]},
                 {"time", tree.time(v)}};
    node["leaf"] = tree.is_leaf(v) ? json(tree.leaf_id(v)) : json(nullptr);
    nodes.push_back(std::move(node));
  }
  return {{"newick", ToNewick(tree)}, {"nodes", std::move(nodes)}};
}

SessionEngine::SessionEngine(std::shared_ptr<const DatasetEntry> data, const SessionConfig& config)
    : data_(std::move(data)),
      config_(config),
      leaves_(data_->data.size()),
      chain_(std::shared_ptr<const Matrix>(data_, &data_->data.features),
             MakeParams(*data_, config_), InitialTree(*data_, MakeParams(*data_, config_), config.seed),
             Rng::Derive(config.seed, 1), config.sampler),
      trace_(config.trace_capacity),
      query_rng_(Rng::Derive(config.seed, 1000)) {
  config_.scheme.Validate();
  if (data_->data.size() < 3) throw std::invalid_argument("dataset needs at least three points");
  for (std::size_t i = 0; i < leaves_.size(); ++i) leaves_[i] = static_cast<int>(i);
  if (config_.track_target && data_->target) {
    target_.emplace(*data_->target);
    try {
      TripletDistance(*target_, leaves_, *target_);
    } catch (const std::domain_error&) {
      target_.reset();  // a target without triplets has no distance to report
    }
  }
  RecordSeries();
}

void SessionEngine::RecordSeries() {
  log_posterior_series_.push_back(chain_.log_posterior());
  if (target_)
    distance_series_.push_back(TripletDistance(*target_, leaves_, LcaIndex(chain_.tree())));
}

void SessionEngine::Iterate() {
  if (pending_) throw std::logic_error("sampling while a query is pending");
  chain_.Iterate();
  if (++block_iterations_ % config_.snapshot_stride == 0)
    trace_.Push(MakeSnapshot(chain_.tree(), chain_.log_posterior(), chain_.iteration()));
}

const PendingQuery& SessionEngine::PoseQuery() {
  if (pending_) return *pending_;
  if (trace_.empty())
    trace_.Push(MakeSnapshot(chain_.tree(), chain_.log_posterior(), chain_.iteration()));
  QuerySelection sel = SelectQuery(config_.scheme, log_.size(), leaves_, trace_, query_rng_);
  Tree shown = InduceSubtree(chain_.tree(), sel.subset);
  pending_ = PendingQuery{log_.size(), sel.turn, std::move(sel.subset), std::move(shown)};
  return *pending_;
}

void SessionEngine::Answer(const std::optional<Triplet>& answer) {
  if (!pending_) throw AnswerError(409, "no pending query");
  if (answer) {
    const auto& s = pending_->subset;
    for (int leaf : {answer->a(), answer->b(), answer->c()})
      if (!std::binary_search(s.begin(), s.end(), leaf))
        throw AnswerError(400, "leaf " + std::to_string(leaf) + " is not in the shown subset");
    if (chain_.constraints().Contains(*answer))
      throw AnswerError(400, "triplet is already a constraint");
    try {
      chain_.AddConstraint(*answer);
    } catch (const UnrealizableError& e) {
      throw AnswerError(409, std::string("triplet contradicts earlier answers: ") + e.what());
    }
  }
  log_.push_back({pending_->query_index, pending_->turn, pending_->subset, answer});
  pending_.reset();
  RecordSeries();
}

json SessionEngine::QueryJson() const {
  if (!pending_) return nullptr;
  json j = TreePayload(pending_->shown);
  j["query_index"] = pending_->query_index;
  j["scheme_turn"] = SchemeName(pending_->turn);
  j["subset"] = pending_->subset;
  return j;
}

json SessionEngine::StateJson() const {
  json constraints = json::array();
  for (const Triplet& t : chain_.constraints()) constraints.push_back({t.a(), t.b(), t.c()});
  json j = {{"iteration", chain_.iteration()},
            {"queries_answered", log_.size()},
            {"constraints_count", chain_.constraints().size()},
            {"constraints", std::move(constraints)},
            {"log_posterior", log_posterior_series_},
            {"tree", ToNewick(chain_.tree())},
            {"scheme", SchemeName(config_.scheme.kind)}};
  if (target_) j["triplet_distance"] = distance_series_;
  return j;
}

Tree ReplaySession(std::shared_ptr<const DatasetEntry> data, const SessionConfig& config,
                   const std::vector<QueryRecord>& log) {
  SessionEngine engine(std::move(data), config);
  for (const QueryRecord& record : log) {
    for (std::size_t i = 0; i < engine.iterations_per_query(); ++i) engine.Iterate();
    const PendingQuery& q = engine.PoseQuery();
    if (q.query_index != record.query_index || q.subset != record.subset)
      throw std::runtime_error("query log diverges from replay at query " +
                               std::to_string(record.query_index));
    engine.Answer(record.answer);
  }
  return engine.chain().tree();
}

Session::Session(std::string id, std::shared_ptr<const DatasetEntry> data,
                 const SessionConfig& config, std::optional<std::filesystem::path> log_path)
    : id_(std::move(id)), log_path_(std::move(log_path)) {
  auto engine = std::make_unique<SessionEngine>(std::move(data), config);
  if (log_path_) {
    std::ofstream cfg(log_path_->string() + ".config.json");
    cfg << ToJson(config).dump(2) << '\n';
    std::ofstream(*log_path_, std::ios::trunc);
  }
  Publish(*engine, "sampling", false);
  worker_ = std::thread(&Session::Work, this, std::move(engine));
}

Session::~Session() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  for (Command& c : inbox_)
    c.reply.set_exception(std::make_exception_ptr(AnswerError(409, "session closed")));
}

void Session::Publish(const SessionEngine& engine, std::string status, bool with_query) {
  json state = engine.StateJson();
  state["id"] = id_;
  state["status"] = std::move(status);
  auto next_state = std::make_shared<const json>(std::move(state));
  std::shared_ptr<const json> next_query;
  if (with_query) {
    json q = engine.QueryJson();
    q["session"] = id_;
    next_query = std::make_shared<const json>(std::move(q));
  }
  {
    std::lock_guard lock(mu_);
    state_ = std::move(next_state);
    query_ = std::move(next_query);
  }
  cv_.notify_all();
}

void Session::Work(std::unique_ptr<SessionEngine> engine) {
  auto stopping = [this] {
    std::lock_guard lock(mu_);
    return stop_;
  };
  try {
    for (;;) {
      for (std::size_t i = 0; i < engine->iterations_per_query(); ++i) {
        if ((i & 15) == 0 && stopping()) return;
        engine->Iterate();
      }
      const std::size_t index = engine->PoseQuery().query_index;
      Publish(*engine, "awaiting_answer", true);
      for (;;) {
        std::optional<Command> cmd;
        {
          std::unique_lock lock(mu_);
          cv_.wait(lock, [this] { return stop_ || !inbox_.empty(); });
          if (stop_) return;
          cmd.emplace(std::move(inbox_.front()));
          inbox_.pop_front();
        }
        try {
          if (engine->log().size() != index) throw AnswerError(409, "query already answered");
          engine->Answer(cmd->answer);
        } catch (const AnswerError&) {
          cmd->reply.set_exception(std::current_exception());
          continue;
        }
        if (log_path_) {
          std::ofstream out(*log_path_, std::ios::app);
          out << ToJson(engine->log().back()).dump() << '\n';
        }
        Publish(*engine, "sampling", false);
        cmd->reply.set_value({{"query_index", index},
                              {"accepted", !cmd->answer.has_value()},
                              {"constraints_count", engine->chain().constraints().size()}});
        break;
      }
    }
  } catch (const std::exception& e) {
    std::lock_guard lock(mu_);
    failure_ = e.what();
    query_.reset();
    cv_.notify_all();
  }
}

std::optional<json> Session::GetQuery(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [this] { return query_ || stop_ || !failure_.empty(); });
  if (!failure_.empty()) throw std::runtime_error("session failed: " + failure_);
  if (!query_) return std::nullopt;
  return *query_;
}

json Session::PostAnswer(const std::optional<Triplet>& answer) {
  std::future<json> reply;
  {
    std::lock_guard lock(mu_);
    if (!failure_.empty()) throw std::runtime_error("session failed: " + failure_);
    if (!query_) throw AnswerError(409, "no pending query");
    Command cmd{answer, {}};
    reply = cmd.reply.get_future();
    inbox_.push_back(std::move(cmd));
  }
  cv_.notify_all();
  return reply.get();
}

json Session::GetState() const {
  std::shared_ptr<const json> state;
  std::string failure;
  {
    std::lock_guard lock(mu_);
    state = state_;
    failure = failure_;
  }
  json out = *state;
  if (!failure.empty()) {
    out["status"] = "failed";
    out["error"] = failure;
  }
  return out;
}

}  // namespace ibhc
