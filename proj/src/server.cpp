#include "ibhc/server.hpp"

#include <map>
#include <mutex>

#include <httplib.h>

namespace ibhc {

namespace {

using nlohmann::json;

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void Error(httplib::Response& res, int status, const std::string& message) {
  const char* code = "internal";
  switch (status) {
    case 400: code = "bad_request"; break;
    case 404: code = "not_found"; break;
    case 409: code = "conflict"; break;
    case 503: code = "timeout"; break;
  }
  Reply(res, status, {{"code", code}, {"message", message}});
}

int Leaf(const json& v) {
  if (!v.is_number_integer()) throw AnswerError(400, "leaves must be integers");
  return v.get<int>();
}

}  // namespace

std::optional<Triplet> ParseAnswer(const json& body) {
  if (!body.is_object()) throw AnswerError(400, "answer must be an object");
  try {
    if (body.contains("accept")) {
      if (body.size() != 1 || body.at("accept") != true)
        throw AnswerError(400, "'accept' must be true and alone");
      return std::nullopt;
    }
    if (body.contains("triplet")) {
      const json& t = body.at("triplet");
      if (body.size() != 1 || !t.is_array() || t.size() != 3)
        throw AnswerError(400, "'triplet' must be [a, b, c]");
      return Triplet(Leaf(t[0]), Leaf(t[1]), Leaf(t[2]));
    }
    if (body.contains("pair") && body.contains("outgroup")) {
      const json& p = body.at("pair");
      if (body.size() != 2 || !p.is_array() || p.size() != 2)
        throw AnswerError(400, "'pair' must be [a, b]");
      return Triplet(Leaf(p[0]), Leaf(p[1]), Leaf(body.at("outgroup")));
    }
  } catch (const std::invalid_argument& e) {
    throw AnswerError(400, e.what());
  }
  throw AnswerError(400, "answer needs 'accept', 'triplet' or 'pair' and 'outgroup'");
}

struct SessionServer::Impl {
  std::map<std::string, std::shared_ptr<const DatasetEntry>> datasets;
  ServerOptions options;
  httplib::Server http;
  std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::size_t next_id = 1;

  std::shared_ptr<Session> Find(const httplib::Request& req) {
    std::lock_guard lock(mu);
    auto it = sessions.find(req.path_params.at("id"));
    return it == sessions.end() ? nullptr : it->second;
  }

  void Create(const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return Error(res, 400, "body is not JSON");
    SessionConfig config;
    try {
      config = ParseSessionConfig(body);
    } catch (const std::exception& e) {
      return Error(res, 400, e.what());
    }
    auto data = datasets.find(config.dataset);
    if (data == datasets.end()) return Error(res, 404, "unknown dataset '" + config.dataset + "'");

    std::string id;
    {
      std::lock_guard lock(mu);
      id = "s" + std::to_string(next_id++);
    }
    std::optional<std::filesystem::path> log;
    if (options.log_dir) log = *options.log_dir / (id + ".jsonl");
    std::shared_ptr<Session> session;
    try {
      session = std::make_shared<Session>(id, data->second, config, log);
    } catch (const std::invalid_argument& e) {
      return Error(res, 400, e.what());
    }
    {
      std::lock_guard lock(mu);
      sessions.emplace(id, session);
    }
    Reply(res, 201, {{"id", id}, {"status", session->GetState().at("status")}});
  }

  void Query(const httplib::Request& req, httplib::Response& res) {
    auto session = Find(req);
    if (!session) return Error(res, 404, "unknown session");
    auto query = session->GetQuery(options.query_timeout);
    if (!query) return Error(res, 503, "no query ready yet; retry");
    Reply(res, 200, *query);
  }

  void Answer(const httplib::Request& req, httplib::Response& res) {
    auto session = Find(req);
    if (!session) return Error(res, 404, "unknown session");
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return Error(res, 400, "body is not JSON");
    try {
      Reply(res, 200, session->PostAnswer(ParseAnswer(body)));
    } catch (const AnswerError& e) {
      Error(res, e.status(), e.what());
    }
  }

  void State(const httplib::Request& req, httplib::Response& res) {
    auto session = Find(req);
    if (!session) return Error(res, 404, "unknown session");
    Reply(res, 200, session->GetState());
  }
};

SessionServer::SessionServer(std::vector<std::shared_ptr<const DatasetEntry>> datasets,
                             ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  for (auto& d : datasets) {
    std::string name = d->name;
    if (!impl_->datasets.emplace(name, std::move(d)).second)
      throw std::invalid_argument("duplicate dataset '" + name + "'");
  }
  impl_->options = std::move(options);
  Impl& s = *impl_;
  auto& http = s.http;
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      Error(res, 500, e.what());
    } catch (...) {
      Error(res, 500, "unknown error");
    }
  });
  http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    Reply(res, 200, {{"status", "ok"}});
  });
  http.Get("/datasets", [&s](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& [name, d] : s.datasets)
      out.push_back({{"name", name},
                     {"points", d->data.size()},
                     {"dim", d->data.dim()},
                     {"has_target", d->target.has_value()}});
    Reply(res, 200, out);
  });
  http.Post("/sessions", [&s](const auto& req, auto& res) { s.Create(req, res); });
  http.Get("/sessions/:id/query", [&s](const auto& req, auto& res) { s.Query(req, res); });
  http.Post("/sessions/:id/answer", [&s](const auto& req, auto& res) { s.Answer(req, res); });
  http.Get("/sessions/:id/state", [&s](const auto& req, auto& res) { s.State(req, res); });
  if (s.options.static_dir && !http.set_mount_point("/", s.options.static_dir->string()))
    throw std::invalid_argument("cannot serve " + s.options.static_dir->string());
}

SessionServer::~SessionServer() {
  Stop();
  std::lock_guard lock(impl_->mu);
  impl_->sessions.clear();
}

int SessionServer::BindToAnyPort(const std::string& host) {
  return impl_->http.bind_to_any_port(host);
}

bool SessionServer::Bind(const std::string& host, int port) {
  return impl_->http.bind_to_port(host, port);
}

bool SessionServer::ListenAfterBind() { return impl_->http.listen_after_bind(); }

void SessionServer::Stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

void SessionServer::WaitUntilReady() const { impl_->http.wait_until_ready(); }

}  // namespace ibhc
