#include "symptex/annotation_server.hpp"

#include "httplib.h"
#include "symptex/error.hpp"

namespace symptex {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reply(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, ordered_json{{"error", message}});
}

}  // namespace

AnnotationServer::AnnotationServer(std::optional<std::filesystem::path> static_dir)
    : server_(std::make_unique<httplib::Server>()) {
  if (static_dir && !server_->set_mount_point("/", static_dir->string()))
    throw ValidationError("static asset directory not found: " + static_dir->string());
  install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::add_session(std::shared_ptr<AnnotationSession> session) {
  sessions_[session->id()] = std::move(session);
}

void AnnotationServer::install_routes() {
  auto session_for = [this](const httplib::Request& req,
                            httplib::Response& res) -> AnnotationSession* {
    auto it = sessions_.find(req.path_params.at("id"));
    if (it == sessions_.end()) {
      fail(res, 404, "unknown session " + req.path_params.at("id"));
      return nullptr;
    }
    return it->second.get();
  };
  auto assessor_for = [](const httplib::Request& req, httplib::Response& res,
                         const AnnotationSession& s) -> std::optional<std::string> {
    if (!req.has_param("assessor")) {
      fail(res, 400, "missing assessor query parameter");
      return std::nullopt;
    }
    auto a = req.get_param_value("assessor");
    if (!s.has_assessor(a)) {
      fail(res, 404, "unknown assessor " + a);
      return std::nullopt;
    }
    return a;
  };

  server_->Get("/sessions/:id/items", [=](const httplib::Request& req, httplib::Response& res) {
    auto* s = session_for(req, res);
    if (!s) return;
    auto a = assessor_for(req, res, *s);
    if (!a) return;
    ordered_json items = ordered_json::array();
    for (const auto& item : s->items()) {
      auto j = to_json(item);
      const auto judged = s->judgment(item.item_id, *a);
      j["judged"] = judged.has_value();
      if (judged) j["relevance"] = judged->relevance;
      items.push_back(std::move(j));
    }
    reply(res, 200,
          {{"session_id", s->id()},
           {"assessor", *a},
           {"total", s->items().size()},
           {"judged", s->judged_count(*a)},
           {"items", std::move(items)}});
  });

  server_->Get("/sessions/:id/next", [=](const httplib::Request& req, httplib::Response& res) {
    auto* s = session_for(req, res);
    if (!s) return;
    auto a = assessor_for(req, res, *s);
    if (!a) return;
    ordered_json body{{"session_id", s->id()}, {"assessor", *a}, {"total", s->items().size()},
                      {"judged", s->judged_count(*a)}};
    if (auto next = s->next_for(*a)) {
      body["done"] = false;
      body["position"] = *next + 1;
      body["item"] = to_json(s->items()[*next]);
    } else {
      body["done"] = true;
    }
    reply(res, 200, body);
  });

  server_->Post("/sessions/:id/judgments", [=](const httplib::Request& req, httplib::Response& res) {
    auto* s = session_for(req, res);
    if (!s) return;
    Judgment j;
    try {
      const auto body = json::parse(req.body);
      j.item_id = body.at("item_id").get<std::string>();
      j.assessor_id = body.at("assessor_id").get<std::string>();
      j.relevance = body.at("relevance").get<int>();
      j.elapsed = std::chrono::milliseconds(body.value("elapsed_ms", 0LL));
    } catch (const json::exception& e) {
      fail(res, 400, std::string("malformed judgment: ") + e.what());
      return;
    }
    if (!s->find_item(j.item_id)) return fail(res, 404, "unknown item " + j.item_id);
    if (!s->has_assessor(j.assessor_id)) return fail(res, 404, "unknown assessor " + j.assessor_id);
    try {
      s->record(j);
    } catch (const ValidationError& e) {
      fail(res, 400, e.what());
      return;
    }
    reply(res, 200,
          {{"ok", true},
           {"item_id", j.item_id},
           {"assessor_id", j.assessor_id},
           {"relevance", j.relevance},
           {"judged", s->judged_count(j.assessor_id)}});
  });

  server_->Get("/sessions/:id/stats", [=](const httplib::Request& req, httplib::Response& res) {
    auto* s = session_for(req, res);
    if (!s) return;
    auto body = to_json(s->stats());
    body["session_id"] = s->id();
    reply(res, 200, body);
  });
}

int AnnotationServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ValidationError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void AnnotationServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port))
    throw ValidationError("cannot serve on " + host + ":" + std::to_string(port));
}

void AnnotationServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace symptex
