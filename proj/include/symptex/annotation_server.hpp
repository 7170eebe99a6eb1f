#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "symptex/annotation.hpp"

namespace httplib {
class Server;
}

namespace symptex {

/// HTTP front for judging sessions:
///   GET  /sessions/:id/items?assessor=
///   GET  /sessions/:id/next?assessor=
///   POST /sessions/:id/judgments   {item_id, assessor_id, relevance, elapsed_ms}
///   GET  /sessions/:id/stats
/// Static UI assets are served from `static_dir` when given.
class AnnotationServer {
 public:
  explicit AnnotationServer(std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~AnnotationServer();

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  void add_session(std::shared_ptr<AnnotationSession> session);

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  std::unique_ptr<httplib::Server> server_;
  std::map<std::string, std::shared_ptr<AnnotationSession>> sessions_;
  std::thread thread_;
};

}  // namespace symptex
