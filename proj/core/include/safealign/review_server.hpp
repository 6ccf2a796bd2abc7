#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "safealign/eval.hpp"

namespace safealign {

struct ReviewServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
  std::size_t default_queue_limit = 20;
};

/// JSON review API over a VerdictStore:
///   GET  /api/queue?limit=N  pending uncertain items, oldest first
///   POST /api/verdict        {item_id, label}; 409 if the item is not pending
///   GET  /api/progress       totals and per-category tallies
///   GET  /api/report         the current ScenarioReport
/// Optionally serves a static UI from `static_dir` at /.
class ReviewServer {
 public:
  ReviewServer(VerdictStore& store, ReviewServerOptions options = {});
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds and serves on a background thread. Returns the bound port.
  /// Throws Errc::io_error if the address cannot be bound.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace safealign
