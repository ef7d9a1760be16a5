#pragma once

#include <functional>
#include <memory>
#include <string>

#include "deepreport/compare.hpp"
#include "deepreport/pipeline.hpp"

namespace deepreport {

/// Evaluates an /eval request body.
using EvalHandler = std::function<Comparison(const EvalJob&)>;

/// HTTP front of a RunManager:
///   POST /runs                      RunRequest → {"run_id"}
///   GET  /runs/{id}                 PipelineState
///   GET  /runs/{id}/events?from=N   server-sent events with seq > N
///   POST /runs/{id}/clarification   {"answers": [...]}
///   GET  /runs/{id}/report          markdown
///   GET  /runs/{id}/sidecar         claim-source pairs, NDJSON
///   POST /eval                      EvalJob → Comparison
/// Errors come back as {"error": {"code", "message"}}.
class Service {
 public:
  Service(std::shared_ptr<RunManager> runs, EvalHandler evaluate);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds an ephemeral port and returns it; -1 on failure.
  int bind_any(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Serves until stop(). Call after a bind.
  bool serve();
  void stop();

  RunManager& runs() noexcept { return *runs_; }

 private:
  struct Impl;
  std::shared_ptr<RunManager> runs_;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for a library error code.
int http_status_for(ErrorCode code);

/// One server-sent event frame for `event`.
std::string sse_frame(const RunEvent& event);

}  // namespace deepreport
