#include "deepreport/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

namespace deepreport {

namespace {

constexpr auto kTailWait = std::chrono::milliseconds(250);

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, json{{"error", json{{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body, nullptr, false);
  if (body.is_discarded()) throw ConfigError("request body is not valid JSON");
  return body;
}

// Wraps a handler so library errors map onto status codes.
template <typename F>
httplib::Server::Handler guarded(F handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::uint64_t parse_cursor(const httplib::Request& req) {
  std::string raw;
  if (req.has_param("from")) {
    raw = req.get_param_value("from");
  } else if (req.has_header("Last-Event-ID")) {
    raw = req.get_header_value("Last-Event-ID");
  } else {
    return 0;
  }
  try {
    std::size_t used = 0;
    auto v = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("from must be a non-negative integer, got " + raw);
  }
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_run:
      return 404;
    case ErrorCode::wrong_stage:
      return 409;
    case ErrorCode::config_error:
    case ErrorCode::precondition:
    case ErrorCode::schema_error:
    case ErrorCode::answer_count_mismatch:
    case ErrorCode::bad_url:
      return 400;
    case ErrorCode::dimension_mismatch:
    case ErrorCode::length_mismatch:
    case ErrorCode::degenerate_data:
    case ErrorCode::no_headings:
      return 422;
    case ErrorCode::provider_error:
    case ErrorCode::endpoint_error:
    case ErrorCode::judge_error:
      return 502;
    default:
      return 500;
  }
}

std::string sse_frame(const RunEvent& event) {
  return "id: " + std::to_string(event.seq) + "\nevent: " + std::string(to_string(event.kind)) +
         "\ndata: " + to_line(event.to_json()) + "\n\n";
}

struct Service::Impl {
  httplib::Server server;
  EvalHandler evaluate;
};

Service::Service(std::shared_ptr<RunManager> runs, EvalHandler evaluate)
    : runs_(std::move(runs)), impl_(std::make_unique<Impl>()) {
  if (!runs_) throw ConfigError("service needs a run manager");
  impl_->evaluate = std::move(evaluate);
  auto& srv = impl_->server;
  auto* manager = runs_.get();

  srv.Post("/runs", guarded([manager](const httplib::Request& req, httplib::Response& res) {
             auto request = RunRequest::from_json(parse_body(req));
             auto id = manager->start(std::move(request));
             send_json(res, 201, json{{"run_id", id}});
           }));

  srv.Get(R"(/runs/([^/]+))", guarded([manager](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, manager->get(req.matches[1])->state().to_json());
          }));

  srv.Get(R"(/runs/([^/]+)/events)", guarded([manager](const httplib::Request& req, httplib::Response& res) {
            auto run = manager->get(req.matches[1]);
            auto cursor = std::make_shared<std::uint64_t>(parse_cursor(req));
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [run, cursor](std::size_t, httplib::DataSink& sink) {
                  auto batch = run->log().wait_since(*cursor, kTailWait);
                  for (const auto& e : batch) {
                    auto frame = sse_frame(e);
                    if (!sink.write(frame.data(), frame.size())) return false;
                    *cursor = e.seq;
                  }
                  if (batch.empty() && run->log().closed() && run->log().last_seq() <= *cursor) {
                    sink.done();
                  }
                  return true;
                });
          }));

  srv.Post(R"(/runs/([^/]+)/clarification)",
           guarded([manager](const httplib::Request& req, httplib::Response& res) {
             auto run = manager->get(req.matches[1]);
             auto body = parse_body(req);
             if (!body.is_object() || !body.contains("answers") || !body["answers"].is_array()) {
               throw ConfigError("clarification body needs an answers array");
             }
             std::vector<std::string> answers;
             for (const auto& a : body["answers"]) {
               if (!a.is_string()) throw ConfigError("answers must be strings");
               answers.push_back(a.get<std::string>());
             }
             bool accepted = run->answer_clarification(std::move(answers));
             send_json(res, 200, json{{"accepted", accepted}, {"duplicate", !accepted}});
           }));

  auto artifact = [manager](const httplib::Request& req, httplib::Response& res, bool sidecar) {
    auto run = manager->get(req.matches[1]);
    auto report = run->report();
    if (!report) {
      throw WrongStage("run " + run->id() + " has no report yet (stage " +
                       std::string(to_string(run->state().stage)) + ")");
    }
    if (sidecar) {
      res.set_content(sidecar_ndjson(*report), "application/x-ndjson");
    } else {
      res.set_content(report->markdown, "text/markdown; charset=utf-8");
    }
  };
  srv.Get(R"(/runs/([^/]+)/report)", guarded([artifact](const httplib::Request& req, httplib::Response& res) {
            artifact(req, res, false);
          }));
  srv.Get(R"(/runs/([^/]+)/sidecar)", guarded([artifact](const httplib::Request& req, httplib::Response& res) {
            artifact(req, res, true);
          }));

  srv.Post("/eval", guarded([this](const httplib::Request& req, httplib::Response& res) {
             if (!impl_->evaluate) throw ConfigError("evaluation is not configured on this service");
             auto comparison = impl_->evaluate(EvalJob::from_json(parse_body(req)));
             auto body = comparison.to_json();
             body["rendered"] = comparison.render();
             send_json(res, 200, body);
           }));

  srv.Get("/runs", guarded([manager](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, json{{"runs", manager->ids()}});
          }));
}

Service::~Service() { stop(); }

int Service::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool Service::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

bool Service::serve() { return impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace deepreport
