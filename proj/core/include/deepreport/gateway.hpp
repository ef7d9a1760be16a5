#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "deepreport/error.hpp"
#include "deepreport/prompts.hpp"
#include "deepreport/structured.hpp"
#include "deepreport/timeutil.hpp"
#include "deepreport/transport.hpp"

namespace deepreport {

enum class ModelRole { planner, worker, judge };

std::string_view to_string(ModelRole role);
std::optional<ModelRole> model_role_from_name(std::string_view name);

struct ChatCall {
  /// Template name, or an evaluator tag such as "judge.supports". Part of
  /// the transcript key so identical texts under different purposes never
  /// collide.
  std::string purpose;
  std::string system_text;
  std::string user_text;
  double temperature = 0.8;
  int max_tokens = 64000;
  ModelRole model_role = ModelRole::worker;
};

/// Transcript key. Temperature and max_tokens are excluded so a replay
/// corpus survives sampling-parameter changes.
std::string call_hash(const ChatCall& call);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatCall& call) = 0;
};

/// Spaces outbound requests to at most `per_second`; zero disables it.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second = 0.0) : per_second_(per_second) {}
  void acquire();

 private:
  double per_second_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

struct EndpointConfig {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string api_key;
  std::string model;
  double requests_per_second = 0.0;
  std::chrono::seconds timeout{300};
};

/// Reads DEEPREPORT_<ROLE>_BASE_URL, _API_KEY, _MODEL and _RPS, falling
/// back to the unprefixed DEEPREPORT_LLM_* variables.
std::optional<EndpointConfig> endpoint_from_env(ModelRole role);

/// OpenAI-compatible `POST {base_url}/chat/completions`.
class OpenAiChatBackend final : public ChatBackend {
 public:
  OpenAiChatBackend(EndpointConfig config, std::shared_ptr<Transport> transport);
  std::string complete(const ChatCall& call) override;

 private:
  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  RateLimiter limiter_;
};

struct TranscriptRecord {
  std::string hash;
  std::string purpose;
  std::string role;
  std::string request;
  std::string response;
  std::string timestamp;
};

/// Append-only NDJSON file of model exchanges keyed by call_hash. The first
/// record for a hash wins on load.
class TranscriptStore {
 public:
  /// Loads `path` if it exists. An empty path keeps the store in memory.
  explicit TranscriptStore(std::filesystem::path path = {});

  std::optional<std::string> lookup(const std::string& hash) const;
  void append(const TranscriptRecord& record);
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> responses_;
};

enum class LlmMode { live, record, replay };

std::string_view to_string(LlmMode mode);
std::optional<LlmMode> llm_mode_from_name(std::string_view name);

struct GatewayConfig {
  LlmMode mode = LlmMode::live;
  double temperature = 0.8;
  double judge_temperature = 0.0;
  int max_tokens = 64000;
  int max_retries = 2;
  /// Role per template; templates not listed use worker.
  std::map<TemplateId, ModelRole> roles = default_roles();
  /// Defaults for the outline frameworks the outline prompt refers to.
  std::string reasoning_framework =
      "Pyramid decomposition: state the governing question, split it into mutually exclusive "
      "sub-questions, and answer each with evidence before drawing the overall conclusion.";
  std::string writing_framework =
      "Claim-evidence-implication: open each section with its claim, support it with sourced "
      "facts and figures, then state what it implies for the reader's decision.";

  static std::map<TemplateId, ModelRole> default_roles();
};

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<TranscriptStore> transcripts = nullptr,
          std::shared_ptr<Clock> clock = nullptr);

  void set_backend(ModelRole role, std::shared_ptr<ChatBackend> backend);
  /// Same backend for every role.
  void set_backend(std::shared_ptr<ChatBackend> backend);

  const GatewayConfig& config() const noexcept { return config_; }

  /// Builds a call for `user_template`, optionally with a separately rendered
  /// system prompt. Role and temperature follow the config.
  ChatCall prompt_call(TemplateId user_template, const Bindings& bindings,
                       std::optional<TemplateId> system_template = std::nullopt) const;
  /// A judge call outside the template set (evaluator rubrics).
  ChatCall judge_call(std::string purpose, std::string system_text, std::string user_text) const;

  /// live: backend; record: recorded response if present, else backend and
  /// append; replay: recorded response or TranscriptMiss.
  std::string complete(const ChatCall& call);

  /// Calls the model and hands the text to `parse`. A parse failure
  /// (any deepreport::Error) triggers a re-ask carrying a corrective note,
  /// up to `max_retries` times; then MalformedOutput with the last raw text.
  template <typename T>
  T complete_parsed(const ChatCall& call, const std::function<T(const std::string&)>& parse,
                    std::optional<int> max_retries = std::nullopt);

  StructuredPayload complete_structured(const ChatCall& call, SchemaId schema,
                                        std::optional<int> max_retries = std::nullopt);

  std::size_t call_count() const noexcept;

 private:
  std::shared_ptr<ChatBackend> backend_for(ModelRole role) const;

  GatewayConfig config_;
  std::shared_ptr<TranscriptStore> transcripts_;
  std::shared_ptr<Clock> clock_;
  std::map<ModelRole, std::shared_ptr<ChatBackend>> backends_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Appends the corrective note used for re-asks.
ChatCall with_correction(const ChatCall& call, const std::string& problem);

template <typename T>
T Gateway::complete_parsed(const ChatCall& call, const std::function<T(const std::string&)>& parse,
                           std::optional<int> max_retries) {
  int retries = max_retries.value_or(config_.max_retries);
  if (retries < 0) throw PreconditionError("max_retries must be >= 0");
  ChatCall attempt = call;
  std::string raw;
  std::string problem;
  for (int i = 0; i <= retries; ++i) {
    raw = complete(attempt);
    try {
      return parse(raw);
    } catch (const Error& e) {
      problem = e.what();
    }
    attempt = with_correction(call, problem);
  }
  throw MalformedOutput(call.purpose + ": " + problem, raw);
}

}  // namespace deepreport
