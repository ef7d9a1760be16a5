#include "deepreport/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "deepreport/io.hpp"

namespace deepreport {

namespace {

std::string env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  return v ? std::string(v) : std::string();
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string request_text(const ChatCall& call) {
  if (call.system_text.empty()) return call.user_text;
  return "[system]\n" + call.system_text + "\n[user]\n" + call.user_text;
}

}  // namespace

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::planner: return "planner";
    case ModelRole::worker: return "worker";
    case ModelRole::judge: return "judge";
  }
  return "worker";
}

std::optional<ModelRole> model_role_from_name(std::string_view name) {
  if (name == "planner") return ModelRole::planner;
  if (name == "worker") return ModelRole::worker;
  if (name == "judge") return ModelRole::judge;
  return std::nullopt;
}

std::string_view to_string(LlmMode mode) {
  switch (mode) {
    case LlmMode::live: return "live";
    case LlmMode::record: return "record";
    case LlmMode::replay: return "replay";
  }
  return "live";
}

std::optional<LlmMode> llm_mode_from_name(std::string_view name) {
  if (name == "live") return LlmMode::live;
  if (name == "record") return LlmMode::record;
  if (name == "replay") return LlmMode::replay;
  return std::nullopt;
}

std::string call_hash(const ChatCall& call) {
  std::string key;
  key.reserve(call.system_text.size() + call.user_text.size() + 64);
  key += to_string(call.model_role);
  key += '\0';
  key += call.purpose;
  key += '\0';
  key += call.system_text;
  key += '\0';
  key += call.user_text;
  return sha256_hex(key);
}

void RateLimiter::acquire() {
  if (per_second_ <= 0.0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(1.0 / per_second_));
  }
  std::this_thread::sleep_until(slot);
}

std::optional<EndpointConfig> endpoint_from_env(ModelRole role) {
  auto pick = [&](const std::string& suffix) {
    auto v = env("DEEPREPORT_" + upper(to_string(role)) + "_" + suffix);
    return v.empty() ? env("DEEPREPORT_LLM_" + suffix) : v;
  };
  EndpointConfig config;
  config.base_url = pick("BASE_URL");
  if (config.base_url.empty()) return std::nullopt;
  config.api_key = pick("API_KEY");
  config.model = pick("MODEL");
  auto rps = pick("RPS");
  if (!rps.empty()) config.requests_per_second = std::strtod(rps.c_str(), nullptr);
  return config;
}

OpenAiChatBackend::OpenAiChatBackend(EndpointConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(config_.requests_per_second) {
  if (!transport_) throw ConfigError("chat backend needs a transport");
}

std::string OpenAiChatBackend::complete(const ChatCall& call) {
  json messages = json::array();
  if (!call.system_text.empty()) {
    messages.push_back({{"role", "system"}, {"content", call.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", call.user_text}});
  json body = {{"model", config_.model},
               {"messages", messages},
               {"temperature", call.temperature},
               {"max_tokens", call.max_tokens}};

  HttpRequest request;
  request.method = "POST";
  std::string base = config_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  request.url = base + "/chat/completions";
  request.headers["Content-Type"] = "application/json";
  if (!config_.api_key.empty()) request.headers["Authorization"] = "Bearer " + config_.api_key;
  request.body = body.dump();
  request.timeout = config_.timeout;

  HttpResponse response;
  for (int attempt = 0;; ++attempt) {
    limiter_.acquire();
    try {
      response = transport_->send(request);
    } catch (const TransportError& e) {
      throw EndpointError(e.what());
    }
    bool transient = response.status == 429 || response.status >= 500;
    if (!transient || attempt == 1) break;
    std::this_thread::sleep_for(std::chrono::seconds(2));
  }
  if (response.status < 200 || response.status >= 300) {
    throw EndpointError("chat endpoint returned " + std::to_string(response.status) + ": " +
                        response.body.substr(0, 200));
  }
  try {
    auto parsed = json::parse(response.body);
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw EndpointError(std::string("unexpected chat response: ") + e.what());
  }
}

TranscriptStore::TranscriptStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  read_ndjson(path_, [this](std::size_t line, const json& record) {
    if (!record.contains("hash") || !record.contains("response")) {
      throw SchemaError("transcript record needs hash and response", line);
    }
    responses_.try_emplace(record.at("hash").get<std::string>(),
                           record.at("response").get<std::string>());
  });
}

std::optional<std::string> TranscriptStore::lookup(const std::string& hash) const {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(hash);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void TranscriptStore::append(const TranscriptRecord& record) {
  std::lock_guard lock(mutex_);
  if (!responses_.try_emplace(record.hash, record.response).second) return;
  if (path_.empty()) return;
  append_ndjson(path_, json{{"hash", record.hash},
                            {"purpose", record.purpose},
                            {"role", record.role},
                            {"request", record.request},
                            {"response", record.response},
                            {"timestamp", record.timestamp}});
}

std::size_t TranscriptStore::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

std::map<TemplateId, ModelRole> GatewayConfig::default_roles() {
  return {
      {TemplateId::intent_clarification, ModelRole::planner},
      {TemplateId::outline_generation, ModelRole::planner},
      {TemplateId::search_query_expanding, ModelRole::worker},
      {TemplateId::information_distillation, ModelRole::worker},
      {TemplateId::evaluation_judgment, ModelRole::judge},
      {TemplateId::integrity_evaluation, ModelRole::judge},
      {TemplateId::freshness_evaluation, ModelRole::judge},
      {TemplateId::plurality_evaluation, ModelRole::judge},
      {TemplateId::knowledge_enrichment, ModelRole::judge},
      {TemplateId::knowledge_merging, ModelRole::judge},
      {TemplateId::content_generation_system, ModelRole::worker},
      {TemplateId::content_generation_user, ModelRole::worker},
  };
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<TranscriptStore> transcripts,
                 std::shared_ptr<Clock> clock)
    : config_(std::move(config)),
      transcripts_(std::move(transcripts)),
      clock_(clock ? std::move(clock) : default_clock()) {
  if (config_.max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (config_.temperature < 0 || config_.judge_temperature < 0) {
    throw ConfigError("temperature must be non-negative");
  }
  if (config_.mode != LlmMode::live && !transcripts_) {
    transcripts_ = std::make_shared<TranscriptStore>();
  }
}

void Gateway::set_backend(ModelRole role, std::shared_ptr<ChatBackend> backend) {
  std::lock_guard lock(mutex_);
  backends_[role] = std::move(backend);
}

void Gateway::set_backend(std::shared_ptr<ChatBackend> backend) {
  for (auto role : {ModelRole::planner, ModelRole::worker, ModelRole::judge}) {
    set_backend(role, backend);
  }
}

ChatCall Gateway::prompt_call(TemplateId user_template, const Bindings& bindings,
                              std::optional<TemplateId> system_template) const {
  ChatCall call;
  call.purpose = std::string(to_string(user_template));
  call.user_text = render_prompt(user_template, bindings);
  if (system_template) call.system_text = render_prompt(*system_template, bindings);
  auto it = config_.roles.find(user_template);
  call.model_role = it == config_.roles.end() ? ModelRole::worker : it->second;
  call.temperature =
      call.model_role == ModelRole::judge ? config_.judge_temperature : config_.temperature;
  call.max_tokens = config_.max_tokens;
  return call;
}

ChatCall Gateway::judge_call(std::string purpose, std::string system_text,
                             std::string user_text) const {
  ChatCall call;
  call.purpose = std::move(purpose);
  call.system_text = std::move(system_text);
  call.user_text = std::move(user_text);
  call.model_role = ModelRole::judge;
  call.temperature = config_.judge_temperature;
  call.max_tokens = config_.max_tokens;
  return call;
}

std::shared_ptr<ChatBackend> Gateway::backend_for(ModelRole role) const {
  std::lock_guard lock(mutex_);
  auto it = backends_.find(role);
  if (it == backends_.end() || !it->second) {
    throw ConfigError("no chat endpoint configured for role " + std::string(to_string(role)));
  }
  return it->second;
}

std::string Gateway::complete(const ChatCall& call) {
  if (call.temperature < 0) throw PreconditionError("temperature must be non-negative");
  if (call.max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  if (config_.mode == LlmMode::live) return backend_for(call.model_role)->complete(call);

  auto hash = call_hash(call);
  if (auto recorded = transcripts_->lookup(hash)) return *recorded;
  if (config_.mode == LlmMode::replay) {
    throw TranscriptMiss("no recorded response for " + call.purpose + " call " + hash);
  }
  auto response = backend_for(call.model_role)->complete(call);
  transcripts_->append(TranscriptRecord{hash, call.purpose, std::string(to_string(call.model_role)),
                                        request_text(call), response,
                                        format_timestamp(clock_->now_seconds())});
  return response;
}

StructuredPayload Gateway::complete_structured(const ChatCall& call, SchemaId schema,
                                               std::optional<int> max_retries) {
  std::function<StructuredPayload(const std::string&)> parse = [schema](const std::string& raw) {
    return parse_structured(raw, schema);
  };
  return complete_parsed(call, parse, max_retries);
}

std::size_t Gateway::call_count() const noexcept {
  std::lock_guard lock(mutex_);
  return calls_;
}

ChatCall with_correction(const ChatCall& call, const std::string& problem) {
  ChatCall next = call;
  next.user_text += "\n\nCORRECTION\nYour previous reply could not be used (" + problem +
                    "). Reply again following the required output format exactly.";
  return next;
}

}  // namespace deepreport
