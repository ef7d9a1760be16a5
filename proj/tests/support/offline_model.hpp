#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "deepreport/gateway.hpp"
#include "deepreport/prompts.hpp"

namespace deepreport::testkit {

/// Slot values of a rendered template, found by matching the literal text
/// between slots. A corrective note appended by a re-ask is dropped first.
Bindings recover_bindings(TemplateId id, std::string_view rendered);

/// Deterministic rule-based stand-in for the chat endpoints. Every reply is
/// a pure function of the call, so a run recorded against it replays
/// byte for byte.
class OfflineModel final : public ChatBackend {
 public:
  std::string complete(const ChatCall& call) override;
  std::size_t calls() const noexcept { return calls_.load(); }
  std::map<std::string, std::size_t> calls_by_purpose() const;

 private:
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
  std::map<std::string, std::size_t> by_purpose_;
};

/// Answers from `rule` when it has a reply, else from the fallback model.
/// Every call is logged.
class ScriptedModel final : public ChatBackend {
 public:
  using Rule = std::function<std::optional<std::string>(const ChatCall&)>;
  explicit ScriptedModel(Rule rule, std::shared_ptr<ChatBackend> fallback = std::make_shared<OfflineModel>())
      : rule_(std::move(rule)), fallback_(std::move(fallback)) {}

  std::string complete(const ChatCall& call) override;
  std::vector<ChatCall> calls() const;
  void clear();

 private:
  Rule rule_;
  std::shared_ptr<ChatBackend> fallback_;
  mutable std::mutex mutex_;
  std::vector<ChatCall> calls_;
};

/// Content words in order of first appearance, numbers excluded.
std::vector<std::string> ordered_keywords(std::string_view text);

}  // namespace deepreport::testkit
