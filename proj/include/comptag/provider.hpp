#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace comptag {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

/// Chat-completions wire body: {model, messages:[{role,content}], temperature}.
nlohmann::json to_json(const ChatRequest& r);

/// Key under which a response is logged and replayed.
std::string request_digest(const ChatRequest& r);

/// A language-model backend. complete() returns the assistant text and
/// throws Error(ProviderUnavailable) on transport or auth failure.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

struct HttpProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

/// OpenAI-compatible chat-completions client over HTTP(S). Transient
/// failures (network, 429, 5xx) are retried with exponential backoff.
class HttpChatProvider : public Provider {
 public:
  explicit HttpChatProvider(HttpProviderConfig config);
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "http"; }

 private:
  HttpProviderConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Serves responses previously captured in a tagging raw log, matched by
/// request_digest. Repeated requests replay attempts in logged order.
class ReplayProvider : public Provider {
 public:
  explicit ReplayProvider(const std::vector<nlohmann::json>& log_records);
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "replay"; }

 private:
  std::mutex mutex_;
  std::map<std::string, std::vector<std::string>> responses_;
  std::map<std::string, std::size_t> cursor_;
};

}  // namespace comptag
