#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "comptag/provider.hpp"

#include <thread>

#include "comptag/error.hpp"
#include "comptag/io.hpp"

namespace comptag {

using nlohmann::json;

json to_json(const ChatRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", r.model}, {"messages", std::move(messages)}, {"temperature", r.temperature}};
}

std::string request_digest(const ChatRequest& r) {
  return io::sha256_hex(to_json(r).dump());
}

HttpChatProvider::HttpChatProvider(HttpProviderConfig config) : config_(std::move(config)) {
  const auto& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::Config, "provider base_url must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? std::string{} : url.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  const std::string suffix = "/chat/completions";
  if (path_.size() < suffix.size() || path_.compare(path_.size() - suffix.size(), suffix.size(), suffix) != 0) {
    path_ += suffix;
  }
  if (config_.max_attempts < 1) config_.max_attempts = 1;
}

std::string HttpChatProvider::complete(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const std::string body = to_json(request).dump();

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw Error(ErrorCode::ProviderUnavailable,
                  "provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw Error(ErrorCode::ProviderUnavailable,
                  "provider returned HTTP " + std::to_string(res->status) + ": " + res->body);
    } else {
      try {
        const auto j = json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string{} : content.get<std::string>();
      } catch (const json::exception& e) {
        // A broken envelope is a provider fault, not a model answer.
        last_error = std::string("unreadable response envelope: ") + e.what();
      }
    }
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::ProviderUnavailable,
              "provider unavailable after " + std::to_string(config_.max_attempts) +
                  " attempts: " + last_error);
}

ReplayProvider::ReplayProvider(const std::vector<json>& log_records) {
  for (const auto& r : log_records) {
    responses_[r.at("request_digest").get<std::string>()].push_back(
        r.at("response").get<std::string>());
  }
}

std::string ReplayProvider::complete(const ChatRequest& request) {
  const auto key = request_digest(request);
  std::lock_guard lock(mutex_);
  auto it = responses_.find(key);
  if (it == responses_.end()) {
    throw Error(ErrorCode::ProviderUnavailable, "no logged response for request " + key);
  }
  auto& pos = cursor_[key];
  const auto& answers = it->second;
  const auto& out = answers[std::min(pos, answers.size() - 1)];
  ++pos;
  return out;
}

}  // namespace comptag
