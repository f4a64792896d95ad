#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "stratus/error.hpp"

namespace stratus::chat {

struct Message {
  std::string role;  // "system", "user" or "assistant"
  std::string text;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Throws Error{"chat_failed"} on transport or provider errors.
  virtual std::string send(const std::vector<Message>& messages) = 0;
};

/// Replays scripted replies in order. "{{last_observation}}" in a reply is
/// replaced by the body of the last <observation> block in the conversation.
/// When the script runs out the last reply repeats; an empty script replies "".
class MockClient final : public ChatClient {
 public:
  explicit MockClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string send(const std::vector<Message>& messages) override;
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::string> replies_;
  std::size_t calls_ = 0;
};

/// Mock fixture: either a JSON list of replies used for every question, or
/// an object {"default": [...], "instances": {id: [...]}}.
class MockScript {
 public:
  static MockScript parse(const std::string& json_text);
  static MockScript load(const std::string& path);
  static MockScript uniform(std::vector<std::string> replies);

  void set(const std::string& instance_id, std::vector<std::string> replies);
  const std::vector<std::string>& replies_for(const std::string& instance_id) const;
  std::unique_ptr<ChatClient> client_for(const std::string& instance_id) const;
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> default_;
  std::map<std::string, std::vector<std::string>> instances_;
};

/// OpenAI-compatible chat completions over plain HTTP. Reads LLM_BASE_URL
/// (e.g. http://localhost:8000/v1), LLM_MODEL and LLM_API_KEY.
class HttpClient final : public ChatClient {
 public:
  HttpClient(std::string base_url, std::string model, std::string api_key, int timeout_s = 120);
  static std::unique_ptr<HttpClient> from_env();
  std::string send(const std::vector<Message>& messages) override;

 private:
  std::string base_url_;
  std::string model_;
  std::string api_key_;
  int timeout_s_;
};

/// Builds one client per question so sessions never share state.
using ClientFactory = std::function<std::unique_ptr<ChatClient>(const std::string& instance_id)>;

}  // namespace stratus::chat
