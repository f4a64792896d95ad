#include <cstdlib>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "stratus/chat.hpp"

namespace stratus::chat {

namespace {

std::string last_observation(const std::vector<Message>& messages) {
  static const std::string open = "<observation>", close = "</observation>";
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    const auto b = it->text.rfind(open);
    if (b == std::string::npos) continue;
    const auto e = it->text.find(close, b);
    std::string body = it->text.substr(b + open.size(), e == std::string::npos ? std::string::npos
                                                                               : e - b - open.size());
    const auto first = body.find_first_not_of(" \n\t");
    const auto last = body.find_last_not_of(" \n\t");
    return first == std::string::npos ? "" : body.substr(first, last - first + 1);
  }
  return "";
}

std::vector<std::string> reply_list(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw Error("bad_script", where + " must be a list of replies");
  std::vector<std::string> out;
  for (const auto& r : j) {
    if (!r.is_string()) throw Error("bad_script", where + " holds a non-text reply");
    out.push_back(r.get<std::string>());
  }
  return out;
}

}  // namespace

std::string MockClient::send(const std::vector<Message>& messages) {
  if (replies_.empty()) {
    ++calls_;
    return "";
  }
  std::string reply = replies_[std::min(calls_, replies_.size() - 1)];
  ++calls_;
  static const std::string marker = "{{last_observation}}";
  for (auto at = reply.find(marker); at != std::string::npos; at = reply.find(marker)) {
    reply.replace(at, marker.size(), last_observation(messages));
  }
  return reply;
}

MockScript MockScript::parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_script", std::string("mock script is not JSON: ") + e.what());
  }
  MockScript s;
  if (j.is_array()) {
    s.default_ = reply_list(j, "script");
    return s;
  }
  if (!j.is_object()) throw Error("bad_script", "mock script must be a list or an object");
  if (j.contains("default")) s.default_ = reply_list(j["default"], "default");
  if (j.contains("instances")) {
    if (!j["instances"].is_object()) throw Error("bad_script", "instances must be an object");
    for (const auto& [id, replies] : j["instances"].items()) s.instances_[id] = reply_list(replies, id);
  }
  return s;
}

MockScript MockScript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot read mock script " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

MockScript MockScript::uniform(std::vector<std::string> replies) {
  MockScript s;
  s.default_ = std::move(replies);
  return s;
}

void MockScript::set(const std::string& instance_id, std::vector<std::string> replies) {
  instances_[instance_id] = std::move(replies);
}

const std::vector<std::string>& MockScript::replies_for(const std::string& instance_id) const {
  auto it = instances_.find(instance_id);
  return it == instances_.end() ? default_ : it->second;
}

std::unique_ptr<ChatClient> MockScript::client_for(const std::string& instance_id) const {
  return std::make_unique<MockClient>(replies_for(instance_id));
}

nlohmann::json MockScript::to_json() const {
  nlohmann::json j = {{"default", default_}, {"instances", nlohmann::json::object()}};
  for (const auto& [id, r] : instances_) j["instances"][id] = r;
  return j;
}

HttpClient::HttpClient(std::string base_url, std::string model, std::string api_key, int timeout_s)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)), timeout_s_(timeout_s) {
  if (base_url_.rfind("http://", 0) != 0)
    throw Error("bad_config", "LLM_BASE_URL must be an http:// URL (TLS is not compiled in)");
}

std::unique_ptr<HttpClient> HttpClient::from_env() {
  auto get = [](const char* name) {
    const char* v = std::getenv(name);
    return std::string(v ? v : "");
  };
  if (get("LLM_BASE_URL").empty() || get("LLM_MODEL").empty())
    throw Error("bad_config", "LLM_BASE_URL and LLM_MODEL must be set for the provider client");
  return std::make_unique<HttpClient>(get("LLM_BASE_URL"), get("LLM_MODEL"), get("LLM_API_KEY"));
}

std::string HttpClient::send(const std::vector<Message>& messages) {
  // Split "http://host:port/prefix" into the client address and path prefix.
  const std::string rest = base_url_.substr(7);
  const auto slash = rest.find('/');
  const std::string host = "http://" + rest.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : rest.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  nlohmann::json body = {{"model", model_}, {"messages", nlohmann::json::array()}, {"temperature", 0}};
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.text}});
  httplib::Client cli(host);
  cli.set_read_timeout(timeout_s_, 0);
  cli.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw Error("chat_failed", "provider unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error("chat_failed", "provider returned HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_string() ? content.get<std::string>() : "";
  } catch (const nlohmann::json::exception& e) {
    throw Error("chat_failed", std::string("malformed provider reply: ") + e.what());
  }
}

}  // namespace stratus::chat
