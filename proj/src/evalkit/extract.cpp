#include <algorithm>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "stratus/chat.hpp"
#include "stratus/evalkit.hpp"
#include "stratus/textmatch.hpp"

namespace stratus::eval {

const char* to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::numeric: return "numeric";
    case AnswerKind::hours: return "hours";
    case AnswerKind::location: return "location";
    case AnswerKind::location_list: return "location_list";
    case AnswerKind::boolean: return "boolean";
    case AnswerKind::description: return "description";
  }
  return "unknown";
}

AnswerKind parse_answer_kind(const std::string& text) {
  for (AnswerKind k : {AnswerKind::numeric, AnswerKind::hours, AnswerKind::location, AnswerKind::location_list,
                       AnswerKind::boolean, AnswerKind::description})
    if (text == to_string(k)) return k;
  throw Error("bad_kind", "unknown answer kind '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_decoration(std::string s) {
  s = trim(s);
  while (!s.empty() && std::string("\"'`*[(").find(s.front()) != std::string::npos) s.erase(0, 1);
  while (!s.empty() && std::string("\"'`*]).,;:!").find(s.back()) != std::string::npos) s.pop_back();
  return trim(s);
}

void parse_number(ExtractedAnswer& a, const std::string& body) {
  static const std::regex re(R"(([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z%][A-Za-z0-9/^-]*)?)");
  std::smatch m;
  if (!std::regex_search(body, m, re)) {
    a.reason = "no_number";
    return;
  }
  a.valid = true;
  a.number = std::stod(m[1].str());
  a.units = m[2].matched ? m[2].str() : "";
}

void parse_boolean(ExtractedAnswer& a, const std::string& body) {
  std::istringstream in(text::normalize(body));
  std::string w;
  while (in >> w) {
    if (w == "yes" || w == "true") {
      a.valid = true;
      a.boolean = true;
      return;
    }
    if (w == "no" || w == "false") {
      a.valid = true;
      a.boolean = false;
      return;
    }
  }
  a.reason = "no_boolean";
}

std::vector<std::string> parse_list(const std::string& body) {
  const std::string t = trim(body);
  if (!t.empty() && t.front() == '[') {
    try {
      const auto j = nlohmann::json::parse(t);
      std::vector<std::string> out;
      for (const auto& item : j)
        if (item.is_string() && !trim(item.get<std::string>()).empty()) out.push_back(trim(item.get<std::string>()));
      return out;
    } catch (const nlohmann::json::exception&) {
    }
  }
  const std::string norm = text::normalize(t);
  if (norm.empty() || norm == "none" || norm == "empty" || norm == "no locations" || norm == "nothing") return {};
  std::string s = t;
  for (std::size_t at = s.find(" and "); at != std::string::npos; at = s.find(" and ")) s.replace(at, 5, ",");
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',' || c == ';' || c == '\n') {
      const std::string item = strip_decoration(cur);
      if (!item.empty()) out.push_back(item);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

ExtractedAnswer rules(const std::string& body, AnswerKind kind) {
  ExtractedAnswer a;
  a.kind = kind;
  a.text = trim(body);
  const bool empty = a.text.empty();
  switch (kind) {
    case AnswerKind::numeric:
    case AnswerKind::hours:
      if (empty) a.reason = "no_answer";
      else parse_number(a, a.text);
      break;
    case AnswerKind::boolean:
      if (empty) a.reason = "no_answer";
      else parse_boolean(a, a.text);
      break;
    case AnswerKind::location: {
      auto items = parse_list(a.text);
      if (items.empty()) {
        a.reason = "no_answer";
      } else {
        a.valid = true;
        a.text = items.front();
      }
      break;
    }
    case AnswerKind::location_list:
      // An explicit empty list is a valid answer.
      a.valid = true;
      a.items = parse_list(a.text);
      break;
    case AnswerKind::description:
      if (empty) a.reason = "no_answer";
      else a.valid = true;
      break;
  }
  return a;
}

}  // namespace

std::string answer_body(const std::string& response) {
  static const std::string open = "<solution>", close = "</solution>";
  const auto b = response.find(open);
  if (b == std::string::npos) return response;
  const auto e = response.find(close, b + open.size());
  return response.substr(b + open.size(), e == std::string::npos ? std::string::npos : e - b - open.size());
}

ExtractedAnswer verify_extract(const std::string& question, const std::string& response, AnswerKind kind,
                               chat::ChatClient* judge) {
  std::string body = answer_body(response);
  if (judge) {
    const std::vector<chat::Message> msgs = {
        {"system",
         "You check answers to weather questions. Decide whether the response contains a relevant, valid "
         "answer and extract only that answer. Reply with JSON {\"valid\": true|false, \"answer\": \"...\"}."},
        {"user", "Question: " + question + "\nExpected answer type: " + to_string(kind) + "\nResponse: " + response}};
    try {
      const auto j = nlohmann::json::parse(judge->send(msgs));
      if (!j.value("valid", false)) {
        ExtractedAnswer a;
        a.kind = kind;
        a.reason = "judge_invalid";
        return a;
      }
      if (j.contains("answer") && j["answer"].is_string()) body = j["answer"].get<std::string>();
    } catch (const std::exception&) {
      // Unparseable judge output: fall back to the rules on the raw body.
    }
  }
  return rules(body, kind);
}

}  // namespace stratus::eval
