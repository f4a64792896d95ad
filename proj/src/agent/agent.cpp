#include "stratus/agent.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace stratus::agent {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string variables_section() {
  std::string out = "## Variables\n\n";
  for (const auto& v : grid::variable_registry())
    out += "- `" + v.name + "` (alias `" + v.alias + "`), " + v.units + ": " + v.description + "\n";
  return out;
}

const char* kTimeRules =
    "## Time indices\n\n"
    "The datasets attached to a question start at the first step of the period the question asks about, "
    "unless the question text says otherwise. Index 0 is that first step and each index is one time step "
    "later; the step length is listed with the question. `data(0)` is the first attached dataset. "
    "`time_offset_hours(argmax_time(x))` counts hours from index 0: a maximum at index 5 with 6-hour steps "
    "is 30 hours. Forecasts start from the last step of their input dataset.\n";

const char* kProgramRules =
    "## Programs\n\n"
    "- Programs are expressions with optional `let name = expr;` bindings before them.\n"
    "- DO NOT loop over latitudes and longitudes; reduce whole fields with the builtins.\n"
    "- Regions can be feature names, `geocode(...)` results, masks or `point(lat, lon)`.\n"
    "- The value of the final expression is returned to you.\n";

std::string header(const std::string& intro) {
  return intro + "\n\n## Tools\n\n" + plan::builtin_reference() + "\n" + variables_section() + "\n" + kTimeRules +
         "\n" + kProgramRules;
}

std::string user_prompt(const Question& q) {
  std::string out;
  if (!q.context.empty()) out += q.context + "\n\n";
  return out + "Question: " + q.text;
}

exec::ExecResult run(exec::Backend& backend, const Question& q, const std::string& id, const std::string& src,
                     const Options& opt) {
  exec::ExecRequest req;
  req.request_id = id;
  req.program_source = src;
  req.dataset_refs = q.dataset_refs;
  req.timeout_ms = opt.timeout_ms;
  try {
    return backend.execute(req);
  } catch (const Error& e) {
    exec::ExecResult r;
    r.request_id = id;
    r.status = exec::Status::server_error;
    r.error = exec::ErrorInfo{e.code(), e.what(), 0, 0};
    return r;
  }
}

std::string error_text(const exec::ExecResult& r) {
  std::string out = std::string(exec::to_string(r.status));
  if (r.error) {
    out += " (" + r.error->code;
    if (r.error->line > 0) out += " at line " + std::to_string(r.error->line) + ", column " + std::to_string(r.error->col);
    out += "): " + r.error->message;
  }
  return out;
}

std::string observation_body(const exec::ExecResult& r) {
  if (r.status != exec::Status::ok) return "Error: " + error_text(r);
  if (r.stdout_capture.empty()) return *r.value_text;
  return r.stdout_capture + (r.stdout_capture.back() == '\n' ? "" : "\n") + *r.value_text;
}

std::string violation_text(const std::string& code) {
  return "Protocol violation (" + code + "). Reply with exactly one <execute>...</execute> or <solution>...</solution> block.";
}

class Session {
 public:
  Session(Transcript& t, chat::ChatClient& client) : t_(t), client_(client) {}

  void say(const std::string& role, const std::string& text, TurnKind kind) {
    msgs_.push_back({role, text});
    t_.turns.push_back({role, text, kind});
  }
  std::string ask() { return client_.send(msgs_); }
  void reply(const std::string& text, TurnKind kind) { say("assistant", text, kind); }

 private:
  Transcript& t_;
  chat::ChatClient& client_;
  std::vector<chat::Message> msgs_;
};

}  // namespace

TagParse extract_tagged(const std::string& message) {
  const auto e = message.find("<execute>");
  const auto s = message.find("<solution>");
  if (e != std::string::npos && s != std::string::npos) return {std::nullopt, "both_tags"};
  if (e == std::string::npos && s == std::string::npos) return {std::nullopt, "no_tags"};
  const bool is_exec = e != std::string::npos;
  const std::string open = is_exec ? "<execute>" : "<solution>";
  const std::string close = is_exec ? "</execute>" : "</solution>";
  const auto begin = (is_exec ? e : s) + open.size();
  const auto end = message.find(close, begin);
  if (end == std::string::npos) return {std::nullopt, "unterminated_tag"};
  std::string body = trim(message.substr(begin, end - begin));
  if (body.empty()) return {std::nullopt, "empty_block"};
  return {TaggedBlock{is_exec ? BlockKind::execute : BlockKind::solution, std::move(body)}, ""};
}

std::string truncate_observation(const std::string& text) {
  if (text.size() <= kMaxObservationBytes) return text;
  std::size_t cut = kMaxObservationBytes;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut) + "\n" + kTruncatedMarker;
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::direct: return "direct";
    case Mode::reflective: return "reflective";
    case Mode::text_only: return "text_only";
  }
  return "direct";
}

const char* to_string(TurnKind k) {
  switch (k) {
    case TurnKind::prompt: return "prompt";
    case TurnKind::code: return "code";
    case TurnKind::observation: return "observation";
    case TurnKind::solution: return "solution";
    case TurnKind::error: return "error";
  }
  return "error";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::solved: return "solved";
    case Outcome::budget_exhausted: return "budget_exhausted";
    case Outcome::protocol_violation: return "protocol_violation";
  }
  return "budget_exhausted";
}

Mode parse_mode(const std::string& text) {
  for (Mode m : {Mode::direct, Mode::reflective, Mode::text_only})
    if (text == to_string(m)) return m;
  throw Error("bad_mode", "mode must be direct, reflective or text_only, got '" + text + "'");
}

std::string direct_system_prompt() {
  return header("You answer weather and climate questions by writing one tool program that runs on a data "
                "server against the attached datasets.") +
         "\nReply with exactly one <execute>...</execute> block holding the program. If it fails you will see the "
         "error and may send a corrected program.\n";
}

std::string reflective_system_prompt() {
  return header("You answer weather and climate questions by running tool programs on a data server, looking "
                "at the results and refining until you can answer.") +
         "\nEach reply holds either one <execute>...</execute> block or one <solution>...</solution> block, not "
         "both at the same time. Results of an <execute> block come back inside <observation> tags. Put the final "
         "answer, with units, in the <solution> block.\n";
}

std::string text_only_system_prompt() {
  return "You answer weather and climate questions from what you know, without access to data or tools.\n\n" +
         variables_section() + "\nGive the final answer, with units, inside <solution>...</solution>.\n";
}

const char* observation_prompt() {
  return "Reason about your next step. Reply with one <execute> block, or with a <solution> block if you can "
         "answer now.";
}

std::string describe_datasets(const std::vector<std::string>& refs, const json& catalog) {
  std::string out = "Attached datasets:\n";
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto ref = catalog::DatasetRef::parse(refs[k]);
    const json* entry = nullptr;
    for (const auto& d : catalog.at("datasets"))
      if (d.at("id") == ref.id) entry = &d;
    if (!entry) throw Error("unknown_dataset", "dataset '" + ref.id + "' is not in the catalog");
    const int step = entry->at("step_hours");
    const std::size_t t0 = ref.t0.value_or(0);
    const std::size_t t1 = ref.t1.value_or(entry->at("n_times").get<std::size_t>());
    const std::int64_t start =
        grid::parse_iso8601(entry->at("start").get<std::string>()) + static_cast<std::int64_t>(t0) * step * 3600;
    out += "- data(" + std::to_string(k) + ") = \"" + refs[k] + "\": " + std::to_string(t1 - t0) + " steps of " +
           std::to_string(step) + " h; index 0 is " + grid::format_iso8601(start) + "\n";
  }
  return out;
}

Transcript run_direct(const Question& q, chat::ChatClient& client, exec::Backend& backend, const Options& opt) {
  Transcript t{q.instance_id, Mode::direct, q.text, {}, 0, 0, "", Outcome::budget_exhausted};
  Session s(t, client);
  s.say("system", direct_system_prompt(), TurnKind::prompt);
  s.say("user", user_prompt(q), TurnKind::prompt);
  bool last_violation = false;
  while (t.attempts < opt.max_attempts) {
    ++t.attempts;
    const std::string reply = s.ask();
    const TagParse p = extract_tagged(reply);
    if (!p.block) {
      s.reply(reply, TurnKind::error);
      s.say("user", violation_text(p.violation), TurnKind::error);
      last_violation = true;
      continue;
    }
    last_violation = false;
    if (p.block->kind == BlockKind::solution) {
      s.reply(reply, TurnKind::solution);
      t.answer = p.block->body;
      t.outcome = Outcome::solved;
      return t;
    }
    s.reply(reply, TurnKind::code);
    const auto r = run(backend, q, q.instance_id + "/a" + std::to_string(t.attempts), p.block->body, opt);
    if (r.status == exec::Status::ok) {
      s.say("user", truncate_observation(observation_body(r)), TurnKind::observation);
      t.answer = *r.value_text;
      t.outcome = Outcome::solved;
      return t;
    }
    s.say("user", truncate_observation("Execution failed: " + error_text(r) + "\nSend a corrected program."),
          TurnKind::error);
  }
  t.outcome = last_violation ? Outcome::protocol_violation : Outcome::budget_exhausted;
  return t;
}

Transcript run_reflective(const Question& q, chat::ChatClient& client, exec::Backend& backend, const Options& opt) {
  Transcript t{q.instance_id, Mode::reflective, q.text, {}, 0, 0, "", Outcome::budget_exhausted};
  Session s(t, client);
  s.say("system", reflective_system_prompt(), TurnKind::prompt);
  s.say("user", user_prompt(q), TurnKind::prompt);
  bool last_violation = false;
  while (t.rounds < opt.max_rounds) {
    ++t.rounds;
    const std::string reply = s.ask();
    const TagParse p = extract_tagged(reply);
    if (!p.block) {
      s.reply(reply, TurnKind::error);
      s.say("user", violation_text(p.violation), TurnKind::error);
      last_violation = true;
      continue;
    }
    last_violation = false;
    if (p.block->kind == BlockKind::solution) {
      s.reply(reply, TurnKind::solution);
      t.answer = p.block->body;
      t.outcome = Outcome::solved;
      return t;
    }
    s.reply(reply, TurnKind::code);
    ++t.attempts;
    const auto r = run(backend, q, q.instance_id + "/r" + std::to_string(t.rounds), p.block->body, opt);
    s.say("user",
          "<observation>" + truncate_observation(observation_body(r)) + "</observation>\n" + observation_prompt(),
          r.status == exec::Status::ok ? TurnKind::observation : TurnKind::error);
  }
  t.outcome = last_violation ? Outcome::protocol_violation : Outcome::budget_exhausted;
  return t;
}

std::string text_only_answer(const std::string& question, chat::ChatClient& client) {
  return client.send({{"system", text_only_system_prompt()}, {"user", "Question: " + question}});
}

Transcript run_text_only(const Question& q, chat::ChatClient& client) {
  Transcript t{q.instance_id, Mode::text_only, q.text, {}, 0, 1, "", Outcome::solved};
  t.turns.push_back({"system", text_only_system_prompt(), TurnKind::prompt});
  t.turns.push_back({"user", "Question: " + q.text, TurnKind::prompt});
  const std::string reply = text_only_answer(q.text, client);
  t.turns.push_back({"assistant", reply, TurnKind::solution});
  t.answer = reply;
  return t;
}

// ---------------------------------------------------------------------------
// JSON lines

std::string to_jsonl(const Transcript& t) {
  std::string out = json{{"type", "transcript"}, {"instance_id", t.instance_id}, {"mode", to_string(t.mode)},
                         {"question", t.question}}
                        .dump() +
                    "\n";
  for (std::size_t i = 0; i < t.turns.size(); ++i)
    out += json{{"type", "turn"},
                {"instance_id", t.instance_id},
                {"index", i},
                {"role", t.turns[i].role},
                {"kind", to_string(t.turns[i].kind)},
                {"text", t.turns[i].text}}
               .dump() +
           "\n";
  out += json{{"type", "result"},     {"instance_id", t.instance_id}, {"outcome", to_string(t.outcome)},
              {"answer", t.answer},   {"attempts", t.attempts},       {"rounds", t.rounds}}
             .dump() +
         "\n";
  return out;
}

std::vector<Transcript> parse_transcripts(const std::string& text) {
  std::vector<Transcript> out;
  std::map<std::string, std::size_t> open;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  auto fail = [&](const std::string& m) { return Error("schema_error", "line " + std::to_string(n) + ": " + m); };
  auto turn_kind = [&](const std::string& k) {
    for (TurnKind tk : {TurnKind::prompt, TurnKind::code, TurnKind::observation, TurnKind::solution, TurnKind::error})
      if (k == to_string(tk)) return tk;
    throw fail("unknown turn kind '" + k + "'");
  };
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type");
      if (type != "transcript" && type != "turn" && type != "result") continue;
      const std::string id = j.at("instance_id");
      if (type == "transcript") {
        Transcript t;
        t.instance_id = id;
        t.mode = parse_mode(j.at("mode"));
        t.question = j.at("question");
        open[id] = out.size();
        out.push_back(std::move(t));
        continue;
      }
      auto it = open.find(id);
      if (it == open.end()) throw fail("no open transcript for '" + id + "'");
      Transcript& t = out[it->second];
      if (type == "turn") {
        t.turns.push_back({j.at("role"), j.at("text"), turn_kind(j.at("kind"))});
      } else {
        const std::string o = j.at("outcome");
        bool known = false;
        for (Outcome oc : {Outcome::solved, Outcome::budget_exhausted, Outcome::protocol_violation})
          if (o == to_string(oc)) {
            t.outcome = oc;
            known = true;
          }
        if (!known) throw fail("unknown outcome '" + o + "'");
        t.answer = j.at("answer");
        t.attempts = j.at("attempts");
        t.rounds = j.at("rounds");
        open.erase(it);
      }
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const Error& e) {
      if (e.code() == "schema_error") throw;
      throw fail(e.what());
    }
  }
  if (!open.empty()) throw Error("schema_error", "transcript '" + open.begin()->first + "' has no result line");
  return out;
}

std::vector<Transcript> load_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_transcripts(buf.str());
}

}  // namespace stratus::agent
