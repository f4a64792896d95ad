#include <fstream>
#include <sstream>

#include "internal.hpp"

namespace stratus::bench {

using nlohmann::json;

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
  }
  return "unknown";
}

Difficulty parse_difficulty(const std::string& text) {
  for (Difficulty d : {Difficulty::easy, Difficulty::medium, Difficulty::hard})
    if (text == to_string(d)) return d;
  throw Error("bad_difficulty", "unknown difficulty '" + text + "'");
}

namespace {

[[noreturn]] void schema(const std::string& msg) { throw Error("schema_error", msg); }

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema(std::string("missing field '") + key + "'");
  return j[key];
}

std::string str(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) schema(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double num(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) schema(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::vector<std::string> strings(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_array()) schema(std::string("field '") + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) schema(std::string("field '") + key + "' must hold strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

json AnswerSpec::to_json() const {
  json j = {{"kind", eval::to_string(kind)}};
  switch (kind) {
    case eval::AnswerKind::numeric:
      j["value"] = value;
      j["units"] = units;
      j["sigma"] = sigma;
      break;
    case eval::AnswerKind::hours: j["value"] = value; break;
    case eval::AnswerKind::location: j["name"] = name; break;
    case eval::AnswerKind::location_list: j["names"] = names; break;
    case eval::AnswerKind::boolean: j["value"] = boolean; break;
    case eval::AnswerKind::description:
      j["reference_text"] = reference_text;
      j["reference_claims"] = reference_claims;
      break;
  }
  return j;
}

AnswerSpec AnswerSpec::from_json(const json& j) {
  AnswerSpec a;
  try {
    a.kind = eval::parse_answer_kind(str(j, "kind"));
  } catch (const Error& e) {
    if (e.code() == "schema_error") throw;
    schema(e.what());
  }
  switch (a.kind) {
    case eval::AnswerKind::numeric:
      a.value = num(j, "value");
      a.units = str(j, "units");
      a.sigma = num(j, "sigma");
      if (!(a.sigma > 0.0)) schema("numeric truth needs sigma > 0");
      break;
    case eval::AnswerKind::hours: a.value = num(j, "value"); break;
    case eval::AnswerKind::location: a.name = str(j, "name"); break;
    case eval::AnswerKind::location_list: a.names = strings(j, "names"); break;
    case eval::AnswerKind::boolean:
      if (!field(j, "value").is_boolean()) schema("boolean truth needs a boolean value");
      a.boolean = j["value"].get<bool>();
      break;
    case eval::AnswerKind::description:
      a.reference_text = str(j, "reference_text");
      a.reference_claims = strings(j, "reference_claims");
      break;
  }
  return a;
}

json Claim::to_json() const {
  return {{"text", text},
          {"timestamp", timestamp},
          {"negated", negated},
          {"original", original},
          {"source", source},
          {"check",
           {{"variable", check.variable},
            {"region", check.region},
            {"stat", check.stat},
            {"comparison", check.comparison},
            {"threshold", check.threshold}}}};
}

Claim Claim::from_json(const json& j) {
  Claim c;
  c.text = str(j, "text");
  c.timestamp = str(j, "timestamp");
  if (!field(j, "negated").is_boolean()) schema("claim 'negated' must be a boolean");
  c.negated = j["negated"].get<bool>();
  c.original = str(j, "original");
  c.source = str(j, "source");
  const json& k = field(j, "check");
  c.check = {str(k, "variable"), str(k, "region"), str(k, "stat"), str(k, "comparison"), num(k, "threshold")};
  if (c.negated && c.original.empty()) schema("negated claim without its original");
  return c;
}

json TaskInstance::to_json() const {
  json j = {{"schema", kSchema},
            {"instance_id", instance_id},
            {"template_id", template_id},
            {"difficulty", to_string(difficulty)},
            {"question", question},
            {"bindings", bindings},
            {"dataset_refs", dataset_refs},
            {"truth", truth.to_json()},
            {"metric", metric},
            {"rule", eval::to_string(rule)}};
  if (!reference_program.empty()) j["reference_program"] = reference_program;
  if (claim) j["claim"] = claim->to_json();
  return j;
}

TaskInstance TaskInstance::from_json(const json& j) {
  if (!j.is_object()) schema("instance must be a JSON object");
  if (str(j, "schema") != kSchema) schema("unsupported schema '" + j["schema"].get<std::string>() + "'");
  TaskInstance t;
  t.instance_id = str(j, "instance_id");
  if (!field(j, "template_id").is_number_integer()) schema("template_id must be an integer");
  t.template_id = j["template_id"].get<int>();
  if (t.template_id < 1 || t.template_id > 46) schema("template_id out of range");
  try {
    t.difficulty = parse_difficulty(str(j, "difficulty"));
    t.rule = eval::parse_rule(str(j, "rule"));
  } catch (const Error& e) {
    if (e.code() == "schema_error") throw;
    schema(e.what());
  }
  t.question = str(j, "question");
  t.bindings = field(j, "bindings");
  if (!t.bindings.is_object()) schema("bindings must be an object");
  t.dataset_refs = strings(j, "dataset_refs");
  t.truth = AnswerSpec::from_json(field(j, "truth"));
  t.metric = str(j, "metric");
  if (j.contains("reference_program")) t.reference_program = str(j, "reference_program");
  if (j.contains("claim")) t.claim = Claim::from_json(j["claim"]);

  eval::AnswerKind expected = eval::AnswerKind::description;
  bool known = false;
  for (const auto& tmpl : templates())
    if (tmpl.id == t.template_id) {
      expected = tmpl.kind;
      known = true;
    }
  if (!known && (t.template_id < 41 || t.template_id > 43))
    schema("template " + std::to_string(t.template_id) + " is not implemented");
  if (t.truth.kind != expected)
    schema(std::string("answer_kind '") + eval::to_string(t.truth.kind) + "' does not match template " +
           std::to_string(t.template_id) + " ('" + eval::to_string(expected) + "')");
  return t;
}

void export_bench(const std::vector<TaskInstance>& instances, const std::filesystem::path& path,
                  const json& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write '" + path.string() + "'");
  if (!manifest.is_null()) {
    json m = manifest;
    m["type"] = "manifest";
    out << m.dump() << '\n';
  }
  for (const auto& t : instances) out << t.to_json().dump() << '\n';
  if (!out) throw Error("io_error", "write failed for '" + path.string() + "'");
}

std::vector<TaskInstance> parse_bench(const std::string& text) {
  std::vector<TaskInstance> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.is_object() && j.value("type", "") == "manifest") continue;
      out.push_back(TaskInstance::from_json(j));
    } catch (const json::exception& e) {
      throw Error("schema_error", "line " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("schema_error", "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TaskInstance> import_bench(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_bench(buf.str());
}

}  // namespace stratus::bench
