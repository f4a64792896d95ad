#include <random>

#include "doctest.h"
#include "stratus/agent.hpp"

using namespace stratus;
using namespace stratus::agent;

namespace {

std::shared_ptr<const catalog::Catalog> small_catalog() {
  static const auto cat = [] {
    const auto spec = grid::make_subgrid(86, 32, 8, 8);
    auto obs = std::make_shared<const grid::GridDataset>(
        grid::synth_dataset(3, {"temperature_2m", "mean_sea_level_pressure"}, 16, spec));
    auto geo = std::make_shared<const geo::GeoIndex>(geo::GeoIndex::load("data/world.geojson", spec));
    return std::make_shared<const catalog::Catalog>(catalog::make_catalog("test", {{"obs", obs}}, geo));
  }();
  return cat;
}

exec::Executor& executor() {
  static exec::Executor ex(exec::ServerConfig{}, small_catalog());
  return ex;
}

// Replays replies and keeps every conversation it was shown.
class Recorder : public chat::ChatClient {
 public:
  explicit Recorder(std::vector<std::string> replies) : mock_(std::move(replies)) {}
  std::string send(const std::vector<chat::Message>& messages) override {
    seen.push_back(messages);
    return mock_.send(messages);
  }
  std::vector<std::vector<chat::Message>> seen;

 private:
  chat::MockClient mock_;
};

Question question(std::string text = "What is the mean 2 metre temperature in Northland?") {
  return {"q1", std::move(text), {"obs@0:8"}, "Attached datasets:\n- data(0) = \"obs@0:8\""};
}

std::size_t count(const Transcript& t, TurnKind k, const std::string& role = "") {
  std::size_t n = 0;
  for (const auto& turn : t.turns) n += turn.kind == k && (role.empty() || turn.role == role);
  return n;
}

}  // namespace

TEST_CASE("extract_tagged grammar") {
  auto p = extract_tagged("text <solution> 42 </solution>");
  REQUIRE(p.block);
  CHECK(p.block->kind == BlockKind::solution);
  CHECK(p.block->body == "42");
  p = extract_tagged("<execute> mean(x) </execute>");
  REQUIRE(p.block);
  CHECK(p.block->kind == BlockKind::execute);
  CHECK(p.block->body == "mean(x)");
  CHECK(extract_tagged("<execute>1</execute><solution>2</solution>").violation == "both_tags");
  CHECK(extract_tagged("<solution>2</solution> then <execute>1</execute>").violation == "both_tags");
  CHECK(extract_tagged("the answer is 42").violation == "no_tags");
  CHECK(extract_tagged("").violation == "no_tags");
  CHECK(extract_tagged("<execute> mean(x)").violation == "unterminated_tag");
  CHECK(extract_tagged("<solution></solution>").violation == "empty_block");
  p = extract_tagged("<execute>a</execute> and <execute>b</execute>");
  REQUIRE(p.block);
  CHECK(p.block->body == "a");

  // Total over arbitrary text: exactly one of block / violation.
  const std::vector<std::string> atoms = {"<execute>", "</execute>", "<solution>", "</solution>", "x", " ", "<", ">", "\n"};
  std::mt19937 rng(5);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int k = rng() % 8; k > 0; --k) s += atoms[rng() % atoms.size()];
    const auto r = extract_tagged(s);
    CHECK(r.block.has_value() == r.violation.empty());
  }
}

TEST_CASE("observation truncation") {
  CHECK(truncate_observation("short") == "short");
  const std::string exact(kMaxObservationBytes, 'a');
  CHECK(truncate_observation(exact) == exact);
  const std::string out = truncate_observation(std::string(20000, 'b'));
  CHECK(out == std::string(kMaxObservationBytes, 'b') + "\n[truncated]");
  // A two-byte character straddling the limit is dropped whole.
  std::string mixed(kMaxObservationBytes - 1, 'c');
  mixed += "\xC3\xA9 tail";
  const std::string cut = truncate_observation(mixed);
  CHECK(cut == std::string(kMaxObservationBytes - 1, 'c') + "\n[truncated]");
}

TEST_CASE("direct: first program succeeds") {
  Recorder client({"<execute>\nmean(sel(\"t2m\", \"Northland\"))\n</execute>"});
  const Transcript t = run_direct(question(), client, executor());
  CHECK(t.outcome == Outcome::solved);
  CHECK(t.attempts == 1);
  CHECK(count(t, TurnKind::code) == 1);
  CHECK(t.answer.find(" K") != std::string::npos);
  // The prompt follows the documented structure.
  const auto& sys = client.seen[0][0].text;
  CHECK(sys.find("## Tools") != std::string::npos);
  CHECK(sys.find("temperature_2m") != std::string::npos);
  CHECK(sys.find("## Time indices") != std::string::npos);
  CHECK(sys.find("<execute>") != std::string::npos);
  CHECK(client.seen[0][1].text.find("Question: What is the mean") != std::string::npos);
}

TEST_CASE("direct: one broken program then a fixed one") {
  Recorder client({"<execute>mean(sel(\"t2m\", (</execute>", "<execute>1 + 1</execute>"});
  const Transcript t = run_direct(question(), client, executor());
  CHECK(t.outcome == Outcome::solved);
  CHECK(t.attempts == 2);
  CHECK(count(t, TurnKind::code) == 2);
  CHECK(t.answer == "2");
  REQUIRE(client.seen.size() == 2);
  CHECK(client.seen[1].back().text.find("syntax_error at line 1") != std::string::npos);
}

TEST_CASE("direct: five broken programs exhaust the budget") {
  Recorder client({"<execute>frobnicate(1)</execute>"});
  const Transcript t = run_direct(question(), client, executor());
  CHECK(t.outcome == Outcome::budget_exhausted);
  CHECK(t.attempts == 5);
  CHECK(count(t, TurnKind::code) == 5);
  CHECK(count(t, TurnKind::error, "user") == 5);
  CHECK(client.seen.size() == 5);
  CHECK(t.answer.empty());

  Options three;
  three.max_attempts = 3;
  Recorder again({"<execute>frobnicate(1)</execute>"});
  CHECK(run_direct(question(), again, executor(), three).attempts == 3);

  Recorder chatty({"I think it is warm."});
  const Transcript v = run_direct(question(), chatty, executor());
  CHECK(v.outcome == Outcome::protocol_violation);
  CHECK(v.attempts == 5);
}

TEST_CASE("reflective: two executions then a solution") {
  Recorder client({"<execute>2 + 3</execute>", "Let me look.\n<execute>mean(sel(\"t2m\", \"Northland\"))</execute>",
                   "<solution>{{last_observation}}</solution>"});
  const Transcript t = run_reflective(question(), client, executor());
  CHECK(t.outcome == Outcome::solved);
  CHECK(t.rounds == 3);
  CHECK(count(t, TurnKind::code) == 2);
  CHECK(count(t, TurnKind::observation) == 2);
  std::size_t assistant = 0;
  for (const auto& turn : t.turns) assistant += turn.role == "assistant";
  CHECK(assistant == 3);

  // The rendered value appears verbatim inside the next prompt.
  const auto direct = executor().execute({"x", "mean(sel(\"t2m\", \"Northland\"))", "toolplan", {"obs@0:8"}, {}, {}});
  REQUIRE(direct.value_text);
  const std::string& next = client.seen[2].back().text;
  CHECK(next.find("<observation>" + *direct.value_text + "</observation>") != std::string::npos);
  CHECK(next.find("Reason about your next step") != std::string::npos);
  CHECK(client.seen[1].back().text.find("<observation>5</observation>") != std::string::npos);
  CHECK(t.answer == *direct.value_text);
}

TEST_CASE("reflective: twenty executions without a solution") {
  Recorder client({"<execute>1</execute>"});
  const Transcript t = run_reflective(question(), client, executor());
  CHECK(t.outcome == Outcome::budget_exhausted);
  CHECK(t.rounds == 20);
  CHECK(client.seen.size() == 20);
  CHECK(count(t, TurnKind::code) == 20);
  CHECK(count(t, TurnKind::observation) + count(t, TurnKind::error, "user") == 20);
}

TEST_CASE("reflective: errors and huge outputs come back as observations") {
  Recorder client({"<execute>range(5000)</execute>", "<execute>1 / 0</execute>", "<solution>done</solution>"});
  const Transcript t = run_reflective(question(), client, executor());
  CHECK(t.outcome == Outcome::solved);
  const std::string& big = client.seen[1].back().text;
  CHECK(big.find("\n[truncated]</observation>") != std::string::npos);
  CHECK(big.size() < kMaxObservationBytes + 400);
  CHECK(client.seen[2].back().text.find("<observation>Error: program_error") != std::string::npos);
  CHECK(t.turns[t.turns.size() - 2].kind == TurnKind::error);
}

TEST_CASE("text-only answers") {
  Recorder client({"<solution>About 280 K.</solution>"});
  CHECK(text_only_answer("How warm was Northland?", client) == "<solution>About 280 K.</solution>");
  text_only_answer("Which country was driest?", client);
  REQUIRE(client.seen.size() == 2);
  CHECK(client.seen[0][0].text == client.seen[1][0].text);
  CHECK(client.seen[0][1].text == "Question: How warm was Northland?");
  CHECK(client.seen[1][1].text == "Question: Which country was driest?");
  CHECK(client.seen[0].size() == 2);

  chat::MockClient empty({});
  const Transcript t = run_text_only(question(), empty);
  CHECK(t.answer.empty());
  CHECK(t.outcome == Outcome::solved);
}

TEST_CASE("transcripts are byte-identical across runs and round-trip") {
  auto once = [] {
    Recorder client({"<execute>frobnicate(2)</execute>", "<execute>max(sel(\"msl\", \"Eastmark\"))</execute>",
                     "<solution>{{last_observation}}</solution>"});
    return to_jsonl(run_reflective(question("What was the highest pressure in Eastmark?"), client, executor()));
  };
  const std::string a = once(), b = once();
  CHECK(a == b);
  const auto parsed = parse_transcripts("{\"type\": \"manifest\", \"seed\": 1}\n" + a + a);
  REQUIRE(parsed.size() == 2);
  CHECK(to_jsonl(parsed[0]) == a);
  CHECK(parsed[0].turns.size() > 4);

  CHECK_THROWS_WITH_AS(parse_transcripts("{\"type\": \"turn\", \"instance_id\": \"zz\"}\n"), doctest::Contains("line 1"),
                       Error);
  CHECK_THROWS_AS(parse_transcripts(a.substr(0, a.rfind('\n', a.size() - 2) + 1)), Error);
  CHECK(parse_transcripts("").empty());
}

TEST_CASE("dataset descriptions follow the catalog") {
  const auto listing = executor().catalog_json();
  const std::string d = describe_datasets({"obs@4:12", "obs"}, listing);
  CHECK(d.find("data(0) = \"obs@4:12\": 8 steps of 6 h; index 0 is 2020-01-02T00:00:00Z") != std::string::npos);
  CHECK(d.find("data(1) = \"obs\": 16 steps of 6 h; index 0 is 2020-01-01T00:00:00Z") != std::string::npos);
  CHECK_THROWS_AS(describe_datasets({"nope"}, listing), Error);
}
