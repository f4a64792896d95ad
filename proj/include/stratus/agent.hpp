#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stratus/chat.hpp"
#include "stratus/execserver.hpp"

namespace stratus::agent {

inline constexpr std::size_t kMaxObservationBytes = 8 * 1024;
inline constexpr const char* kTruncatedMarker = "[truncated]";

// ---------------------------------------------------------------------------
// Tag protocol

enum class BlockKind { execute, solution };

struct TaggedBlock {
  BlockKind kind;
  std::string body;
};

/// Either a block or a violation code: both_tags, no_tags, unterminated_tag
/// or empty_block.
struct TagParse {
  std::optional<TaggedBlock> block;
  std::string violation;
};

/// Looks for <execute>...</execute> and <solution>...</solution>. A message
/// may carry only one kind; the first block of that kind is returned with
/// surrounding whitespace trimmed.
TagParse extract_tagged(const std::string& message);

/// Cuts `text` to kMaxObservationBytes on a UTF-8 boundary and appends
/// "\n[truncated]" when it was longer.
std::string truncate_observation(const std::string& text);

// ---------------------------------------------------------------------------
// Transcripts

enum class Mode { direct, reflective, text_only };
enum class TurnKind { prompt, code, observation, solution, error };
enum class Outcome { solved, budget_exhausted, protocol_violation };

const char* to_string(Mode m);
const char* to_string(TurnKind k);
const char* to_string(Outcome o);
/// Throws Error{"bad_mode"}.
Mode parse_mode(const std::string& text);

struct Turn {
  std::string role;  // system, user or assistant
  std::string text;
  TurnKind kind;
};

struct Transcript {
  std::string instance_id;
  Mode mode = Mode::direct;
  std::string question;
  std::vector<Turn> turns;
  /// Programs generated (direct) or assistant rounds used (reflective).
  std::size_t attempts = 0;
  std::size_t rounds = 0;
  std::string answer;
  Outcome outcome = Outcome::budget_exhausted;
};

/// One JSON object per line: a "transcript" header, one "turn" line per
/// turn, and a closing "result" line.
std::string to_jsonl(const Transcript& t);
/// Parses concatenated transcripts. Lines with other "type" values (such as
/// a run manifest) are skipped. Throws Error{"schema_error"} naming the line.
std::vector<Transcript> parse_transcripts(const std::string& text);
std::vector<Transcript> load_transcripts(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Loops

struct Question {
  std::string instance_id;
  std::string text;
  /// Dataset refs attached to every execution, in data(k) order.
  std::vector<std::string> dataset_refs;
  /// Free text describing the attached datasets (start time, step, length).
  std::string context;
};

struct Options {
  std::size_t max_attempts = 5;  // direct
  std::size_t max_rounds = 20;   // reflective
  std::optional<std::int64_t> timeout_ms;
};

/// Static part of every tool-using prompt: tool reference, variables and
/// units, time-index rules and the tag protocol.
std::string direct_system_prompt();
std::string reflective_system_prompt();
std::string text_only_system_prompt();
const char* observation_prompt();

/// Describes `refs` using a catalog listing as served by GET /catalog.
std::string describe_datasets(const std::vector<std::string>& refs, const nlohmann::json& catalog);

/// Single program with error correction: on a failed execution the error
/// is fed back and the model asked again, for at most max_attempts
/// programs in total. The answer is the value of the first successful run.
Transcript run_direct(const Question& q, chat::ChatClient& client, exec::Backend& backend,
                      const Options& opt = {});

/// Execute-observe loop; every assistant reply is one round. Stops at a
/// solution block or after max_rounds rounds.
Transcript run_reflective(const Question& q, chat::ChatClient& client, exec::Backend& backend,
                          const Options& opt = {});

/// One model call with no tools and a static system prompt; the question is
/// the only varying input. The reply is the answer verbatim.
std::string text_only_answer(const std::string& question, chat::ChatClient& client);
Transcript run_text_only(const Question& q, chat::ChatClient& client);

}  // namespace stratus::agent
