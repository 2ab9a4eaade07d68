#pragma once

#include <string>
#include <vector>

#include "simulmt/backend.hpp"
#include "simulmt/prompting.hpp"
#include "simulmt/text_stream.hpp"

namespace simulmt {

struct PolicyConfig {
    int wait_k = 3;      // initial steps before any write attempt
    int read_n = 3;      // chunk size between write attempts
    int beam = 5;        // candidates requested per invocation
    double gamma = 0.6;  // agreement threshold

    int max_new_tokens = 64;
    // Session-level emission cap. 0 derives 4 * source words + 32.
    int max_target_tokens = 0;

    // After a mid-stream write: false forces one READ (one write attempt per
    // eligible step), true keeps writing until the agreed prefix is empty.
    bool write_until_empty = false;
    // Forwarded to the voting stage; see AgreementConfig.
    bool filter_disagreeing = true;

    std::vector<std::string> stop_sequences;
};

// Bounds: wait_k >= 0, read_n >= 1, beam >= 1, gamma in (0,1],
// max_new_tokens >= 1, max_target_tokens >= 1 or the 0 sentinel.
void validate_policy(const PolicyConfig& config);

struct Action {
    enum class Kind { read, write, finish };

    Kind kind = Kind::read;
    std::vector<TargetToken> payload;  // non-empty exactly when kind == write
};

// Gating: a write is attempted iff the source is exhausted, or t > k and
// t is a multiple of n.
bool should_attempt_write(int t, int k, int n, bool source_finished);

struct DecideResult {
    Action action;
    bool invoked = false;  // whether a backend call happened this step
};

// One policy decision at the current step t = state.source.cursor().
// Gating false: READ with no backend call. Otherwise the backend proposes
// `beam` continuations of the current prompt; while the source is
// unfinished the voted prefix (EOS stripped) is committed, an empty vote
// falling back to READ; once the source is exhausted the argmax-score
// candidate is committed whole (truncated at its first EOS), an empty
// result meaning FINISH. Backend failures propagate as BackendError.
DecideResult decide(const IncrementalState& state, const PolicyConfig& config,
                    Backend& backend, const PromptTemplate& tmpl,
                    const std::string& sentence_id);

struct TraceEvent {
    enum class Kind { read, write, finish };

    Kind kind = Kind::read;
    int t = 0;       // step at which the action fired
    int cursor = 0;  // source words revealed after the action
    std::vector<TargetToken> payload;  // write events only
    int invocation_index = -1;         // backing backend call, -1 when none
};

const char* event_kind_name(TraceEvent::Kind kind);

struct SessionTrace {
    std::string id;
    std::string source;
    std::string reference;
    std::string hypothesis;  // detokenized concatenation of write payloads
    std::vector<TraceEvent> events;
    std::vector<int> delays;  // source words revealed per hypothesis word
    int invocations = 0;
    PolicyConfig config;
};

// Drives one sentence through the full READ/WRITE loop. The controller
// reveals the first word, then takes one action per step; each step
// advances the cursor by exactly one word until the source is exhausted,
// where a final invocation commits the argmax candidate and FINISH ends
// the session. Deterministic given a deterministic backend. Backend
// failures and cap overruns surface as SessionError with the failing
// invocation index.
SessionTrace run_session(const std::string& id, const std::string& source_sentence,
                         const std::string& reference, const PolicyConfig& config,
                         Backend& backend, const PromptTemplate& tmpl);

// Per-word commit delays from the event log: hypothesis word i takes the
// cursor of the write event whose cumulative detokenized text first covers
// the word's last byte (a word spanning two writes belongs to the later
// one).
std::vector<int> extract_word_delays(const std::vector<TraceEvent>& events,
                                     const JoiningConvention& conv);

// Tokens before the first EOS marker.
std::vector<TargetToken> truncate_at_eos(const std::vector<TargetToken>& tokens);

// JSONL persistence. One object per line:
//   {"id", "source", "reference", "hypothesis",
//    "events": [{"kind", "t", "cursor", "payload"}],
//    "delays": [int], "invocations": int, "config": {...}}
// Event payloads are arrays of token text strings; invocation indices are
// in-memory only and read back as -1.
std::string trace_to_json(const SessionTrace& trace);
SessionTrace trace_from_json(const std::string& line, const std::string& where);

void write_traces_jsonl(const std::string& path, const std::vector<SessionTrace>& traces);
std::vector<SessionTrace> read_traces_jsonl(const std::string& path);

}  // namespace simulmt
