#include "simulmt/policy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "simulmt/agreement.hpp"
#include "simulmt/error.hpp"

namespace simulmt {

using nlohmann::ordered_json;

void validate_policy(const PolicyConfig& config) {
    if (config.wait_k < 0) throw InvalidInputError("wait_k must be >= 0");
    if (config.read_n < 1) throw InvalidInputError("read_n must be >= 1");
    if (config.beam < 1) throw InvalidInputError("beam must be >= 1");
    if (!(config.gamma > 0.0) || config.gamma > 1.0) {
        throw InvalidInputError("gamma must be in (0, 1]");
    }
    if (config.max_new_tokens < 1) throw InvalidInputError("max_new_tokens must be >= 1");
    if (config.max_target_tokens < 0) {
        throw InvalidInputError("max_target_tokens must be >= 1, or 0 for automatic");
    }
}

bool should_attempt_write(int t, int k, int n, bool source_finished) {
    if (source_finished) return true;
    return t > k && t % n == 0;
}

std::vector<TargetToken> truncate_at_eos(const std::vector<TargetToken>& tokens) {
    std::vector<TargetToken> out;
    for (const TargetToken& tok : tokens) {
        if (tok.is_eos) break;
        out.push_back(tok);
    }
    return out;
}

DecideResult decide(const IncrementalState& state, const PolicyConfig& config,
                    Backend& backend, const PromptTemplate& tmpl,
                    const std::string& sentence_id) {
    validate_policy(config);
    const int t = state.t();
    const bool finished = state.source.finished();

    DecideResult result;
    if (!should_attempt_write(t, config.wait_k, config.read_n, finished)) {
        result.action.kind = Action::Kind::read;
        return result;
    }

    GenerationRequest request;
    request.prompt = build_prompt(tmpl, state, backend.joining());
    request.num_candidates = config.beam;
    request.max_new_tokens = config.max_new_tokens;
    request.stop_sequences = config.stop_sequences;
    request.request_id = sentence_id + "@" + std::to_string(t);
    request.sentence_id = sentence_id;
    request.cursor = t;

    const GenerationResponse response = backend.generate(request);
    result.invoked = true;
    if (response.candidates.empty()) {
        throw BackendError(BackendError::Kind::malformed, request.request_id,
                           "request " + request.request_id + ": backend returned no candidates");
    }

    std::vector<TargetToken> payload;
    if (!finished) {
        AgreementConfig agreement;
        agreement.threshold = config.gamma;
        agreement.strip_eos = true;
        agreement.filter_disagreeing = config.filter_disagreeing;
        agreement.vote_denominator = config.beam;
        payload = ralcp(response.candidates, agreement);
    } else {
        const auto best = std::max_element(
            response.candidates.begin(), response.candidates.end(),
            [](const BeamCandidate& a, const BeamCandidate& b) { return a.score < b.score; });
        payload = truncate_at_eos(best->tokens);
    }

    if (payload.empty()) {
        result.action.kind = finished ? Action::Kind::finish : Action::Kind::read;
    } else {
        result.action.kind = Action::Kind::write;
        result.action.payload = std::move(payload);
    }
    return result;
}

const char* event_kind_name(TraceEvent::Kind kind) {
    switch (kind) {
        case TraceEvent::Kind::read: return "read";
        case TraceEvent::Kind::write: return "write";
        case TraceEvent::Kind::finish: return "finish";
    }
    return "?";
}

SessionTrace run_session(const std::string& id, const std::string& source_sentence,
                         const std::string& reference, const PolicyConfig& config,
                         Backend& backend, const PromptTemplate& tmpl) {
    validate_policy(config);

    SessionTrace trace;
    trace.id = id;
    trace.source = source_sentence;
    trace.reference = reference;
    trace.config = config;

    IncrementalState state;
    state.source = SourceStream::from_sentence(source_sentence);
    state.source.reveal();  // t starts at 1: the first word is read up front

    const int cap = config.max_target_tokens > 0
                        ? config.max_target_tokens
                        : 4 * state.source.total() + 32;

    int invocations = 0;
    bool done = false;
    while (!done) {
        const int t = state.t();
        DecideResult step;
        try {
            step = decide(state, config, backend, tmpl, id);
        } catch (const BackendError& e) {
            throw SessionError("session " + id + " aborted at invocation " +
                                   std::to_string(invocations) + ": " + e.what(),
                               invocations);
        }
        const int invocation_index = step.invoked ? invocations++ : -1;

        TraceEvent event;
        event.t = t;
        event.invocation_index = invocation_index;

        switch (step.action.kind) {
            case Action::Kind::read:
                event.kind = TraceEvent::Kind::read;
                event.cursor = state.source.reveal();
                break;
            case Action::Kind::write: {
                event.kind = TraceEvent::Kind::write;
                event.cursor = t;
                event.payload = step.action.payload;
                const auto total_tokens = state.target_tokens.size() + event.payload.size();
                if (total_tokens > static_cast<std::size_t>(cap)) {
                    throw SessionError("session " + id + " exceeded emission cap of " +
                                           std::to_string(cap) + " tokens at invocation " +
                                           std::to_string(invocation_index),
                                       invocation_index);
                }
                state.target_tokens.insert(state.target_tokens.end(),
                                           event.payload.begin(), event.payload.end());
                break;
            }
            case Action::Kind::finish:
                event.kind = TraceEvent::Kind::finish;
                event.cursor = t;
                done = true;
                break;
        }
        trace.events.push_back(event);

        if (event.kind == TraceEvent::Kind::write) {
            if (state.source.finished()) {
                TraceEvent fin;
                fin.kind = TraceEvent::Kind::finish;
                fin.t = t;
                fin.cursor = t;
                trace.events.push_back(fin);
                done = true;
            } else if (!config.write_until_empty) {
                TraceEvent forced;
                forced.kind = TraceEvent::Kind::read;
                forced.t = t;
                forced.cursor = state.source.reveal();
                trace.events.push_back(forced);
            }
        }
    }

    trace.invocations = invocations;
    trace.hypothesis = detokenize(state.target_tokens, backend.joining());
    trace.delays = extract_word_delays(trace.events, backend.joining());
    return trace;
}

std::vector<int> extract_word_delays(const std::vector<TraceEvent>& events,
                                     const JoiningConvention& conv) {
    // Rebuild the hypothesis write by write; detokenize_append guarantees
    // each intermediate string is a prefix of the final one.
    std::string text;
    std::vector<std::pair<std::size_t, int>> frontier;  // text length after event, cursor
    for (const TraceEvent& event : events) {
        if (event.kind != TraceEvent::Kind::write) continue;
        detokenize_append(text, event.payload, conv);
        frontier.emplace_back(text.size(), event.cursor);
    }

    std::vector<int> delays;
    std::size_t e = 0;
    for (const auto& [begin, end] : word_spans(text)) {
        (void)begin;
        while (e < frontier.size() && frontier[e].first < end) ++e;
        delays.push_back(frontier[e].second);
    }
    return delays;
}

namespace {

ordered_json config_to_json(const PolicyConfig& config) {
    return ordered_json{{"k", config.wait_k},
                        {"n", config.read_n},
                        {"beam", config.beam},
                        {"gamma", config.gamma},
                        {"max_new_tokens", config.max_new_tokens},
                        {"max_target_tokens", config.max_target_tokens},
                        {"write_until_empty", config.write_until_empty},
                        {"filter_disagreeing", config.filter_disagreeing},
                        {"stop", config.stop_sequences}};
}

PolicyConfig config_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw IoError(where + ": config must be an object");
    PolicyConfig config;
    try {
        config.wait_k = j.at("k").get<int>();
        config.read_n = j.at("n").get<int>();
        config.beam = j.at("beam").get<int>();
        config.gamma = j.at("gamma").get<double>();
        config.max_new_tokens = j.value("max_new_tokens", config.max_new_tokens);
        config.max_target_tokens = j.value("max_target_tokens", config.max_target_tokens);
        config.write_until_empty = j.value("write_until_empty", config.write_until_empty);
        config.filter_disagreeing = j.value("filter_disagreeing", config.filter_disagreeing);
        config.stop_sequences =
            j.value("stop", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": bad config: " + e.what());
    }
    return config;
}

}  // namespace

std::string trace_to_json(const SessionTrace& trace) {
    ordered_json events = ordered_json::array();
    for (const TraceEvent& event : trace.events) {
        ordered_json payload = ordered_json::array();
        for (const TargetToken& tok : event.payload) payload.push_back(tok.text);
        events.push_back(ordered_json{{"kind", event_kind_name(event.kind)},
                                      {"t", event.t},
                                      {"cursor", event.cursor},
                                      {"payload", std::move(payload)}});
    }
    ordered_json j{{"id", trace.id},
                   {"source", trace.source},
                   {"reference", trace.reference},
                   {"hypothesis", trace.hypothesis},
                   {"events", std::move(events)},
                   {"delays", trace.delays},
                   {"invocations", trace.invocations},
                   {"config", config_to_json(trace.config)}};
    return j.dump();
}

SessionTrace trace_from_json(const std::string& line, const std::string& where) {
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw IoError(where + ": malformed JSON object");
    }
    SessionTrace trace;
    try {
        trace.id = j.at("id").get<std::string>();
        trace.source = j.at("source").get<std::string>();
        trace.reference = j.value("reference", "");
        trace.hypothesis = j.at("hypothesis").get<std::string>();
        trace.delays = j.at("delays").get<std::vector<int>>();
        trace.invocations = j.at("invocations").get<int>();
        trace.config = config_from_json(j.at("config"), where);
        for (const auto& ev : j.at("events")) {
            TraceEvent event;
            const std::string kind = ev.at("kind").get<std::string>();
            if (kind == "read") {
                event.kind = TraceEvent::Kind::read;
            } else if (kind == "write") {
                event.kind = TraceEvent::Kind::write;
            } else if (kind == "finish") {
                event.kind = TraceEvent::Kind::finish;
            } else {
                throw IoError(where + ": unknown event kind: " + kind);
            }
            event.t = ev.at("t").get<int>();
            event.cursor = ev.at("cursor").get<int>();
            for (const auto& tok : ev.at("payload")) {
                event.payload.push_back(TargetToken{tok.get<std::string>(), false});
            }
            trace.events.push_back(std::move(event));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": bad trace: " + e.what());
    }
    return trace;
}

void write_traces_jsonl(const std::string& path, const std::vector<SessionTrace>& traces) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write traces file: " + path);
    for (const SessionTrace& trace : traces) {
        out << trace_to_json(trace) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<SessionTrace> read_traces_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open traces file: " + path);
    std::vector<SessionTrace> traces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        traces.push_back(trace_from_json(line, path + ":" + std::to_string(line_no)));
    }
    return traces;
}

}  // namespace simulmt
