#include <doctest.h>

#include <string>
#include <vector>

#include "simulmt/backend.hpp"
#include "simulmt/error.hpp"
#include "simulmt/policy.hpp"
#include "test_util.hpp"

using namespace simulmt;
using test_util::cand;
using test_util::FakeBackend;
using test_util::fixture_path;
using test_util::toks;

namespace {

JoiningConvention sp_conv() {
    return {JoiningConvention::Style::preceding_space_marker, "▁"};
}

IncrementalState state_at(const std::string& sentence, int cursor,
                          std::vector<TargetToken> target = {}) {
    IncrementalState state;
    state.source = SourceStream::from_sentence(sentence);
    while (state.source.cursor() < cursor) state.source.reveal();
    state.target_tokens = std::move(target);
    return state;
}

GenerationResponse respond(std::vector<BeamCandidate> cands) {
    GenerationResponse r;
    r.candidates = std::move(cands);
    return r;
}

TraceEvent::Kind kind_of(const TraceEvent& e) { return e.kind; }

}  // namespace

TEST_CASE("should_attempt_write gates on wait_k and read_n") {
    CHECK_FALSE(should_attempt_write(3, 3, 3, false));  // t <= k
    CHECK(should_attempt_write(6, 3, 3, false));        // past k, multiple of n
    CHECK_FALSE(should_attempt_write(7, 3, 3, false));  // not a multiple of n
    CHECK(should_attempt_write(1, 5, 1, true));         // exhausted source always writes
    CHECK_FALSE(should_attempt_write(4, 3, 3, false));
    CHECK(should_attempt_write(1, 0, 1, false));
}

TEST_CASE("first eligible step follows the k and n schedule") {
    const auto first_write = [](int k, int n) {
        for (int t = 1; t < 100; ++t) {
            if (should_attempt_write(t, k, n, false)) return t;
        }
        return -1;
    };
    CHECK(first_write(3, 3) == 6);
    CHECK(first_write(6, 6) == 12);
    CHECK(first_write(0, 1) == 1);
    CHECK(first_write(5, 2) == 6);
    CHECK(first_write(4, 3) == 6);
}

TEST_CASE("validate_policy enforces bounds") {
    PolicyConfig good;
    CHECK_NOTHROW(validate_policy(good));
    good.gamma = 1.0;
    good.max_target_tokens = 0;
    CHECK_NOTHROW(validate_policy(good));

    PolicyConfig bad;
    bad.wait_k = -1;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
    bad = {};
    bad.read_n = 0;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
    bad = {};
    bad.beam = 0;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
    bad = {};
    bad.gamma = 0.0;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
    bad = {};
    bad.gamma = 1.5;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
    bad = {};
    bad.max_new_tokens = 0;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
    bad = {};
    bad.max_target_tokens = -1;
    CHECK_THROWS_AS(validate_policy(bad), InvalidInputError);
}

TEST_CASE("decide reads without calling the backend when gated") {
    int calls = 0;
    FakeBackend backend([&](const GenerationRequest&) {
        ++calls;
        return respond({cand({"▁x"}, -0.1)});
    });
    PolicyConfig config;  // k = 3, n = 3
    const auto state = state_at("one two three four five six", 2);
    const auto result = decide(state, config, backend, PromptTemplate{}, "s");
    CHECK(result.action.kind == Action::Kind::read);
    CHECK_FALSE(result.invoked);
    CHECK(calls == 0);
}

TEST_CASE("decide forwards the request fields") {
    GenerationRequest seen;
    FakeBackend backend([&](const GenerationRequest& req) {
        seen = req;
        return respond({cand({"▁x"}, -0.1)});
    });
    PolicyConfig config;
    config.beam = 4;
    config.max_new_tokens = 17;
    config.stop_sequences = {"\n"};
    PromptTemplate tmpl;
    const auto state = state_at("one two three four five six", 6, toks({"▁a"}));
    decide(state, config, backend, tmpl, "sent7");
    CHECK(seen.prompt == build_prompt(tmpl, state, backend.joining()));
    CHECK(seen.num_candidates == 4);
    CHECK(seen.max_new_tokens == 17);
    CHECK(seen.stop_sequences == std::vector<std::string>{"\n"});
    CHECK(seen.request_id == "sent7@6");
    CHECK(seen.sentence_id == "sent7");
    CHECK(seen.cursor == 6);
}

TEST_CASE("decide commits the voted prefix while the source streams") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁X", "▁Y"}, -0.1), cand({"▁X", "▁Z"}, -0.2),
                        cand({"▁X"}, -0.3)});
    });
    PolicyConfig config;
    config.beam = 3;
    config.gamma = 0.6;
    const auto state = state_at("one two three four five six seven", 6);
    const auto result = decide(state, config, backend, PromptTemplate{}, "s");
    CHECK(result.invoked);
    CHECK(result.action.kind == Action::Kind::write);
    CHECK(result.action.payload == toks({"▁X"}));
}

TEST_CASE("decide strips EOS from mid-stream votes") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁X"}, -0.1, true), cand({"▁X"}, -0.2, true),
                        cand({"▁X"}, -0.3, true)});
    });
    PolicyConfig config;
    config.beam = 3;
    config.gamma = 1.0;
    const auto state = state_at("one two three four five six seven", 6);
    const auto result = decide(state, config, backend, PromptTemplate{}, "s");
    CHECK(result.action.kind == Action::Kind::write);
    CHECK(result.action.payload == toks({"▁X"}));  // no EOS committed mid-stream
}

TEST_CASE("decide falls back to READ when the vote is empty") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁A"}, -0.1), cand({"▁B"}, -0.2)});
    });
    PolicyConfig config;
    config.beam = 2;
    config.gamma = 1.0;
    const auto state = state_at("one two three four five six seven", 6);
    const auto result = decide(state, config, backend, PromptTemplate{}, "s");
    CHECK(result.action.kind == Action::Kind::read);
    CHECK(result.invoked);  // the call happened even though nothing was committed
}

TEST_CASE("decide commits the best candidate once the source is exhausted") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁X", "▁Y"}, -1.2, true), cand({"▁X", "▁Z"}, -0.7, true)});
    });
    PolicyConfig config;
    config.beam = 2;
    const auto state = state_at("one two", 2);
    const auto result = decide(state, config, backend, PromptTemplate{}, "s");
    CHECK(result.action.kind == Action::Kind::write);
    CHECK(result.action.payload == toks({"▁X", "▁Z"}));  // argmax, EOS dropped
}

TEST_CASE("decide finishes when the best final candidate is empty") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({}, -0.5, true)});
    });
    PolicyConfig config;
    config.beam = 1;
    const auto state = state_at("one two", 2);
    const auto result = decide(state, config, backend, PromptTemplate{}, "s");
    CHECK(result.action.kind == Action::Kind::finish);
    CHECK(result.invoked);
}

TEST_CASE("decide rejects an empty candidate list") {
    FakeBackend backend([&](const GenerationRequest&) { return respond({}); });
    PolicyConfig config;
    const auto state = state_at("one two", 2);
    try {
        decide(state, config, backend, PromptTemplate{}, "s9");
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.kind == BackendError::Kind::malformed);
        CHECK(e.request_id == "s9@2");
    }
}

TEST_CASE("run_session replays the scripted weather sentence") {
    auto backend = ScriptedBackend::load(fixture_path("fixture.jsonl"), sp_conv());
    PolicyConfig config;  // k = 3, n = 3, beam = 5, gamma = 0.6
    const auto trace =
        run_session("0", "The weather is very nice in Berlin this week",
                    "Das Wetter ist diese Woche sehr schön in Berlin", config, backend,
                    PromptTemplate{});

    CHECK(trace.hypothesis == "Das Wetter ist diese Woche sehr schön in Berlin");
    CHECK(trace.delays == std::vector<int>{6, 6, 6, 9, 9, 9, 9, 9, 9});
    CHECK(trace.invocations == 2);

    REQUIRE(trace.events.size() == 11);
    // Five plain reads carry the cursor from 1 to 6.
    for (int i = 0; i < 5; ++i) {
        CHECK(kind_of(trace.events[static_cast<std::size_t>(i)]) == TraceEvent::Kind::read);
        CHECK(trace.events[static_cast<std::size_t>(i)].t == i + 1);
        CHECK(trace.events[static_cast<std::size_t>(i)].cursor == i + 2);
    }
    CHECK(trace.events[5].kind == TraceEvent::Kind::write);
    CHECK(trace.events[5].t == 6);
    CHECK(trace.events[5].cursor == 6);
    CHECK(trace.events[5].payload == toks({"▁Das", "▁Wetter", "▁ist"}));
    CHECK(trace.events[5].invocation_index == 0);
    // The mid-stream write forces one read at the same step.
    CHECK(trace.events[6].kind == TraceEvent::Kind::read);
    CHECK(trace.events[6].t == 6);
    CHECK(trace.events[6].cursor == 7);
    CHECK(trace.events[7].cursor == 8);
    CHECK(trace.events[8].cursor == 9);
    CHECK(trace.events[9].kind == TraceEvent::Kind::write);
    CHECK(trace.events[9].t == 9);
    CHECK(trace.events[9].cursor == 9);
    CHECK(trace.events[9].invocation_index == 1);
    // The final write and finish are distinct events at the same step.
    CHECK(trace.events[10].kind == TraceEvent::Kind::finish);
    CHECK(trace.events[10].t == 9);
    CHECK(trace.events[10].cursor == 9);
}

TEST_CASE("run_session is deterministic and write-stable") {
    auto backend = ScriptedBackend::load(fixture_path("fixture.jsonl"), sp_conv());
    PolicyConfig config;
    const std::string source = "I would like a cup of coffee";
    const std::string reference = "Ich hätte gerne eine Tasse Kaffee";

    const auto first = run_session("1", source, reference, config, backend, PromptTemplate{});
    const auto second = run_session("1", source, reference, config, backend, PromptTemplate{});
    CHECK(trace_to_json(first) == trace_to_json(second));

    // Every committed prefix is a string prefix of the final hypothesis.
    std::string partial;
    for (const TraceEvent& event : first.events) {
        if (event.kind != TraceEvent::Kind::write) continue;
        detokenize_append(partial, event.payload, backend.joining());
        CHECK(first.hypothesis.substr(0, partial.size()) == partial);
    }
    CHECK(partial == first.hypothesis);

    CHECK(first.hypothesis == reference);
    CHECK(first.delays == std::vector<int>{6, 6, 6, 7, 7, 7});
    CHECK(first.invocations == 2);
}

TEST_CASE("run_session handles wait_k beyond the source length") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁JA", "▁WOHL"}, -0.2, true)});
    });
    PolicyConfig config;
    config.wait_k = 5;
    config.beam = 1;
    const auto trace = run_session("s", "I agree", "", config, backend, PromptTemplate{});
    REQUIRE(trace.events.size() == 3);
    CHECK(trace.events[0].kind == TraceEvent::Kind::read);
    CHECK(trace.events[0].cursor == 2);
    CHECK(trace.events[1].kind == TraceEvent::Kind::write);
    CHECK(trace.events[1].t == 2);
    CHECK(trace.events[2].kind == TraceEvent::Kind::finish);
    CHECK(trace.hypothesis == "JA WOHL");
    CHECK(trace.delays == std::vector<int>{2, 2});  // fully offline
    CHECK(trace.invocations == 1);
}

TEST_CASE("run_session with k=0 n=1 invokes once per source word") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁x"}, -0.1)});
    });
    PolicyConfig config;
    config.wait_k = 0;
    config.read_n = 1;
    config.beam = 1;
    const auto trace = run_session("s", "a b c d", "", config, backend, PromptTemplate{});
    CHECK(trace.invocations == 4);
    CHECK(trace.hypothesis == "x x x x");
    CHECK(trace.delays == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("run_session enforces the emission cap") {
    FakeBackend backend([&](const GenerationRequest&) {
        return respond({cand({"▁a", "▁b", "▁c"}, -0.1)});
    });
    PolicyConfig config;
    config.wait_k = 0;
    config.read_n = 1;
    config.beam = 1;
    config.max_target_tokens = 2;
    try {
        run_session("s", "a b c d", "", config, backend, PromptTemplate{});
        FAIL("expected SessionError");
    } catch (const SessionError& e) {
        CHECK(e.invocation_index == 0);
        CHECK(std::string(e.what()).find("emission cap") != std::string::npos);
    }
}

TEST_CASE("run_session wraps backend failures with the invocation index") {
    int calls = 0;
    FakeBackend backend([&](const GenerationRequest& req) -> GenerationResponse {
        if (++calls == 2) {
            throw BackendError(BackendError::Kind::transport, req.request_id, "boom");
        }
        return respond({cand({"▁x"}, -0.1)});
    });
    PolicyConfig config;
    config.wait_k = 0;
    config.read_n = 1;
    config.beam = 1;
    try {
        run_session("s4", "a b c", "", config, backend, PromptTemplate{});
        FAIL("expected SessionError");
    } catch (const SessionError& e) {
        CHECK(e.invocation_index == 1);
        CHECK(std::string(e.what()).find("s4") != std::string::npos);
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
}

TEST_CASE("write_until_empty drains the step instead of forcing a read") {
    const auto make_fn = [](int& calls) {
        return [&calls](const GenerationRequest& req) {
            ++calls;
            if (req.cursor == 1) {
                // First call commits a word; a repeat at the same cursor has
                // nothing further to agree on.
                if (calls == 1) return respond({cand({"▁A"}, -0.1)});
                return respond({BeamCandidate{{}, -0.1, false}});
            }
            return respond({cand({"▁B"}, -0.2, true)});
        };
    };

    PolicyConfig config;
    config.wait_k = 0;
    config.read_n = 1;
    config.beam = 1;

    int forced_calls = 0;
    FakeBackend forced(make_fn(forced_calls));
    const auto base = run_session("s", "a b", "", config, forced, PromptTemplate{});
    CHECK(base.invocations == 2);

    int drained_calls = 0;
    FakeBackend drain(make_fn(drained_calls));
    config.write_until_empty = true;
    const auto drained = run_session("s", "a b", "", config, drain, PromptTemplate{});
    CHECK(drained.invocations == 3);  // the empty-vote probe costs one extra call

    // Both runs produce the same surface behavior.
    for (const auto* trace : {&base, &drained}) {
        REQUIRE(trace->events.size() == 4);
        CHECK(trace->events[0].kind == TraceEvent::Kind::write);
        CHECK(trace->events[0].t == 1);
        CHECK(trace->events[0].cursor == 1);
        CHECK(trace->events[1].kind == TraceEvent::Kind::read);
        CHECK(trace->events[1].t == 1);
        CHECK(trace->events[1].cursor == 2);
        CHECK(trace->events[2].kind == TraceEvent::Kind::write);
        CHECK(trace->events[3].kind == TraceEvent::Kind::finish);
        CHECK(trace->hypothesis == "A B");
        CHECK(trace->delays == std::vector<int>{1, 2});
    }
    // The drained run's extra probe is visible on the read event.
    CHECK(base.events[1].invocation_index == -1);
    CHECK(drained.events[1].invocation_index == 1);
}

TEST_CASE("extract_word_delays assigns split words to the later write") {
    TraceEvent first;
    first.kind = TraceEvent::Kind::write;
    first.t = 2;
    first.cursor = 2;
    first.payload = toks({"▁Hal"});
    TraceEvent second;
    second.kind = TraceEvent::Kind::write;
    second.t = 4;
    second.cursor = 4;
    second.payload = toks({"lo"});  // glues onto the previous piece
    CHECK(extract_word_delays({first, second}, sp_conv()) == std::vector<int>{4});
}

TEST_CASE("extract_word_delays stamps every word of a multi-word write") {
    TraceEvent event;
    event.kind = TraceEvent::Kind::write;
    event.t = 3;
    event.cursor = 3;
    event.payload = toks({"▁a", "▁b"});
    CHECK(extract_word_delays({event}, sp_conv()) == std::vector<int>{3, 3});
    CHECK(extract_word_delays({}, sp_conv()).empty());
}

TEST_CASE("traces survive a JSONL round trip") {
    auto backend = ScriptedBackend::load(fixture_path("fixture.jsonl"), sp_conv());
    PolicyConfig config;
    std::vector<SessionTrace> traces;
    traces.push_back(run_session("2", "Please open the window now",
                                 "Bitte öffne jetzt das Fenster", config, backend,
                                 PromptTemplate{}));

    test_util::TempDir dir;
    const auto path = dir.file("traces.jsonl");
    write_traces_jsonl(path, traces);
    const auto loaded = read_traces_jsonl(path);
    REQUIRE(loaded.size() == 1);
    CHECK(trace_to_json(loaded[0]) == trace_to_json(traces[0]));
    CHECK(loaded[0].events[0].invocation_index == -1);  // not persisted
}

TEST_CASE("trace parsing reports the failing location") {
    CHECK_THROWS_WITH_AS(trace_from_json("{not json", "traces.jsonl:3"),
                         doctest::Contains("traces.jsonl:3"), IoError);
    CHECK_THROWS_WITH_AS(trace_from_json("{\"id\": \"x\"}", "traces.jsonl:1"),
                         doctest::Contains("traces.jsonl:1"), IoError);

    test_util::TempDir dir;
    const auto path = dir.file("bad.jsonl");
    test_util::write_file(path, "\n[1, 2]\n");
    CHECK_THROWS_WITH_AS(read_traces_jsonl(path), doctest::Contains(":2"), IoError);
    CHECK_THROWS_AS(read_traces_jsonl(dir.file("missing.jsonl")), IoError);
}

TEST_CASE("larger wait_k never reduces a word's delay") {
    PromptTemplate tmpl;
    EchoBackend backend(tmpl);
    const std::string source = "alpha beta gamma delta epsilon";

    std::vector<int> prev;
    for (int k : {1, 2, 3, 4, 6}) {
        PolicyConfig config;
        config.wait_k = k;
        config.read_n = 1;
        config.beam = 2;
        config.gamma = 1.0;
        const auto trace = run_session("s", source, "", config, backend, tmpl);
        CHECK(trace.hypothesis == "ALPHA BETA GAMMA DELTA EPSILON");
        REQUIRE(trace.delays.size() == 5);
        if (!prev.empty()) {
            for (std::size_t i = 0; i < prev.size(); ++i) {
                CHECK(trace.delays[i] >= prev[i]);
            }
        }
        prev = trace.delays;
    }
}
