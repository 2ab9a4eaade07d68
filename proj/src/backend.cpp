#include "simulmt/backend.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "simulmt/error.hpp"

namespace simulmt {

using nlohmann::json;

namespace {

void sort_by_score_desc(std::vector<BeamCandidate>& candidates) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const BeamCandidate& a, const BeamCandidate& b) {
                         return a.score > b.score;
                     });
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    const auto dt = std::chrono::steady_clock::now() - start;
    return std::chrono::duration<double, std::milli>(dt).count();
}

}  // namespace

void warn_if_fewer_candidates(const GenerationRequest& request,
                              const GenerationResponse& response) {
    if (static_cast<int>(response.candidates.size()) < request.num_candidates) {
        std::fprintf(stderr,
                     "simulmt: warning: request %s returned %zu of %d candidates\n",
                     request.request_id.c_str(), response.candidates.size(),
                     request.num_candidates);
    }
}

bool response_echoes_prompt(const std::string& prompt, const GenerationResponse& response,
                            const JoiningConvention& conv) {
    if (prompt.empty()) return false;
    const std::size_t n = std::min<std::size_t>(16, prompt.size());
    const std::string tail = prompt.substr(prompt.size() - n);
    for (const BeamCandidate& cand : response.candidates) {
        const std::string text = detokenize(cand.tokens, conv);
        if (!tail.empty() && text.rfind(tail, 0) == 0) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// ScriptedBackend
// ---------------------------------------------------------------------------

ScriptedBackend ScriptedBackend::load(const std::string& path, JoiningConvention conv) {
    validate_joining(conv);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open fixture file: " + path);
    }
    ScriptedBackend backend;
    backend.conv_ = conv;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + ":" + std::to_string(line_no);

        json entry = json::parse(line, nullptr, false);
        if (entry.is_discarded() || !entry.is_object()) {
            throw IoError(where + ": malformed JSON object");
        }
        if (!entry.contains("id") || !entry["id"].is_string() ||
            !entry.contains("cursor") || !entry["cursor"].is_number_integer() ||
            !entry.contains("candidates") || !entry["candidates"].is_array()) {
            throw IoError(where + ": entry needs id, cursor and candidates fields");
        }
        const std::string id = entry["id"].get<std::string>();
        const int cursor = entry["cursor"].get<int>();
        if (cursor < 1) {
            throw IoError(where + ": cursor must be >= 1");
        }
        if (entry["candidates"].empty()) {
            throw IoError(where + ": candidate list is empty");
        }

        std::vector<BeamCandidate> candidates;
        for (const json& c : entry["candidates"]) {
            if (!c.is_object() || !c.contains("tokens") || !c["tokens"].is_array() ||
                !c.contains("score") || !c["score"].is_number()) {
                throw IoError(where + ": candidate needs tokens and score");
            }
            BeamCandidate cand;
            cand.score = c["score"].get<double>();
            cand.finished = c.value("finished", false);
            for (const json& tok : c["tokens"]) {
                if (!tok.is_string()) {
                    throw IoError(where + ": token entries must be strings");
                }
                cand.tokens.push_back(TargetToken{tok.get<std::string>(), false});
            }
            if (cand.tokens.empty() && !cand.finished) {
                throw IoError(where + ": empty token list on an unfinished candidate");
            }
            if (cand.finished) cand.tokens.push_back(eos_token());
            candidates.push_back(std::move(cand));
        }
        sort_by_score_desc(candidates);

        auto [_, inserted] =
            backend.entries_.emplace(std::make_pair(id, cursor), std::move(candidates));
        if (!inserted) {
            throw IoError(where + ": duplicate (id, cursor) key: (" + id + ", " +
                          std::to_string(cursor) + ")");
        }
    }
    return backend;
}

GenerationResponse ScriptedBackend::generate(const GenerationRequest& request) {
    const auto it = entries_.find({request.sentence_id, request.cursor});
    if (it == entries_.end()) {
        throw BackendError(BackendError::Kind::fixture_miss, request.request_id,
                           "fixture miss: no entry for (id=" + request.sentence_id +
                               ", cursor=" + std::to_string(request.cursor) + ")");
    }
    GenerationResponse response;
    response.candidates = it->second;
    if (static_cast<int>(response.candidates.size()) > request.num_candidates) {
        response.candidates.resize(static_cast<std::size_t>(request.num_candidates));
    }
    response.model_id = "scripted";
    warn_if_fewer_candidates(request, response);
    return response;
}

// ---------------------------------------------------------------------------
// RemoteBackend
// ---------------------------------------------------------------------------

// Bounds concurrent in-flight requests across sessions.
struct RemoteBackend::Limiter {
    explicit Limiter(int slots) : available(slots > 0 ? slots : 1) {}

    void acquire() {
        std::unique_lock lock(mutex);
        cv.wait(lock, [this] { return available > 0; });
        --available;
    }
    void release() {
        {
            std::lock_guard lock(mutex);
            ++available;
        }
        cv.notify_one();
    }

    std::mutex mutex;
    std::condition_variable cv;
    int available;
};

RemoteBackend::RemoteBackend(RemoteOptions options, JoiningConvention conv)
    : options_(std::move(options)),
      conv_(std::move(conv)),
      limiter_(std::make_unique<Limiter>(options_.max_in_flight)) {
    validate_joining(conv_);
}

RemoteBackend::~RemoteBackend() = default;

namespace {

BeamCandidate candidate_from_wire(const json& c, const std::string& request_id,
                                  const std::string& where) {
    if (!c.is_object() || !c.contains("tokens") || !c["tokens"].is_array()) {
        throw BackendError(BackendError::Kind::malformed, request_id,
                           where + ": candidate without tokens array");
    }
    BeamCandidate cand;
    for (const json& tok : c["tokens"]) {
        if (!tok.is_string()) {
            throw BackendError(BackendError::Kind::malformed, request_id,
                               where + ": non-string token");
        }
        cand.tokens.push_back(TargetToken{tok.get<std::string>(), false});
    }
    if (!c.contains("token_logprobs") || !c["token_logprobs"].is_array() ||
        c["token_logprobs"].size() != c["tokens"].size()) {
        throw BackendError(BackendError::Kind::malformed, request_id,
                           where + ": token_logprobs missing or misaligned");
    }
    double score = 0.0;
    for (const json& lp : c["token_logprobs"]) {
        if (!lp.is_number()) {
            throw BackendError(BackendError::Kind::malformed, request_id,
                               where + ": non-numeric logprob");
        }
        score += lp.get<double>();
    }
    if (!std::isfinite(score)) {
        throw BackendError(BackendError::Kind::malformed, request_id,
                           where + ": non-finite candidate score");
    }
    cand.score = score;
    cand.finished = c.value("finished", false);
    if (cand.tokens.empty() && !cand.finished) {
        throw BackendError(BackendError::Kind::malformed, request_id,
                           where + ": empty unfinished candidate");
    }
    if (cand.finished) cand.tokens.push_back(eos_token());
    return cand;
}

bool is_timeout(httplib::Error err) {
    return err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
           err == httplib::Error::Write;
}

}  // namespace

GenerationResponse RemoteBackend::generate(const GenerationRequest& request) {
    struct Slot {
        Limiter& limiter;
        explicit Slot(Limiter& l) : limiter(l) { limiter.acquire(); }
        ~Slot() { limiter.release(); }
    } slot(*limiter_);

    const bool openai = options_.flavor == RemoteOptions::Flavor::openai_completions;
    const std::string path = openai ? "/v1/completions" : "/v1/generate";

    json body;
    if (openai) {
        body = {{"prompt", request.prompt},
                {"n", request.num_candidates},
                {"max_tokens", request.max_new_tokens},
                {"logprobs", 0},
                {"echo", false}};
        if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
    } else {
        body = {{"prompt", request.prompt},
                {"n", request.num_candidates},
                {"max_new_tokens", request.max_new_tokens},
                {"stop", request.stop_sequences},
                {"logprobs", true}};
    }

    httplib::Client client(options_.base_url);
    const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    if (const char* token = std::getenv(options_.auth_env.c_str()); token && *token) {
        client.set_bearer_token_auth(token);
    }

    const auto start = std::chrono::steady_clock::now();
    httplib::Result result = client.Post(path, body.dump(), "application/json");
    if (!result) {
        const auto kind = is_timeout(result.error()) ? BackendError::Kind::timeout
                                                     : BackendError::Kind::transport;
        throw BackendError(kind, request.request_id,
                           "request " + request.request_id + ": " +
                               httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        throw BackendError(BackendError::Kind::transport, request.request_id,
                           "request " + request.request_id + ": HTTP " +
                               std::to_string(result->status));
    }

    json parsed = json::parse(result->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
        throw BackendError(BackendError::Kind::malformed, request.request_id,
                           "request " + request.request_id + ": response is not JSON");
    }

    GenerationResponse response;
    response.latency_ms = elapsed_ms(start);
    response.model_id = parsed.value("model", "");
    const std::string where = "request " + request.request_id;

    if (openai) {
        if (!parsed.contains("choices") || !parsed["choices"].is_array()) {
            throw BackendError(BackendError::Kind::malformed, request.request_id,
                               where + ": missing choices array");
        }
        for (const json& choice : parsed["choices"]) {
            if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
                throw BackendError(BackendError::Kind::malformed, request.request_id,
                                   where + ": choice without logprobs");
            }
            json c = {{"tokens", choice["logprobs"].value("tokens", json::array())},
                      {"token_logprobs",
                       choice["logprobs"].value("token_logprobs", json::array())},
                      {"finished", choice.value("finish_reason", "") == "stop"}};
            response.candidates.push_back(candidate_from_wire(c, request.request_id, where));
        }
    } else {
        if (!parsed.contains("candidates") || !parsed["candidates"].is_array()) {
            throw BackendError(BackendError::Kind::malformed, request.request_id,
                               where + ": missing candidates array");
        }
        for (const json& c : parsed["candidates"]) {
            response.candidates.push_back(candidate_from_wire(c, request.request_id, where));
        }
    }
    if (response.candidates.empty()) {
        throw BackendError(BackendError::Kind::malformed, request.request_id,
                           where + ": empty candidate list");
    }
    if (static_cast<int>(response.candidates.size()) > request.num_candidates) {
        response.candidates.resize(static_cast<std::size_t>(request.num_candidates));
    }
    sort_by_score_desc(response.candidates);
    warn_if_fewer_candidates(request, response);
    return response;
}

// ---------------------------------------------------------------------------
// EchoBackend
// ---------------------------------------------------------------------------

EchoBackend::EchoBackend(PromptTemplate tmpl) : tmpl_(std::move(tmpl)) {
    validate_template(tmpl_);
    conv_ = JoiningConvention{JoiningConvention::Style::preceding_space_marker, "▁"};
}

namespace {

// Literal runs of `text` around {src_lang}/{tgt_lang} placeholders, in order.
// Placeholder positions become run boundaries that match arbitrary text.
std::vector<std::string> language_literal_runs(const std::string& text) {
    std::vector<std::string> runs{std::string()};
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 10, "{src_lang}") == 0 ||
            text.compare(i, 10, "{tgt_lang}") == 0) {
            runs.emplace_back();
            i += 10;
        } else {
            runs.back() += text[i];
            ++i;
        }
    }
    return runs;
}

}  // namespace

GenerationResponse EchoBackend::generate(const GenerationRequest& request) {
    // Locate the final rendered instruction to recover the source segment
    // and the target text that follows the close marker. Language slots
    // match any text, so prompts rendered for other pairs still parse.
    const auto malformed = [&request]() {
        return BackendError(BackendError::Kind::malformed, request.request_id,
                            "echo backend: prompt does not match the template");
    };
    const auto slot = tmpl_.instruction_pattern.find("{source}");
    const auto before_runs =
        language_literal_runs(tmpl_.instruction_pattern.substr(0, slot));
    const auto after_runs = language_literal_runs(
        tmpl_.instruction_pattern.substr(slot + 8) + tmpl_.close_marker);

    const auto open = request.prompt.rfind(tmpl_.open_marker);
    if (open == std::string::npos) throw malformed();
    std::size_t cursor = open + tmpl_.open_marker.size();
    if (request.prompt.compare(cursor, before_runs.front().size(),
                               before_runs.front()) != 0) {
        throw malformed();
    }
    cursor += before_runs.front().size();
    for (std::size_t r = 1; r < before_runs.size(); ++r) {
        if (before_runs[r].empty()) continue;
        const auto hit = request.prompt.find(before_runs[r], cursor);
        if (hit == std::string::npos) throw malformed();
        cursor = hit + before_runs[r].size();
    }
    const std::size_t src_begin = cursor;

    std::string boundary;
    for (const std::string& run : after_runs) {
        if (!run.empty()) {
            boundary = run;
            break;
        }
    }
    const auto src_end = request.prompt.find(boundary, src_begin);
    if (src_end == std::string::npos) throw malformed();
    const auto close = request.prompt.find(tmpl_.close_marker, src_end);
    if (close == std::string::npos) throw malformed();
    const std::string source = request.prompt.substr(src_begin, src_end - src_begin);
    const std::string target_so_far =
        request.prompt.substr(close + tmpl_.close_marker.size());

    std::vector<std::string> words;
    try {
        words = tokenize_source(source);
    } catch (const InvalidInputError&) {
        throw BackendError(BackendError::Kind::malformed, request.request_id,
                           "echo backend: empty source segment");
    }
    const int already = count_words(target_so_far);

    std::vector<TargetToken> continuation;
    for (std::size_t i = static_cast<std::size_t>(already); i < words.size(); ++i) {
        std::string upper = words[i];
        for (char& ch : upper) {
            ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        continuation.push_back(TargetToken{conv_.marker + upper, false});
    }
    continuation.push_back(eos_token());

    GenerationResponse response;
    for (int i = 0; i < request.num_candidates; ++i) {
        BeamCandidate cand;
        cand.tokens = continuation;
        cand.score = -0.1 * (i + 1);
        cand.finished = true;
        response.candidates.push_back(std::move(cand));
    }
    response.model_id = "echo";
    return response;
}

// ---------------------------------------------------------------------------
// Descriptor parsing
// ---------------------------------------------------------------------------

std::unique_ptr<Backend> make_backend(const std::string& descriptor,
                                      const PromptTemplate& tmpl,
                                      const JoiningConvention* joining,
                                      const RemoteOptions* remote_defaults) {
    const auto with_default = [&](JoiningConvention def) {
        return joining ? *joining : def;
    };
    const JoiningConvention sentencepiece{
        JoiningConvention::Style::preceding_space_marker, "▁"};
    const JoiningConvention bytes{JoiningConvention::Style::byte_level, ""};

    if (descriptor.rfind("script:", 0) == 0) {
        return std::make_unique<ScriptedBackend>(
            ScriptedBackend::load(descriptor.substr(7), with_default(sentencepiece)));
    }
    if (descriptor == "echo") {
        if (joining) {
            throw UsageError("echo backend uses its own joining convention");
        }
        return std::make_unique<EchoBackend>(tmpl);
    }

    RemoteOptions options = remote_defaults ? *remote_defaults : RemoteOptions{};
    if (descriptor.rfind("openai:", 0) == 0) {
        options.base_url = descriptor.substr(7);
        options.flavor = RemoteOptions::Flavor::openai_completions;
        return std::make_unique<RemoteBackend>(options, with_default(bytes));
    }
    if (descriptor.rfind("http://", 0) == 0 || descriptor.rfind("https://", 0) == 0) {
        options.base_url = descriptor;
        options.flavor = RemoteOptions::Flavor::native;
        return std::make_unique<RemoteBackend>(options, with_default(sentencepiece));
    }
    throw UsageError("unknown backend descriptor: " + descriptor +
                     " (expected script:PATH, echo, http(s)://..., or openai:URL)");
}

}  // namespace simulmt
