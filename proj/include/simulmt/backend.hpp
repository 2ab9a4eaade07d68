#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "simulmt/agreement.hpp"
#include "simulmt/prompting.hpp"
#include "simulmt/text_stream.hpp"

namespace simulmt {

struct GenerationRequest {
    std::string prompt;
    int num_candidates = 1;
    int max_new_tokens = 64;
    std::vector<std::string> stop_sequences;

    // Diagnostics tag carried into every backend error.
    std::string request_id;

    // Lookup key for scripted backends; remote backends ignore these.
    std::string sentence_id;
    int cursor = 0;
};

struct GenerationResponse {
    // Continuation-only candidates, sorted by descending score.
    std::vector<BeamCandidate> candidates;
    std::string model_id;
    double latency_ms = 0.0;
};

// Generation interface: given a prompt, return up to B scored candidate
// continuations. Implementations must tolerate concurrent calls.
class Backend {
  public:
    virtual ~Backend() = default;

    virtual GenerationResponse generate(const GenerationRequest& request) = 0;

    // Subword joining convention of this backend's tokens.
    virtual JoiningConvention joining() const = 0;
};

// Deterministic fixture backend: an immutable map from (sentence id, cursor)
// to a candidate list, loaded from JSONL. One object per line:
//   {"id": str, "cursor": int, "candidates":
//     [{"tokens": [str], "score": float, "finished": bool}]}
// A finished candidate gets an EOS token appended to its token list.
class ScriptedBackend : public Backend {
  public:
    static ScriptedBackend load(const std::string& path, JoiningConvention conv);

    GenerationResponse generate(const GenerationRequest& request) override;
    JoiningConvention joining() const override { return conv_; }

    std::size_t entry_count() const { return entries_.size(); }

  private:
    std::map<std::pair<std::string, int>, std::vector<BeamCandidate>> entries_;
    JoiningConvention conv_;
};

struct RemoteOptions {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    double timeout_seconds = 60.0;
    int max_in_flight = 4;
    // Bearer token read from this environment variable when set.
    std::string auth_env = "SIMULMT_AUTH_TOKEN";

    // native:  POST {base}/v1/generate with this project's wire schema.
    // openai_completions: adapter for n-parallel completion APIs with
    //   per-token logprobs (POST {base}/v1/completions).
    enum class Flavor { native, openai_completions } flavor = Flavor::native;
};

// HTTP client backend. No automatic mid-session retry: a retried generation
// could differ and break trace determinism.
class RemoteBackend : public Backend {
  public:
    RemoteBackend(RemoteOptions options, JoiningConvention conv);
    ~RemoteBackend() override;

    GenerationResponse generate(const GenerationRequest& request) override;
    JoiningConvention joining() const override { return conv_; }

  private:
    struct Limiter;
    RemoteOptions options_;
    JoiningConvention conv_;
    std::unique_ptr<Limiter> limiter_;
};

// Deterministic pseudo-translator: uppercases the source words it finds in
// the prompt and continues past the target text already present. Useful for
// demos and seeded end-to-end runs that need no fixture file.
class EchoBackend : public Backend {
  public:
    explicit EchoBackend(PromptTemplate tmpl);

    GenerationResponse generate(const GenerationRequest& request) override;
    JoiningConvention joining() const override { return conv_; }

  private:
    PromptTemplate tmpl_;
    JoiningConvention conv_;
};

// Warns to stderr when fewer than the requested number of candidates came
// back; that is never an error.
void warn_if_fewer_candidates(const GenerationRequest& request,
                              const GenerationResponse& response);

// Heuristic contract check that a response is continuation-only: no
// candidate's surface text may start by repeating the prompt's final 16
// characters.
bool response_echoes_prompt(const std::string& prompt, const GenerationResponse& response,
                            const JoiningConvention& conv);

// Backend descriptors:
//   script:PATH          scripted fixture backend
//   echo                 deterministic pseudo-translator
//   http://... https://...   remote, native wire schema
//   openai:http://...    remote, completion-API adapter
// `joining` overrides the backend's default convention when non-null.
std::unique_ptr<Backend> make_backend(const std::string& descriptor,
                                      const PromptTemplate& tmpl,
                                      const JoiningConvention* joining = nullptr,
                                      const RemoteOptions* remote_defaults = nullptr);

}  // namespace simulmt
