#include "simulmt/runner.hpp"

#include <cstdio>
#include <exception>
#include <optional>

#include "simulmt/parallel.hpp"

namespace simulmt {

CorpusRunResult run_corpus(const std::vector<SentencePair>& corpus,
                           const PolicyConfig& config, Backend& backend,
                           const PromptTemplate& tmpl, const CorpusRunOptions& options) {
    validate_policy(config);
    validate_template(tmpl);

    struct Slot {
        std::optional<SessionTrace> trace;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(corpus.size());

    // All sessions run to completion even under fail-fast so the reported
    // error is always the lowest-index one, independent of scheduling.
    parallel_for(corpus.size(), options.parallelism, [&](std::size_t i) {
        const std::string id = std::to_string(i);
        try {
            slots[i].trace = run_session(id, corpus[i].source, corpus[i].target,
                                         config, backend, tmpl);
        } catch (...) {
            slots[i].error = std::current_exception();
        }
    });

    CorpusRunResult result;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].error) {
            if (!options.keep_going) std::rethrow_exception(slots[i].error);
            std::string message;
            try {
                std::rethrow_exception(slots[i].error);
            } catch (const std::exception& e) {
                message = e.what();
            }
            std::fprintf(stderr, "simulmt: warning: sentence %zu failed: %s\n", i,
                         message.c_str());
            result.failures.push_back({std::to_string(i), message});
        } else {
            result.traces.push_back(std::move(*slots[i].trace));
        }
    }
    return result;
}

}  // namespace simulmt
