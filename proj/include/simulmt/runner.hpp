#pragma once

#include <string>
#include <vector>

#include "simulmt/backend.hpp"
#include "simulmt/policy.hpp"
#include "simulmt/text_stream.hpp"

namespace simulmt {

struct CorpusRunOptions {
    int parallelism = 1;
    // false: any session failure aborts the run (the lowest-index failure is
    // rethrown). true: failures are reported and skipped.
    bool keep_going = false;
};

struct SessionFailure {
    std::string id;
    std::string message;
};

struct CorpusRunResult {
    std::vector<SessionTrace> traces;  // in corpus order
    std::vector<SessionFailure> failures;
};

// Streams every corpus sentence through run_session. Sentence ids are the
// 0-based corpus row indices as decimal strings. Sessions are independent;
// with parallelism > 1 they run concurrently, but traces, failures, and the
// chosen fail-fast error depend only on the corpus, so outputs never vary
// with scheduling.
CorpusRunResult run_corpus(const std::vector<SentencePair>& corpus,
                           const PolicyConfig& config, Backend& backend,
                           const PromptTemplate& tmpl, const CorpusRunOptions& options);

}  // namespace simulmt
