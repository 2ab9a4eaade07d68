#pragma once

#include <vector>

#include "simulmt/text_stream.hpp"

namespace simulmt {

// One of the B scored candidate continuations returned per model call.
struct BeamCandidate {
    std::vector<TargetToken> tokens;
    double score = 0.0;  // cumulative log-probability
    bool finished = false;
};

struct AgreementConfig {
    // Minimum vote fraction for a token to be committed, in (0, 1].
    // 1.0 coincides with plain longest-common-prefix agreement.
    double threshold = 1.0;

    // Remove EOS tokens before voting (used while the source is still
    // incomplete, where early EOS is untrustworthy).
    bool strip_eos = false;

    // Deactivate candidates that disagreed with an accepted token, so later
    // votes compare tokens conditioned on the same committed prefix. The
    // unfiltered variant keeps every candidate voting positionally.
    bool filter_disagreeing = true;

    // Vote normalization denominator; 0 means the candidate count. Set to
    // the configured beam width when a backend may return fewer candidates.
    int vote_denominator = 0;
};

// Longest token sequence that prefixes every candidate. Possibly empty.
std::vector<TargetToken> lcp(const std::vector<BeamCandidate>& candidates);

// Relaxed-agreement longest common prefix: position-wise voting over the
// candidate set. At each position the most frequent token is committed when
// its vote fraction reaches the threshold (ties broken toward the token
// proposed by the highest-scoring candidate); otherwise voting stops.
// Candidates shorter than the current position stop voting but are not
// treated as disagreeing.
std::vector<TargetToken> ralcp(const std::vector<BeamCandidate>& candidates,
                               const AgreementConfig& config);

}  // namespace simulmt
