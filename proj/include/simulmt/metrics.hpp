#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simulmt/policy.hpp"

namespace simulmt {

// Per-sentence latency raw material, all in whitespace words: delays[i] is
// the number of source words revealed when hypothesis word i was committed.
struct DelayProfile {
    std::vector<int> delays;
    int src_len = 0;
    int hyp_len = 0;  // == delays.size()
    int ref_len = 0;
};

// Length-adaptive average lagging:
//   (1/tau) * sum_{i=1..tau} [ d_i - (i-1) * src_len / max(hyp_len, ref_len) ]
// with tau = the first i whose d_i equals src_len. Profiles lacking such an
// i (importable, not producible by this engine) fall back to tau = |delays|
// with a warning. Empty delays are undefined and throw.
double laal(const DelayProfile& profile, bool* used_tau_fallback = nullptr);

// Average lagging, the predecessor metric with hyp_len as the sole rate
// denominator. Internal oracle only; reports never expose it.
double average_lagging(const DelayProfile& profile);

struct BleuScore {
    double score = 0.0;                // 0..100
    std::array<double, 4> precisions{};
    double brevity_penalty = 1.0;
    long long hyp_len = 0;
    long long ref_len = 0;
};

// Metric tokenization: punctuation codepoints split into single-codepoint
// tokens, word characters grouped, whitespace separates; cased.
std::vector<std::string> bleu_tokenize(const std::string& text);

// Corpus-level BLEU-4: clipped n-gram precisions aggregated over the whole
// corpus, geometric mean, brevity penalty exp(min(0, 1 - ref_len/hyp_len)).
// Any zero aggregate precision gives score 0; no smoothing. An all-empty
// hypothesis corpus scores 0 with a warning.
BleuScore corpus_bleu(const std::vector<std::string>& hypotheses,
                      const std::vector<std::string>& references);

struct SentenceMetrics {
    std::string id;
    std::optional<double> laal;  // empty when undefined (no committed words)
    int invocations = 0;
};

struct MetricsReport {
    BleuScore bleu;
    double mean_laal = 0.0;
    double mean_invocations = 0.0;
    std::vector<SentenceMetrics> per_sentence;
    PolicyConfig config;
};

// Aggregates traces in sorted-id order against references keyed by trace
// id. Sentences with no committed words are skipped from mean LAAL with a
// warning but still count toward BLEU and invocations. Missing references
// or delay/hypothesis length disagreements throw MetricError.
MetricsReport report(const std::vector<SessionTrace>& traces,
                     const std::map<std::string, std::string>& references_by_id);

std::string report_to_json(const MetricsReport& report);

// One row per sentence (id, laal, invocations) plus an ALL summary row.
std::string report_to_csv(const MetricsReport& report);

}  // namespace simulmt
