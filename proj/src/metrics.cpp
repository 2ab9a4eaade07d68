#include "simulmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "simulmt/error.hpp"
#include "simulmt/text_stream.hpp"

namespace simulmt {

using nlohmann::ordered_json;

namespace {

void validate_profile(const DelayProfile& profile) {
    if (profile.delays.empty()) {
        throw MetricError("latency undefined: no committed words");
    }
    if (static_cast<int>(profile.delays.size()) != profile.hyp_len) {
        throw MetricError("delay count does not match hypothesis length");
    }
    if (profile.src_len < 1) {
        throw MetricError("source length must be >= 1");
    }
    int prev = 0;
    for (const int d : profile.delays) {
        if (d < 1 || d > profile.src_len) {
            throw MetricError("delay out of range [1, source length]");
        }
        if (d < prev) {
            throw MetricError("delays must be non-decreasing");
        }
        prev = d;
    }
}

double lagging(const DelayProfile& profile, int rate_denominator,
               bool* used_tau_fallback) {
    validate_profile(profile);
    const int count = static_cast<int>(profile.delays.size());
    int tau = count;
    bool fallback = true;
    for (int i = 0; i < count; ++i) {
        if (profile.delays[static_cast<std::size_t>(i)] == profile.src_len) {
            tau = i + 1;
            fallback = false;
            break;
        }
    }
    if (fallback) {
        std::fprintf(stderr,
                     "simulmt: warning: no delay reaches the source length; "
                     "using all %d words for the lagging cutoff\n",
                     count);
    }
    if (used_tau_fallback) *used_tau_fallback = fallback;

    const double rate = static_cast<double>(profile.src_len) / rate_denominator;
    double sum = 0.0;
    for (int i = 1; i <= tau; ++i) {
        sum += profile.delays[static_cast<std::size_t>(i - 1)] - (i - 1) * rate;
    }
    return sum / tau;
}

}  // namespace

double laal(const DelayProfile& profile, bool* used_tau_fallback) {
    return lagging(profile, std::max({profile.hyp_len, profile.ref_len, 1}),
                   used_tau_fallback);
}

double average_lagging(const DelayProfile& profile) {
    return lagging(profile, std::max(profile.hyp_len, 1), nullptr);
}

namespace {

uint32_t decode_cp(const std::string& s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    uint32_t cp = b0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    }
    if (len == 1 || i + len > s.size()) {
        ++i;
        return b0;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const auto bk = static_cast<unsigned char>(s[i + k]);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

bool is_metric_space(uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_metric_punct(uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    switch (cp) {
        case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
            return true;
        default:
            return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
                   (cp >= 0x3001 && cp <= 0x303F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
                   (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) ||
                   (cp >= 0xFF5B && cp <= 0xFF65);
    }
}

}  // namespace

std::vector<std::string> bleu_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        const uint32_t cp = decode_cp(text, i);
        if (is_metric_space(cp)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else if (is_metric_punct(cp)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
            tokens.push_back(text.substr(start, i - start));
        } else {
            current.append(text, start, i - start);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

BleuScore corpus_bleu(const std::vector<std::string>& hypotheses,
                      const std::vector<std::string>& references) {
    if (hypotheses.size() != references.size()) {
        throw MetricError("hypothesis and reference counts differ");
    }
    if (hypotheses.empty()) {
        throw MetricError("empty corpus");
    }

    std::array<long long, 4> matches{};
    std::array<long long, 4> totals{};
    long long hyp_len = 0;
    long long ref_len = 0;

    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        const auto hyp = bleu_tokenize(hypotheses[s]);
        const auto ref = bleu_tokenize(references[s]);
        hyp_len += static_cast<long long>(hyp.size());
        ref_len += static_cast<long long>(ref.size());

        for (int n = 1; n <= 4; ++n) {
            if (static_cast<int>(hyp.size()) < n) continue;
            std::map<std::vector<std::string>, long long> ref_counts;
            for (std::size_t i = 0; i + n <= ref.size(); ++i) {
                std::vector<std::string> gram(ref.begin() + i, ref.begin() + i + n);
                ++ref_counts[std::move(gram)];
            }
            std::map<std::vector<std::string>, long long> hyp_counts;
            for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
                std::vector<std::string> gram(hyp.begin() + i, hyp.begin() + i + n);
                ++hyp_counts[std::move(gram)];
            }
            for (const auto& [gram, count] : hyp_counts) {
                const auto it = ref_counts.find(gram);
                const long long clip = it == ref_counts.end() ? 0 : it->second;
                matches[static_cast<std::size_t>(n - 1)] += std::min(count, clip);
            }
            totals[static_cast<std::size_t>(n - 1)] +=
                static_cast<long long>(hyp.size()) - n + 1;
        }
    }

    BleuScore result;
    result.hyp_len = hyp_len;
    result.ref_len = ref_len;
    if (hyp_len == 0) {
        std::fprintf(stderr, "simulmt: warning: every hypothesis is empty; BLEU is 0\n");
        result.brevity_penalty =
            std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len)));
        return result;
    }

    result.brevity_penalty =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / hyp_len));

    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < 4; ++n) {
        result.precisions[n] =
            totals[n] > 0 ? static_cast<double>(matches[n]) / totals[n] : 0.0;
        if (result.precisions[n] <= 0.0) {
            zero = true;
        } else {
            log_sum += std::log(result.precisions[n]);
        }
    }
    if (!zero) {
        result.score = 100.0 * result.brevity_penalty * std::exp(log_sum / 4.0);
    }
    return result;
}

MetricsReport report(const std::vector<SessionTrace>& traces,
                     const std::map<std::string, std::string>& references_by_id) {
    if (traces.empty()) {
        throw MetricError("no traces to score");
    }

    std::vector<const SessionTrace*> ordered;
    ordered.reserve(traces.size());
    for (const SessionTrace& trace : traces) ordered.push_back(&trace);
    std::sort(ordered.begin(), ordered.end(),
              [](const SessionTrace* a, const SessionTrace* b) { return a->id < b->id; });

    std::string missing;
    for (const SessionTrace* trace : ordered) {
        if (!references_by_id.count(trace->id)) {
            missing += missing.empty() ? trace->id : ", " + trace->id;
        }
    }
    if (!missing.empty()) {
        throw MetricError("missing references for ids: " + missing);
    }

    MetricsReport out;
    out.config = ordered.front()->config;

    std::vector<std::string> hyps;
    std::vector<std::string> refs;
    double laal_sum = 0.0;
    int laal_count = 0;
    double invocation_sum = 0.0;

    for (const SessionTrace* trace : ordered) {
        const std::string& reference = references_by_id.at(trace->id);
        hyps.push_back(trace->hypothesis);
        refs.push_back(reference);
        invocation_sum += trace->invocations;

        SentenceMetrics sm;
        sm.id = trace->id;
        sm.invocations = trace->invocations;

        const int hyp_words = count_words(trace->hypothesis);
        if (static_cast<int>(trace->delays.size()) != hyp_words) {
            throw MetricError("trace " + trace->id + ": " +
                              std::to_string(trace->delays.size()) +
                              " delays for " + std::to_string(hyp_words) +
                              " hypothesis words");
        }
        if (trace->delays.empty()) {
            std::fprintf(stderr,
                         "simulmt: warning: trace %s committed no words; "
                         "skipping it in mean LAAL\n",
                         trace->id.c_str());
        } else {
            DelayProfile profile;
            profile.delays = trace->delays;
            profile.src_len = count_words(trace->source);
            profile.hyp_len = hyp_words;
            profile.ref_len = count_words(reference);
            sm.laal = laal(profile);
            laal_sum += *sm.laal;
            ++laal_count;
        }
        out.per_sentence.push_back(std::move(sm));
    }

    out.bleu = corpus_bleu(hyps, refs);
    out.mean_laal = laal_count > 0 ? laal_sum / laal_count : 0.0;
    out.mean_invocations = invocation_sum / static_cast<double>(ordered.size());
    return out;
}

namespace {

ordered_json bleu_to_json(const BleuScore& bleu) {
    return ordered_json{{"score", bleu.score},
                        {"precisions", bleu.precisions},
                        {"brevity_penalty", bleu.brevity_penalty},
                        {"hyp_len", bleu.hyp_len},
                        {"ref_len", bleu.ref_len}};
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
    ordered_json per_sentence = ordered_json::array();
    for (const SentenceMetrics& sm : report.per_sentence) {
        ordered_json row{{"id", sm.id},
                         {"laal", nullptr},
                         {"invocations", sm.invocations}};
        if (sm.laal) row["laal"] = *sm.laal;
        per_sentence.push_back(std::move(row));
    }
    ordered_json j{{"corpus_bleu", bleu_to_json(report.bleu)},
                   {"mean_laal", report.mean_laal},
                   {"mean_invocations", report.mean_invocations},
                   {"per_sentence", std::move(per_sentence)},
                   {"config",
                    ordered_json{{"k", report.config.wait_k},
                                 {"n", report.config.read_n},
                                 {"beam", report.config.beam},
                                 {"gamma", report.config.gamma},
                                 {"max_new_tokens", report.config.max_new_tokens},
                                 {"max_target_tokens", report.config.max_target_tokens},
                                 {"write_until_empty", report.config.write_until_empty},
                                 {"filter_disagreeing", report.config.filter_disagreeing},
                                 {"stop", report.config.stop_sequences}}}};
    return j.dump(2);
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    char buf[64];
    out << "id,laal,invocations\n";
    for (const SentenceMetrics& sm : report.per_sentence) {
        if (sm.laal) {
            std::snprintf(buf, sizeof buf, "%.6f", *sm.laal);
            out << sm.id << ',' << buf << ',' << sm.invocations << '\n';
        } else {
            out << sm.id << ",," << sm.invocations << '\n';
        }
    }
    std::snprintf(buf, sizeof buf, "%.6f", report.mean_laal);
    out << "ALL," << buf << ',';
    std::snprintf(buf, sizeof buf, "%.6f", report.mean_invocations);
    out << buf << '\n';
    return out.str();
}

}  // namespace simulmt
