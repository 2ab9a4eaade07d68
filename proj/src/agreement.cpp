#include "simulmt/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "simulmt/error.hpp"

namespace simulmt {

namespace {

std::vector<TargetToken> strip_eos_tokens(const std::vector<TargetToken>& tokens) {
    std::vector<TargetToken> out;
    out.reserve(tokens.size());
    for (const TargetToken& tok : tokens) {
        if (!tok.is_eos) out.push_back(tok);
    }
    return out;
}

}  // namespace

std::vector<TargetToken> lcp(const std::vector<BeamCandidate>& candidates) {
    if (candidates.empty()) {
        throw InvalidInputError("lcp: empty candidate set");
    }
    const std::vector<TargetToken>& first = candidates.front().tokens;
    std::size_t len = first.size();
    for (const BeamCandidate& cand : candidates) {
        std::size_t i = 0;
        const std::size_t bound = std::min(len, cand.tokens.size());
        while (i < bound && cand.tokens[i] == first[i]) ++i;
        len = i;
    }
    return {first.begin(), first.begin() + static_cast<std::ptrdiff_t>(len)};
}

std::vector<TargetToken> ralcp(const std::vector<BeamCandidate>& candidates,
                               const AgreementConfig& config) {
    if (candidates.empty()) {
        throw InvalidInputError("ralcp: empty candidate set");
    }
    if (!(config.threshold > 0.0) || !(config.threshold <= 1.0) ||
        !std::isfinite(config.threshold)) {
        throw InvalidInputError("ralcp: agreement threshold must be in (0, 1]");
    }

    std::vector<std::vector<TargetToken>> rows;
    rows.reserve(candidates.size());
    for (const BeamCandidate& cand : candidates) {
        rows.push_back(config.strip_eos ? strip_eos_tokens(cand.tokens) : cand.tokens);
    }

    const double denominator = config.vote_denominator > 0
                                   ? static_cast<double>(config.vote_denominator)
                                   : static_cast<double>(candidates.size());

    std::vector<std::size_t> active(candidates.size());
    for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;

    std::vector<TargetToken> prefix;
    for (std::size_t pos = 0;; ++pos) {
        // (count, best proposer score) per distinct token at this position.
        std::map<std::pair<std::string, bool>, std::pair<int, double>> votes;
        for (std::size_t idx : active) {
            if (pos >= rows[idx].size()) continue;  // exhausted, abstains
            const TargetToken& tok = rows[idx][pos];
            auto [it, inserted] =
                votes.try_emplace({tok.text, tok.is_eos}, 0, candidates[idx].score);
            it->second.first += 1;
            if (!inserted) it->second.second = std::max(it->second.second, candidates[idx].score);
        }
        if (votes.empty()) break;

        auto best = votes.begin();
        for (auto it = std::next(votes.begin()); it != votes.end(); ++it) {
            if (it->second.first > best->second.first ||
                (it->second.first == best->second.first &&
                 it->second.second > best->second.second)) {
                best = it;
            }
        }
        if (static_cast<double>(best->second.first) / denominator < config.threshold) break;

        const TargetToken accepted{best->first.first, best->first.second};
        prefix.push_back(accepted);

        if (config.filter_disagreeing) {
            std::vector<std::size_t> next;
            next.reserve(active.size());
            for (std::size_t idx : active) {
                if (pos < rows[idx].size() && !(rows[idx][pos] == accepted)) continue;
                next.push_back(idx);
            }
            active = std::move(next);
        }
    }
    return prefix;
}

}  // namespace simulmt
