#include "simulmt/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include <json.hpp>

#include "simulmt/det_rand.hpp"
#include "simulmt/error.hpp"
#include "simulmt/parallel.hpp"

namespace simulmt {

using nlohmann::ordered_json;

void validate_prefix_spec(const PrefixSpec& spec) {
    if (spec.samples_per_pair < 1) {
        throw InvalidInputError("samples_per_pair must be >= 1");
    }
    if (!(spec.min_frac > 0.0) || spec.min_frac > spec.max_frac || spec.max_frac > 1.0) {
        throw InvalidInputError("need 0 < min_frac <= max_frac <= 1");
    }
}

std::vector<std::string> truncate_prefix(const std::vector<std::string>& words,
                                         double frac) {
    if (words.empty()) {
        throw InvalidInputError("cannot truncate an empty word list");
    }
    if (!(frac > 0.0) || frac > 1.0) {
        throw InvalidInputError("truncation fraction must be in (0, 1]");
    }
    const auto len = static_cast<double>(words.size());
    auto count = static_cast<std::size_t>(std::llround(frac * len));
    if (count < 1) count = 1;
    if (count > words.size()) count = words.size();
    return {words.begin(), words.begin() + static_cast<std::ptrdiff_t>(count)};
}

namespace {

std::string render_sft_prompt(const PromptTemplate& tmpl,
                              const std::vector<std::string>& source_words,
                              const JoiningConvention& conv) {
    IncrementalState state;
    state.source = SourceStream(source_words);
    while (!state.source.finished()) state.source.reveal();
    return build_prompt(tmpl, state, conv);
}

std::string top_candidate_text(const GenerationResponse& response,
                               const JoiningConvention& conv) {
    const BeamCandidate* best = &response.candidates.front();
    for (const BeamCandidate& cand : response.candidates) {
        if (cand.score > best->score) best = &cand;
    }
    std::vector<TargetToken> tokens;
    for (const TargetToken& tok : best->tokens) {
        if (tok.is_eos) break;
        tokens.push_back(tok);
    }
    return detokenize(tokens, conv);
}

}  // namespace

std::vector<SftRecord> build_prefix_dataset(const std::vector<PairCorpus>& corpora,
                                            const PrefixSpec& spec, Backend& backend,
                                            const PromptTemplate& tmpl, int parallelism,
                                            std::vector<PairStats>* stats) {
    validate_prefix_spec(spec);
    validate_template(tmpl);
    const JoiningConvention conv = backend.joining();

    std::vector<SftRecord> records;
    if (stats) stats->clear();

    for (const PairCorpus& corpus : corpora) {
        if (static_cast<int>(corpus.pairs.size()) < spec.samples_per_pair) {
            throw UsageError("corpus '" + corpus.label + "' has " +
                             std::to_string(corpus.pairs.size()) +
                             " sentences but " + std::to_string(spec.samples_per_pair) +
                             " samples were requested");
        }

        PromptTemplate pair_tmpl = tmpl;
        pair_tmpl.src_lang = corpus.src_lang;
        pair_tmpl.tgt_lang = corpus.tgt_lang;

        // Per-pair stream: draws are independent of other pairs and of the
        // order corpora are listed in.
        DetRng rng(mix_seed(spec.seed, fnv1a64(corpus.label)));
        const auto sampled =
            sample_without_replacement(rng, corpus.pairs.size(),
                                       static_cast<std::size_t>(spec.samples_per_pair));
        std::vector<double> fracs(sampled.size());
        for (double& f : fracs) f = uniform_real(rng, spec.min_frac, spec.max_frac);

        std::vector<std::optional<SftRecord>> slots(sampled.size());
        parallel_for(sampled.size(), parallelism, [&](std::size_t j) {
            const SentencePair& pair = corpus.pairs[sampled[j]];
            try {
                const auto words = tokenize_source(pair.source);
                const auto prefix = truncate_prefix(words, fracs[j]);

                GenerationRequest request;
                request.prompt = render_sft_prompt(pair_tmpl, prefix, conv);
                request.num_candidates = 1;
                request.max_new_tokens = 4 * static_cast<int>(prefix.size()) + 32;
                request.sentence_id =
                    corpus.label + "#" + std::to_string(sampled[j]);
                request.cursor = static_cast<int>(prefix.size());
                request.request_id =
                    request.sentence_id + "@" + std::to_string(request.cursor);

                const GenerationResponse response = backend.generate(request);
                SftRecord record;
                record.src_lang = corpus.src_lang;
                record.tgt_lang = corpus.tgt_lang;
                record.prompt = request.prompt;
                record.completion = top_candidate_text(response, conv);
                record.origin = SftRecord::Origin::prefix;
                slots[j] = std::move(record);
            } catch (const BackendError& e) {
                std::fprintf(stderr, "simulmt: warning: %s: sample skipped\n", e.what());
            } catch (const InvalidInputError& e) {
                std::fprintf(stderr,
                             "simulmt: warning: %s#%zu: %s: sample skipped\n",
                             corpus.label.c_str(), sampled[j], e.what());
            }
        });

        PairStats pair_stats;
        pair_stats.label = corpus.label;
        for (auto& slot : slots) {
            if (slot) {
                records.push_back(std::move(*slot));
                ++pair_stats.emitted;
            } else {
                ++pair_stats.skipped;
            }
        }
        if (stats) stats->push_back(pair_stats);
    }
    return records;
}

std::vector<SftRecord> full_records(const std::vector<PairCorpus>& corpora,
                                    const PromptTemplate& tmpl) {
    validate_template(tmpl);
    const JoiningConvention conv{};  // joining only matters for non-empty targets
    std::vector<SftRecord> records;
    for (const PairCorpus& corpus : corpora) {
        PromptTemplate pair_tmpl = tmpl;
        pair_tmpl.src_lang = corpus.src_lang;
        pair_tmpl.tgt_lang = corpus.tgt_lang;
        for (const SentencePair& pair : corpus.pairs) {
            SftRecord record;
            record.src_lang = corpus.src_lang;
            record.tgt_lang = corpus.tgt_lang;
            record.prompt = render_sft_prompt(pair_tmpl, tokenize_source(pair.source), conv);
            record.completion = pair.target;
            record.origin = SftRecord::Origin::full;
            records.push_back(std::move(record));
        }
    }
    return records;
}

std::vector<SftRecord> mix_datasets(std::vector<SftRecord> full,
                                    std::vector<SftRecord> prefix, std::uint64_t seed) {
    std::vector<SftRecord> mixed = std::move(full);
    mixed.insert(mixed.end(), std::make_move_iterator(prefix.begin()),
                 std::make_move_iterator(prefix.end()));
    DetRng rng(mix_seed(seed, fnv1a64("mix")));
    shuffle_det(mixed, rng);
    return mixed;
}

void write_sft_jsonl(std::ostream& out, const std::vector<SftRecord>& records) {
    for (const SftRecord& record : records) {
        const ordered_json j{
            {"src_lang", record.src_lang},
            {"tgt_lang", record.tgt_lang},
            {"prompt", record.prompt},
            {"completion", record.completion},
            {"origin", record.origin == SftRecord::Origin::full ? "full" : "prefix"},
            {"loss_on_prompt", record.loss_on_prompt}};
        out << j.dump() << '\n';
    }
}

}  // namespace simulmt
