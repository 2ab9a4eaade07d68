#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "simulmt/backend.hpp"
#include "simulmt/prompting.hpp"
#include "simulmt/text_stream.hpp"

namespace simulmt {

struct PrefixSpec {
    int samples_per_pair = 1000;
    double min_frac = 0.2;
    double max_frac = 0.8;
    std::uint64_t seed = 0;
};

// Requires 0 < min_frac <= max_frac <= 1 and samples_per_pair >= 1.
void validate_prefix_spec(const PrefixSpec& spec);

struct SftRecord {
    enum class Origin { full, prefix };

    std::string src_lang;
    std::string tgt_lang;
    std::string prompt;      // rendered instruction with empty target
    std::string completion;  // target text
    Origin origin = Origin::full;
    bool loss_on_prompt = false;  // always false: loss is on the completion only
};

// First max(1, round(frac * len)) words. frac must lie in (0, 1].
std::vector<std::string> truncate_prefix(const std::vector<std::string>& words,
                                         double frac);

struct PairCorpus {
    std::string label;  // e.g. "en-de"; seeds and ids derive from it
    std::string src_lang;
    std::string tgt_lang;
    std::vector<SentencePair> pairs;
};

struct PairStats {
    std::string label;
    int emitted = 0;
    int skipped = 0;
};

// For each pair corpus: draw samples_per_pair sources without replacement,
// truncate each to a uniform fraction of its length, translate the prefix
// with the backend's top candidate, and emit origin=prefix records. Each
// pair uses an independent stream seeded from (seed, label), so adding or
// reordering pairs never changes another pair's draws. Backend failures
// skip the sample and are counted; a corpus smaller than samples_per_pair
// is a usage error.
std::vector<SftRecord> build_prefix_dataset(const std::vector<PairCorpus>& corpora,
                                            const PrefixSpec& spec, Backend& backend,
                                            const PromptTemplate& tmpl,
                                            int parallelism = 1,
                                            std::vector<PairStats>* stats = nullptr);

// One origin=full record per corpus sentence, completion = the reference.
std::vector<SftRecord> full_records(const std::vector<PairCorpus>& corpora,
                                    const PromptTemplate& tmpl);

// Single seeded shuffle of full + prefix records; counts preserved.
std::vector<SftRecord> mix_datasets(std::vector<SftRecord> full,
                                    std::vector<SftRecord> prefix, std::uint64_t seed);

// JSONL, field names exactly: src_lang, tgt_lang, prompt, completion,
// origin, loss_on_prompt.
void write_sft_jsonl(std::ostream& out, const std::vector<SftRecord>& records);

}  // namespace simulmt
