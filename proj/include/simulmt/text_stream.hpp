#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace simulmt {

// One backend-native subword unit. EOS markers carry no visible text when
// detokenized.
struct TargetToken {
    std::string text;
    bool is_eos = false;

    bool operator==(const TargetToken&) const = default;
};

inline TargetToken eos_token() { return TargetToken{"", true}; }

// How a backend's subword pieces join into surface text.
//
//   continuation_marker    pieces are space-separated words unless prefixed
//                          with `marker`, which glues them to the previous
//                          piece ("##" style). An empty marker glues every
//                          piece, i.e. bare concatenation.
//   preceding_space_marker a `marker` prefix opens a new space-separated
//                          word ("▁" style); unmarked pieces glue.
//   byte_level             pieces embed their own spacing; bare
//                          concatenation, marker must be empty.
struct JoiningConvention {
    enum class Style { continuation_marker, preceding_space_marker, byte_level };

    Style style = Style::preceding_space_marker;
    std::string marker = "▁";

    // Parses "style" or "style:marker", e.g. "preceding-space-marker:▁".
    static JoiningConvention parse(const std::string& text);
    static const char* style_name(Style s);
};

void validate_joining(const JoiningConvention& conv);

// Splits on Unicode whitespace; empty segments dropped. Throws
// InvalidInputError when the sentence holds no words at all.
std::vector<std::string> tokenize_source(const std::string& sentence);

// Incrementally revealed source word sequence. The revealed prefix is
// stable: the cursor only ever advances.
class SourceStream {
  public:
    SourceStream() = default;
    explicit SourceStream(std::vector<std::string> words) : words_(std::move(words)) {}

    static SourceStream from_sentence(const std::string& sentence) {
        return SourceStream(tokenize_source(sentence));
    }

    int cursor() const { return cursor_; }
    int total() const { return static_cast<int>(words_.size()); }
    bool finished() const { return cursor_ == total(); }

    // Reveals the next word and returns the new cursor.
    int reveal();

    std::span<const std::string> revealed() const {
        return {words_.data(), static_cast<std::size_t>(cursor_)};
    }
    const std::vector<std::string>& words() const { return words_; }

    // Space-joined revealed prefix.
    std::string revealed_text() const;

  private:
    std::vector<std::string> words_;
    int cursor_ = 0;
};

// Appends the surface form of `tokens` to `out` under `conv`. EOS tokens
// contribute nothing. Appending is concatenative: detokenizing a token
// prefix always yields a string prefix of the full detokenization.
void detokenize_append(std::string& out, std::span<const TargetToken> tokens,
                       const JoiningConvention& conv);

std::string detokenize(std::span<const TargetToken> tokens, const JoiningConvention& conv);

// Byte ranges [begin, end) of the whitespace-delimited words in text.
std::vector<std::pair<std::size_t, std::size_t>> word_spans(const std::string& text);

// Plain whitespace word count of surface text.
int count_words(const std::string& text);

struct SentencePair {
    std::string source;
    std::string target;
};

// UTF-8 TSV, one `source<TAB>target` pair per line, no header. Lines that
// do not hold exactly two non-empty fields are rejected with their line
// number.
std::vector<SentencePair> load_corpus_tsv(const std::string& path);

}  // namespace simulmt
