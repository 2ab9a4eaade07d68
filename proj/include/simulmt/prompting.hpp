#pragma once

#include <optional>
#include <string>
#include <vector>

#include "simulmt/text_stream.hpp"

namespace simulmt {

struct OneShotExample {
    std::string source;
    std::string target;
};

// Instruction template for the time-dependent model input. The rendered
// prompt always ends with the close marker followed by the cumulative
// target text, so the backend completes the translation in place.
struct PromptTemplate {
    std::string instruction_pattern =
        "Translate the following sentence from {src_lang} to {tgt_lang}: {source}";
    std::string src_lang = "English";
    std::string tgt_lang = "German";
    std::string open_marker = "[INST] ";
    std::string close_marker = " [/INST] ";
    std::optional<OneShotExample> one_shot;
};

// Requires {source} to appear exactly once in the instruction pattern.
void validate_template(const PromptTemplate& tmpl);

// Reads the instruction pattern from a UTF-8 text file; a single trailing
// newline is trimmed.
std::string load_template_file(const std::string& path);

// The streaming translation state at step t: revealed source prefix plus
// every token committed so far. t equals the source cursor and starts at 1.
struct IncrementalState {
    SourceStream source;
    std::vector<TargetToken> target_tokens;

    int t() const { return source.cursor(); }
};

std::string render_instruction(const PromptTemplate& tmpl, const std::string& source_text);

// Builds the model input for the current state: optional one-shot exchange,
// then open marker + instruction over the revealed words + close marker +
// detokenized target so far. Pure in all arguments.
std::string build_prompt(const PromptTemplate& tmpl, const IncrementalState& state,
                         const JoiningConvention& conv);

}  // namespace simulmt
