#include "simulmt/prompting.hpp"

#include <fstream>
#include <sstream>

#include "simulmt/error.hpp"

namespace simulmt {

namespace {

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

void replace_all(std::string& text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos;
         pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
}

}  // namespace

void validate_template(const PromptTemplate& tmpl) {
    if (count_occurrences(tmpl.instruction_pattern, "{source}") != 1) {
        throw InvalidInputError(
            "instruction pattern must contain {source} exactly once");
    }
}

std::string load_template_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open template file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string pattern = buf.str();
    if (!pattern.empty() && pattern.back() == '\n') pattern.pop_back();
    if (!pattern.empty() && pattern.back() == '\r') pattern.pop_back();
    return pattern;
}

std::string render_instruction(const PromptTemplate& tmpl, const std::string& source_text) {
    std::string text = tmpl.instruction_pattern;
    replace_all(text, "{src_lang}", tmpl.src_lang);
    replace_all(text, "{tgt_lang}", tmpl.tgt_lang);
    replace_all(text, "{source}", source_text);
    return text;
}

std::string build_prompt(const PromptTemplate& tmpl, const IncrementalState& state,
                         const JoiningConvention& conv) {
    validate_template(tmpl);
    if (state.source.cursor() < 1) {
        throw InvalidInputError("empty source: no words revealed yet");
    }
    std::string out;
    if (tmpl.one_shot) {
        out += tmpl.open_marker;
        out += render_instruction(tmpl, tmpl.one_shot->source);
        out += tmpl.close_marker;
        out += tmpl.one_shot->target;
    }
    out += tmpl.open_marker;
    out += render_instruction(tmpl, state.source.revealed_text());
    out += tmpl.close_marker;
    // Detokenized separately: the close marker already supplies the spacing,
    // so the target must not open with its own space.
    out += detokenize(state.target_tokens, conv);
    return out;
}

}  // namespace simulmt
