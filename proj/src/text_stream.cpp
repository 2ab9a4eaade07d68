#include "simulmt/text_stream.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "simulmt/error.hpp"

namespace simulmt {

namespace {

// Decodes one UTF-8 codepoint starting at `i`; advances `i` past it.
// Malformed bytes are passed through as single-byte codepoints.
uint32_t decode_utf8(const std::string& s, std::size_t& i) {
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

bool is_unicode_space(uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace

std::vector<std::string> tokenize_source(const std::string& sentence) {
    std::vector<std::string> words;
    std::string current;
    std::size_t i = 0;
    while (i < sentence.size()) {
        const std::size_t start = i;
        const uint32_t cp = decode_utf8(sentence, i);
        if (is_unicode_space(cp)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.append(sentence, start, i - start);
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    if (words.empty()) {
        throw InvalidInputError("empty source: sentence holds no words");
    }
    return words;
}

int SourceStream::reveal() {
    if (finished()) {
        throw InvalidInputError("source stream already fully revealed");
    }
    return ++cursor_;
}

std::string SourceStream::revealed_text() const {
    std::string out;
    for (int i = 0; i < cursor_; ++i) {
        if (i > 0) out += ' ';
        out += words_[static_cast<std::size_t>(i)];
    }
    return out;
}

const char* JoiningConvention::style_name(Style s) {
    switch (s) {
        case Style::continuation_marker: return "continuation-marker";
        case Style::preceding_space_marker: return "preceding-space-marker";
        case Style::byte_level: return "byte-level";
    }
    return "?";
}

JoiningConvention JoiningConvention::parse(const std::string& text) {
    JoiningConvention conv;
    std::string style = text;
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
        style = text.substr(0, colon);
        conv.marker = text.substr(colon + 1);
    } else {
        conv.marker.clear();
    }
    if (style == "continuation-marker") {
        conv.style = Style::continuation_marker;
    } else if (style == "preceding-space-marker") {
        conv.style = Style::preceding_space_marker;
        if (colon == std::string::npos) conv.marker = "▁";
    } else if (style == "byte-level") {
        conv.style = Style::byte_level;
    } else {
        throw InvalidInputError("unknown joining style: " + style);
    }
    validate_joining(conv);
    return conv;
}

void validate_joining(const JoiningConvention& conv) {
    if (conv.style == JoiningConvention::Style::byte_level && !conv.marker.empty()) {
        throw InvalidInputError("byte-level joining takes no marker");
    }
}

void detokenize_append(std::string& out, std::span<const TargetToken> tokens,
                       const JoiningConvention& conv) {
    using Style = JoiningConvention::Style;
    for (const TargetToken& tok : tokens) {
        if (tok.is_eos) continue;
        switch (conv.style) {
            case Style::byte_level:
                out += tok.text;
                break;
            case Style::continuation_marker:
                if (tok.text.rfind(conv.marker, 0) == 0) {
                    out.append(tok.text, conv.marker.size(),
                               tok.text.size() - conv.marker.size());
                } else {
                    if (!out.empty()) out += ' ';
                    out += tok.text;
                }
                break;
            case Style::preceding_space_marker:
                if (tok.text.rfind(conv.marker, 0) == 0) {
                    if (!out.empty()) out += ' ';
                    out.append(tok.text, conv.marker.size(),
                               tok.text.size() - conv.marker.size());
                } else {
                    out += tok.text;
                }
                break;
        }
    }
}

std::string detokenize(std::span<const TargetToken> tokens, const JoiningConvention& conv) {
    std::string out;
    detokenize_append(out, tokens, conv);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> word_spans(const std::string& text) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    bool in_word = false;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        const uint32_t cp = decode_utf8(text, i);
        if (is_unicode_space(cp)) {
            if (in_word) spans.back().second = start;
            in_word = false;
        } else {
            if (!in_word) spans.emplace_back(start, start);
            in_word = true;
        }
    }
    if (in_word) spans.back().second = text.size();
    return spans;
}

int count_words(const std::string& text) {
    return static_cast<int>(word_spans(text).size());
}

std::vector<SentencePair> load_corpus_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open corpus file: " + path);
    }
    std::vector<SentencePair> pairs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first_tab = line.find('\t');
        if (first_tab == std::string::npos || line.find('\t', first_tab + 1) != std::string::npos) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": expected exactly 2 tab-separated fields";
            throw IoError(msg.str());
        }
        SentencePair pair{line.substr(0, first_tab), line.substr(first_tab + 1)};
        if (count_words(pair.source) == 0 || count_words(pair.target) == 0) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": empty source or target field";
            throw IoError(msg.str());
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace simulmt
