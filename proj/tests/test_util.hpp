#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "simulmt/agreement.hpp"
#include "simulmt/backend.hpp"
#include "simulmt/text_stream.hpp"

namespace test_util {

inline std::string fixture_path(const std::string& name) {
    return std::string(SIMULMT_FIXTURES_DIR) + "/" + name;
}

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("simulmt_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<simulmt::TargetToken> toks(const std::vector<std::string>& texts,
                                              bool finished = false) {
    std::vector<simulmt::TargetToken> out;
    for (const auto& t : texts) out.push_back({t, false});
    if (finished) out.push_back(simulmt::eos_token());
    return out;
}

inline simulmt::BeamCandidate cand(const std::vector<std::string>& texts, double score,
                                   bool finished = false) {
    simulmt::BeamCandidate c;
    c.tokens = toks(texts, finished);
    c.score = score;
    c.finished = finished;
    return c;
}

// Backend driven by a plain function; joining defaults to "▁"-prefixed words.
struct FakeBackend : simulmt::Backend {
    std::function<simulmt::GenerationResponse(const simulmt::GenerationRequest&)> fn;
    simulmt::JoiningConvention conv{
        simulmt::JoiningConvention::Style::preceding_space_marker, "▁"};

    explicit FakeBackend(
        std::function<simulmt::GenerationResponse(const simulmt::GenerationRequest&)> f)
        : fn(std::move(f)) {}

    simulmt::GenerationResponse generate(const simulmt::GenerationRequest& r) override {
        return fn(r);
    }
    simulmt::JoiningConvention joining() const override { return conv; }
};

}  // namespace test_util
