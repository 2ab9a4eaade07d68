// simulmt: streaming translation harness over completion-style backends.
// Subcommands: run (simulate + score), sweep (config grid -> CSV),
// score (re-score stored traces), datagen (prefix SFT data).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "simulmt/datagen.hpp"
#include "simulmt/error.hpp"
#include "simulmt/metrics.hpp"
#include "simulmt/policy.hpp"
#include "simulmt/runner.hpp"

namespace {

using namespace simulmt;

struct TemplateFlags {
    std::string template_path;
    std::string src_lang = "English";
    std::string tgt_lang = "German";
    std::string open_marker = "[INST] ";
    std::string close_marker = " [/INST] ";
    std::string one_shot_source;
    std::string one_shot_target;
};

struct BackendFlags {
    std::string descriptor;
    std::string joining;
    double timeout_seconds = 60.0;
    int max_in_flight = 4;
};

struct PolicyFlags {
    PolicyConfig config;
    std::string preset;
};

void add_template_flags(CLI::App* cmd, TemplateFlags& flags) {
    cmd->add_option("--template", flags.template_path,
                    "File holding the instruction pattern ({src_lang}, {tgt_lang}, "
                    "{source} placeholders)");
    cmd->add_option("--src-lang", flags.src_lang, "Source language name")
        ->capture_default_str();
    cmd->add_option("--tgt-lang", flags.tgt_lang, "Target language name")
        ->capture_default_str();
    cmd->add_option("--open-marker", flags.open_marker, "Text before the instruction")
        ->capture_default_str();
    cmd->add_option("--close-marker", flags.close_marker,
                    "Text between the instruction and the target")
        ->capture_default_str();
    cmd->add_option("--one-shot-source", flags.one_shot_source,
                    "Source side of an example exchange put before the instruction");
    cmd->add_option("--one-shot-target", flags.one_shot_target,
                    "Target side of the example exchange");
}

void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
    cmd->add_option("--backend", flags.descriptor,
                    "script:PATH | echo | http(s)://HOST:PORT | openai:URL")
        ->required();
    cmd->add_option("--joining", flags.joining,
                    "Token joining override: continuation-marker[:M] | "
                    "preceding-space-marker[:M] | byte-level");
    cmd->add_option("--timeout", flags.timeout_seconds, "Per-request timeout, seconds")
        ->capture_default_str();
    cmd->add_option("--max-in-flight", flags.max_in_flight,
                    "Concurrent request bound for remote backends")
        ->capture_default_str();
}

void add_policy_flags(CLI::App* cmd, PolicyFlags& flags) {
    cmd->add_option("--k", flags.config.wait_k, "Initial wait in source words")
        ->capture_default_str();
    cmd->add_option("--n", flags.config.read_n, "Source words per read chunk")
        ->capture_default_str();
    cmd->add_option("--beam", flags.config.beam, "Candidates requested per invocation")
        ->capture_default_str();
    cmd->add_option("--gamma", flags.config.gamma, "Agreement threshold in (0,1]")
        ->capture_default_str();
    cmd->add_option("--preset", flags.preset,
                    "low-latency (b=5,k=3,n=3,gamma=0.6) or high-quality "
                    "(b=10,k=6,n=6,gamma=0.6); explicit flags win")
        ->check(CLI::IsMember({"low-latency", "high-quality"}));
    cmd->add_option("--max-new-tokens", flags.config.max_new_tokens,
                    "Generation cap per invocation")
        ->capture_default_str();
    cmd->add_option("--max-target-tokens", flags.config.max_target_tokens,
                    "Session emission cap; 0 derives 4*source_words+32")
        ->capture_default_str();
    cmd->add_flag("--write-until-empty", flags.config.write_until_empty,
                  "Keep writing at one step until the agreed prefix is empty");
    cmd->add_flag("--filter-disagreeing,!--no-filter-disagreeing",
                  flags.config.filter_disagreeing,
                  "Drop outvoted candidates from later voting rounds (default on)");
    cmd->add_option("--stop", flags.config.stop_sequences,
                    "Stop sequence passed to the backend (repeatable)");
}

void apply_preset(const CLI::App* cmd, PolicyFlags& flags) {
    if (flags.preset.empty()) return;
    const bool high = flags.preset == "high-quality";
    if (cmd->count("--k") == 0) flags.config.wait_k = high ? 6 : 3;
    if (cmd->count("--n") == 0) flags.config.read_n = high ? 6 : 3;
    if (cmd->count("--beam") == 0) flags.config.beam = high ? 10 : 5;
    if (cmd->count("--gamma") == 0) flags.config.gamma = 0.6;
}

PromptTemplate make_template(const TemplateFlags& flags) {
    PromptTemplate tmpl;
    if (!flags.template_path.empty()) {
        tmpl.instruction_pattern = load_template_file(flags.template_path);
    }
    tmpl.src_lang = flags.src_lang;
    tmpl.tgt_lang = flags.tgt_lang;
    tmpl.open_marker = flags.open_marker;
    tmpl.close_marker = flags.close_marker;
    if (flags.one_shot_source.empty() != flags.one_shot_target.empty()) {
        throw UsageError("--one-shot-source and --one-shot-target go together");
    }
    if (!flags.one_shot_source.empty()) {
        tmpl.one_shot = OneShotExample{flags.one_shot_source, flags.one_shot_target};
    }
    validate_template(tmpl);
    return tmpl;
}

std::unique_ptr<Backend> open_backend(const BackendFlags& flags,
                                      const PromptTemplate& tmpl) {
    std::optional<JoiningConvention> joining;
    if (!flags.joining.empty()) joining = JoiningConvention::parse(flags.joining);
    RemoteOptions remote;
    remote.timeout_seconds = flags.timeout_seconds;
    remote.max_in_flight = flags.max_in_flight;
    return make_backend(flags.descriptor, tmpl, joining ? &*joining : nullptr, &remote);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

std::map<std::string, std::string> references_from_corpus(
    const std::vector<SentencePair>& corpus) {
    std::map<std::string, std::string> refs;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        refs[std::to_string(i)] = corpus[i].target;
    }
    return refs;
}

void print_report_summary(const MetricsReport& rep, std::size_t sentences,
                          std::size_t failed) {
    std::printf("sentences=%zu failed=%zu corpus_bleu=%.2f mean_laal=%.2f "
                "mean_invocations=%.2f\n",
                sentences, failed, rep.bleu.score, rep.mean_laal, rep.mean_invocations);
}

// Language names for pair labels like "en-de"; unknown codes pass through.
std::string language_name(const std::string& code) {
    static const std::map<std::string, std::string> names = {
        {"ar", "Arabic"},   {"cs", "Czech"},      {"de", "German"},
        {"en", "English"},  {"es", "Spanish"},    {"fa", "Persian"},
        {"fr", "French"},   {"it", "Italian"},    {"ja", "Japanese"},
        {"nl", "Dutch"},    {"pt", "Portuguese"}, {"ro", "Romanian"},
        {"ru", "Russian"},  {"tr", "Turkish"},    {"vi", "Vietnamese"},
        {"zh", "Chinese"}};
    const auto it = names.find(code);
    return it == names.end() ? code : it->second;
}

PairCorpus load_pair(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
        throw UsageError("--pair wants LABEL=PATH, got: " + spec);
    }
    PairCorpus corpus;
    corpus.label = spec.substr(0, eq);
    const auto dash = corpus.label.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == corpus.label.size()) {
        throw UsageError("pair label wants the form SRC-TGT, got: " + corpus.label);
    }
    corpus.src_lang = language_name(corpus.label.substr(0, dash));
    corpus.tgt_lang = language_name(corpus.label.substr(dash + 1));
    corpus.pairs = load_corpus_tsv(spec.substr(eq + 1));
    return corpus;
}

struct RunArgs {
    std::string corpus_path;
    TemplateFlags tmpl;
    BackendFlags backend;
    PolicyFlags policy;
    std::string traces_path = "traces.jsonl";
    std::string report_path = "report.json";
    std::string csv_path;
    int parallelism = 1;
    bool keep_going = false;
};

int cmd_run(const CLI::App* cmd, RunArgs& args) {
    apply_preset(cmd, args.policy);
    validate_policy(args.policy.config);
    const auto corpus = load_corpus_tsv(args.corpus_path);
    const auto tmpl = make_template(args.tmpl);
    const auto backend = open_backend(args.backend, tmpl);

    CorpusRunOptions options;
    options.parallelism = args.parallelism;
    options.keep_going = args.keep_going;
    const CorpusRunResult result =
        run_corpus(corpus, args.policy.config, *backend, tmpl, options);

    write_traces_jsonl(args.traces_path, result.traces);
    const MetricsReport rep = report(result.traces, references_from_corpus(corpus));
    write_text_file(args.report_path, report_to_json(rep) + "\n");
    if (!args.csv_path.empty()) write_text_file(args.csv_path, report_to_csv(rep));

    print_report_summary(rep, corpus.size(), result.failures.size());
    std::printf("traces=%s report=%s\n", args.traces_path.c_str(),
                args.report_path.c_str());
    return 0;
}

struct SweepArgs {
    RunArgs base;
    std::vector<int> ks;
    std::vector<int> ns;
    std::vector<int> beams;
    std::vector<double> gammas;
    std::string out_path;
};

int cmd_sweep(const CLI::App* cmd, SweepArgs& args) {
    apply_preset(cmd, args.base.policy);
    if (args.ks.empty()) args.ks = {args.base.policy.config.wait_k};
    if (args.ns.empty()) args.ns = {args.base.policy.config.read_n};
    if (args.beams.empty()) args.beams = {args.base.policy.config.beam};
    if (args.gammas.empty()) {
        for (int i = 1; i <= 10; ++i) args.gammas.push_back(i / 10.0);
    }

    const auto corpus = load_corpus_tsv(args.base.corpus_path);
    const auto tmpl = make_template(args.base.tmpl);
    const auto backend = open_backend(args.base.backend, tmpl);
    const auto references = references_from_corpus(corpus);

    CorpusRunOptions options;
    options.parallelism = args.base.parallelism;
    options.keep_going = args.base.keep_going;

    std::ostringstream csv;
    csv << "k,n,beam,gamma,corpus_bleu,mean_laal,mean_invocations\n";
    char buf[160];
    for (const int k : args.ks) {
        for (const int n : args.ns) {
            for (const int beam : args.beams) {
                for (const double gamma : args.gammas) {
                    PolicyConfig config = args.base.policy.config;
                    config.wait_k = k;
                    config.read_n = n;
                    config.beam = beam;
                    config.gamma = gamma;
                    validate_policy(config);
                    const CorpusRunResult result =
                        run_corpus(corpus, config, *backend, tmpl, options);
                    const MetricsReport rep = report(result.traces, references);
                    std::snprintf(buf, sizeof buf, "%d,%d,%d,%g,%.6f,%.6f,%.6f\n", k, n,
                                  beam, gamma, rep.bleu.score, rep.mean_laal,
                                  rep.mean_invocations);
                    csv << buf;
                }
            }
        }
    }

    if (args.out_path.empty()) {
        std::cout << csv.str();
    } else {
        write_text_file(args.out_path, csv.str());
        std::printf("rows=%zu out=%s\n",
                    args.ks.size() * args.ns.size() * args.beams.size() *
                        args.gammas.size(),
                    args.out_path.c_str());
    }
    return 0;
}

struct ScoreArgs {
    std::string traces_path;
    std::string corpus_path;
    std::string report_path = "report.json";
    std::string csv_path;
};

int cmd_score(ScoreArgs& args) {
    const auto traces = read_traces_jsonl(args.traces_path);
    std::map<std::string, std::string> references;
    if (!args.corpus_path.empty()) {
        references = references_from_corpus(load_corpus_tsv(args.corpus_path));
    } else {
        for (const SessionTrace& trace : traces) {
            references[trace.id] = trace.reference;
        }
    }
    const MetricsReport rep = report(traces, references);
    write_text_file(args.report_path, report_to_json(rep) + "\n");
    if (!args.csv_path.empty()) write_text_file(args.csv_path, report_to_csv(rep));
    print_report_summary(rep, traces.size(), 0);
    std::printf("report=%s\n", args.report_path.c_str());
    return 0;
}

struct DatagenArgs {
    std::vector<std::string> pair_specs;
    TemplateFlags tmpl;
    BackendFlags backend;
    PrefixSpec spec;
    std::string out_path = "sft.jsonl";
    bool prefix_only = false;
    int parallelism = 1;
};

int cmd_datagen(DatagenArgs& args) {
    std::vector<PairCorpus> corpora;
    for (const std::string& spec : args.pair_specs) {
        corpora.push_back(load_pair(spec));
    }
    const auto tmpl = make_template(args.tmpl);
    const auto backend = open_backend(args.backend, tmpl);

    std::vector<PairStats> stats;
    auto prefix = build_prefix_dataset(corpora, args.spec, *backend, tmpl,
                                       args.parallelism, &stats);
    std::vector<SftRecord> full;
    if (!args.prefix_only) full = full_records(corpora, tmpl);

    const std::size_t full_count = full.size();
    const std::size_t prefix_count = prefix.size();
    const auto mixed = mix_datasets(std::move(full), std::move(prefix), args.spec.seed);

    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + args.out_path);
    write_sft_jsonl(out, mixed);
    if (!out) throw IoError("write failed: " + args.out_path);

    for (const PairStats& s : stats) {
        std::printf("pair %s: emitted=%d skipped=%d\n", s.label.c_str(), s.emitted,
                    s.skipped);
    }
    std::printf("full=%zu prefix=%zu total=%zu out=%s\n", full_count, prefix_count,
                mixed.size(), args.out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming translation harness over completion-style backends"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read defaults from a TOML file ([run], [sweep], ...)");

    bool print_config = false;

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "Translate a corpus and score it");
    run->add_option("--corpus", run_args.corpus_path, "TSV corpus, source<TAB>target")
        ->required();
    add_backend_flags(run, run_args.backend);
    add_template_flags(run, run_args.tmpl);
    add_policy_flags(run, run_args.policy);
    run->add_option("--traces", run_args.traces_path, "Trace JSONL output")
        ->capture_default_str();
    run->add_option("--report", run_args.report_path, "Metrics JSON output")
        ->capture_default_str();
    run->add_option("--csv", run_args.csv_path, "Per-sentence CSV output");
    run->add_option("--parallelism", run_args.parallelism, "Concurrent sessions")
        ->capture_default_str();
    run->add_flag("--keep-going", run_args.keep_going,
                  "Skip failed sentences instead of aborting");
    run->add_flag("--print-config", print_config, "Print the resolved config and exit");

    SweepArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "Run a config grid, emit CSV");
    sweep->add_option("--corpus", sweep_args.base.corpus_path, "TSV corpus")->required();
    add_backend_flags(sweep, sweep_args.base.backend);
    add_template_flags(sweep, sweep_args.base.tmpl);
    add_policy_flags(sweep, sweep_args.base.policy);
    sweep->add_option("--ks", sweep_args.ks, "Wait-k grid (default: --k)");
    sweep->add_option("--ns", sweep_args.ns, "Read-n grid (default: --n)");
    sweep->add_option("--beams", sweep_args.beams, "Beam grid (default: --beam)");
    sweep->add_option("--gammas", sweep_args.gammas,
                      "Gamma grid (default: 0.1 0.2 ... 1.0)");
    sweep->add_option("--out", sweep_args.out_path, "CSV path (default: stdout)");
    sweep->add_option("--parallelism", sweep_args.base.parallelism, "Concurrent sessions")
        ->capture_default_str();
    sweep->add_flag("--keep-going", sweep_args.base.keep_going,
                    "Skip failed sentences instead of aborting");
    sweep->add_flag("--print-config", print_config,
                    "Print the resolved config and exit");

    ScoreArgs score_args;
    CLI::App* score = app.add_subcommand("score", "Re-score stored traces");
    score->add_option("--traces", score_args.traces_path, "Trace JSONL input")
        ->required();
    score->add_option("--corpus", score_args.corpus_path,
                      "Score against this corpus's targets instead of the "
                      "references stored in the traces");
    score->add_option("--report", score_args.report_path, "Metrics JSON output")
        ->capture_default_str();
    score->add_option("--csv", score_args.csv_path, "Per-sentence CSV output");
    score->add_flag("--print-config", print_config,
                    "Print the resolved config and exit");

    DatagenArgs datagen_args;
    CLI::App* datagen =
        app.add_subcommand("datagen", "Build prefix SFT data from parallel corpora");
    datagen
        ->add_option("--pair", datagen_args.pair_specs,
                     "LABEL=PATH, label like en-de (repeatable)")
        ->required();
    add_backend_flags(datagen, datagen_args.backend);
    add_template_flags(datagen, datagen_args.tmpl);
    datagen->add_option("--samples", datagen_args.spec.samples_per_pair,
                        "Prefix samples per pair")
        ->capture_default_str();
    datagen->add_option("--min-frac", datagen_args.spec.min_frac,
                        "Lower truncation fraction")
        ->capture_default_str();
    datagen->add_option("--max-frac", datagen_args.spec.max_frac,
                        "Upper truncation fraction")
        ->capture_default_str();
    datagen->add_option("--seed", datagen_args.spec.seed, "Sampling and shuffle seed")
        ->capture_default_str();
    datagen->add_option("--out", datagen_args.out_path, "SFT JSONL output")
        ->capture_default_str();
    datagen->add_flag("--prefix-only", datagen_args.prefix_only,
                      "Skip the full-sentence records");
    datagen->add_option("--parallelism", datagen_args.parallelism,
                        "Concurrent translation requests")
        ->capture_default_str();
    datagen->add_flag("--print-config", print_config,
                      "Print the resolved config and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        if (print_config) {
            std::cout << active->config_to_str(true, true);
            return 0;
        }
        if (active == run) return cmd_run(run, run_args);
        if (active == sweep) return cmd_sweep(sweep, sweep_args);
        if (active == score) return cmd_score(score_args);
        return cmd_datagen(datagen_args);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 2;
    } catch (const InvalidInputError& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 3;
    } catch (const BackendError& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 4;
    } catch (const SessionError& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 4;
    } catch (const MetricError& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "simulmt: error: %s\n", e.what());
        return 1;
    }
}
