// Command-line driver for the entity-preference audit pipeline.
//
// Every stage reads the same configuration and run directory; stages already
// completed in the run directory are skipped, so re-running a command (or
// `run-all` after a crash) resumes instead of repeating provider calls.
//
// Exit codes: 0 success, 2 configuration or missing-input error, 3 provider
// or generation failure, 4 validation failure, 5 storage failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "choiceeval/errors.hpp"
#include "choiceeval/pipeline.hpp"
#include "choiceeval/store.hpp"

namespace fs = std::filesystem;
using namespace choiceeval;

namespace {

struct CliOptions {
    std::string config;
    std::string run_dir;
    std::string mock;     // mock script path; live providers when empty
    std::string catalog;  // overrides the config's catalog path
    std::string format = "all";
    uint64_t seed = 0;
    int parallelism = 0;  // 0 keeps the config value
};

CLI::App* add_stage(CLI::App& app, const std::string& name, const std::string& desc,
                    CliOptions& opt, bool with_format) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--config", opt.config, "audit configuration JSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--run-dir", opt.run_dir, "run directory, created if absent")->required();
    cmd->add_option("--mock", opt.mock, "mock provider script; live HTTP providers when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opt.seed, "override the config seed");
    cmd->add_option("--parallelism", opt.parallelism, "override worker count")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--catalog", opt.catalog, "override the entity catalog JSONL")
        ->check(CLI::ExistingFile);
    if (with_format)
        cmd->add_option("--format", opt.format, "report output: md, html, flat or all")
            ->check(CLI::IsMember({"md", "html", "flat", "all"}));
    return cmd;
}

void print_generate(const AssembleResult& r) {
    std::cout << "questions: " << r.questions.size() << " total, " << r.questions_written
              << " newly generated (" << r.cells_skipped << " cells already complete)\n";
}

void print_collect(const CollectSummary& s) {
    std::cout << "responses: " << s.fetched << " fetched, " << s.already_present
              << " already stored, " << s.failed << " failed\n";
    for (const auto& [cls, n] : s.failures_by_class)
        std::cout << "  failure class " << cls << ": " << n << '\n';
}

void print_extract(const ExtractSummary& s) {
    std::cout << "annotator runs: " << s.extracted << " new, " << s.already_present
              << " already stored, " << s.flagged << " responses flagged\n";
}

void print_normalize(const NormalizeSummary& s) {
    std::cout << "choice sets: " << s.voted << " voted, " << s.normalized << " normalized, "
              << s.dropped << " dropped, " << s.unresolved_entities
              << " uncataloged names in the worklist\n";
}

void print_analyze(const AnalyzeSummary& s) {
    std::cout << "analysis: " << s.preference_rows << " preference rows, " << s.lor_rows
              << " regional tests, " << s.stability_rows << " stability matrices, "
              << s.country_rows << " country summaries, " << s.review_questions
              << " review questions\n";
}

void print_report(const ReportSummary& s) {
    for (const auto& p : s.written) std::cout << "wrote " << p.string() << '\n';
}

int dispatch(const std::string& stage, const AuditConfig& config, const RunPaths& paths,
             const CliOptions& opt) {
    // The report stage is a pure rendering of results.json and needs no
    // provider environment; everything else does.
    if (stage == "report") {
        print_report(run_report(config, paths, opt.format));
        return 0;
    }

    PipelineEnv env =
        opt.mock.empty() ? make_live_env(config) : make_mock_env(config, fs::path(opt.mock));

    if (stage == "generate") {
        AssembleResult r = run_generate(config, paths, env);
        print_generate(r);
        if (!r.validation.passed) {
            std::cerr << r.validation.summary();
            return 4;
        }
    } else if (stage == "collect") {
        print_collect(run_collect(config, paths, env));
    } else if (stage == "extract") {
        print_extract(run_extract(config, paths, env));
    } else if (stage == "normalize") {
        print_normalize(run_normalize(config, paths, env));
    } else if (stage == "analyze") {
        print_analyze(run_analyze(config, paths, env));
    } else {  // run-all
        RunAllSummary s = run_all(config, paths, env, opt.format);
        print_generate(s.generate);
        if (!s.generate.validation.passed) {
            std::cerr << s.generate.validation.summary();
            return 4;
        }
        print_collect(s.collect);
        print_extract(s.extract);
        print_normalize(s.normalize);
        print_analyze(s.analyze);
        print_report(s.report);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entity-preference audit pipeline for conversational models"};
    app.require_subcommand(1);

    CliOptions opt;
    add_stage(app, "generate", "Build the question dataset", opt, false);
    add_stage(app, "collect", "Fetch model responses for every question", opt, false);
    add_stage(app, "extract", "Run the annotator panel over stored responses", opt, false);
    add_stage(app, "normalize", "Vote, canonicalize and filter choice sets", opt, false);
    add_stage(app, "analyze", "Compute metrics and write results.json", opt, false);
    add_stage(app, "report", "Render reports from results.json", opt, true);
    add_stage(app, "run-all", "Run every stage in order", opt, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* cmd = app.get_subcommands().front();
    try {
        AuditConfig config = AuditConfig::load(opt.config);
        if (cmd->count("--seed") > 0) config.seed = opt.seed;
        if (opt.parallelism > 0) config.parallelism = opt.parallelism;
        if (!opt.catalog.empty()) config.catalog_path = fs::path(opt.catalog);
        config.validate();

        RunPaths paths{fs::path(opt.run_dir)};
        fs::create_directories(paths.root);
        RunLock lock(paths.root);
        return dispatch(cmd->get_name(), config, paths, opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const MissingInput& e) {
        std::cerr << "missing input: " << e.what() << '\n';
        return 2;
    } catch (const StoreError& e) {
        std::cerr << "storage error: " << e.what() << '\n';
        return 5;
    } catch (const CatalogConflict& e) {
        std::cerr << "catalog error: " << e.what() << '\n';
        return 4;
    } catch (const AuthError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const ExhaustedRetries& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const RateLimited& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const Timeout& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const Refusal& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const ProtocolError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const UnscriptedPrompt& e) {
        std::cerr << "mock script error: " << e.what() << '\n';
        return 3;
    } catch (const GenerationParseError& e) {
        std::cerr << "generation error: " << e.what() << '\n';
        return 3;
    } catch (const InsufficientDistinctQuestions& e) {
        std::cerr << "generation error: " << e.what() << '\n';
        return 3;
    } catch (const ExtractionParseError& e) {
        std::cerr << "extraction error: " << e.what() << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
