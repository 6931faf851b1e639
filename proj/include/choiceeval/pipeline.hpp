#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "choiceeval/core.hpp"
#include "choiceeval/extraction.hpp"
#include "choiceeval/forge.hpp"
#include "choiceeval/gateway.hpp"
#include "choiceeval/harvester.hpp"
#include "choiceeval/metrics.hpp"
#include "choiceeval/report.hpp"

namespace choiceeval {

// Virtual-clock origin for scripted runs (2025-03-01T00:00:00Z), so mock
// artifacts carry identical timestamps on every machine.
inline constexpr double kRunEpoch = 1740787200.0;

// ---------------------------------------------------------------------------
// Run-directory layout. Every stage owns exactly one subdirectory and never
// writes into a predecessor's.
// ---------------------------------------------------------------------------

struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path questions_dir() const { return root / "questions"; }
    std::filesystem::path responses_dir() const { return root / "responses"; }
    std::filesystem::path extractions_dir() const { return root / "extractions"; }
    std::filesystem::path choices_dir() const { return root / "choices"; }
    std::filesystem::path results_dir() const { return root / "results"; }
    std::filesystem::path reports_dir() const { return root / "reports"; }

    std::filesystem::path voted_file() const { return choices_dir() / "voted.jsonl"; }
    std::filesystem::path normalized_file() const { return choices_dir() / "normalized.jsonl"; }
    std::filesystem::path unresolved_file() const { return choices_dir() / "unresolved.jsonl"; }
    std::filesystem::path dropped_file() const { return choices_dir() / "dropped.jsonl"; }
    std::filesystem::path results_file() const { return results_dir() / "results.json"; }
    std::filesystem::path review_file() const { return results_dir() / "review_sample.json"; }
};

// ---------------------------------------------------------------------------
// Execution environment: provider gateways, the clock, the entity catalog.
// ---------------------------------------------------------------------------

struct PipelineEnv {
    std::map<std::string, std::shared_ptr<Gateway>> gateways;  // by provider name
    std::shared_ptr<Clock> clock;
    EntityCatalog catalog;
};

// Scripted environment: every configured provider is served by one shared
// mock backend, and the clock is virtual and pinned to the run epoch so
// timestamps (and therefore artifacts) are byte-stable across machines.
PipelineEnv make_mock_env(const AuditConfig& config, const std::filesystem::path& script_path);

// Live environment: HTTP backend per provider on the system clock.
PipelineEnv make_live_env(const AuditConfig& config);

// The gateway serving one model; ConfigError when its provider is missing.
Gateway& gateway_for(PipelineEnv& env, const ModelId& model);

// ---------------------------------------------------------------------------
// Stages. Each requires its predecessor's store (MissingInput otherwise) and
// is resumable: work already stored is never refetched. The voting,
// normalization, analysis and report stages are pure recomputations over the
// stores and rewrite their outputs wholesale.
// ---------------------------------------------------------------------------

AssembleResult run_generate(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env);

CollectSummary run_collect(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env);

ExtractSummary run_extract(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env);

struct NormalizeSummary {
    int complete_responses = 0;  // refs with a full annotator panel
    int voted = 0;
    int normalized = 0;
    int dropped = 0;              // sets lost to post-merge shortfall
    int unresolved_entities = 0;  // distinct uncataloged keys (worklist rows)
};

NormalizeSummary run_normalize(const AuditConfig& config, const RunPaths& paths,
                               PipelineEnv& env);

struct AnalyzeSummary {
    int preference_rows = 0;
    int lor_rows = 0;
    int stability_rows = 0;
    int country_rows = 0;
    int review_questions = 0;
};

AnalyzeSummary run_analyze(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env);

struct ReportSummary {
    std::vector<std::filesystem::path> written;
};

// format: "md", "html", "flat" or "all".
ReportSummary run_report(const AuditConfig& config, const RunPaths& paths,
                         const std::string& format);

struct RunAllSummary {
    AssembleResult generate;
    CollectSummary collect;
    ExtractSummary extract;
    NormalizeSummary normalize;
    AnalyzeSummary analyze;
    ReportSummary report;
};

RunAllSummary run_all(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env,
                      const std::string& format = "all");

// ---------------------------------------------------------------------------
// Analysis internals, exposed for direct testing and offline replay.
// ---------------------------------------------------------------------------

// Computes every metric from the stores alone — no provider calls. The
// headline preference/regional numbers use the configured analysis
// repetition; stability compares all repetitions.
ResultsBundle analyze_stores(const AuditConfig& config, const RunPaths& paths,
                             const EntityCatalog& catalog, Clock& clock);

// Inverse of export_results, for rendering reports from a stored results
// document.
ResultsBundle bundle_from_json(const nlohmann::json& doc);

// Human-review bundle: per topic, a deterministic sample of questions, each
// entry carrying every model's response text and normalized choices for the
// analysis repetition.
nlohmann::json build_review_sample(const AuditConfig& config, const RunPaths& paths);

}  // namespace choiceeval
