#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "choiceeval/core.hpp"
#include "choiceeval/gateway.hpp"
#include "choiceeval/store.hpp"

namespace choiceeval {

// One permanently failed collection task, kept in a ledger so a run can finish
// the rest of the batch and report what is missing instead of dying.
struct FailureRecord {
    ResponseRef ref;
    std::string error_class;  // to_string(ErrorClass)
    std::string detail;
    std::string timestamp;
};

// ---------------------------------------------------------------------------
// Response corpus on disk: one JSONL file per (model, topic) so reruns and
// partial syncs touch small files, plus failures.jsonl. Appends flush per
// record; an interrupted write costs at most the record in flight.
// ---------------------------------------------------------------------------

class ResponseStore {
  public:
    explicit ResponseStore(std::filesystem::path dir);

    bool has(const ResponseRef& ref) const;
    const RawResponse* find(const ResponseRef& ref) const;
    // Idempotent by ref; returns false when the ref was already stored.
    bool put(const RawResponse& response);

    void record_failure(const FailureRecord& failure);
    std::vector<FailureRecord> failures() const;

    std::vector<RawResponse> all() const;  // sorted by ref
    // Responses for one model whose question ids start with the topic slug.
    std::vector<RawResponse> for_model_topic(const std::string& model_label,
                                             const std::string& topic) const;
    std::size_t size() const;

  private:
    JsonlFile& file_for(const ResponseRef& ref);

    std::filesystem::path dir_;
    std::map<ResponseRef, RawResponse> by_ref_;
    std::map<std::string, std::unique_ptr<JsonlFile>> files_;
    std::unique_ptr<JsonlFile> failure_file_;
    mutable std::mutex mu_;
};

struct CollectSummary {
    int attempted = 0;        // tasks not already in the store
    int fetched = 0;          // new responses stored this run
    int already_present = 0;  // tasks skipped because the store had them
    int failed = 0;           // tasks recorded in the failure ledger
    std::map<std::string, int> failures_by_class;
    std::map<std::string, int> per_model_new;
};

// Fetches one response if missing; returns true when a provider call was
// made. The question text is sent verbatim as a fresh single-turn prompt, and
// sampling is left at the provider default.
bool collect_response(const Question& question, const ModelId& model, int repetition,
                      Gateway& gateway, ResponseStore& store, Clock& clock);

// Every (model, question, repetition) task missing from the store, fanned out
// across config.parallelism workers. Provider errors that survive the retry
// policy land in the failure ledger; anything else aborts the batch.
CollectSummary collect_all(const AuditConfig& config, const std::vector<Question>& questions,
                           const std::map<std::string, std::shared_ptr<Gateway>>& gateways,
                           ResponseStore& store, Clock& clock);

}  // namespace choiceeval
