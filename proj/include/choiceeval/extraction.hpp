#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "choiceeval/core.hpp"
#include "choiceeval/gateway.hpp"
#include "choiceeval/store.hpp"

namespace choiceeval {

struct ExtractionPrompts {
    std::string extract;  // slot: response
    static ExtractionPrompts defaults();
    std::string content_hash() const;
};

// One annotator pass: asks the extractor model for the five recommended
// entities in the response, most recommended first. A reply that does not
// parse into five valid entries is re-asked once (annotators sample at
// temperature, so a second draw is a genuine second opinion); a second bad
// reply raises ExtractionParseError.
ExpertExtraction extract_expert(const RawResponse& response, int run_index,
                                const ModelId& extractor_model, double temperature,
                                Gateway& extractor,
                                const ExtractionPrompts& prompts = ExtractionPrompts::defaults());

// Majority vote across the annotator panel for one response. All extractions
// must point at the same ref, with run indexes 1..n appearing exactly once;
// anything else raises MismatchedResponseRefs.
VoteTally tally_votes(const std::vector<ExpertExtraction>& extractions);

// The consensus choice set: entities ordered by votes (desc), then mean list
// position (asc), then canonical key (asc); the top five win. Fewer than five
// distinct candidates raises InsufficientEntities — a set is never padded.
ChoiceSet select_top5(const VoteTally& tally);

// ---------------------------------------------------------------------------
// Catalog normalization
// ---------------------------------------------------------------------------

struct UnresolvedEntity {
    std::string key;              // canonical key that missed the catalog
    std::string example_surface;  // one surface form, for the worklist
    int occurrences = 0;          // how many choice sets carried it
    std::vector<std::string> example_refs;  // up to three response keys
};

struct NormalizeResult {
    std::vector<ChoiceSet> sets;  // normalized, same order as the inputs that survived
    // Distinct unresolved keys, most frequent first. Shaped as a worklist:
    // each entry is one candidate catalog row to add.
    std::vector<UnresolvedEntity> unresolved;
    // Refs dropped because deduplication after normalization left fewer than
    // five distinct entities even after walking the full candidate pool.
    std::vector<ResponseRef> dropped;
};

// Folds every voted set onto catalog canonical names. Aliases of the same
// record merge into one entry (the earliest slot wins its position, and the
// next-ranked candidate from the full vote tally moves up); names missing
// from the catalog keep their surface form and are flagged unresolved.
NormalizeResult normalize_choice_sets(const std::vector<ChoiceSet>& sets,
                                      const std::map<std::string, VoteTally>& tallies,
                                      const EntityCatalog& catalog);

// ---------------------------------------------------------------------------
// Low-frequency exclusion
// ---------------------------------------------------------------------------

struct FrequencyFilter {
    int total_sets = 0;
    double threshold = 0.0;
    std::map<std::string, int> counts;  // canonical key -> sets containing it
    std::set<std::string> retained;     // keys meeting the threshold
    std::set<std::string> excluded;

    bool is_retained(const std::string& canonical) const { return retained.count(canonical) > 0; }
};

// Counts set-containment per entity (an entity appearing once in a set counts
// once) and retains entities present in at least threshold * sets — the
// boundary count is kept. Raises EmptyCorpus when sets is empty.
FrequencyFilter apply_frequency_filter(const std::vector<ChoiceSet>& sets, double threshold);

// Deterministic review sample: n question ids drawn without replacement from
// the sorted id list, seeded by (seed, topic) so every run and every reviewer
// sees the same bundle. Returns ids in sorted order.
std::vector<std::string> sample_question_ids(std::vector<std::string> ids, int n,
                                             std::uint64_t seed, const std::string& topic);

// ---------------------------------------------------------------------------
// Extraction store: experts.jsonl keyed by (response, run); flagged.jsonl
// lists responses excluded because an annotator pass could not be parsed.
// ---------------------------------------------------------------------------

struct FlaggedResponse {
    ResponseRef ref;
    int run_index = 0;
    std::string reason;
    std::string timestamp;
};

class ExtractionStore {
  public:
    explicit ExtractionStore(std::filesystem::path dir);

    bool has(const ResponseRef& ref, int run_index) const;
    // Idempotent by (ref, run); returns false when already stored.
    bool put(const ExpertExtraction& extraction);

    void flag(const FlaggedResponse& f);
    std::vector<FlaggedResponse> flagged() const;
    bool is_flagged(const ResponseRef& ref) const;

    // All runs stored for one response, sorted by run_index.
    std::vector<ExpertExtraction> runs_for(const ResponseRef& ref) const;
    std::vector<ResponseRef> complete_refs(int experts) const;  // refs with all runs present
    std::size_t size() const;

  private:
    std::filesystem::path dir_;
    std::map<std::pair<std::string, int>, ExpertExtraction> by_key_;  // (ref.key(), run)
    std::set<std::string> flagged_keys_;
    std::unique_ptr<JsonlFile> expert_file_;
    std::unique_ptr<JsonlFile> flagged_file_;
    mutable std::mutex mu_;
};

struct ExtractSummary {
    int attempted = 0;
    int extracted = 0;
    int already_present = 0;
    int flagged = 0;  // (response, run) passes that failed, response excluded
};

// Runs the full annotator panel over every response. Completed (response,
// run) pairs are skipped, so interrupted runs resume for free. A pass that
// still fails after the re-ask flags the whole response: analysis only ever
// sees responses with a complete panel.
ExtractSummary extract_all(const AuditConfig& config, const std::vector<RawResponse>& responses,
                           Gateway& extractor, ExtractionStore& store, Clock& clock,
                           const ExtractionPrompts& prompts = ExtractionPrompts::defaults());

}  // namespace choiceeval
