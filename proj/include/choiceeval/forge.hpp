#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "choiceeval/core.hpp"
#include "choiceeval/gateway.hpp"
#include "choiceeval/store.hpp"

namespace choiceeval {

// Prompt templates used for persona adaptation and question generation. The
// slot syntax is "{name}"; rendering rejects unknown slots so a typo in a
// custom template fails loudly instead of producing garbage prompts.
struct PromptTemplates {
    std::string adapt;       // slots: cluster_name, cluster_definition, topic
    std::string questions;   // slots: topic, persona_name, persona_description, n
    std::string repair;      // slots: topic, persona_name, k, existing

    static PromptTemplates defaults();
    // Stable content hash recorded in the dataset manifest, so a template
    // change is visible in provenance.
    std::string content_hash() const;
};

std::string render_slots(std::string_view tmpl,
                         const std::map<std::string, std::string>& slots);

// Items of a numbered list ("1. text" or "1) text"), in order. Lines that are
// not numbered items are ignored.
std::vector<std::string> parse_numbered_list(const std::string& reply);

// Asks the generator model to translate a base cluster into topic-specific
// terms. The reply must carry "Name:" and "Description:" lines; anything else
// raises GenerationParseError with the raw reply attached.
AdaptedCluster adapt_cluster(const TopicId& topic, const ClusterDefinition& cluster,
                             const ModelId& generator_model, Gateway& generator,
                             const PromptTemplates& templates);

// Generates exactly n distinct, nonblank question texts for one adapted
// persona. Duplicates and blanks are discarded and replacements requested in
// up to max_repair_rounds extra calls; a shortfall after that raises
// InsufficientDistinctQuestions.
std::vector<std::string> generate_question_texts(const TopicId& topic,
                                                 const AdaptedCluster& persona, int n,
                                                 const ModelId& generator_model,
                                                 Gateway& generator,
                                                 const PromptTemplates& templates,
                                                 int max_repair_rounds = 3);

// ---------------------------------------------------------------------------
// On-disk question dataset: questions.jsonl + adapted_clusters.jsonl +
// manifest.json inside one directory. Loading tolerates an interrupted final
// write; appends are keyed by question id / (topic, cluster) so regenerating
// never duplicates work.
// ---------------------------------------------------------------------------

class QuestionStore {
  public:
    explicit QuestionStore(std::filesystem::path dir);

    const AdaptedCluster* adapted(const std::string& topic, const std::string& cluster_id) const;
    void put_adapted(const AdaptedCluster& a);

    bool has_question(const std::string& id) const;
    // Appends the questions whose ids are not present yet; returns how many
    // were actually written.
    int put_questions(const std::vector<Question>& qs);

    std::vector<Question> questions() const;  // sorted by id
    int cell_count(const std::string& topic, const std::string& cluster_id) const;

    void write_manifest(const nlohmann::json& manifest);
    std::optional<nlohmann::json> manifest() const;

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    std::map<std::string, Question> by_id_;
    std::map<std::pair<std::string, std::string>, AdaptedCluster> adapted_;
    std::unique_ptr<JsonlFile> question_file_;
    std::unique_ptr<JsonlFile> adapted_file_;
    mutable std::mutex mu_;
};

struct AssembleResult {
    std::vector<Question> questions;
    ValidationReport validation;
    int adaptations_generated = 0;
    int cells_generated = 0;   // cells that needed provider calls
    int cells_skipped = 0;     // cells already complete in the store
    int questions_written = 0;
};

// Fills the store until every (topic, cluster) cell holds exactly
// questions_per_cluster questions, generating only what is missing. Cells run
// concurrently through the generator gateway; the store serializes writes.
// Writes a manifest recording the generator identity, seed, template hash and
// dataset hash. Safe to re-run: a complete store costs zero provider calls.
AssembleResult assemble_dataset(const AuditConfig& config, Gateway& generator,
                                QuestionStore& store, Clock& clock,
                                const PromptTemplates& templates = PromptTemplates::defaults());

}  // namespace choiceeval
