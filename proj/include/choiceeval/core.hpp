#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "choiceeval/errors.hpp"

namespace choiceeval {

// ---------------------------------------------------------------------------
// Identifiers and protocol-level records shared by every pipeline stage.
// ---------------------------------------------------------------------------

enum class TopicKind { EntityAnchored, CountryLevel };

std::string to_string(TopicKind k);
TopicKind topic_kind_from_string(const std::string& s);

struct TopicId {
    std::string name;
    TopicKind kind = TopicKind::EntityAnchored;

    // Filesystem/id-safe form: lowercased, spaces and slashes become '-'.
    std::string slug() const;

    bool operator==(const TopicId& o) const { return name == o.name && kind == o.kind; }
};

struct ClusterDefinition {
    std::string id;          // short stable handle, e.g. "price-sensitive"
    std::string name;        // display name
    std::string definition;  // one-sentence persona description
};

// The nine built-in psychographic personas used when a config does not
// supply its own cluster list.
const std::vector<ClusterDefinition>& default_clusters();

struct AdaptedCluster {
    std::string topic;        // topic name the adaptation targets
    std::string cluster_id;   // base cluster this was derived from
    std::string name;         // topic-specific persona name
    std::string description;  // topic-specific persona description
};

struct Question {
    std::string id;       // "<topic-slug>/<cluster-id>/<NN>", NN is 1-based, zero padded
    std::string topic;    // topic name
    std::string cluster;  // cluster id
    std::string text;
};

std::string make_question_id(const TopicId& topic, const std::string& cluster_id, int index);

struct ModelId {
    std::string provider;    // which gateway profile serves it
    std::string model_name;  // provider-side identifier
    std::string label;       // short display label, unique within a config

    std::string key() const { return provider + "/" + model_name; }
    bool operator==(const ModelId& o) const {
        return provider == o.provider && model_name == o.model_name && label == o.label;
    }
};

// Locates one collected response: the unit every downstream stage is keyed by.
struct ResponseRef {
    std::string question_id;
    std::string model_label;
    int repetition = 1;  // 1-based

    std::string key() const {
        return model_label + "|" + question_id + "|" + std::to_string(repetition);
    }
    bool operator==(const ResponseRef& o) const {
        return question_id == o.question_id && model_label == o.model_label &&
               repetition == o.repetition;
    }
    bool operator<(const ResponseRef& o) const {
        return std::tie(model_label, question_id, repetition) <
               std::tie(o.model_label, o.question_id, o.repetition);
    }
};

struct RawResponse {
    ResponseRef ref;
    std::string text;
    std::string timestamp;  // ISO-8601 UTC at collection time
    std::map<std::string, std::string> request_metadata;
};

// One annotator pass over one response: exactly five entity surface forms,
// most recommended first, no duplicates after canonical folding.
struct ExpertExtraction {
    ResponseRef ref;
    int run_index = 1;  // 1-based, 1..experts
    std::vector<std::string> ranked_entities;

    // Throws ExtractionParseError unless the invariants above hold.
    void validate() const;
};

struct VoteTally {
    ResponseRef ref;
    std::map<std::string, int> votes;          // canonical key -> expert votes
    std::map<std::string, double> mean_rank;   // canonical key -> mean list position (1-based)
    std::map<std::string, std::string> surface;  // canonical key -> first surface form seen
};

enum class Provenance { Voted, Normalized };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct ChoiceSet {
    ResponseRef ref;
    std::vector<std::string> ranked;  // exactly five entries, best first
    Provenance provenance = Provenance::Voted;
    // Parallel to `ranked` once normalization ran: true where the name could
    // not be resolved against the catalog. Empty for voted sets.
    std::vector<bool> unresolved;
};

// ---------------------------------------------------------------------------
// Entity catalog
// ---------------------------------------------------------------------------

enum class Region { US, Europe, Asia, Other };

std::string to_string(Region r);
Region region_from_string(const std::string& s);
const std::vector<Region>& all_regions();

struct EntityRecord {
    std::string canonical_name;
    std::vector<std::string> aliases;
    // Region stays optional at parse time so analysis can surface a
    // MissingRegion error for a retained entity instead of failing the load.
    std::optional<Region> region;
    std::optional<std::string> country;
};

// Normalized comparison key for entity names: trims, drops a trailing
// parenthetical qualifier, strips surrounding punctuation, collapses inner
// whitespace and lowercases ASCII. Idempotent by construction.
std::string canonical_key(std::string_view raw);

class EntityCatalog {
  public:
    EntityCatalog() = default;

    // One JSON object per line; throws CatalogConflict when two records claim
    // the same alias key, StoreError on unreadable input.
    static EntityCatalog load(const std::filesystem::path& path);
    static EntityCatalog from_records(std::vector<EntityRecord> records);

    // nullptr when no record matches canonical_key(raw).
    const EntityRecord* resolve(std::string_view raw) const;

    // Matches by country field or canonical name; nullptr when absent.
    const EntityRecord* find_country(const std::string& country) const;

    std::size_t size() const { return records_.size(); }
    const std::vector<EntityRecord>& records() const { return records_; }

  private:
    std::vector<EntityRecord> records_;
    std::map<std::string, std::size_t> by_key_;  // canonical key -> record index
};

// ---------------------------------------------------------------------------
// Audit configuration
// ---------------------------------------------------------------------------

struct ProviderProfile {
    std::string name;
    std::string base_url;      // e.g. https://api.example.com/v1
    std::string auth_env_var;  // environment variable holding the API key
    double rate_limit_per_min = 60.0;
    int max_retries = 3;
    double backoff_base_s = 1.0;
    double timeout_s = 60.0;
};

struct AuditConfig {
    uint64_t seed = 0;
    std::vector<TopicId> topics;
    std::vector<ClusterDefinition> clusters;  // defaults to the nine built-ins
    std::vector<ModelId> models;              // audited models
    ModelId generator_model;
    ModelId extractor_model;

    int questions_per_cluster = 23;
    int experts = 5;
    int repetitions = 5;
    double expert_temperature = 0.7;
    double frequency_threshold = 0.05;
    double lor_alpha = 0.5;

    // Which repetition feeds the headline preference/regional metrics
    // (stability always looks at all of them).
    int analysis_repetition = 1;
    int review_sample_per_topic = 15;
    std::string monitor_country = "United States";
    std::vector<std::pair<Region, Region>> region_pairs;  // default US/Europe, US/Asia
    bool pooled_frequency_filter = false;
    std::string kruskal_input = "frequencies";  // or "ranks"

    std::filesystem::path catalog_path;  // resolved against the config file dir
    std::map<std::string, ProviderProfile> providers;

    int parallelism = 4;

    // Throws ConfigError naming the offending field.
    void validate() const;

    static AuditConfig from_json(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {});
    static AuditConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    const ProviderProfile& profile_for(const ModelId& m) const;
    const TopicId* find_topic(const std::string& name) const;
};

// ---------------------------------------------------------------------------
// Question-set validation
// ---------------------------------------------------------------------------

struct ValidationIssue {
    std::string kind;      // "missing" | "extra" | "duplicate-id" | "duplicate-text" | ...
    std::string location;  // e.g. "airlines/price-sensitive"
    std::string detail;
};

struct ValidationReport {
    bool passed = false;
    // topic name -> cluster id -> question count
    std::map<std::string, std::map<std::string, int>> counts;
    std::vector<ValidationIssue> issues;

    std::string summary() const;
};

ValidationReport validate_question_set(const std::vector<Question>& questions,
                                       const AuditConfig& config);

// ---------------------------------------------------------------------------
// Small shared utilities
// ---------------------------------------------------------------------------

// FNV-1a, used for stable content hashes and seed derivation.
uint64_t fnv1a(std::string_view data, uint64_t seed = 14695981039346656037ull);
std::string hex64(uint64_t v);

std::string to_slug(std::string_view s);
std::string iso8601_utc(double unix_seconds);

// JSON (de)serialization for the record types above.
nlohmann::json to_json(const TopicId&);
nlohmann::json to_json(const ClusterDefinition&);
nlohmann::json to_json(const AdaptedCluster&);
nlohmann::json to_json(const Question&);
nlohmann::json to_json(const ModelId&);
nlohmann::json to_json(const ResponseRef&);
nlohmann::json to_json(const RawResponse&);
nlohmann::json to_json(const ExpertExtraction&);
nlohmann::json to_json(const ChoiceSet&);
nlohmann::json to_json(const EntityRecord&);

TopicId topic_from_json(const nlohmann::json&);
ClusterDefinition cluster_from_json(const nlohmann::json&);
AdaptedCluster adapted_from_json(const nlohmann::json&);
Question question_from_json(const nlohmann::json&);
ModelId model_from_json(const nlohmann::json&);
ResponseRef ref_from_json(const nlohmann::json&);
RawResponse response_from_json(const nlohmann::json&);
ExpertExtraction extraction_from_json(const nlohmann::json&);
ChoiceSet choice_set_from_json(const nlohmann::json&);
EntityRecord entity_from_json(const nlohmann::json&);

}  // namespace choiceeval
