#include "choiceeval/core.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

namespace choiceeval {

// ---------------------------------------------------------------------------
// enums
// ---------------------------------------------------------------------------

std::string to_string(TopicKind k) {
    return k == TopicKind::EntityAnchored ? "entity-anchored" : "country-level";
}

TopicKind topic_kind_from_string(const std::string& s) {
    if (s == "entity-anchored") return TopicKind::EntityAnchored;
    if (s == "country-level") return TopicKind::CountryLevel;
    throw ConfigError("topics[].kind", "unknown topic kind '" + s + "'");
}

std::string to_string(Provenance p) {
    return p == Provenance::Voted ? "voted" : "normalized";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "voted") return Provenance::Voted;
    if (s == "normalized") return Provenance::Normalized;
    throw StoreError("unknown provenance '" + s + "'");
}

std::string to_string(Region r) {
    switch (r) {
        case Region::US: return "US";
        case Region::Europe: return "Europe";
        case Region::Asia: return "Asia";
        case Region::Other: return "Other";
    }
    return "Other";
}

Region region_from_string(const std::string& s) {
    if (s == "US") return Region::US;
    if (s == "Europe") return Region::Europe;
    if (s == "Asia") return Region::Asia;
    if (s == "Other") return Region::Other;
    throw ConfigError("region", "unknown region '" + s + "' (expected US, Europe, Asia or Other)");
}

const std::vector<Region>& all_regions() {
    static const std::vector<Region> regions = {Region::US, Region::Europe, Region::Asia,
                                                Region::Other};
    return regions;
}

// ---------------------------------------------------------------------------
// default clusters
// ---------------------------------------------------------------------------

const std::vector<ClusterDefinition>& default_clusters() {
    static const std::vector<ClusterDefinition> clusters = {
        {"performance-quality", "Performance and Quality",
         "Prioritizing high standards and durability in recommendations"},
        {"budget-conscious", "Budget-Conscious",
         "Seeking cost-effective options over premium choices"},
        {"innovation-tech", "Innovation and Technology",
         "Favouring cutting-edge advancements and new releases"},
        {"health-wellness", "Health and Wellness",
         "Focusing on fitness, nutrition, and well-being"},
        {"ethical-environmental", "Ethical and Environmental",
         "Preferring sustainability and social responsibility"},
        {"convenience", "Convenience", "Valuing ease of use, accessibility, and efficiency"},
        {"experience-lifestyle", "Experience and Lifestyle",
         "Valuing experiences, personal interests, and lifestyle alignment"},
        {"novice-expert", "Novice vs. Expert Levels", "Questions from different knowledge levels"},
        {"cultural-social", "Cultural and Social Influences",
         "Exploring regionally or culturally driven preferences"},
    };
    return clusters;
}

// ---------------------------------------------------------------------------
// small utilities
// ---------------------------------------------------------------------------

uint64_t fnv1a(std::string_view data, uint64_t seed) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string to_slug(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool last_dash = true;  // swallow leading separators
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
            last_dash = false;
        } else if (!last_dash) {
            out.push_back('-');
            last_dash = true;
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

std::string iso8601_utc(double unix_seconds) {
    std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[72];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string TopicId::slug() const { return to_slug(name); }

std::string make_question_id(const TopicId& topic, const std::string& cluster_id, int index) {
    char num[8];
    std::snprintf(num, sizeof num, "%02d", index);
    return topic.slug() + "/" + cluster_id + "/" + num;
}

// ---------------------------------------------------------------------------
// canonical_key
// ---------------------------------------------------------------------------

namespace {

bool is_surrounding_punct(char c) {
    switch (c) {
        case '"': case '\'': case '`': case '.': case ',': case ';': case ':':
        case '!': case '?': case '(': case ')': case '[': case ']': case '{':
        case '}': case '*': case '-': case '_': case '<': case '>':
            return true;
        default:
            return false;
    }
}

void trim(std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string::npos) {
        s.clear();
        return;
    }
    std::size_t e = s.find_last_not_of(" \t\r\n\f\v");
    s = s.substr(b, e - b + 1);
}

}  // namespace

std::string canonical_key(std::string_view raw) {
    std::string s(raw);
    // Strip to a fixed point: each pass can expose more trailing material
    // ("Delta (1)." only reveals the parenthetical after the dot goes).
    for (;;) {
        std::string before = s;
        trim(s);
        while (!s.empty() && is_surrounding_punct(s.front())) s.erase(s.begin());
        // On the trailing side a ')' closes a parenthetical qualifier when its
        // '(' sits past position 0 ("Japan Airlines (JAL)"); drop the whole
        // qualifier. A lone or string-opening paren is plain punctuation.
        while (!s.empty()) {
            char c = s.back();
            if (c == ')') {
                std::size_t open = s.rfind('(');
                if (open != std::string::npos && open > 0)
                    s.erase(open);
                else
                    s.pop_back();
            } else if (is_surrounding_punct(c)) {
                s.pop_back();
            } else {
                break;
            }
        }
        if (s == before) break;
    }
    // Collapse inner whitespace, lowercase ASCII.
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// ExpertExtraction
// ---------------------------------------------------------------------------

void ExpertExtraction::validate() const {
    if (ranked_entities.size() != 5) {
        throw ExtractionParseError("expert list must contain exactly 5 entities, got " +
                                       std::to_string(ranked_entities.size()),
                                   "");
    }
    std::set<std::string> seen;
    for (const auto& e : ranked_entities) {
        std::string key = canonical_key(e);
        if (key.empty())
            throw ExtractionParseError("expert list contains a blank entity", "");
        if (!seen.insert(key).second)
            throw ExtractionParseError("expert list contains duplicate entity '" + e + "'", "");
    }
    if (run_index < 1)
        throw ExtractionParseError("run_index must be 1-based", "");
}

// ---------------------------------------------------------------------------
// EntityCatalog
// ---------------------------------------------------------------------------

EntityCatalog EntityCatalog::from_records(std::vector<EntityRecord> records) {
    EntityCatalog cat;
    cat.records_ = std::move(records);
    for (std::size_t i = 0; i < cat.records_.size(); ++i) {
        const EntityRecord& rec = cat.records_[i];
        if (rec.canonical_name.empty())
            throw CatalogConflict("catalog record " + std::to_string(i) + " has no canonical name");
        std::vector<std::string> keys;
        keys.push_back(canonical_key(rec.canonical_name));
        for (const auto& a : rec.aliases) keys.push_back(canonical_key(a));
        for (const auto& key : keys) {
            if (key.empty()) continue;
            auto [it, inserted] = cat.by_key_.emplace(key, i);
            if (!inserted && it->second != i) {
                throw CatalogConflict("alias '" + key + "' claimed by both '" +
                                      cat.records_[it->second].canonical_name + "' and '" +
                                      rec.canonical_name + "'");
            }
        }
    }
    return cat;
}

EntityCatalog EntityCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StoreError("cannot open entity catalog: " + path.string());
    std::vector<EntityRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw StoreError("catalog " + path.string() + ": invalid JSON on line " +
                             std::to_string(lineno));
        records.push_back(entity_from_json(j));
    }
    return from_records(std::move(records));
}

const EntityRecord* EntityCatalog::resolve(std::string_view raw) const {
    auto it = by_key_.find(canonical_key(raw));
    if (it == by_key_.end()) return nullptr;
    return &records_[it->second];
}

const EntityRecord* EntityCatalog::find_country(const std::string& country) const {
    std::string want = canonical_key(country);
    for (const auto& rec : records_) {
        if (rec.country && canonical_key(*rec.country) == want) return &rec;
    }
    // Fall back to name resolution so "United States" works when the record
    // is the country itself.
    return resolve(country);
}

// ---------------------------------------------------------------------------
// AuditConfig
// ---------------------------------------------------------------------------

namespace {

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& key,
                                    const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + key, "missing required field");
    return *it;
}

std::string require_string(const nlohmann::json& j, const std::string& key,
                           const std::string& path) {
    const auto& v = require_field(j, key, path);
    if (!v.is_string()) throw ConfigError(path + key, "expected a string");
    return v.get<std::string>();
}

}  // namespace

void AuditConfig::validate() const {
    if (topics.empty()) throw ConfigError("topics", "at least one topic is required");
    std::set<std::string> topic_names;
    for (std::size_t i = 0; i < topics.size(); ++i) {
        if (topics[i].name.empty())
            throw ConfigError("topics[" + std::to_string(i) + "].name", "must not be empty");
        if (!topic_names.insert(topics[i].name).second)
            throw ConfigError("topics[" + std::to_string(i) + "].name",
                              "duplicate topic '" + topics[i].name + "'");
    }
    if (clusters.empty()) throw ConfigError("clusters", "at least one cluster is required");
    std::set<std::string> cluster_ids;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (clusters[i].id.empty())
            throw ConfigError("clusters[" + std::to_string(i) + "].id", "must not be empty");
        if (!cluster_ids.insert(clusters[i].id).second)
            throw ConfigError("clusters[" + std::to_string(i) + "].id",
                              "duplicate cluster id '" + clusters[i].id + "'");
    }
    if (models.empty()) throw ConfigError("models", "at least one audited model is required");
    std::set<std::string> labels;
    std::set<std::string> keys;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const std::string p = "models[" + std::to_string(i) + "]";
        if (models[i].label.empty()) throw ConfigError(p + ".label", "must not be empty");
        if (!labels.insert(models[i].label).second)
            throw ConfigError(p + ".label", "duplicate label '" + models[i].label + "'");
        if (!keys.insert(models[i].key()).second)
            throw ConfigError(p, "duplicate (provider, model_name) pair '" + models[i].key() + "'");
    }
    for (const ModelId* m : {&generator_model, &extractor_model}) {
        const std::string p = (m == &generator_model) ? "generator_model" : "extractor_model";
        if (m->label.empty() || m->provider.empty() || m->model_name.empty())
            throw ConfigError(p, "provider, model_name and label are all required");
    }
    if (questions_per_cluster < 1)
        throw ConfigError("questions_per_cluster", "must be at least 1");
    if (experts < 1) throw ConfigError("experts", "must be at least 1");
    if (repetitions < 1) throw ConfigError("repetitions", "must be at least 1");
    if (!(expert_temperature > 0.0))
        throw ConfigError("expert_temperature", "must be greater than zero");
    if (frequency_threshold < 0.0 || frequency_threshold > 1.0)
        throw ConfigError("frequency_threshold", "must lie in [0, 1]");
    if (!(lor_alpha > 0.0)) throw ConfigError("lor_alpha", "must be greater than zero");
    if (analysis_repetition < 1 || analysis_repetition > repetitions)
        throw ConfigError("analysis_repetition",
                          "must lie in [1, repetitions=" + std::to_string(repetitions) + "]");
    if (review_sample_per_topic < 0)
        throw ConfigError("review_sample_per_topic", "must not be negative");
    if (kruskal_input != "frequencies" && kruskal_input != "ranks")
        throw ConfigError("kruskal_input", "expected 'frequencies' or 'ranks'");
    if (parallelism < 1) throw ConfigError("parallelism", "must be at least 1");
    for (const auto& m : models) {
        if (!providers.count(m.provider))
            throw ConfigError("providers", "no profile for provider '" + m.provider +
                                               "' (used by model '" + m.label + "')");
    }
    for (const ModelId* m : {&generator_model, &extractor_model}) {
        if (!providers.count(m->provider))
            throw ConfigError("providers", "no profile for provider '" + m->provider + "'");
    }
    for (const auto& [name, prof] : providers) {
        if (!(prof.rate_limit_per_min > 0.0))
            throw ConfigError("providers." + name + ".rate_limit_per_min", "must be positive");
        if (prof.max_retries < 0)
            throw ConfigError("providers." + name + ".max_retries", "must not be negative");
        if (prof.backoff_base_s < 0.0)
            throw ConfigError("providers." + name + ".backoff_base_s", "must not be negative");
    }
}

const ProviderProfile& AuditConfig::profile_for(const ModelId& m) const {
    auto it = providers.find(m.provider);
    if (it == providers.end())
        throw ConfigError("providers", "no profile for provider '" + m.provider + "'");
    return it->second;
}

const TopicId* AuditConfig::find_topic(const std::string& name) const {
    for (const auto& t : topics)
        if (t.name == name) return &t;
    return nullptr;
}

AuditConfig AuditConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("", "config root must be a JSON object");
    AuditConfig c;
    c.seed = j.value("seed", 0ull);

    const auto& topics = require_field(j, "topics", "");
    if (!topics.is_array()) throw ConfigError("topics", "expected an array");
    for (std::size_t i = 0; i < topics.size(); ++i) {
        const std::string p = "topics[" + std::to_string(i) + "].";
        TopicId t;
        t.name = require_string(topics[i], "name", p);
        t.kind = topic_kind_from_string(topics[i].value("kind", std::string("entity-anchored")));
        c.topics.push_back(std::move(t));
    }

    if (!j.contains("clusters") || (j["clusters"].is_string() && j["clusters"] == "default")) {
        c.clusters = default_clusters();
    } else {
        const auto& cl = j["clusters"];
        if (!cl.is_array()) throw ConfigError("clusters", "expected an array or \"default\"");
        for (std::size_t i = 0; i < cl.size(); ++i) {
            const std::string p = "clusters[" + std::to_string(i) + "].";
            ClusterDefinition d;
            d.id = require_string(cl[i], "id", p);
            d.name = require_string(cl[i], "name", p);
            d.definition = require_string(cl[i], "definition", p);
            c.clusters.push_back(std::move(d));
        }
    }

    const auto& models = require_field(j, "models", "");
    if (!models.is_array()) throw ConfigError("models", "expected an array");
    for (std::size_t i = 0; i < models.size(); ++i) {
        c.models.push_back(model_from_json(models[i]));
    }
    c.generator_model = model_from_json(require_field(j, "generator_model", ""));
    c.extractor_model = model_from_json(require_field(j, "extractor_model", ""));

    c.questions_per_cluster = j.value("questions_per_cluster", 23);
    c.experts = j.value("experts", 5);
    c.repetitions = j.value("repetitions", 5);
    c.expert_temperature = j.value("expert_temperature", 0.7);
    c.frequency_threshold = j.value("frequency_threshold", 0.05);
    c.lor_alpha = j.value("lor_alpha", 0.5);
    c.analysis_repetition = j.value("analysis_repetition", 1);
    c.review_sample_per_topic = j.value("review_sample_per_topic", 15);
    c.monitor_country = j.value("monitor_country", std::string("United States"));
    c.pooled_frequency_filter = j.value("pooled_frequency_filter", false);
    c.kruskal_input = j.value("kruskal_input", std::string("frequencies"));
    c.parallelism = j.value("parallelism", 4);

    if (j.contains("region_pairs")) {
        const auto& rp = j["region_pairs"];
        if (!rp.is_array()) throw ConfigError("region_pairs", "expected an array of pairs");
        for (std::size_t i = 0; i < rp.size(); ++i) {
            if (!rp[i].is_array() || rp[i].size() != 2)
                throw ConfigError("region_pairs[" + std::to_string(i) + "]",
                                  "expected [\"A\", \"B\"]");
            c.region_pairs.emplace_back(region_from_string(rp[i][0].get<std::string>()),
                                        region_from_string(rp[i][1].get<std::string>()));
        }
    } else {
        c.region_pairs = {{Region::US, Region::Europe}, {Region::US, Region::Asia}};
    }

    if (j.contains("catalog")) {
        std::filesystem::path p = j["catalog"].get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.catalog_path = p;
    }

    if (j.contains("providers")) {
        const auto& provs = j["providers"];
        if (!provs.is_object()) throw ConfigError("providers", "expected an object");
        for (auto it = provs.begin(); it != provs.end(); ++it) {
            const std::string p = "providers." + it.key() + ".";
            ProviderProfile prof;
            prof.name = it.key();
            prof.base_url = it.value().value("base_url", std::string());
            prof.auth_env_var = it.value().value("auth_env_var", std::string());
            prof.rate_limit_per_min = it.value().value("rate_limit_per_min", 60.0);
            prof.max_retries = it.value().value("max_retries", 3);
            prof.backoff_base_s = it.value().value("backoff_base_s", 1.0);
            prof.timeout_s = it.value().value("timeout_s", 60.0);
            c.providers.emplace(it.key(), std::move(prof));
        }
    }

    c.validate();
    return c;
}

AuditConfig AuditConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("", "config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j, path.parent_path());
}

nlohmann::json AuditConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["topics"] = nlohmann::json::array();
    for (const auto& t : topics) j["topics"].push_back(choiceeval::to_json(t));
    j["clusters"] = nlohmann::json::array();
    for (const auto& c : clusters) j["clusters"].push_back(choiceeval::to_json(c));
    j["models"] = nlohmann::json::array();
    for (const auto& m : models) j["models"].push_back(choiceeval::to_json(m));
    j["generator_model"] = choiceeval::to_json(generator_model);
    j["extractor_model"] = choiceeval::to_json(extractor_model);
    j["questions_per_cluster"] = questions_per_cluster;
    j["experts"] = experts;
    j["repetitions"] = repetitions;
    j["expert_temperature"] = expert_temperature;
    j["frequency_threshold"] = frequency_threshold;
    j["lor_alpha"] = lor_alpha;
    j["analysis_repetition"] = analysis_repetition;
    j["review_sample_per_topic"] = review_sample_per_topic;
    j["monitor_country"] = monitor_country;
    j["pooled_frequency_filter"] = pooled_frequency_filter;
    j["kruskal_input"] = kruskal_input;
    j["parallelism"] = parallelism;
    j["region_pairs"] = nlohmann::json::array();
    for (const auto& [a, b] : region_pairs)
        j["region_pairs"].push_back({to_string(a), to_string(b)});
    if (!catalog_path.empty()) j["catalog"] = catalog_path.string();
    j["providers"] = nlohmann::json::object();
    for (const auto& [name, p] : providers) {
        j["providers"][name] = {{"base_url", p.base_url},
                                {"auth_env_var", p.auth_env_var},
                                {"rate_limit_per_min", p.rate_limit_per_min},
                                {"max_retries", p.max_retries},
                                {"backoff_base_s", p.backoff_base_s},
                                {"timeout_s", p.timeout_s}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// validate_question_set
// ---------------------------------------------------------------------------

ValidationReport validate_question_set(const std::vector<Question>& questions,
                                       const AuditConfig& config) {
    ValidationReport report;
    std::set<std::string> topic_names;
    for (const auto& t : config.topics) topic_names.insert(t.name);
    std::set<std::string> cluster_ids;
    for (const auto& c : config.clusters) cluster_ids.insert(c.id);

    // Expected grid starts at zero everywhere so deficits show up even for
    // cells with no questions at all.
    for (const auto& t : config.topics)
        for (const auto& c : config.clusters) report.counts[t.name][c.id] = 0;

    std::map<std::string, std::string> seen_ids;  // id -> location
    std::map<std::string, std::string> seen_texts; // (topic|cluster|text) -> id
    for (const auto& q : questions) {
        const std::string loc = q.topic + "/" + q.cluster;
        if (!topic_names.count(q.topic)) {
            report.issues.push_back({"unknown-topic", loc, "question " + q.id});
            continue;
        }
        if (!cluster_ids.count(q.cluster)) {
            report.issues.push_back({"unknown-cluster", loc, "question " + q.id});
            continue;
        }
        auto [it, inserted] = seen_ids.emplace(q.id, loc);
        if (!inserted) {
            report.issues.push_back(
                {"duplicate-id", loc, "id " + q.id + " first seen at " + it->second});
            continue;
        }
        std::string text_key = q.topic + "|" + q.cluster + "|" + q.text;
        auto [tit, tinserted] = seen_texts.emplace(text_key, q.id);
        if (!tinserted) {
            report.issues.push_back(
                {"duplicate-text", loc, "text of " + q.id + " repeats " + tit->second});
        }
        report.counts[q.topic][q.cluster] += 1;
    }

    for (const auto& t : config.topics) {
        for (const auto& c : config.clusters) {
            int n = report.counts[t.name][c.id];
            const std::string loc = t.name + "/" + c.id;
            if (n < config.questions_per_cluster) {
                report.issues.push_back({"missing", loc,
                                         std::to_string(config.questions_per_cluster - n) +
                                             " question(s) short of " +
                                             std::to_string(config.questions_per_cluster)});
            } else if (n > config.questions_per_cluster) {
                report.issues.push_back({"extra", loc,
                                         std::to_string(n - config.questions_per_cluster) +
                                             " question(s) beyond " +
                                             std::to_string(config.questions_per_cluster)});
            }
        }
    }

    report.passed = report.issues.empty();
    return report;
}

std::string ValidationReport::summary() const {
    std::ostringstream out;
    out << (passed ? "PASS" : "FAIL");
    int total = 0;
    for (const auto& [topic, per_cluster] : counts)
        for (const auto& [cluster, n] : per_cluster) total += n;
    out << ": " << total << " question(s) across " << counts.size() << " topic(s)";
    if (!issues.empty()) {
        out << ", " << issues.size() << " issue(s)";
        for (const auto& i : issues) out << "\n  [" << i.kind << "] " << i.location << ": " << i.detail;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// JSON (de)serialization
// ---------------------------------------------------------------------------

nlohmann::json to_json(const TopicId& t) {
    return {{"name", t.name}, {"kind", to_string(t.kind)}};
}

TopicId topic_from_json(const nlohmann::json& j) {
    TopicId t;
    t.name = require_string(j, "name", "topic.");
    t.kind = topic_kind_from_string(j.value("kind", std::string("entity-anchored")));
    return t;
}

nlohmann::json to_json(const ClusterDefinition& c) {
    return {{"id", c.id}, {"name", c.name}, {"definition", c.definition}};
}

ClusterDefinition cluster_from_json(const nlohmann::json& j) {
    return {require_string(j, "id", "cluster."), require_string(j, "name", "cluster."),
            require_string(j, "definition", "cluster.")};
}

nlohmann::json to_json(const AdaptedCluster& a) {
    return {{"topic", a.topic},
            {"cluster_id", a.cluster_id},
            {"name", a.name},
            {"description", a.description}};
}

AdaptedCluster adapted_from_json(const nlohmann::json& j) {
    AdaptedCluster a;
    a.topic = require_string(j, "topic", "adapted.");
    a.cluster_id = require_string(j, "cluster_id", "adapted.");
    a.name = require_string(j, "name", "adapted.");
    a.description = require_string(j, "description", "adapted.");
    return a;
}

nlohmann::json to_json(const Question& q) {
    return {{"id", q.id}, {"topic", q.topic}, {"cluster", q.cluster}, {"text", q.text}};
}

Question question_from_json(const nlohmann::json& j) {
    Question q;
    q.id = require_string(j, "id", "question.");
    q.topic = require_string(j, "topic", "question.");
    q.cluster = require_string(j, "cluster", "question.");
    q.text = require_string(j, "text", "question.");
    return q;
}

nlohmann::json to_json(const ModelId& m) {
    return {{"provider", m.provider}, {"model_name", m.model_name}, {"label", m.label}};
}

ModelId model_from_json(const nlohmann::json& j) {
    ModelId m;
    m.provider = require_string(j, "provider", "model.");
    m.model_name = require_string(j, "model_name", "model.");
    m.label = require_string(j, "label", "model.");
    return m;
}

nlohmann::json to_json(const ResponseRef& r) {
    return {{"question_id", r.question_id},
            {"model_label", r.model_label},
            {"repetition", r.repetition}};
}

ResponseRef ref_from_json(const nlohmann::json& j) {
    ResponseRef r;
    r.question_id = require_string(j, "question_id", "ref.");
    r.model_label = require_string(j, "model_label", "ref.");
    r.repetition = j.value("repetition", 1);
    return r;
}

nlohmann::json to_json(const RawResponse& r) {
    nlohmann::json j = to_json(r.ref);
    j["text"] = r.text;
    j["timestamp"] = r.timestamp;
    j["request_metadata"] = r.request_metadata;
    return j;
}

RawResponse response_from_json(const nlohmann::json& j) {
    RawResponse r;
    r.ref = ref_from_json(j);
    r.text = require_string(j, "text", "response.");
    r.timestamp = j.value("timestamp", std::string());
    if (j.contains("request_metadata"))
        r.request_metadata = j["request_metadata"].get<std::map<std::string, std::string>>();
    return r;
}

nlohmann::json to_json(const ExpertExtraction& e) {
    nlohmann::json j = to_json(e.ref);
    j["run_index"] = e.run_index;
    j["ranked_entities"] = e.ranked_entities;
    return j;
}

ExpertExtraction extraction_from_json(const nlohmann::json& j) {
    ExpertExtraction e;
    e.ref = ref_from_json(j);
    e.run_index = j.value("run_index", 1);
    e.ranked_entities = j.at("ranked_entities").get<std::vector<std::string>>();
    return e;
}

nlohmann::json to_json(const ChoiceSet& c) {
    nlohmann::json j = to_json(c.ref);
    j["ranked"] = c.ranked;
    j["provenance"] = to_string(c.provenance);
    if (!c.unresolved.empty()) {
        std::vector<bool> flags(c.unresolved.begin(), c.unresolved.end());
        j["unresolved"] = flags;
    }
    return j;
}

ChoiceSet choice_set_from_json(const nlohmann::json& j) {
    ChoiceSet c;
    c.ref = ref_from_json(j);
    c.ranked = j.at("ranked").get<std::vector<std::string>>();
    c.provenance = provenance_from_string(j.value("provenance", std::string("voted")));
    if (j.contains("unresolved")) c.unresolved = j["unresolved"].get<std::vector<bool>>();
    return c;
}

nlohmann::json to_json(const EntityRecord& e) {
    nlohmann::json j;
    j["canonical_name"] = e.canonical_name;
    j["aliases"] = e.aliases;
    j["region"] = e.region ? nlohmann::json(to_string(*e.region)) : nlohmann::json(nullptr);
    j["country"] = e.country ? nlohmann::json(*e.country) : nlohmann::json(nullptr);
    return j;
}

EntityRecord entity_from_json(const nlohmann::json& j) {
    EntityRecord e;
    e.canonical_name = require_string(j, "canonical_name", "entity.");
    if (j.contains("aliases")) e.aliases = j["aliases"].get<std::vector<std::string>>();
    if (j.contains("region") && !j["region"].is_null())
        e.region = region_from_string(j["region"].get<std::string>());
    if (j.contains("country") && !j["country"].is_null())
        e.country = j["country"].get<std::string>();
    return e;
}

}  // namespace choiceeval
