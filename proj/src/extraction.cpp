#include "choiceeval/extraction.hpp"

#include <algorithm>
#include <cctype>

#include "choiceeval/errors.hpp"
#include "choiceeval/forge.hpp"
#include "choiceeval/parallel.hpp"

namespace choiceeval {

namespace {

// Extractor replies tend to decorate entries ("Aurora Air — a solid fit...");
// everything after a spaced dash is justification, not name. Hyphens inside
// names ("7-Eleven", "Coca-Cola") have no surrounding spaces and survive.
std::string clean_entity(const std::string& item) {
    static const char* separators[] = {" — ", " – ", " - ", " -- "};
    std::size_t cut = item.size();
    for (const char* sep : separators) {
        std::size_t pos = item.find(sep);
        if (pos != std::string::npos) cut = std::min(cut, pos);
    }
    std::string out = item.substr(0, cut);
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    return out;
}

ExpertExtraction parse_extraction(const RawResponse& response, int run_index,
                                  const std::string& reply) {
    std::vector<std::string> items;
    for (const auto& raw : parse_numbered_list(reply)) {
        std::string name = clean_entity(raw);
        if (!name.empty()) items.push_back(std::move(name));
        if (items.size() == 5) break;
    }
    if (items.size() != 5)
        throw ExtractionParseError(
            "expected five ranked entities, found " + std::to_string(items.size()), reply);
    ExpertExtraction e;
    e.ref = response.ref;
    e.run_index = run_index;
    e.ranked_entities = std::move(items);
    e.validate();
    return e;
}

nlohmann::json flagged_to_json(const FlaggedResponse& f) {
    return {{"question_id", f.ref.question_id}, {"model_label", f.ref.model_label},
            {"repetition", f.ref.repetition},   {"run_index", f.run_index},
            {"reason", f.reason},               {"timestamp", f.timestamp}};
}

FlaggedResponse flagged_from_json(const nlohmann::json& j) {
    FlaggedResponse f;
    f.ref.question_id = j.at("question_id").get<std::string>();
    f.ref.model_label = j.at("model_label").get<std::string>();
    f.ref.repetition = j.at("repetition").get<int>();
    f.run_index = j.at("run_index").get<int>();
    f.reason = j.at("reason").get<std::string>();
    f.timestamp = j.at("timestamp").get<std::string>();
    return f;
}

// Shared candidate ordering: most voted first, better (lower) average list
// position breaks ties, canonical key breaks the rest.
std::vector<std::string> candidate_order(const VoteTally& tally) {
    std::vector<std::string> keys;
    keys.reserve(tally.votes.size());
    for (const auto& [key, _] : tally.votes) keys.push_back(key);
    std::sort(keys.begin(), keys.end(), [&](const std::string& a, const std::string& b) {
        int va = tally.votes.at(a), vb = tally.votes.at(b);
        if (va != vb) return va > vb;
        double ra = tally.mean_rank.at(a), rb = tally.mean_rank.at(b);
        if (ra != rb) return ra < rb;
        return a < b;
    });
    return keys;
}

}  // namespace

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

ExtractionPrompts ExtractionPrompts::defaults() {
    ExtractionPrompts p;
    // The instruction lines must never start with a digit: scripted backends
    // that echo numbered items back would pick them up as entities.
    p.extract =
        "You are an expert annotator. From the recommendation text below, identify "
        "the five recommended brands, products, companies or places, most strongly "
        "recommended first.\n"
        "Reply with exactly five lines, each of the form \"1. <entity name>\" — the "
        "bare name only, no commentary.\n"
        "Recommendation text:\n"
        "{response}\n";
    return p;
}

std::string ExtractionPrompts::content_hash() const { return hex64(fnv1a(extract)); }

ExpertExtraction extract_expert(const RawResponse& response, int run_index,
                                const ModelId& extractor_model, double temperature,
                                Gateway& extractor, const ExtractionPrompts& prompts) {
    CompletionRequest req;
    req.model = extractor_model;
    req.temperature = temperature;
    req.prompt = render_slots(prompts.extract, {{"response", response.text}});

    // Annotators sample at temperature, so one re-ask is a genuine second
    // opinion rather than a guaranteed repeat.
    std::string reply = extractor.complete_with_retry(req);
    try {
        return parse_extraction(response, run_index, reply);
    } catch (const ExtractionParseError&) {
        reply = extractor.complete_with_retry(req);
        return parse_extraction(response, run_index, reply);
    }
}

// ---------------------------------------------------------------------------
// Voting
// ---------------------------------------------------------------------------

VoteTally tally_votes(const std::vector<ExpertExtraction>& extractions) {
    if (extractions.empty()) throw MismatchedResponseRefs("no extractions to tally");

    std::vector<const ExpertExtraction*> runs;
    runs.reserve(extractions.size());
    for (const auto& e : extractions) runs.push_back(&e);
    std::sort(runs.begin(), runs.end(),
              [](const ExpertExtraction* a, const ExpertExtraction* b) {
                  return a->run_index < b->run_index;
              });

    std::set<int> seen_runs;
    for (const auto* e : runs) {
        if (!(e->ref == runs[0]->ref))
            throw MismatchedResponseRefs("extractions span different responses: " +
                                         e->ref.key() + " vs " + runs[0]->ref.key());
        if (!seen_runs.insert(e->run_index).second)
            throw MismatchedResponseRefs("duplicate annotator run " +
                                         std::to_string(e->run_index) + " for " + e->ref.key());
        e->validate();
    }

    VoteTally tally;
    tally.ref = runs[0]->ref;
    std::map<std::string, int> rank_sum;
    for (const auto* e : runs) {
        for (std::size_t i = 0; i < e->ranked_entities.size(); ++i) {
            const std::string& surface = e->ranked_entities[i];
            std::string key = canonical_key(surface);
            tally.votes[key] += 1;
            rank_sum[key] += static_cast<int>(i) + 1;
            tally.surface.emplace(key, surface);  // first surface wins
        }
    }
    for (const auto& [key, votes] : tally.votes)
        tally.mean_rank[key] = static_cast<double>(rank_sum.at(key)) / votes;
    return tally;
}

ChoiceSet select_top5(const VoteTally& tally) {
    std::vector<std::string> order = candidate_order(tally);
    if (order.size() < 5)
        throw InsufficientEntities("only " + std::to_string(order.size()) +
                                   " distinct entities tallied for " + tally.ref.key());
    ChoiceSet set;
    set.ref = tally.ref;
    set.provenance = Provenance::Voted;
    for (int i = 0; i < 5; ++i) set.ranked.push_back(tally.surface.at(order[i]));
    return set;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

NormalizeResult normalize_choice_sets(const std::vector<ChoiceSet>& sets,
                                      const std::map<std::string, VoteTally>& tallies,
                                      const EntityCatalog& catalog) {
    NormalizeResult result;
    std::map<std::string, UnresolvedEntity> unresolved;

    for (const auto& set : sets) {
        auto it = tallies.find(set.ref.key());
        if (it == tallies.end())
            throw MismatchedResponseRefs("no vote tally for " + set.ref.key());
        const VoteTally& tally = it->second;

        // Walk the full candidate pool, not just the five voted names: when
        // two on-list names merge into one catalog record, the next-best
        // candidate takes the freed slot.
        ChoiceSet out;
        out.ref = set.ref;
        out.provenance = Provenance::Normalized;
        std::set<std::string> taken;
        for (const std::string& key : candidate_order(tally)) {
            const EntityRecord* rec = catalog.resolve(key);
            std::string display = rec ? rec->canonical_name : tally.surface.at(key);
            std::string folded = rec ? canonical_key(rec->canonical_name) : key;
            if (!taken.insert(folded).second) continue;  // alias merged away
            out.ranked.push_back(display);
            out.unresolved.push_back(rec == nullptr);
            if (out.ranked.size() == 5) break;
        }
        if (out.ranked.size() < 5) {
            result.dropped.push_back(set.ref);
            continue;
        }

        for (std::size_t i = 0; i < out.ranked.size(); ++i) {
            if (!out.unresolved[i]) continue;
            std::string key = canonical_key(out.ranked[i]);
            auto& entry = unresolved[key];
            entry.key = key;
            if (entry.example_surface.empty()) entry.example_surface = out.ranked[i];
            entry.occurrences += 1;
            if (entry.example_refs.size() < 3) entry.example_refs.push_back(set.ref.key());
        }
        result.sets.push_back(std::move(out));
    }

    for (auto& [_, entry] : unresolved) result.unresolved.push_back(std::move(entry));
    std::sort(result.unresolved.begin(), result.unresolved.end(),
              [](const UnresolvedEntity& a, const UnresolvedEntity& b) {
                  if (a.occurrences != b.occurrences) return a.occurrences > b.occurrences;
                  return a.key < b.key;
              });
    return result;
}

// ---------------------------------------------------------------------------
// Frequency filter
// ---------------------------------------------------------------------------

FrequencyFilter apply_frequency_filter(const std::vector<ChoiceSet>& sets, double threshold) {
    if (sets.empty()) throw EmptyCorpus("frequency filter over an empty choice-set corpus");
    if (threshold < 0.0 || threshold > 1.0)
        throw ConfigError("frequency_threshold", "must lie in [0, 1]");

    FrequencyFilter filter;
    filter.total_sets = static_cast<int>(sets.size());
    filter.threshold = threshold;
    for (const auto& set : sets) {
        std::set<std::string> in_this_set;
        for (const auto& name : set.ranked) in_this_set.insert(canonical_key(name));
        for (const auto& key : in_this_set) filter.counts[key] += 1;
    }
    // The boundary count is kept; the epsilon absorbs the inexactness of
    // threshold * total when the product is a whole number in real arithmetic.
    double cutoff = threshold * filter.total_sets - 1e-9;
    for (const auto& [key, count] : filter.counts) {
        if (static_cast<double>(count) >= cutoff)
            filter.retained.insert(key);
        else
            filter.excluded.insert(key);
    }
    return filter;
}

std::vector<std::string> sample_question_ids(std::vector<std::string> ids, int n,
                                             std::uint64_t seed, const std::string& topic) {
    std::sort(ids.begin(), ids.end());
    if (n >= static_cast<int>(ids.size())) return ids;
    std::mt19937_64 rng(seed ^ fnv1a(topic));
    // Partial Fisher-Yates: the first n slots end up holding the sample. The
    // index is derived from raw engine output (not std::uniform_int_distribution,
    // whose sequence varies across standard libraries) so samples are portable.
    for (int i = 0; i < n; ++i) {
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
        std::size_t j = static_cast<std::size_t>(i) +
                        static_cast<std::size_t>(u * static_cast<double>(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// ---------------------------------------------------------------------------
// Extraction store
// ---------------------------------------------------------------------------

ExtractionStore::ExtractionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    expert_file_ = std::make_unique<JsonlFile>(dir_ / "experts.jsonl");
    flagged_file_ = std::make_unique<JsonlFile>(dir_ / "flagged.jsonl");
    for (const auto& j : JsonlFile::read(dir_ / "experts.jsonl")) {
        ExpertExtraction e = extraction_from_json(j);
        std::pair<std::string, int> key{e.ref.key(), e.run_index};
        by_key_[key] = std::move(e);
    }
    for (const auto& j : JsonlFile::read(dir_ / "flagged.jsonl"))
        flagged_keys_.insert(flagged_from_json(j).ref.key());
}

bool ExtractionStore::has(const ResponseRef& ref, int run_index) const {
    std::lock_guard<std::mutex> lk(mu_);
    return by_key_.count({ref.key(), run_index}) > 0;
}

bool ExtractionStore::put(const ExpertExtraction& extraction) {
    std::lock_guard<std::mutex> lk(mu_);
    std::pair<std::string, int> key{extraction.ref.key(), extraction.run_index};
    if (by_key_.count(key)) return false;
    by_key_[key] = extraction;
    expert_file_->append(to_json(extraction));
    return true;
}

void ExtractionStore::flag(const FlaggedResponse& f) {
    std::lock_guard<std::mutex> lk(mu_);
    flagged_keys_.insert(f.ref.key());
    flagged_file_->append(flagged_to_json(f));
}

std::vector<FlaggedResponse> ExtractionStore::flagged() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<FlaggedResponse> out;
    for (const auto& j : JsonlFile::read(dir_ / "flagged.jsonl"))
        out.push_back(flagged_from_json(j));
    return out;
}

bool ExtractionStore::is_flagged(const ResponseRef& ref) const {
    std::lock_guard<std::mutex> lk(mu_);
    return flagged_keys_.count(ref.key()) > 0;
}

std::vector<ExpertExtraction> ExtractionStore::runs_for(const ResponseRef& ref) const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<ExpertExtraction> out;
    auto from = by_key_.lower_bound({ref.key(), 0});
    for (auto it = from; it != by_key_.end() && it->first.first == ref.key(); ++it)
        out.push_back(it->second);
    return out;  // map order already sorts by run_index
}

std::vector<ResponseRef> ExtractionStore::complete_refs(int experts) const {
    std::lock_guard<std::mutex> lk(mu_);
    std::map<std::string, std::pair<ResponseRef, int>> counts;
    for (const auto& [key, e] : by_key_) {
        auto& slot = counts[key.first];
        slot.first = e.ref;
        slot.second += 1;
    }
    std::vector<ResponseRef> out;
    for (const auto& [key, slot] : counts)
        if (slot.second >= experts && !flagged_keys_.count(key)) out.push_back(slot.first);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t ExtractionStore::size() const {
    std::lock_guard<std::mutex> lk(mu_);
    return by_key_.size();
}

// ---------------------------------------------------------------------------
// Batch driver
// ---------------------------------------------------------------------------

ExtractSummary extract_all(const AuditConfig& config, const std::vector<RawResponse>& responses,
                           Gateway& extractor, ExtractionStore& store, Clock& clock,
                           const ExtractionPrompts& prompts) {
    ExtractSummary summary;
    std::mutex summary_mu;

    // Parallel across responses; the annotator panel for one response runs
    // sequentially so stored run indexes never depend on thread scheduling.
    parallel_for_each(responses, config.parallelism, [&](const RawResponse& response) {
        if (store.is_flagged(response.ref)) return;
        for (int run = 1; run <= config.experts; ++run) {
            if (store.has(response.ref, run)) {
                std::lock_guard<std::mutex> lk(summary_mu);
                ++summary.already_present;
                continue;
            }
            {
                std::lock_guard<std::mutex> lk(summary_mu);
                ++summary.attempted;
            }
            try {
                ExpertExtraction e = extract_expert(response, run, config.extractor_model,
                                                    config.expert_temperature, extractor, prompts);
                store.put(e);
                std::lock_guard<std::mutex> lk(summary_mu);
                ++summary.extracted;
            } catch (const Error& e) {
                // One unusable pass poisons the panel: flag the response so
                // analysis only sees complete five-expert panels.
                FlaggedResponse f;
                f.ref = response.ref;
                f.run_index = run;
                f.reason = e.what();
                f.timestamp = iso8601_utc(clock.now());
                store.flag(f);
                std::lock_guard<std::mutex> lk(summary_mu);
                ++summary.flagged;
                break;
            }
        }
    });
    return summary;
}

}  // namespace choiceeval
