#include "choiceeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "choiceeval/errors.hpp"

namespace choiceeval {

// ---------------------------------------------------------------------------
// Preference summaries
// ---------------------------------------------------------------------------

PreferenceSummary preference_summary(const std::string& model_label, const std::string& topic,
                                     const std::vector<ChoiceSet>& sets,
                                     const FrequencyFilter& filter, int total_questions) {
    if (sets.empty()) throw EmptyCorpus("preference summary over zero choice sets");
    if (total_questions == 0) total_questions = static_cast<int>(sets.size());
    if (total_questions < static_cast<int>(sets.size()))
        throw DomainError("total_questions smaller than the analyzed set count");

    PreferenceSummary s;
    s.model_label = model_label;
    s.topic = topic;
    s.total_questions = total_questions;
    s.analyzed_sets = static_cast<int>(sets.size());

    std::map<std::string, int> contained;
    for (const auto& set : sets) {
        std::set<std::string> in_this_set;
        for (const auto& name : set.ranked) {
            std::string key = canonical_key(name);
            if (!filter.is_retained(key)) continue;
            if (in_this_set.insert(key).second) s.display.emplace(key, name);
        }
        for (const auto& key : in_this_set) contained[key] += 1;
    }

    std::string best;
    int best_count = -1;
    for (const auto& [key, count] : contained) {
        s.inclusion[key] = static_cast<double>(count) / total_questions;
        if (count > best_count) {  // map order makes ties lexicographic
            best = key;
            best_count = count;
        }
    }
    if (!best.empty()) {
        s.preferred_entity = s.display.at(best);
        s.peir = s.inclusion.at(best);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

std::map<std::string, RegionTallyRow> region_counts(
    const std::vector<ChoiceSet>& sets,
    const std::map<std::string, std::string>& cluster_of_question,
    const std::vector<std::string>& cluster_universe, const EntityCatalog& catalog,
    const FrequencyFilter& filter) {
    std::map<std::string, RegionTallyRow> rows;
    for (const auto& cluster : cluster_universe) {
        RegionTallyRow row;
        row.cluster_id = cluster;
        for (Region r : all_regions()) row.counts[r] = 0;
        rows[cluster] = std::move(row);
    }

    for (const auto& set : sets) {
        auto cit = cluster_of_question.find(set.ref.question_id);
        if (cit == cluster_of_question.end())
            throw MissingInput("no cluster recorded for question " + set.ref.question_id);
        auto rit = rows.find(cit->second);
        if (rit == rows.end())
            throw MissingInput("cluster " + cit->second + " is outside the configured set");
        RegionTallyRow& row = rit->second;
        row.sets_seen += 1;

        for (const auto& name : set.ranked) {
            std::string key = canonical_key(name);
            if (!filter.is_retained(key)) {
                row.dropped_slots += 1;
                continue;
            }
            const EntityRecord* rec = catalog.resolve(key);
            if (rec == nullptr) {
                // Retained but uncataloged: visible in the unresolved
                // worklist; it cannot contribute a region.
                row.dropped_slots += 1;
                continue;
            }
            if (!rec->region.has_value()) throw MissingRegion(rec->canonical_name);
            row.counts[*rec->region] += 1;
        }
    }
    return rows;
}

double lor(int count_a, int count_b, double alpha) {
    if (alpha <= 0.0) throw DomainError("log odds smoothing must be positive");
    if (count_a < 0 || count_b < 0) throw DomainError("negative count in log odds ratio");
    return std::log(static_cast<double>(count_a) + alpha) -
           std::log(static_cast<double>(count_b) + alpha);
}

LorResult mean_lor_test(const std::string& model_label, const std::string& topic,
                        Region region_a, Region region_b,
                        const std::map<std::string, RegionTallyRow>& rows,
                        const std::vector<std::string>& cluster_universe, double alpha) {
    LorResult result;
    result.model_label = model_label;
    result.topic = topic;
    result.region_a = region_a;
    result.region_b = region_b;

    std::vector<double> values;
    for (const auto& cluster : cluster_universe) {
        auto it = rows.find(cluster);
        if (it == rows.end())
            throw MissingInput("no region tally for cluster " + cluster);
        LorCell cell;
        cell.cluster_id = cluster;
        cell.count_a = it->second.counts.at(region_a);
        cell.count_b = it->second.counts.at(region_b);
        cell.value = lor(cell.count_a, cell.count_b, alpha);
        values.push_back(cell.value);
        result.cells.push_back(std::move(cell));
    }

    stats::TTestResult t = stats::one_sample_t(values);
    result.mean = t.mean;
    result.t_stat = t.t;
    result.p_value = t.p;
    result.degenerate = t.degenerate;
    return result;
}

// ---------------------------------------------------------------------------
// Stability
// ---------------------------------------------------------------------------

std::map<std::string, double> inclusion_frequencies(const std::vector<ChoiceSet>& sets) {
    std::map<std::string, double> freq;
    if (sets.empty()) return freq;
    std::map<std::string, int> contained;
    for (const auto& set : sets) {
        std::set<std::string> in_this_set;
        for (const auto& name : set.ranked) in_this_set.insert(canonical_key(name));
        for (const auto& key : in_this_set) contained[key] += 1;
    }
    for (const auto& [key, count] : contained)
        freq[key] = static_cast<double>(count) / static_cast<double>(sets.size());
    return freq;
}

StabilityResult repetition_stability(const std::string& model_label, const std::string& topic,
                                     const std::vector<std::map<std::string, double>>& freq_per_rep,
                                     const std::string& kruskal_input) {
    if (freq_per_rep.size() < 2)
        throw TooFewGroups("repetition stability needs at least two repetitions");
    if (kruskal_input != "frequencies" && kruskal_input != "ranks")
        throw ConfigError("kruskal_input", "must be 'frequencies' or 'ranks'");

    StabilityResult result;
    result.model_label = model_label;
    result.topic = topic;
    result.kruskal_input = kruskal_input;

    std::set<std::string> union_keys;
    for (const auto& rep : freq_per_rep)
        for (const auto& [key, _] : rep) union_keys.insert(key);
    if (union_keys.empty()) throw EmptyCorpus("no entities across any repetition");
    result.entities.assign(union_keys.begin(), union_keys.end());

    const std::size_t reps = freq_per_rep.size();
    std::vector<std::vector<double>> vectors(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        vectors[r].reserve(result.entities.size());
        for (const auto& key : result.entities) {
            auto it = freq_per_rep[r].find(key);
            vectors[r].push_back(it == freq_per_rep[r].end() ? 0.0 : it->second);
        }
    }

    result.matrix.assign(reps, std::vector<StabilityCell>(reps));
    for (std::size_t i = 0; i < reps; ++i) {
        result.matrix[i][i] = {1.0, 0.0, false, false};
        for (std::size_t j = 0; j < i; ++j) {
            StabilityCell cell;
            if (result.entities.size() < 3) {
                cell.degenerate = true;
                cell.rho = std::numeric_limits<double>::quiet_NaN();
                cell.p = std::numeric_limits<double>::quiet_NaN();
            } else {
                stats::SpearmanResult s = stats::spearman(vectors[i], vectors[j]);
                cell.rho = s.rho;
                cell.p = s.p;
                cell.degenerate = s.degenerate;
                cell.exact_p = s.exact_p;
            }
            result.matrix[i][j] = cell;
            result.matrix[j][i] = cell;
        }
    }

    std::vector<std::vector<double>> groups;
    if (kruskal_input == "frequencies") {
        groups = vectors;
    } else {
        for (const auto& v : vectors) groups.push_back(stats::average_ranks(v));
    }
    result.kruskal = stats::kruskal_wallis(groups);
    return result;
}

// ---------------------------------------------------------------------------
// Country presence
// ---------------------------------------------------------------------------

CountryPresence country_presence(const std::string& model_label, const std::string& topic,
                                 const std::string& country, const std::vector<ChoiceSet>& sets,
                                 const std::map<std::string, std::string>& cluster_of_question,
                                 const EntityCatalog& catalog) {
    const EntityRecord* target = catalog.find_country(country);
    if (target == nullptr)
        throw UnknownCountry("country not present in the catalog: " + country);

    CountryPresence presence;
    presence.model_label = model_label;
    presence.topic = topic;
    presence.country = target->canonical_name;

    std::map<std::string, double> rank_sum;  // cluster -> sum of positions
    double overall_rank_sum = 0.0;

    for (const auto& set : sets) {
        auto cit = cluster_of_question.find(set.ref.question_id);
        if (cit == cluster_of_question.end())
            throw MissingInput("no cluster recorded for question " + set.ref.question_id);
        PresenceStats& cluster_stats = presence.per_cluster[cit->second];
        cluster_stats.considered += 1;
        presence.overall.considered += 1;

        int position = -1;  // 0-based slot of the monitored country, if any
        for (std::size_t i = 0; i < set.ranked.size(); ++i) {
            const EntityRecord* rec = catalog.resolve(set.ranked[i]);
            if (rec == target) {
                position = static_cast<int>(i);
                break;
            }
        }
        if (position < 0) continue;
        presence.overall.in_top5 += 1;
        cluster_stats.in_top5 += 1;
        if (position == 0) {
            presence.overall.at_rank1 += 1;
            cluster_stats.at_rank1 += 1;
        }
        overall_rank_sum += position + 1;
        rank_sum[cit->second] += position + 1;
    }

    if (presence.overall.in_top5 > 0)
        presence.overall.mean_rank = overall_rank_sum / presence.overall.in_top5;
    for (auto& [cluster, stats] : presence.per_cluster)
        if (stats.in_top5 > 0) stats.mean_rank = rank_sum[cluster] / stats.in_top5;
    return presence;
}

}  // namespace choiceeval
