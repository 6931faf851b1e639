#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "choiceeval/core.hpp"
#include "choiceeval/extraction.hpp"
#include "choiceeval/stats.hpp"

namespace choiceeval {

// ---------------------------------------------------------------------------
// Preference summaries
// ---------------------------------------------------------------------------

struct PreferenceSummary {
    std::string model_label;
    std::string topic;
    // Display name of the most-included retained entity; empty when nothing
    // was retained (rendered as a missing cell).
    std::string preferred_entity;
    // Share of all asked questions whose choice set contains the preferred
    // entity. Unanalyzable responses count against it: a model that refuses
    // half a topic cannot score a high rate on the other half.
    double peir = 0.0;
    std::map<std::string, double> inclusion;    // canonical key -> share
    std::map<std::string, std::string> display; // canonical key -> display name
    int total_questions = 0;   // denominator behind the shares
    int analyzed_sets = 0;     // choice sets that contributed
};

// total_questions == 0 means "use the set count" (no protocol losses).
PreferenceSummary preference_summary(const std::string& model_label, const std::string& topic,
                                     const std::vector<ChoiceSet>& sets,
                                     const FrequencyFilter& filter, int total_questions = 0);

// ---------------------------------------------------------------------------
// Regional composition per cluster
// ---------------------------------------------------------------------------

struct RegionTallyRow {
    std::string cluster_id;
    std::map<Region, int> counts;  // every region key always present
    // Slots whose entity was excluded by the frequency filter or could not be
    // resolved to a catalog record. counts + dropped always add to 5 * sets.
    int dropped_slots = 0;
    int sets_seen = 0;
};

// Tallies catalog regions over every retained slot, one row per cluster in
// `cluster_universe` (rows with no data stay all-zero). A resolved, retained
// entity without a region assignment raises MissingRegion: silently guessing
// a region would bias every downstream comparison.
std::map<std::string, RegionTallyRow> region_counts(
    const std::vector<ChoiceSet>& sets,
    const std::map<std::string, std::string>& cluster_of_question,
    const std::vector<std::string>& cluster_universe, const EntityCatalog& catalog,
    const FrequencyFilter& filter);

// ---------------------------------------------------------------------------
// Smoothed log odds ratio between two region counts
// ---------------------------------------------------------------------------

// ln((count_a + alpha) / (count_b + alpha)), computed as a difference of logs
// so lor(a, b) == -lor(b, a) exactly and lor(n, n) == 0 exactly.
double lor(int count_a, int count_b, double alpha);

struct LorCell {
    std::string cluster_id;
    int count_a = 0;
    int count_b = 0;
    double value = 0.0;
};

struct LorResult {
    std::string model_label;
    std::string topic;
    Region region_a;
    Region region_b;
    std::vector<LorCell> cells;  // one per cluster, universe order
    double mean = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    bool degenerate = false;  // zero variance across clusters
};

// One-sample t-test of the per-cluster log odds ratios against zero: does
// this model lean toward region A over region B consistently across buyer
// mindsets on this topic?
LorResult mean_lor_test(const std::string& model_label, const std::string& topic,
                        Region region_a, Region region_b,
                        const std::map<std::string, RegionTallyRow>& rows,
                        const std::vector<std::string>& cluster_universe, double alpha);

// ---------------------------------------------------------------------------
// Repetition stability
// ---------------------------------------------------------------------------

// Containment share per canonical key over a corpus of choice sets.
std::map<std::string, double> inclusion_frequencies(const std::vector<ChoiceSet>& sets);

struct StabilityCell {
    double rho = 1.0;
    double p = 0.0;
    bool degenerate = false;  // constant input or too few entities
    bool exact_p = false;     // permutation p-value (small panels)
};

struct StabilityResult {
    std::string model_label;
    std::string topic;
    std::vector<std::string> entities;  // union of keys, sorted
    // matrix[i][j] for repetitions i, j (0-based); diagonal is (1, 0).
    std::vector<std::vector<StabilityCell>> matrix;
    stats::KruskalResult kruskal;
    std::string kruskal_input;  // "frequencies" or "ranks"
};

// Rank agreement between every pair of repetitions: Spearman correlation of
// the entity-frequency vectors (absent entities count as zero), plus one
// Kruskal-Wallis test across all repetitions. kruskal_input "ranks" converts
// each repetition's frequencies to within-repetition average ranks first.
StabilityResult repetition_stability(const std::string& model_label, const std::string& topic,
                                     const std::vector<std::map<std::string, double>>& freq_per_rep,
                                     const std::string& kruskal_input);

// ---------------------------------------------------------------------------
// Country presence monitoring (for country-level topics)
// ---------------------------------------------------------------------------

struct PresenceStats {
    int considered = 0;  // choice sets examined
    int in_top5 = 0;     // sets containing the monitored country
    int at_rank1 = 0;    // sets ranking it first
    double mean_rank = 0.0;  // average 1-based position when present
};

struct CountryPresence {
    std::string model_label;
    std::string topic;
    std::string country;
    PresenceStats overall;
    std::map<std::string, PresenceStats> per_cluster;
};

// How prominently one country shows up in the ranked lists, overall and per
// cluster. The country must exist in the catalog (UnknownCountry otherwise);
// alias surfaces fold onto it before matching.
CountryPresence country_presence(const std::string& model_label, const std::string& topic,
                                 const std::string& country, const std::vector<ChoiceSet>& sets,
                                 const std::map<std::string, std::string>& cluster_of_question,
                                 const EntityCatalog& catalog);

}  // namespace choiceeval
