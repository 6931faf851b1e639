#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "choiceeval/metrics.hpp"

using namespace choiceeval;
using namespace choiceeval::stats;

namespace {

ChoiceSet make_set(const std::string& question_id, std::vector<std::string> names,
                   const std::string& model = "mock-gpt", int rep = 1) {
    ChoiceSet s;
    s.ref = {question_id, model, rep};
    s.provenance = Provenance::Normalized;
    s.ranked = std::move(names);
    s.unresolved.assign(s.ranked.size(), false);
    return s;
}

FrequencyFilter keep_all(const std::vector<ChoiceSet>& sets) {
    return apply_frequency_filter(sets, 0.0);
}

EntityCatalog region_catalog() {
    return EntityCatalog::from_records({
        {"Aurora Air", {"Aurora"}, Region::US, std::nullopt},
        {"Borealis Airways", {"Borealis"}, Region::Europe, std::nullopt},
        {"Cirrus Jet", {}, Region::Asia, std::nullopt},
        {"Dune Hopper", {}, Region::Other, std::nullopt},
        {"Eastwind", {}, Region::US, std::nullopt},
        {"Regionless Air", {}, std::nullopt, std::nullopt},
        {"United States", {"US", "USA"}, Region::US, "United States"},
        {"France", {}, Region::Europe, "France"},
        {"Japan", {}, Region::Asia, "Japan"},
        {"Morocco", {}, Region::Other, "Morocco"},
        {"Italy", {}, Region::Europe, "Italy"},
    });
}

const std::vector<std::string> kFive{"Aurora Air", "Borealis Airways", "Cirrus Jet",
                                     "Dune Hopper", "Eastwind"};

}  // namespace

// ---------------------------------------------------------------------------
// Preference summaries
// ---------------------------------------------------------------------------

TEST_CASE("preference summary finds the most included entity and its rate") {
    std::vector<ChoiceSet> sets;
    for (int i = 0; i < 10; ++i) {
        std::vector<std::string> names = kFive;
        if (i >= 6) names[0] = "Fjord Air";  // Aurora in 6 of 10
        sets.push_back(make_set("airlines/budget-conscious/" + std::to_string(i), names));
    }
    auto s = preference_summary("mock-gpt", "Airlines", sets, keep_all(sets));
    CHECK(s.model_label == "mock-gpt");
    CHECK(s.topic == "Airlines");
    // Borealis/Cirrus/Dune/Eastwind are in all ten; lexicographic tie-break
    // on the canonical key picks Borealis.
    CHECK(s.preferred_entity == "Borealis Airways");
    CHECK(s.peir == doctest::Approx(1.0));
    CHECK(s.inclusion.at("aurora air") == doctest::Approx(0.6));
    CHECK(s.analyzed_sets == 10);
    CHECK(s.total_questions == 10);
}

TEST_CASE("preference denominator counts unanalyzable questions") {
    std::vector<ChoiceSet> sets;
    for (int i = 0; i < 8; ++i)
        sets.push_back(make_set("airlines/budget-conscious/" + std::to_string(i), kFive));
    // Twelve questions were asked; four produced nothing usable.
    auto s = preference_summary("mock-gpt", "Airlines", sets, keep_all(sets), 12);
    CHECK(s.total_questions == 12);
    CHECK(s.analyzed_sets == 8);
    CHECK(s.peir == doctest::Approx(8.0 / 12.0));
    CHECK_THROWS_AS(preference_summary("mock-gpt", "Airlines", sets, keep_all(sets), 7),
                    DomainError);
}

TEST_CASE("preference summary ignores filtered-out entities") {
    std::vector<ChoiceSet> sets;
    for (int i = 0; i < 20; ++i) {
        std::vector<std::string> names = kFive;
        if (i == 0) names[4] = "Rare Bird";  // appears once: under any real threshold
        sets.push_back(make_set("airlines/budget-conscious/" + std::to_string(i), names));
    }
    auto filter = apply_frequency_filter(sets, 0.10);
    auto s = preference_summary("mock-gpt", "Airlines", sets, filter);
    CHECK(s.inclusion.count("rare bird") == 0);
    CHECK(s.preferred_entity == "Aurora Air");
}

TEST_CASE("preference summary over an empty corpus refuses") {
    FrequencyFilter empty;
    CHECK_THROWS_AS(preference_summary("m", "t", {}, empty), EmptyCorpus);
}

// ---------------------------------------------------------------------------
// Region counts
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> cluster_map(const std::vector<ChoiceSet>& sets,
                                               const std::string& cluster) {
    std::map<std::string, std::string> m;
    for (const auto& s : sets) m[s.ref.question_id] = cluster;
    return m;
}

}  // namespace

TEST_CASE("region counts tally retained slots by catalog region") {
    std::vector<ChoiceSet> sets{
        make_set("airlines/budget-conscious/01", kFive),
        make_set("airlines/budget-conscious/02", kFive),
    };
    auto rows = region_counts(sets, cluster_map(sets, "budget-conscious"), {"budget-conscious"},
                              region_catalog(), keep_all(sets));
    REQUIRE(rows.count("budget-conscious") == 1);
    const auto& row = rows.at("budget-conscious");
    CHECK(row.sets_seen == 2);
    CHECK(row.counts.at(Region::US) == 4);      // Aurora + Eastwind, twice
    CHECK(row.counts.at(Region::Europe) == 2);  // Borealis twice
    CHECK(row.counts.at(Region::Asia) == 2);
    CHECK(row.counts.at(Region::Other) == 2);
    CHECK(row.dropped_slots == 0);
}

TEST_CASE("filtered and uncataloged slots are dropped but conserved") {
    std::vector<ChoiceSet> sets{
        make_set("airlines/budget-conscious/01",
                 {"Aurora Air", "Zephyr Air", "Cirrus Jet", "Dune Hopper", "Eastwind"}),
        make_set("airlines/budget-conscious/02", kFive),
    };
    // Borealis appears once in two sets; threshold 0.9 excludes it and Zephyr.
    auto filter = apply_frequency_filter(sets, 0.9);
    auto rows = region_counts(sets, cluster_map(sets, "budget-conscious"), {"budget-conscious"},
                              region_catalog(), filter);
    const auto& row = rows.at("budget-conscious");
    int counted = 0;
    for (const auto& [_, c] : row.counts) counted += c;
    CHECK(counted + row.dropped_slots == 5 * row.sets_seen);
    CHECK(row.dropped_slots == 2);  // Zephyr (uncataloged+rare) and Borealis (rare)
}

TEST_CASE("an uncataloged retained slot is dropped, not guessed") {
    std::vector<ChoiceSet> sets{
        make_set("airlines/budget-conscious/01",
                 {"Aurora Air", "Zephyr Air", "Cirrus Jet", "Dune Hopper", "Eastwind"}),
    };
    auto rows = region_counts(sets, cluster_map(sets, "budget-conscious"), {"budget-conscious"},
                              region_catalog(), keep_all(sets));
    CHECK(rows.at("budget-conscious").dropped_slots == 1);
}

TEST_CASE("a retained catalog record without a region is an error") {
    std::vector<ChoiceSet> sets{
        make_set("airlines/budget-conscious/01",
                 {"Aurora Air", "Regionless Air", "Cirrus Jet", "Dune Hopper", "Eastwind"}),
    };
    try {
        region_counts(sets, cluster_map(sets, "budget-conscious"), {"budget-conscious"},
                      region_catalog(), keep_all(sets));
        FAIL("expected MissingRegion");
    } catch (const MissingRegion& e) {
        CHECK(e.entity == "Regionless Air");
    }
}

TEST_CASE("clusters with no sets keep explicit zero rows") {
    std::vector<ChoiceSet> sets{make_set("airlines/budget-conscious/01", kFive)};
    auto rows = region_counts(sets, cluster_map(sets, "budget-conscious"),
                              {"budget-conscious", "convenience"}, region_catalog(),
                              keep_all(sets));
    REQUIRE(rows.count("convenience") == 1);
    CHECK(rows.at("convenience").sets_seen == 0);
    CHECK(rows.at("convenience").counts.at(Region::US) == 0);
}

TEST_CASE("unknown cluster or missing question mapping is an input error") {
    std::vector<ChoiceSet> sets{make_set("airlines/budget-conscious/01", kFive)};
    CHECK_THROWS_AS(region_counts(sets, {}, {"budget-conscious"}, region_catalog(),
                                  keep_all(sets)),
                    MissingInput);
    CHECK_THROWS_AS(region_counts(sets, cluster_map(sets, "budget-conscious"), {"convenience"},
                                  region_catalog(), keep_all(sets)),
                    MissingInput);
}

// ---------------------------------------------------------------------------
// Log odds ratios
// ---------------------------------------------------------------------------

TEST_CASE("lor matches the smoothed closed form") {
    CHECK(lor(10, 0, 0.5) == doctest::Approx(std::log(21.0)).epsilon(1e-14));
    CHECK(lor(3, 7, 0.5) == doctest::Approx(std::log(3.5 / 7.5)).epsilon(1e-14));
}

TEST_CASE("lor is exactly antisymmetric and exactly zero on equal counts") {
    for (int a = 0; a <= 20; ++a)
        for (int b = 0; b <= 20; ++b) {
            CHECK(lor(a, b, 0.5) == -lor(b, a, 0.5));  // bitwise, no tolerance
            if (a == b) CHECK(lor(a, b, 0.5) == 0.0);
        }
}

TEST_CASE("lor rejects bad smoothing and negative counts") {
    CHECK_THROWS_AS(lor(1, 1, 0.0), DomainError);
    CHECK_THROWS_AS(lor(-1, 1, 0.5), DomainError);
}

TEST_CASE("mean_lor_test aggregates per-cluster cells through a t-test") {
    std::map<std::string, RegionTallyRow> rows;
    std::vector<std::string> universe{"c1", "c2", "c3"};
    std::vector<std::pair<int, int>> counts{{10, 2}, {8, 3}, {12, 1}};
    for (std::size_t i = 0; i < universe.size(); ++i) {
        RegionTallyRow row;
        row.cluster_id = universe[i];
        for (Region r : all_regions()) row.counts[r] = 0;
        row.counts[Region::US] = counts[i].first;
        row.counts[Region::Europe] = counts[i].second;
        rows[universe[i]] = row;
    }
    auto result = mean_lor_test("mock-gpt", "Airlines", Region::US, Region::Europe, rows,
                                universe, 0.5);
    REQUIRE(result.cells.size() == 3);
    CHECK(result.cells[0].cluster_id == "c1");
    CHECK(result.cells[0].count_a == 10);
    CHECK(result.cells[0].count_b == 2);
    CHECK(result.cells[0].value == doctest::Approx(std::log(10.5 / 2.5)).epsilon(1e-14));

    std::vector<double> expect{std::log(10.5 / 2.5), std::log(8.5 / 3.5), std::log(12.5 / 1.5)};
    auto manual = one_sample_t(expect);
    CHECK(result.mean == doctest::Approx(manual.mean).epsilon(1e-14));
    CHECK(result.t_stat == doctest::Approx(manual.t).epsilon(1e-12));
    CHECK(result.p_value == doctest::Approx(manual.p).epsilon(1e-12));
    CHECK_FALSE(result.degenerate);
    CHECK(result.mean > 0.0);  // leans toward US

    auto mirrored = mean_lor_test("mock-gpt", "Airlines", Region::Europe, Region::US, rows,
                                  universe, 0.5);
    CHECK(mirrored.mean == doctest::Approx(-result.mean).epsilon(1e-14));
}

TEST_CASE("identical counts across clusters give the degenerate zero case") {
    std::map<std::string, RegionTallyRow> rows;
    std::vector<std::string> universe{"c1", "c2"};
    for (const auto& c : universe) {
        RegionTallyRow row;
        row.cluster_id = c;
        for (Region r : all_regions()) row.counts[r] = 4;
        rows[c] = row;
    }
    auto result = mean_lor_test("m", "t", Region::US, Region::Asia, rows, universe, 0.5);
    CHECK(result.mean == 0.0);
    CHECK(result.p_value == 1.0);
    CHECK(result.degenerate);
}

// ---------------------------------------------------------------------------
// Stability
// ---------------------------------------------------------------------------

TEST_CASE("inclusion frequencies count containment per set") {
    std::vector<ChoiceSet> sets{
        make_set("airlines/budget-conscious/01", kFive),
        make_set("airlines/budget-conscious/02",
                 {"Aurora Air", "aurora air", "Cirrus Jet", "Dune Hopper", "Fjord Air"}),
    };
    auto freq = inclusion_frequencies(sets);
    CHECK(freq.at("aurora air") == doctest::Approx(1.0));  // duplicate folded
    CHECK(freq.at("borealis airways") == doctest::Approx(0.5));
    CHECK(freq.at("fjord air") == doctest::Approx(0.5));
    CHECK(inclusion_frequencies({}).empty());
}

TEST_CASE("perfectly agreeing repetitions give rho 1 and a calm kruskal") {
    std::map<std::string, double> rep{{"a", 0.9}, {"b", 0.7}, {"c", 0.5}, {"d", 0.3}, {"e", 0.1}};
    auto result = repetition_stability("mock-gpt", "Airlines", {rep, rep, rep}, "frequencies");
    REQUIRE(result.matrix.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(result.matrix[i][j].rho == doctest::Approx(1.0));
            if (i != j) {
                CHECK(result.matrix[i][j].exact_p);
                // Identity and full reversal both reach |rho| = 1: p = 2/5!.
                CHECK(result.matrix[i][j].p == doctest::Approx(2.0 / 120.0));
            }
        }
    CHECK(result.kruskal.h == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(result.kruskal.p == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(result.entities == std::vector<std::string>{"a", "b", "c", "d", "e"});
}

TEST_CASE("stability matrix is symmetric with a unit diagonal") {
    std::map<std::string, double> r1{{"a", 0.9}, {"b", 0.7}, {"c", 0.5}, {"d", 0.3}, {"e", 0.1}};
    std::map<std::string, double> r2{{"a", 0.9}, {"b", 0.5}, {"c", 0.7}, {"d", 0.1}, {"e", 0.3}};
    std::map<std::string, double> r3{{"a", 0.7}, {"b", 0.9}, {"c", 0.3}, {"d", 0.5}, {"e", 0.2}};
    auto result = repetition_stability("m", "t", {r1, r2, r3}, "frequencies");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(result.matrix[i][i].rho == 1.0);
        CHECK(result.matrix[i][i].p == 0.0);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(result.matrix[i][j].rho == result.matrix[j][i].rho);
            CHECK(result.matrix[i][j].p == result.matrix[j][i].p);
        }
    }
    // Spot-check one off-diagonal cell against the statistic itself.
    std::vector<double> v1{0.9, 0.7, 0.5, 0.3, 0.1}, v2{0.9, 0.5, 0.7, 0.1, 0.3};
    auto direct = spearman(v1, v2);
    CHECK(result.matrix[1][0].rho == doctest::Approx(direct.rho).epsilon(1e-14));
    CHECK(result.matrix[1][0].p == doctest::Approx(direct.p).epsilon(1e-14));
}

TEST_CASE("an entity absent from one repetition counts as zero frequency") {
    std::map<std::string, double> r1{{"a", 0.8}, {"b", 0.6}, {"c", 0.4}};
    std::map<std::string, double> r2{{"a", 0.8}, {"b", 0.6}};  // c missing
    auto result = repetition_stability("m", "t", {r1, r2}, "frequencies");
    REQUIRE(result.entities.size() == 3);
    // Vectors align on the union, so the pair is still perfectly concordant.
    CHECK(result.matrix[1][0].rho == doctest::Approx(1.0));
}

TEST_CASE("constant frequency vectors mark the cell degenerate") {
    std::map<std::string, double> flat{{"a", 0.5}, {"b", 0.5}, {"c", 0.5}};
    std::map<std::string, double> varied{{"a", 0.9}, {"b", 0.5}, {"c", 0.1}};
    auto result = repetition_stability("m", "t", {flat, varied}, "frequencies");
    CHECK(result.matrix[1][0].degenerate);
    CHECK(std::isnan(result.matrix[1][0].rho));
    CHECK(result.kruskal.all_identical == false);
}

TEST_CASE("kruskal over ranks uses within-repetition average ranks") {
    std::map<std::string, double> r1{{"a", 0.9}, {"b", 0.7}, {"c", 0.5}, {"d", 0.3}};
    std::map<std::string, double> r2{{"a", 0.8}, {"b", 0.6}, {"c", 0.4}, {"d", 0.2}};
    auto by_rank = repetition_stability("m", "t", {r1, r2}, "ranks");
    // Same ordering in both repetitions: the rank vectors are identical, so
    // the groups are indistinguishable (H collapses to zero).
    CHECK(by_rank.kruskal.h == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(by_rank.kruskal.p == doctest::Approx(1.0));
    auto by_freq = repetition_stability("m", "t", {r1, r2}, "frequencies");
    CHECK(by_freq.kruskal.h > 0.0);
    CHECK(by_rank.kruskal_input == "ranks");
}

TEST_CASE("stability rejects bad inputs") {
    std::map<std::string, double> rep{{"a", 0.5}};
    CHECK_THROWS_AS(repetition_stability("m", "t", {rep}, "frequencies"), TooFewGroups);
    CHECK_THROWS_AS(repetition_stability("m", "t", {rep, rep}, "medians"), ConfigError);
    CHECK_THROWS_AS(repetition_stability("m", "t", {{}, {}}, "frequencies"), EmptyCorpus);
}

// ---------------------------------------------------------------------------
// Country presence
// ---------------------------------------------------------------------------

TEST_CASE("country presence tracks inclusion, top rank and mean position") {
    std::vector<ChoiceSet> sets{
        make_set("travel-destinations/budget-conscious/01",
                 {"United States", "France", "Japan", "Morocco", "Italy"}),
        make_set("travel-destinations/budget-conscious/02",
                 {"France", "USA", "Japan", "Morocco", "Italy"}),
        make_set("travel-destinations/convenience/01",
                 {"France", "Japan", "Morocco", "Italy", "US"}),
        make_set("travel-destinations/convenience/02",
                 {"France", "Japan", "Morocco", "Italy", "Regionless Air"}),
    };
    std::map<std::string, std::string> clusters{
        {"travel-destinations/budget-conscious/01", "budget-conscious"},
        {"travel-destinations/budget-conscious/02", "budget-conscious"},
        {"travel-destinations/convenience/01", "convenience"},
        {"travel-destinations/convenience/02", "convenience"},
    };
    auto p = country_presence("mock-gpt", "Travel Destinations", "United States", sets, clusters,
                              region_catalog());
    CHECK(p.country == "United States");
    CHECK(p.overall.considered == 4);
    CHECK(p.overall.in_top5 == 3);  // aliases US/USA fold onto the record
    CHECK(p.overall.at_rank1 == 1);
    CHECK(p.overall.mean_rank == doctest::Approx((1 + 2 + 5) / 3.0));
    CHECK(p.per_cluster.at("budget-conscious").in_top5 == 2);
    CHECK(p.per_cluster.at("budget-conscious").at_rank1 == 1);
    CHECK(p.per_cluster.at("convenience").in_top5 == 1);
    CHECK(p.per_cluster.at("convenience").mean_rank == doctest::Approx(5.0));
}

TEST_CASE("country presence can target the catalog's country field") {
    // find_country matches the country attribute, not only the name.
    std::vector<ChoiceSet> sets{
        make_set("travel-destinations/budget-conscious/01",
                 {"France", "Japan", "Morocco", "Italy", "United States"}),
    };
    std::map<std::string, std::string> clusters{
        {"travel-destinations/budget-conscious/01", "budget-conscious"}};
    auto p = country_presence("m", "Travel Destinations", "United States", sets, clusters,
                              region_catalog());
    CHECK(p.overall.in_top5 == 1);
    CHECK(p.overall.mean_rank == doctest::Approx(5.0));
}

TEST_CASE("monitoring an uncataloged country fails loudly") {
    CHECK_THROWS_AS(country_presence("m", "t", "Atlantis", {}, {}, region_catalog()),
                    UnknownCountry);
}
