#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <memory>
#include <random>

#include "choiceeval/extraction.hpp"

using namespace choiceeval;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("choiceeval-extract-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ProviderProfile mock_profile() {
    ProviderProfile p;
    p.name = "mock";
    p.rate_limit_per_min = 100000;
    return p;
}

MockScript echo_script() {
    nlohmann::json j = {{"rules",
                         {{{"name", "annotate"},
                           {"match", "expert annotator"},
                           {"mode", "echo_list"}}}}};
    return MockScript::from_json(j);
}

struct Rig {
    std::shared_ptr<FakeClock> clock = std::make_shared<FakeClock>(1740787200.0);
    std::shared_ptr<MockBackend> backend;
    std::shared_ptr<Gateway> gateway;

    explicit Rig(MockScript script, uint64_t seed = 17) {
        backend = std::make_shared<MockBackend>(std::move(script), seed);
        gateway = std::make_shared<Gateway>(mock_profile(), backend, clock, seed);
    }
};

RawResponse airline_response(int q = 1, int rep = 1) {
    RawResponse r;
    r.ref = {"airlines/budget-conscious/" + std::string(q < 10 ? "0" : "") + std::to_string(q),
             "mock-gpt", rep};
    r.text =
        "Here are some options worth considering:\n"
        "1. Aurora Air — a solid fit for this need.\n"
        "2. Borealis Airways — a solid fit for this need.\n"
        "3. Cirrus Jet — a solid fit for this need.\n"
        "4. Dune Hopper — a solid fit for this need.\n"
        "5. Eastwind — a solid fit for this need.\n"
        "Any of these should serve you well.\n";
    r.timestamp = "2025-03-01T00:00:00Z";
    return r;
}

ExpertExtraction make_run(const ResponseRef& ref, int run, std::vector<std::string> names) {
    ExpertExtraction e;
    e.ref = ref;
    e.run_index = run;
    e.ranked_entities = std::move(names);
    return e;
}

ModelId extractor_model() { return {"mock", "extract-sim", "mock-extractor"}; }

AuditConfig extract_config() {
    AuditConfig c;
    c.seed = 17;
    c.topics = {{"Airlines", TopicKind::EntityAnchored}};
    c.clusters = {default_clusters()[1]};
    c.models = {{"mock", "gpt-sim", "mock-gpt"}};
    c.generator_model = {"mock", "gen-sim", "mock-generator"};
    c.extractor_model = extractor_model();
    c.parallelism = 3;
    c.providers = {{"mock", mock_profile()}};
    return c;
}

// Reference implementation of the consensus rule: repeatedly take the
// arg-max candidate under (votes, -mean rank, -lex) and remove it.
std::vector<std::string> brute_force_top5(const VoteTally& tally) {
    std::vector<std::string> pool;
    for (const auto& [k, _] : tally.votes) pool.push_back(k);
    std::vector<std::string> out;
    while (out.size() < 5 && !pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i) {
            const std::string &a = pool[i], &b = pool[best];
            int va = tally.votes.at(a), vb = tally.votes.at(b);
            double ra = tally.mean_rank.at(a), rb = tally.mean_rank.at(b);
            bool wins = va > vb || (va == vb && ra < rb) || (va == vb && ra == rb && a < b);
            if (wins) best = i;
        }
        out.push_back(tally.surface.at(pool[best]));
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

TEST_CASE("extract_expert pulls clean entity names out of a decorated reply") {
    Rig rig(echo_script());
    auto r = airline_response();
    auto e = extract_expert(r, 2, extractor_model(), 0.7, *rig.gateway);
    CHECK(e.ref == r.ref);
    CHECK(e.run_index == 2);
    REQUIRE(e.ranked_entities.size() == 5);
    CHECK(e.ranked_entities[0] == "Aurora Air");
    CHECK(e.ranked_entities[4] == "Eastwind");
}

TEST_CASE("extract_expert sends the annotator temperature") {
    // Echo the request temperature through a canned reply? The mock cannot see
    // request fields, so instead assert via the prompt contract: extraction
    // must still work when the response text itself contains prose numbers.
    Rig rig(echo_script());
    auto r = airline_response();
    r.text = "Top 3 reasons aside, consider:\n" + r.text;
    auto e = extract_expert(r, 1, extractor_model(), 0.7, *rig.gateway);
    REQUIRE(e.ranked_entities.size() == 5);
    CHECK(e.ranked_entities[0] == "Aurora Air");
}

TEST_CASE("extract_expert re-asks once on a malformed reply") {
    nlohmann::json j = {{"rules",
                         {{{"name", "flaky"},
                           {"match", "expert annotator"},
                           {"replies",
                            {"I cannot tell which brands are meant here.",
                             "1. Aurora Air\n2. Borealis Airways\n3. Cirrus Jet\n"
                             "4. Dune Hopper\n5. Eastwind\n"}}}}}};
    Rig rig(MockScript::from_json(j));
    auto e = extract_expert(airline_response(), 1, extractor_model(), 0.7, *rig.gateway);
    CHECK(rig.backend->calls() == 2);
    CHECK(e.ranked_entities[2] == "Cirrus Jet");
}

TEST_CASE("two malformed replies raise ExtractionParseError with the raw text") {
    nlohmann::json j = {{"rules",
                         {{{"name", "hopeless"},
                           {"match", "expert annotator"},
                           {"replies", {"no list here"}},
                           {"cycle", true}}}}};
    Rig rig(MockScript::from_json(j));
    try {
        extract_expert(airline_response(), 1, extractor_model(), 0.7, *rig.gateway);
        FAIL("expected ExtractionParseError");
    } catch (const ExtractionParseError& e) {
        CHECK(e.raw_reply == "no list here");
        CHECK(rig.backend->calls() == 2);
    }
}

TEST_CASE("a six-item reply is clipped to the first five") {
    nlohmann::json j = {{"rules",
                         {{{"name", "chatty"},
                           {"match", "expert annotator"},
                           {"replies",
                            {"1. A One\n2. B Two\n3. C Three\n4. D Four\n5. E Five\n6. F Six\n"}}}}}};
    Rig rig(MockScript::from_json(j));
    auto e = extract_expert(airline_response(), 1, extractor_model(), 0.7, *rig.gateway);
    REQUIRE(e.ranked_entities.size() == 5);
    CHECK(e.ranked_entities[4] == "E Five");
}

// ---------------------------------------------------------------------------
// Voting
// ---------------------------------------------------------------------------

TEST_CASE("tally_votes counts containment and averages 1-based positions") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    std::vector<ExpertExtraction> runs{
        make_run(ref, 1, {"Alpha", "Beta", "Gamma", "Delta", "Epsilon"}),
        make_run(ref, 2, {"Beta", "Alpha", "Gamma", "Delta", "Epsilon"}),
        make_run(ref, 3, {"Alpha", "Beta", "Gamma", "Zeta", "Epsilon"}),
    };
    auto tally = tally_votes(runs);
    CHECK(tally.votes.at("alpha") == 3);
    CHECK(tally.votes.at("zeta") == 1);
    CHECK(tally.votes.at("delta") == 2);
    CHECK(tally.mean_rank.at("alpha") == doctest::Approx((1 + 2 + 1) / 3.0));
    CHECK(tally.mean_rank.at("zeta") == doctest::Approx(4.0));
    CHECK(tally.surface.at("alpha") == "Alpha");
}

TEST_CASE("tally_votes folds surface variants of one entity together") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    std::vector<ExpertExtraction> runs{
        make_run(ref, 1, {"Japan Airlines (JAL)", "Beta", "Gamma", "Delta", "Epsilon"}),
        make_run(ref, 2, {"japan airlines", "Beta", "Gamma", "Delta", "Epsilon"}),
    };
    auto tally = tally_votes(runs);
    CHECK(tally.votes.at("japan airlines") == 2);
    // First surface seen (lowest run) is kept for display.
    CHECK(tally.surface.at("japan airlines") == "Japan Airlines (JAL)");
}

TEST_CASE("tally_votes rejects mixed refs and duplicate runs") {
    ResponseRef a{"airlines/budget-conscious/01", "mock-gpt", 1};
    ResponseRef b{"airlines/budget-conscious/02", "mock-gpt", 1};
    std::vector<std::string> five{"A", "B", "C", "D", "E"};
    CHECK_THROWS_AS(tally_votes({make_run(a, 1, five), make_run(b, 2, five)}),
                    MismatchedResponseRefs);
    CHECK_THROWS_AS(tally_votes({make_run(a, 1, five), make_run(a, 1, five)}),
                    MismatchedResponseRefs);
    CHECK_THROWS_AS(tally_votes({}), MismatchedResponseRefs);
}

TEST_CASE("select_top5 orders by votes, then mean rank, then key") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    // Superb/Alpha/Beta/Keel: 3 votes each, separated by mean position except
    // Beta and Keel, which tie on both counts and fall back to the key.
    // Gamma/Delta/Zil: 1 vote each at position five -> lexicographic.
    std::vector<ExpertExtraction> runs{
        make_run(ref, 1, {"Superb", "Alpha", "Beta", "Keel", "Gamma"}),
        make_run(ref, 2, {"Superb", "Alpha", "Beta", "Keel", "Delta"}),
        make_run(ref, 3, {"Superb", "Keel", "Alpha", "Beta", "Zil"}),
    };
    auto set = select_top5(tally_votes(runs));
    REQUIRE(set.ranked.size() == 5);
    CHECK(set.ranked[0] == "Superb");  // mean 1
    CHECK(set.ranked[1] == "Alpha");   // mean 7/3
    CHECK(set.ranked[2] == "Beta");    // mean 10/3, "beta" < "keel"
    CHECK(set.ranked[3] == "Keel");    // mean 10/3
    CHECK(set.ranked[4] == "Delta");   // 1 vote @5, first lexically
    CHECK(set.provenance == Provenance::Voted);
    CHECK(set.unresolved.empty());
}

TEST_CASE("select_top5 refuses to pad when fewer than five candidates exist") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    std::vector<ExpertExtraction> runs{
        make_run(ref, 1, {"A", "B", "C", "D", "E"}),
        make_run(ref, 2, {"A", "B", "C", "D", "E"}),
    };
    auto tally = tally_votes(runs);
    // Collapse the tally to four candidates by merging two keys.
    VoteTally four = tally;
    four.votes.erase("e");
    four.mean_rank.erase("e");
    four.surface.erase("e");
    CHECK_THROWS_AS(select_top5(four), InsufficientEntities);
}

TEST_CASE("voting oracle: 1000 random panels match iterative arg-max selection") {
    std::mt19937_64 rng(20250301);
    const std::vector<std::string> universe{
        "Alpha", "Beta",  "Gamma", "Delta", "Epsilon", "Zeta", "Eta",
        "Theta", "Iota",  "Kappa", "Lambda", "Mu"};
    for (int trial = 0; trial < 1000; ++trial) {
        ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
        std::vector<ExpertExtraction> runs;
        for (int run = 1; run <= 5; ++run) {
            std::vector<std::string> pool = universe;
            // Deterministic partial shuffle via raw engine output.
            for (int i = 0; i < 5; ++i) {
                std::size_t j = i + static_cast<std::size_t>(
                                        (static_cast<double>(rng() >> 11) * 0x1.0p-53) *
                                        static_cast<double>(pool.size() - i));
                std::swap(pool[i], pool[j]);
            }
            runs.push_back(make_run(ref, run, {pool[0], pool[1], pool[2], pool[3], pool[4]}));
        }
        auto tally = tally_votes(runs);
        auto fast = select_top5(tally);
        auto slow = brute_force_top5(tally);
        REQUIRE(fast.ranked == slow);
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

EntityCatalog airline_catalog() {
    return EntityCatalog::from_records({
        {"Aurora Air", {"Aurora", "Aurora Airlines"}, Region::US, std::nullopt},
        {"Borealis Airways", {"Borealis"}, Region::Europe, std::nullopt},
        {"Cirrus Jet", {}, Region::Asia, std::nullopt},
        {"Dune Hopper", {"DuneH"}, Region::Other, std::nullopt},
        {"Eastwind", {}, Region::US, std::nullopt},
        {"Fjord Air", {}, Region::Europe, std::nullopt},
    });
}

std::pair<std::vector<ChoiceSet>, std::map<std::string, VoteTally>> voted_from(
    const std::vector<std::vector<std::string>>& panel_lists, const ResponseRef& ref) {
    std::vector<ExpertExtraction> runs;
    for (std::size_t i = 0; i < panel_lists.size(); ++i)
        runs.push_back(make_run(ref, static_cast<int>(i) + 1, panel_lists[i]));
    auto tally = tally_votes(runs);
    std::map<std::string, VoteTally> tallies{{ref.key(), tally}};
    return {{select_top5(tally)}, tallies};
}

}  // namespace

TEST_CASE("normalization folds aliases onto canonical names") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    auto [sets, tallies] = voted_from(
        {{"Aurora", "Borealis", "Cirrus Jet", "DuneH", "Eastwind"},
         {"Aurora", "Borealis", "Cirrus Jet", "DuneH", "Eastwind"}},
        ref);
    auto result = normalize_choice_sets(sets, tallies, airline_catalog());
    REQUIRE(result.sets.size() == 1);
    const auto& s = result.sets[0];
    CHECK(s.provenance == Provenance::Normalized);
    CHECK(s.ranked == std::vector<std::string>{"Aurora Air", "Borealis Airways", "Cirrus Jet",
                                               "Dune Hopper", "Eastwind"});
    CHECK(s.unresolved == std::vector<bool>{false, false, false, false, false});
    CHECK(result.unresolved.empty());
    CHECK(result.dropped.empty());
}

TEST_CASE("alias merge frees a slot for the next-ranked candidate") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    // "Aurora" and "Aurora Airlines" are distinct surface keys that resolve to
    // the same record; "Fjord Air" sits sixth in the pool and moves up.
    auto [sets, tallies] = voted_from(
        {{"Aurora", "Aurora Airlines", "Borealis", "Cirrus Jet", "Eastwind"},
         {"Aurora", "Aurora Airlines", "Borealis", "Cirrus Jet", "Fjord Air"},
         {"Aurora", "Aurora Airlines", "Borealis", "Cirrus Jet", "Eastwind"}},
        ref);
    REQUIRE(sets[0].ranked.size() == 5);
    auto result = normalize_choice_sets(sets, tallies, airline_catalog());
    REQUIRE(result.sets.size() == 1);
    const auto& s = result.sets[0];
    CHECK(s.ranked == std::vector<std::string>{"Aurora Air", "Borealis Airways", "Cirrus Jet",
                                               "Eastwind", "Fjord Air"});
    CHECK(result.dropped.empty());
}

TEST_CASE("names missing from the catalog stay, flagged unresolved") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    auto [sets, tallies] = voted_from(
        {{"Aurora", "Zephyr Air", "Cirrus Jet", "DuneH", "Eastwind"},
         {"Aurora", "Zephyr Air", "Cirrus Jet", "DuneH", "Eastwind"}},
        ref);
    auto result = normalize_choice_sets(sets, tallies, airline_catalog());
    REQUIRE(result.sets.size() == 1);
    const auto& s = result.sets[0];
    CHECK(s.ranked[1] == "Zephyr Air");
    CHECK(s.unresolved == std::vector<bool>{false, true, false, false, false});
    REQUIRE(result.unresolved.size() == 1);
    CHECK(result.unresolved[0].key == "zephyr air");
    CHECK(result.unresolved[0].example_surface == "Zephyr Air");
    CHECK(result.unresolved[0].occurrences == 1);
    REQUIRE(result.unresolved[0].example_refs.size() == 1);
    CHECK(result.unresolved[0].example_refs[0] == ref.key());
}

TEST_CASE("unresolved worklist aggregates across sets, most frequent first") {
    EntityCatalog cat = airline_catalog();
    std::vector<ChoiceSet> sets;
    std::map<std::string, VoteTally> tallies;
    for (int q = 1; q <= 3; ++q) {
        ResponseRef ref{"airlines/budget-conscious/0" + std::to_string(q), "mock-gpt", 1};
        std::vector<std::string> names = {"Aurora", "Zephyr Air", "Cirrus Jet", "DuneH",
                                          q == 1 ? "Ghost Liner" : "Eastwind"};
        auto [s, t] = voted_from({names, names}, ref);
        sets.push_back(s[0]);
        tallies.insert(t.begin(), t.end());
    }
    auto result = normalize_choice_sets(sets, tallies, cat);
    REQUIRE(result.unresolved.size() == 2);
    CHECK(result.unresolved[0].key == "zephyr air");
    CHECK(result.unresolved[0].occurrences == 3);
    CHECK(result.unresolved[0].example_refs.size() == 3);
    CHECK(result.unresolved[1].key == "ghost liner");
    CHECK(result.unresolved[1].occurrences == 1);
}

TEST_CASE("a set whose pool collapses below five entities is dropped") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    // Only four distinct records across the whole pool: Aurora appears under
    // three different surfaces.
    auto [sets, tallies] = voted_from(
        {{"Aurora", "Aurora Airlines", "Aurora Air", "Borealis", "Cirrus Jet"},
         {"Aurora", "Aurora Airlines", "Aurora Air", "Borealis", "DuneH"}},
        ref);
    auto result = normalize_choice_sets(sets, tallies, airline_catalog());
    CHECK(result.sets.empty());
    REQUIRE(result.dropped.size() == 1);
    CHECK(result.dropped[0] == ref);
}

TEST_CASE("normalization needs a tally for every set") {
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    auto [sets, tallies] = voted_from(
        {{"Aurora", "Borealis", "Cirrus Jet", "DuneH", "Eastwind"}}, ref);
    CHECK_THROWS_AS(normalize_choice_sets(sets, {}, airline_catalog()), MismatchedResponseRefs);
}

// ---------------------------------------------------------------------------
// Frequency filter
// ---------------------------------------------------------------------------

namespace {

std::vector<ChoiceSet> corpus_with_counts(int total, std::map<std::string, int> appearances) {
    // Builds `total` sets; entity X appears in the first appearances[X] sets.
    // Filler entities pad every set to five slots.
    std::vector<ChoiceSet> sets;
    for (int i = 0; i < total; ++i) {
        ChoiceSet s;
        s.ref = {"airlines/budget-conscious/" + std::to_string(i), "mock-gpt", 1};
        s.provenance = Provenance::Normalized;
        for (const auto& [name, count] : appearances)
            if (i < count) s.ranked.push_back(name);
        int filler = 0;
        while (s.ranked.size() < 5)
            s.ranked.push_back("Filler " + std::to_string(i) + "-" + std::to_string(filler++));
        s.ranked.resize(5);
        s.unresolved.assign(5, false);
        sets.push_back(std::move(s));
    }
    return sets;
}

}  // namespace

TEST_CASE("frequency filter drops entities under the threshold share") {
    auto sets = corpus_with_counts(207, {{"Common Air", 11}, {"Rare Air", 9}, {"Edge Air", 10}});
    auto filter = apply_frequency_filter(sets, 0.05);
    CHECK(filter.total_sets == 207);
    // 5% of 207 is 10.35: eleven appearances stay, ten or nine go.
    CHECK(filter.is_retained("common air"));
    CHECK_FALSE(filter.is_retained("rare air"));
    CHECK_FALSE(filter.is_retained("edge air"));
    CHECK(filter.counts.at("common air") == 11);
    CHECK(filter.excluded.count("rare air") == 1);
}

TEST_CASE("a count exactly on the threshold is kept") {
    auto sets = corpus_with_counts(100, {{"Boundary Air", 5}, {"Under Air", 4}});
    auto filter = apply_frequency_filter(sets, 0.05);
    CHECK(filter.is_retained("boundary air"));
    CHECK_FALSE(filter.is_retained("under air"));
}

TEST_CASE("duplicate mentions inside one set count once") {
    std::vector<ChoiceSet> sets = corpus_with_counts(10, {});
    // Hand-plant the same entity twice in one set under different surfaces.
    sets[0].ranked[0] = "Aurora Air";
    sets[0].ranked[1] = "aurora air";
    auto filter = apply_frequency_filter(sets, 0.05);
    CHECK(filter.counts.at("aurora air") == 1);
}

TEST_CASE("frequency filter refuses an empty corpus") {
    CHECK_THROWS_AS(apply_frequency_filter({}, 0.05), EmptyCorpus);
}

TEST_CASE("threshold zero keeps everything") {
    auto sets = corpus_with_counts(20, {{"Once Air", 1}});
    auto filter = apply_frequency_filter(sets, 0.0);
    CHECK(filter.excluded.empty());
    CHECK(filter.is_retained("once air"));
}

// ---------------------------------------------------------------------------
// Review sampling
// ---------------------------------------------------------------------------

TEST_CASE("review sample is deterministic, sorted, without replacement") {
    std::vector<std::string> ids;
    for (int i = 1; i <= 60; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "%02d", i);
        ids.push_back("airlines/budget-conscious/" + std::string(buf));
    }
    auto a = sample_question_ids(ids, 15, 42, "Airlines");
    auto b = sample_question_ids(ids, 15, 42, "Airlines");
    CHECK(a == b);
    CHECK(a.size() == 15);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 15);

    auto other_topic = sample_question_ids(ids, 15, 42, "Hotels");
    CHECK(other_topic != a);  // topic participates in the stream seed
    auto other_seed = sample_question_ids(ids, 15, 43, "Airlines");
    CHECK(other_seed != a);
}

TEST_CASE("review sample larger than the population returns everything") {
    std::vector<std::string> ids{"b", "a", "c"};
    auto all = sample_question_ids(ids, 15, 1, "Airlines");
    CHECK(all == std::vector<std::string>{"a", "b", "c"});
}

// ---------------------------------------------------------------------------
// Extraction store + batch driver
// ---------------------------------------------------------------------------

TEST_CASE("extraction store is idempotent and survives reopen") {
    fs::path dir = fresh_dir("store");
    ResponseRef ref{"airlines/budget-conscious/01", "mock-gpt", 1};
    {
        ExtractionStore store(dir);
        auto e = make_run(ref, 1, {"A", "B", "C", "D", "E"});
        CHECK(store.put(e));
        CHECK_FALSE(store.put(e));
        CHECK(store.put(make_run(ref, 2, {"A", "B", "C", "D", "E"})));
    }
    ExtractionStore store(dir);
    CHECK(store.size() == 2);
    CHECK(store.has(ref, 1));
    CHECK(store.has(ref, 2));
    CHECK_FALSE(store.has(ref, 3));
    auto runs = store.runs_for(ref);
    REQUIRE(runs.size() == 2);
    CHECK(runs[0].run_index == 1);
    CHECK(runs[1].run_index == 2);
}

TEST_CASE("complete_refs returns only full panels, minus flagged responses") {
    fs::path dir = fresh_dir("complete");
    ExtractionStore store(dir);
    ResponseRef full{"airlines/budget-conscious/01", "mock-gpt", 1};
    ResponseRef partial{"airlines/budget-conscious/02", "mock-gpt", 1};
    ResponseRef bad{"airlines/budget-conscious/03", "mock-gpt", 1};
    std::vector<std::string> five{"A", "B", "C", "D", "E"};
    for (int run = 1; run <= 3; ++run) store.put(make_run(full, run, five));
    for (int run = 1; run <= 2; ++run) store.put(make_run(partial, run, five));
    for (int run = 1; run <= 3; ++run) store.put(make_run(bad, run, five));
    store.flag({bad, 3, "unparseable", "2025-03-01T00:00:00Z"});

    auto refs = store.complete_refs(3);
    REQUIRE(refs.size() == 1);
    CHECK(refs[0] == full);
    CHECK(store.is_flagged(bad));
    CHECK_FALSE(store.is_flagged(full));
    REQUIRE(store.flagged().size() == 1);
    CHECK(store.flagged()[0].reason == "unparseable");
}

TEST_CASE("extract_all runs the panel and resumes for free") {
    fs::path dir = fresh_dir("batch");
    auto config = extract_config();
    std::vector<RawResponse> responses{airline_response(1), airline_response(2),
                                       airline_response(1, 2)};
    {
        Rig rig(echo_script());
        ExtractionStore store(dir);
        auto summary = extract_all(config, responses, *rig.gateway, store, *rig.clock);
        CHECK(summary.attempted == 3 * 5);
        CHECK(summary.extracted == 15);
        CHECK(summary.flagged == 0);
        CHECK(rig.backend->calls() == 15);
        CHECK(store.size() == 15);
    }
    Rig rig(echo_script());
    ExtractionStore store(dir);
    auto summary = extract_all(config, responses, *rig.gateway, store, *rig.clock);
    CHECK(summary.attempted == 0);
    CHECK(summary.already_present == 15);
    CHECK(rig.backend->calls() == 0);
}

TEST_CASE("a response whose panel cannot parse is flagged, batch continues") {
    // The response text for question 2 carries no numbered list, so echo_list
    // returns an empty list for it on every pass.
    fs::path dir = fresh_dir("flag");
    auto config = extract_config();
    auto bad = airline_response(2);
    bad.text = "I would rather not recommend specific airlines.";
    std::vector<RawResponse> responses{airline_response(1), bad};

    Rig rig(echo_script());
    ExtractionStore store(dir);
    auto summary = extract_all(config, responses, *rig.gateway, store, *rig.clock);
    CHECK(summary.extracted == 5);
    CHECK(summary.flagged == 1);
    CHECK(store.is_flagged(bad.ref));
    auto refs = store.complete_refs(config.experts);
    REQUIRE(refs.size() == 1);
    CHECK(refs[0] == airline_response(1).ref);
    // Flagged responses are not re-attempted on the next pass.
    auto second = extract_all(config, responses, *rig.gateway, store, *rig.clock);
    CHECK(second.attempted == 0);
    CHECK(second.flagged == 0);
}
