#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "choiceeval/core.hpp"

using namespace choiceeval;

namespace {

AuditConfig tiny_config() {
    AuditConfig c;
    c.topics = {{"Airlines", TopicKind::EntityAnchored},
                {"Travel Destinations", TopicKind::CountryLevel}};
    c.clusters = default_clusters();
    c.models = {{"mock", "alpha-sim", "alpha"}, {"mock", "beta-sim", "beta"}};
    c.generator_model = {"mock", "generator-sim", "generator"};
    c.extractor_model = {"mock", "extractor-sim", "extractor"};
    c.providers["mock"] = ProviderProfile{"mock", "", "", 100000.0, 2, 0.01, 5.0};
    c.questions_per_cluster = 2;
    return c;
}

}  // namespace

TEST_CASE("canonical_key normalizes whitespace, case and punctuation") {
    CHECK(canonical_key("  Delta Air Lines  ") == "delta air lines");
    CHECK(canonical_key("DELTA\tAir   Lines") == "delta air lines");
    CHECK(canonical_key("\"United Airlines\"") == "united airlines");
    CHECK(canonical_key("**Lufthansa**") == "lufthansa");
    CHECK(canonical_key("- KLM") == "klm");
}

TEST_CASE("canonical_key strips trailing parenthetical qualifiers") {
    CHECK(canonical_key("Japan Airlines (JAL)") == "japan airlines");
    CHECK(canonical_key("All Nippon Airways (ANA)") == "all nippon airways");
    CHECK(canonical_key("Delta (US) (carrier)") == "delta");
    CHECK(canonical_key("Delta (1).") == "delta");
    // A fully parenthesized name keeps its inner text.
    CHECK(canonical_key("(untitled)") == "untitled");
    // Internal parentheticals survive.
    CHECK(canonical_key("A (b) c") == "a (b) c");
}

TEST_CASE("canonical_key keeps meaningful internal punctuation") {
    CHECK(canonical_key("Paris, France") == "paris, france");
    CHECK(canonical_key("St. Regis") == "st. regis");
    CHECK(canonical_key("7-Eleven") == "7-eleven");
    CHECK(canonical_key("Coca-Cola") == "coca-cola");
}

TEST_CASE("canonical_key is idempotent on randomized input") {
    std::mt19937_64 rng(42);
    const std::string alphabet =
        "abcXYZ 019 .,;:!?()[]{}*-_'\"`<>\t\n";
    for (int trial = 0; trial < 3000; ++trial) {
        std::string s;
        std::size_t len = rng() % 24;
        for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
        std::string once = canonical_key(s);
        CHECK(canonical_key(once) == once);
    }
}

TEST_CASE("canonical_key distinguishes genuinely different brands") {
    CHECK(canonical_key("Delta Air Lines") != canonical_key("Delta Hotels"));
    CHECK(canonical_key("United Airlines") != canonical_key("United Arab Emirates"));
}

TEST_CASE("default clusters: nine personas with ids and definitions") {
    const auto& cl = default_clusters();
    REQUIRE(cl.size() == 9);
    CHECK(cl[0].name == "Performance and Quality");
    CHECK(cl[1].name == "Budget-Conscious");
    CHECK(cl[8].name == "Cultural and Social Influences");
    std::set<std::string> ids;
    for (const auto& c : cl) {
        CHECK_FALSE(c.id.empty());
        CHECK_FALSE(c.definition.empty());
        CHECK(ids.insert(c.id).second);
        CHECK(c.id == to_slug(c.id));  // ids are already slug-shaped
    }
}

TEST_CASE("question ids are zero padded and slug based") {
    TopicId t{"Travel Destinations", TopicKind::CountryLevel};
    CHECK(make_question_id(t, "convenience", 7) == "travel-destinations/convenience/07");
    CHECK(make_question_id(t, "convenience", 23) == "travel-destinations/convenience/23");
}

TEST_CASE("expert extraction invariants") {
    ExpertExtraction ok;
    ok.ref = {"airlines/convenience/01", "alpha", 1};
    ok.run_index = 3;
    ok.ranked_entities = {"Delta", "United", "KLM", "ANA", "JAL"};
    CHECK_NOTHROW(ok.validate());

    ExpertExtraction dup = ok;
    dup.ranked_entities = {"Delta", "United", "KLM", "ANA", "delta"};  // folds to a duplicate
    CHECK_THROWS_AS(dup.validate(), ExtractionParseError);

    ExpertExtraction four = ok;
    four.ranked_entities.pop_back();
    CHECK_THROWS_AS(four.validate(), ExtractionParseError);

    ExpertExtraction blank = ok;
    blank.ranked_entities[2] = "  ''  ";
    CHECK_THROWS_AS(blank.validate(), ExtractionParseError);
}

TEST_CASE("entity catalog resolves aliases through canonical keys") {
    std::vector<EntityRecord> records = {
        {"Japan Airlines", {"JAL"}, Region::Asia, std::nullopt},
        {"Delta Air Lines", {"Delta"}, Region::US, std::nullopt},
        {"United States", {"US", "USA", "United States of America"}, Region::US,
         std::string("United States")},
    };
    auto cat = EntityCatalog::from_records(records);
    CHECK(cat.size() == 3);
    REQUIRE(cat.resolve("jal") != nullptr);
    CHECK(cat.resolve("jal")->canonical_name == "Japan Airlines");
    // The parenthetical form folds onto the canonical name by keying alone.
    REQUIRE(cat.resolve("Japan Airlines (JAL)") != nullptr);
    CHECK(cat.resolve(" DELTA ")->canonical_name == "Delta Air Lines");
    CHECK(cat.resolve("Emirates") == nullptr);

    REQUIRE(cat.find_country("United States") != nullptr);
    CHECK(cat.find_country("United States")->canonical_name == "United States");
    CHECK(cat.find_country("Atlantis") == nullptr);
}

TEST_CASE("entity catalog rejects conflicting alias claims") {
    std::vector<EntityRecord> records = {
        {"Delta Air Lines", {"Delta"}, Region::US, std::nullopt},
        {"Delta Hotels", {"Delta"}, Region::US, std::nullopt},
    };
    CHECK_THROWS_AS(EntityCatalog::from_records(records), CatalogConflict);
}

TEST_CASE("entity catalog round-trips through a line-oriented file") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "choiceeval-core-test";
    fs::create_directories(dir);
    fs::path path = dir / "catalog.jsonl";
    {
        std::ofstream out(path);
        out << to_json(EntityRecord{"Air France", {"AF"}, Region::Europe, std::nullopt}).dump()
            << "\n";
        out << "\n";  // blank lines are fine
        out << to_json(EntityRecord{"Qantas", {}, std::nullopt, std::nullopt}).dump() << "\n";
    }
    auto cat = EntityCatalog::load(path);
    CHECK(cat.size() == 2);
    REQUIRE(cat.resolve("af") != nullptr);
    CHECK(cat.resolve("af")->region == Region::Europe);
    CHECK_FALSE(cat.resolve("Qantas")->region.has_value());

    {
        std::ofstream out(path, std::ios::app);
        out << "{ not json\n";
    }
    CHECK_THROWS_AS(EntityCatalog::load(path), StoreError);
    fs::remove_all(dir);
}

TEST_CASE("config validation rejects out-of-range protocol fields") {
    auto base = tiny_config();
    CHECK_NOTHROW(base.validate());

    auto bad = base;
    bad.expert_temperature = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = base;
    bad.frequency_threshold = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = base;
    bad.lor_alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = base;
    bad.models.push_back({"mock", "gamma-sim", "alpha"});  // duplicate label
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = base;
    bad.topics.push_back({"Airlines", TopicKind::EntityAnchored});
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = base;
    bad.models.push_back({"unknown-provider", "x", "x"});
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = base;
    bad.analysis_repetition = 9;  // > repetitions
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config errors carry the offending field path") {
    auto bad = tiny_config();
    bad.expert_temperature = -1.0;
    try {
        bad.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field_path == "expert_temperature");
    }
}

TEST_CASE("config JSON round-trip preserves protocol constants") {
    auto c = tiny_config();
    c.seed = 987654321;
    c.frequency_threshold = 0.07;
    auto j = c.to_json();
    auto back = AuditConfig::from_json(j);
    CHECK(back.seed == c.seed);
    CHECK(back.frequency_threshold == c.frequency_threshold);
    CHECK(back.topics.size() == 2);
    CHECK(back.topics[1].kind == TopicKind::CountryLevel);
    CHECK(back.clusters.size() == 9);
    CHECK(back.models.size() == 2);
    CHECK(back.region_pairs == c.region_pairs);
}

TEST_CASE("config defaults fill in the standard protocol") {
    nlohmann::json j = {
        {"topics", {{{"name", "Airlines"}}}},
        {"models", {{{"provider", "mock"}, {"model_name", "m"}, {"label", "m"}}}},
        {"generator_model", {{"provider", "mock"}, {"model_name", "g"}, {"label", "g"}}},
        {"extractor_model", {{"provider", "mock"}, {"model_name", "e"}, {"label", "e"}}},
        {"providers", {{"mock", nlohmann::json::object()}}},
    };
    auto c = AuditConfig::from_json(j);
    CHECK(c.questions_per_cluster == 23);
    CHECK(c.experts == 5);
    CHECK(c.repetitions == 5);
    CHECK(c.expert_temperature == 0.7);
    CHECK(c.frequency_threshold == 0.05);
    CHECK(c.lor_alpha == 0.5);
    CHECK(c.clusters.size() == 9);
    REQUIRE(c.region_pairs.size() == 2);
    CHECK(c.region_pairs[0] == std::make_pair(Region::US, Region::Europe));
    CHECK(c.region_pairs[1] == std::make_pair(Region::US, Region::Asia));
    CHECK(c.monitor_country == "United States");
}

TEST_CASE("config parse errors name the field") {
    nlohmann::json j = {{"topics", {{{"kind", "entity-anchored"}}}}};
    try {
        AuditConfig::from_json(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field_path == "topics[0].name");
    }
}

TEST_CASE("validate_question_set passes a complete grid") {
    auto c = tiny_config();
    std::vector<Question> qs;
    for (const auto& t : c.topics)
        for (const auto& cl : c.clusters)
            for (int i = 1; i <= c.questions_per_cluster; ++i)
                qs.push_back({make_question_id(t, cl.id, i), t.name, cl.id,
                              "Question " + std::to_string(i) + " about " + t.name});
    auto report = validate_question_set(qs, c);
    CHECK(report.passed);
    CHECK(report.issues.empty());
    CHECK(report.counts.at("Airlines").at("convenience") == 2);
}

TEST_CASE("validate_question_set reports deficits, extras and duplicates") {
    auto c = tiny_config();
    std::vector<Question> qs;
    for (const auto& t : c.topics)
        for (const auto& cl : c.clusters)
            for (int i = 1; i <= c.questions_per_cluster; ++i)
                qs.push_back({make_question_id(t, cl.id, i), t.name, cl.id,
                              "Question " + std::to_string(i) + " about " + t.name});

    SUBCASE("missing question") {
        qs.pop_back();
        auto report = validate_question_set(qs, c);
        CHECK_FALSE(report.passed);
        REQUIRE(report.issues.size() == 1);
        CHECK(report.issues[0].kind == "missing");
    }
    SUBCASE("duplicate id") {
        qs.push_back(qs.front());
        auto report = validate_question_set(qs, c);
        CHECK_FALSE(report.passed);
        bool found = false;
        for (const auto& i : report.issues) found |= i.kind == "duplicate-id";
        CHECK(found);
    }
    SUBCASE("extra question in a cell") {
        auto extra = qs.front();
        extra.id = make_question_id(c.topics[0], c.clusters[0].id, 99);
        extra.text = "A different question about Airlines";
        qs.push_back(extra);
        auto report = validate_question_set(qs, c);
        CHECK_FALSE(report.passed);
        bool found = false;
        for (const auto& i : report.issues) found |= i.kind == "extra";
        CHECK(found);
    }
    SUBCASE("unknown topic") {
        auto stray = qs.front();
        stray.topic = "Cruise Lines";
        qs.push_back(stray);
        auto report = validate_question_set(qs, c);
        CHECK_FALSE(report.passed);
        bool found = false;
        for (const auto& i : report.issues) found |= i.kind == "unknown-topic";
        CHECK(found);
    }
    SUBCASE("duplicate text within a cell") {
        auto dup = qs.front();
        dup.id = make_question_id(c.topics[0], c.clusters[0].id, 98);
        qs.push_back(dup);
        auto report = validate_question_set(qs, c);
        CHECK_FALSE(report.passed);
        bool found = false;
        for (const auto& i : report.issues) found |= i.kind == "duplicate-text";
        CHECK(found);
    }
}

TEST_CASE("record JSON round-trips") {
    RawResponse r;
    r.ref = {"airlines/convenience/01", "alpha", 2};
    r.text = "Try Delta.\nOr United.";
    r.timestamp = "2025-03-01T00:00:00Z";
    r.request_metadata = {{"temperature", "default"}};
    auto back = response_from_json(to_json(r));
    CHECK(back.ref == r.ref);
    CHECK(back.text == r.text);
    CHECK(back.timestamp == r.timestamp);
    CHECK(back.request_metadata == r.request_metadata);

    ChoiceSet s;
    s.ref = r.ref;
    s.ranked = {"A", "B", "C", "D", "E"};
    s.provenance = Provenance::Normalized;
    s.unresolved = {false, true, false, false, false};
    auto s2 = choice_set_from_json(to_json(s));
    CHECK(s2.ref == s.ref);
    CHECK(s2.ranked == s.ranked);
    CHECK(s2.provenance == Provenance::Normalized);
    CHECK(s2.unresolved == s.unresolved);
}

TEST_CASE("iso8601 timestamps and slugs") {
    CHECK(iso8601_utc(0.0) == "1970-01-01T00:00:00Z");
    CHECK(iso8601_utc(1740787200.0) == "2025-03-01T00:00:00Z");
    CHECK(to_slug("Travel Destinations") == "travel-destinations");
    CHECK(to_slug("  A  B  ") == "a-b");
    CHECK(to_slug("Hotels & Resorts!") == "hotels-resorts");
}

TEST_CASE("fnv1a is stable") {
    CHECK(fnv1a("") == 14695981039346656037ull);
    CHECK(fnv1a("a") == fnv1a("a"));
    CHECK(fnv1a("a") != fnv1a("b"));
    CHECK(hex64(0x1234abcdull) == "000000001234abcd");
}
