#include "choiceeval/pipeline.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "choiceeval/store.hpp"

namespace choiceeval {

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

PipelineEnv make_mock_env(const AuditConfig& config, const std::filesystem::path& script_path) {
    PipelineEnv env;
    env.clock = std::make_shared<FakeClock>(kRunEpoch);
    auto backend = std::make_shared<MockBackend>(MockScript::load(script_path), config.seed);
    for (const auto& [name, profile] : config.providers)
        env.gateways[name] =
            std::make_shared<Gateway>(profile, backend, env.clock, config.seed);
    if (!config.catalog_path.empty()) env.catalog = EntityCatalog::load(config.catalog_path);
    return env;
}

PipelineEnv make_live_env(const AuditConfig& config) {
    PipelineEnv env;
    env.clock = std::make_shared<SystemClock>();
    for (const auto& [name, profile] : config.providers)
        env.gateways[name] = std::make_shared<Gateway>(
            profile, std::make_shared<HttpBackend>(profile), env.clock, config.seed);
    if (!config.catalog_path.empty()) env.catalog = EntityCatalog::load(config.catalog_path);
    return env;
}

Gateway& gateway_for(PipelineEnv& env, const ModelId& model) {
    auto it = env.gateways.find(model.provider);
    if (it == env.gateways.end())
        throw ConfigError("providers." + model.provider,
                          "no gateway for provider of model '" + model.label + "'");
    return *it->second;
}

// ---------------------------------------------------------------------------
// Provider stages
// ---------------------------------------------------------------------------

AssembleResult run_generate(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env) {
    QuestionStore store(paths.questions_dir());
    return assemble_dataset(config, gateway_for(env, config.generator_model), store,
                            *env.clock);
}

CollectSummary run_collect(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env) {
    QuestionStore questions(paths.questions_dir());
    if (!questions.manifest())
        throw MissingInput("question store has no manifest; run generate first");
    auto list = questions.questions();
    if (list.empty()) throw MissingInput("question store is empty; run generate first");
    ResponseStore responses(paths.responses_dir());
    return collect_all(config, list, env.gateways, responses, *env.clock);
}

ExtractSummary run_extract(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env) {
    ResponseStore responses(paths.responses_dir());
    if (responses.size() == 0)
        throw MissingInput("response store is empty; run collect first");
    ExtractionStore store(paths.extractions_dir());
    return extract_all(config, responses.all(), gateway_for(env, config.extractor_model),
                       store, *env.clock);
}

// ---------------------------------------------------------------------------
// Voting + catalog normalization (pure recomputation over the stores)
// ---------------------------------------------------------------------------

NormalizeSummary run_normalize(const AuditConfig& config, const RunPaths& paths,
                               PipelineEnv& env) {
    ExtractionStore extractions(paths.extractions_dir());
    if (extractions.size() == 0)
        throw MissingInput("extraction store is empty; run extract first");

    const auto refs = extractions.complete_refs(config.experts);
    std::vector<ChoiceSet> voted;
    std::map<std::string, VoteTally> tallies;
    voted.reserve(refs.size());
    for (const auto& ref : refs) {
        VoteTally tally = tally_votes(extractions.runs_for(ref));
        voted.push_back(select_top5(tally));
        tallies.emplace(ref.key(), std::move(tally));
    }

    auto result = normalize_choice_sets(voted, tallies, env.catalog);

    std::string voted_text, normalized_text, unresolved_text, dropped_text;
    for (const auto& s : voted) voted_text += to_json(s).dump() + "\n";
    for (const auto& s : result.sets) normalized_text += to_json(s).dump() + "\n";
    for (const auto& u : result.unresolved) {
        nlohmann::json row{{"key", u.key},
                           {"example_surface", u.example_surface},
                           {"occurrences", u.occurrences},
                           {"example_refs", u.example_refs}};
        unresolved_text += row.dump() + "\n";
    }
    for (const auto& ref : result.dropped) dropped_text += to_json(ref).dump() + "\n";

    write_file_atomic(paths.voted_file(), voted_text);
    write_file_atomic(paths.normalized_file(), normalized_text);
    write_file_atomic(paths.unresolved_file(), unresolved_text);
    write_file_atomic(paths.dropped_file(), dropped_text);

    NormalizeSummary summary;
    summary.complete_responses = static_cast<int>(refs.size());
    summary.voted = static_cast<int>(voted.size());
    summary.normalized = static_cast<int>(result.sets.size());
    summary.dropped = static_cast<int>(result.dropped.size());
    summary.unresolved_entities = static_cast<int>(result.unresolved.size());
    return summary;
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

namespace {

std::vector<ChoiceSet> load_normalized(const RunPaths& paths) {
    if (!std::filesystem::exists(paths.normalized_file()))
        throw MissingInput("choices/normalized.jsonl missing; run normalize first");
    std::vector<ChoiceSet> sets;
    for (const auto& line : JsonlFile::read(paths.normalized_file()))
        sets.push_back(choice_set_from_json(line));
    if (sets.empty()) throw MissingInput("choices/normalized.jsonl is empty; nothing to analyze");
    return sets;
}

// (topic name, model label, repetition) -> choice sets, in store order.
using CorpusIndex = std::map<std::tuple<std::string, std::string, int>, std::vector<ChoiceSet>>;

}  // namespace

ResultsBundle analyze_stores(const AuditConfig& config, const RunPaths& paths,
                             const EntityCatalog& catalog, Clock& clock) {
    QuestionStore questions(paths.questions_dir());
    auto manifest = questions.manifest();
    if (!manifest) throw MissingInput("question store has no manifest; run generate first");

    std::map<std::string, const Question*> by_id;
    std::map<std::string, std::string> cluster_of_question;
    std::map<std::string, int> questions_per_topic;
    const auto question_list = questions.questions();
    for (const auto& q : question_list) {
        by_id[q.id] = &q;
        cluster_of_question[q.id] = q.cluster;
        ++questions_per_topic[q.topic];
    }

    CorpusIndex corpus;
    for (auto& set : load_normalized(paths)) {
        auto it = by_id.find(set.ref.question_id);
        if (it == by_id.end())
            throw MissingInput("choice set references unknown question '" +
                               set.ref.question_id + "'");
        corpus[{it->second->topic, set.ref.model_label, set.ref.repetition}].push_back(
            std::move(set));
    }

    std::vector<std::string> cluster_universe;
    for (const auto& c : config.clusters) cluster_universe.push_back(c.id);

    ResultsBundle bundle;
    bundle.created_at = iso8601_utc(clock.now());
    bundle.dataset_hash = manifest->value("dataset_hash", "");
    bundle.seed = config.seed;
    bundle.config = config.to_json();
    bundle.models = config.models;
    for (const auto& t : config.topics) bundle.topics.push_back(t.name);

    for (const auto& topic : config.topics) {
        // One filter per topic when pooled: the exclusion rule then sees every
        // model's analysis-repetition sets together.
        std::vector<ChoiceSet> pooled;
        if (config.pooled_frequency_filter) {
            for (const auto& model : config.models) {
                auto it = corpus.find({topic.name, model.label, config.analysis_repetition});
                if (it != corpus.end())
                    pooled.insert(pooled.end(), it->second.begin(), it->second.end());
            }
        }

        for (const auto& model : config.models) {
            auto it = corpus.find({topic.name, model.label, config.analysis_repetition});
            if (it == corpus.end() || it->second.empty()) continue;  // missing cell
            const auto& sets = it->second;

            FrequencyFilter filter =
                config.pooled_frequency_filter
                    ? apply_frequency_filter(pooled, config.frequency_threshold)
                    : apply_frequency_filter(sets, config.frequency_threshold);

            bundle.preference.push_back(preference_summary(
                model.label, topic.name, sets, filter, questions_per_topic[topic.name]));

            if (topic.kind == TopicKind::EntityAnchored) {
                auto rows = region_counts(sets, cluster_of_question, cluster_universe, catalog,
                                          filter);
                for (const auto& [a, b] : config.region_pairs)
                    bundle.lor.push_back(mean_lor_test(model.label, topic.name, a, b, rows,
                                                       cluster_universe, config.lor_alpha));
            } else {
                bundle.country.push_back(country_presence(model.label, topic.name,
                                                          config.monitor_country, sets,
                                                          cluster_of_question, catalog));
            }

            if (config.repetitions >= 2) {
                std::vector<std::map<std::string, double>> freqs;
                bool any = false;
                for (int rep = 1; rep <= config.repetitions; ++rep) {
                    auto rit = corpus.find({topic.name, model.label, rep});
                    if (rit != corpus.end() && !rit->second.empty()) {
                        freqs.push_back(inclusion_frequencies(rit->second));
                        any = true;
                    } else {
                        freqs.emplace_back();
                    }
                }
                if (any)
                    bundle.stability.push_back(repetition_stability(
                        model.label, topic.name, freqs, config.kruskal_input));
            }
        }
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Review sample
// ---------------------------------------------------------------------------

nlohmann::json build_review_sample(const AuditConfig& config, const RunPaths& paths) {
    QuestionStore questions(paths.questions_dir());
    const auto question_list = questions.questions();
    if (question_list.empty())
        throw MissingInput("question store is empty; run generate first");
    ResponseStore responses(paths.responses_dir());

    std::map<std::string, const Question*> by_id;
    std::map<std::string, std::vector<std::string>> ids_per_topic;
    for (const auto& q : question_list) {
        by_id[q.id] = &q;
        ids_per_topic[q.topic].push_back(q.id);
    }

    // Normalized choices for the analysis repetition, when that stage ran.
    std::map<std::pair<std::string, std::string>, const ChoiceSet*> choices;
    std::vector<ChoiceSet> sets;
    if (std::filesystem::exists(paths.normalized_file())) {
        for (const auto& line : JsonlFile::read(paths.normalized_file()))
            sets.push_back(choice_set_from_json(line));
        for (const auto& s : sets)
            if (s.ref.repetition == config.analysis_repetition)
                choices[{s.ref.question_id, s.ref.model_label}] = &s;
    }

    nlohmann::json out = nlohmann::json::array();
    for (const auto& topic : config.topics) {
        auto ids = ids_per_topic[topic.name];
        for (const auto& id : sample_question_ids(std::move(ids), config.review_sample_per_topic,
                                                  config.seed, topic.name)) {
            nlohmann::json entry;
            entry["question_id"] = id;
            entry["topic"] = topic.name;
            entry["text"] = by_id.at(id)->text;
            nlohmann::json models(nlohmann::json::value_t::object);
            for (const auto& model : config.models) {
                ResponseRef ref{id, model.label, config.analysis_repetition};
                nlohmann::json cell(nlohmann::json::value_t::object);
                if (const RawResponse* r = responses.find(ref)) cell["response"] = r->text;
                auto cit = choices.find({id, model.label});
                if (cit != choices.end()) cell["choices"] = cit->second->ranked;
                models[model.label] = cell;
            }
            entry["models"] = models;
            out.push_back(entry);
        }
    }
    return out;
}

AnalyzeSummary run_analyze(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env) {
    auto bundle = analyze_stores(config, paths, env.catalog, *env.clock);
    write_file_atomic(paths.results_file(), export_results_text(bundle));
    auto review = build_review_sample(config, paths);
    write_file_atomic(paths.review_file(), review.dump(2) + "\n");

    AnalyzeSummary summary;
    summary.preference_rows = static_cast<int>(bundle.preference.size());
    summary.lor_rows = static_cast<int>(bundle.lor.size());
    summary.stability_rows = static_cast<int>(bundle.stability.size());
    summary.country_rows = static_cast<int>(bundle.country.size());
    summary.review_questions = static_cast<int>(review.size());
    return summary;
}

// ---------------------------------------------------------------------------
// Results round-trip
// ---------------------------------------------------------------------------

namespace {

double json_double(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

PresenceStats presence_from_json(const nlohmann::json& j) {
    PresenceStats s;
    s.considered = j.at("considered").get<int>();
    s.in_top5 = j.at("in_top5").get<int>();
    s.at_rank1 = j.at("at_rank1").get<int>();
    s.mean_rank = json_double(j.at("mean_rank"));
    return s;
}

}  // namespace

ResultsBundle bundle_from_json(const nlohmann::json& doc) {
    ResultsBundle bundle;
    const auto& manifest = doc.at("manifest");
    bundle.created_at = manifest.at("created_at").get<std::string>();
    bundle.dataset_hash = manifest.at("dataset_hash").get<std::string>();
    bundle.seed = manifest.at("seed").get<uint64_t>();
    bundle.config = manifest.at("config");
    for (const auto& m : manifest.at("models")) bundle.models.push_back(model_from_json(m));
    for (const auto& t : manifest.at("topics")) bundle.topics.push_back(t.get<std::string>());

    for (const auto& row : doc.at("preference")) {
        PreferenceSummary s;
        s.model_label = row.at("model").get<std::string>();
        s.topic = row.at("topic").get<std::string>();
        s.preferred_entity = row.at("preferred_entity").get<std::string>();
        s.peir = json_double(row.at("peir"));
        s.analyzed_sets = row.at("analyzed_sets").get<int>();
        s.total_questions = row.at("total_questions").get<int>();
        for (const auto& [k, v] : row.at("inclusion").items()) s.inclusion[k] = v.get<double>();
        for (const auto& [k, v] : row.at("display").items()) s.display[k] = v.get<std::string>();
        bundle.preference.push_back(std::move(s));
    }

    for (const auto& row : doc.at("lor_tests")) {
        LorResult r;
        r.model_label = row.at("model").get<std::string>();
        r.topic = row.at("topic").get<std::string>();
        r.region_a = region_from_string(row.at("region_a").get<std::string>());
        r.region_b = region_from_string(row.at("region_b").get<std::string>());
        r.mean = json_double(row.at("mean"));
        r.t_stat = json_double(row.at("t"));
        r.p_value = json_double(row.at("p"));
        r.degenerate = row.at("degenerate").get<bool>();
        for (const auto& cell : row.at("cells")) {
            LorCell c;
            c.cluster_id = cell.at("cluster").get<std::string>();
            c.count_a = cell.at("count_a").get<int>();
            c.count_b = cell.at("count_b").get<int>();
            c.value = json_double(cell.at("lor"));
            r.cells.push_back(std::move(c));
        }
        bundle.lor.push_back(std::move(r));
    }

    for (const auto& row : doc.at("stability")) {
        StabilityResult r;
        r.model_label = row.at("model").get<std::string>();
        r.topic = row.at("topic").get<std::string>();
        for (const auto& e : row.at("entities")) r.entities.push_back(e.get<std::string>());
        for (const auto& json_row : row.at("matrix")) {
            std::vector<StabilityCell> cells;
            for (const auto& c : json_row) {
                StabilityCell cell;
                cell.rho = json_double(c.at("rho"));
                cell.p = json_double(c.at("p"));
                cell.degenerate = c.at("degenerate").get<bool>();
                cell.exact_p = c.at("exact_p").get<bool>();
                cells.push_back(cell);
            }
            r.matrix.push_back(std::move(cells));
        }
        r.kruskal.h = json_double(row.at("kruskal").at("h"));
        r.kruskal.p = json_double(row.at("kruskal").at("p"));
        r.kruskal.all_identical = row.at("kruskal").at("all_identical").get<bool>();
        r.kruskal_input = row.at("kruskal_input").get<std::string>();
        bundle.stability.push_back(std::move(r));
    }

    for (const auto& row : doc.at("country_presence")) {
        CountryPresence c;
        c.model_label = row.at("model").get<std::string>();
        c.topic = row.at("topic").get<std::string>();
        c.country = row.at("country").get<std::string>();
        c.overall = presence_from_json(row.at("overall"));
        for (const auto& [k, v] : row.at("clusters").items())
            c.per_cluster[k] = presence_from_json(v);
        bundle.country.push_back(std::move(c));
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

ReportSummary run_report(const AuditConfig& config, const RunPaths& paths,
                         const std::string& format) {
    (void)config;  // layout travels inside the results document
    if (format != "md" && format != "html" && format != "flat" && format != "all")
        throw ConfigError("format", "expected md, html, flat or all; got '" + format + "'");
    if (!std::filesystem::exists(paths.results_file()))
        throw MissingInput("results/results.json missing; run analyze first");

    auto bundle = bundle_from_json(nlohmann::json::parse(read_file(paths.results_file())));

    ReportSummary summary;
    auto emit = [&](const std::string& name, const std::string& content) {
        auto path = paths.reports_dir() / name;
        write_file_atomic(path, content);
        summary.written.push_back(path);
    };
    if (format == "md" || format == "all") emit("report.md", render_markdown_report(bundle));
    if (format == "html" || format == "all") emit("report.html", render_html_report(bundle));
    if (format == "flat" || format == "all")
        for (const auto& [name, content] : render_flat_files(bundle)) emit(name, content);
    return summary;
}

RunAllSummary run_all(const AuditConfig& config, const RunPaths& paths, PipelineEnv& env,
                      const std::string& format) {
    RunAllSummary summary;
    summary.generate = run_generate(config, paths, env);
    summary.collect = run_collect(config, paths, env);
    summary.extract = run_extract(config, paths, env);
    summary.normalize = run_normalize(config, paths, env);
    summary.analyze = run_analyze(config, paths, env);
    summary.report = run_report(config, paths, format);
    return summary;
}

}  // namespace choiceeval
