#include "choiceeval/forge.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "choiceeval/errors.hpp"
#include "choiceeval/parallel.hpp"

namespace choiceeval {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Comparison key for question-text dedup: whitespace runs collapse and case is
// ignored, so trivial reformattings of the same question do not count twice.
std::string dedup_key(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_ws = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    // The first quoted string is the one scripted backends key on, so the
    // persona prompt leads with the cluster name and the question prompt
    // leads with the topic.
    t.adapt =
        "You design consumer personas. Translate the buyer mindset "
        "\"{cluster_name}\" ({cluster_definition}) into the specific context of "
        "\"{topic}\".\n"
        "Reply with exactly two lines:\n"
        "Name: <a persona name tailored to this context>\n"
        "Description: <one sentence describing how this persona approaches choices here>\n";
    t.questions =
        "Write consumer questions about \"{topic}\" as they would be asked by this "
        "persona:\n"
        "Persona: {persona_name}\n"
        "Profile: {persona_description}\n"
        "Produce exactly {n} distinct questions. Each must ask for concrete "
        "recommendations or comparisons a shopper could act on, and no two may "
        "repeat the same request. Reply with a numbered list only, one question "
        "per line, in the form \"1. <question>\".\n";
    t.repair =
        "Write consumer questions about \"{topic}\" as they would be asked by the "
        "persona {persona_name}.\n"
        "Produce exactly {k} additional distinct questions. Do not repeat any of "
        "these already-collected questions:\n"
        "{existing}\n"
        "Reply with a numbered list only, one question per line, in the form "
        "\"1. <question>\".\n";
    return t;
}

std::string PromptTemplates::content_hash() const {
    std::uint64_t h = fnv1a(adapt);
    h = fnv1a(questions, h);
    h = fnv1a(repair, h);
    return hex64(h);
}

std::string render_slots(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        char c = tmpl[i];
        if (c != '{') {
            // "}}" collapses to '}' so escaped braces pair up; a lone '}' is
            // literal text.
            out.push_back(c);
            if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') ++i;
            ++i;
            continue;
        }
        if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {  // escaped brace
            out.push_back('{');
            i += 2;
            continue;
        }
        std::size_t close = tmpl.find('}', i + 1);
        if (close == std::string_view::npos)
            throw ConfigError("template", "unterminated slot starting at offset " + std::to_string(i));
        std::string name(tmpl.substr(i + 1, close - i - 1));
        auto it = slots.find(name);
        if (it == slots.end()) throw ConfigError("template", "unknown slot {" + name + "}");
        out += it->second;
        i = close + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

std::vector<std::string> parse_numbered_list(const std::string& reply) {
    std::vector<std::string> items;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        std::size_t i = 0;
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t d = i;
        while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
        if (d == i || d >= line.size()) continue;
        if (line[d] != '.' && line[d] != ')') continue;
        std::string item = trim(std::string_view(line).substr(d + 1));
        if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
}

AdaptedCluster adapt_cluster(const TopicId& topic, const ClusterDefinition& cluster,
                             const ModelId& generator_model, Gateway& generator,
                             const PromptTemplates& templates) {
    CompletionRequest req;
    req.model = generator_model;
    req.prompt = render_slots(templates.adapt, {{"cluster_name", cluster.name},
                                                {"cluster_definition", cluster.definition},
                                                {"topic", topic.name}});
    std::string reply = generator.complete_with_retry(req);

    std::optional<std::string> name, description;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.rfind("Name:", 0) == 0 && !name) name = trim(std::string_view(t).substr(5));
        if (t.rfind("Description:", 0) == 0 && !description)
            description = trim(std::string_view(t).substr(12));
    }
    if (!name || name->empty() || !description || description->empty())
        throw GenerationParseError("persona reply is missing Name:/Description: lines", reply);

    AdaptedCluster out;
    out.topic = topic.name;
    out.cluster_id = cluster.id;
    out.name = *name;
    out.description = *description;
    return out;
}

std::vector<std::string> generate_question_texts(const TopicId& topic,
                                                 const AdaptedCluster& persona, int n,
                                                 const ModelId& generator_model,
                                                 Gateway& generator,
                                                 const PromptTemplates& templates,
                                                 int max_repair_rounds) {
    if (n <= 0) throw ConfigError("questions_per_cluster", "must be positive");

    std::vector<std::string> accepted;
    std::set<std::string> seen;
    auto absorb = [&](const std::string& reply) {
        for (auto& item : parse_numbered_list(reply)) {
            if (static_cast<int>(accepted.size()) >= n) break;
            std::string key = dedup_key(item);
            if (key.empty() || !seen.insert(key).second) continue;
            accepted.push_back(item);
        }
    };

    CompletionRequest req;
    req.model = generator_model;
    req.prompt = render_slots(templates.questions, {{"topic", topic.name},
                                                    {"persona_name", persona.name},
                                                    {"persona_description", persona.description},
                                                    {"n", std::to_string(n)}});
    absorb(generator.complete_with_retry(req));

    for (int round = 0; round < max_repair_rounds && static_cast<int>(accepted.size()) < n;
         ++round) {
        int k = n - static_cast<int>(accepted.size());
        std::ostringstream existing;
        for (std::size_t i = 0; i < accepted.size(); ++i)
            existing << (i + 1) << ". " << accepted[i] << "\n";
        CompletionRequest fix;
        fix.model = generator_model;
        fix.prompt = render_slots(templates.repair, {{"topic", topic.name},
                                                     {"persona_name", persona.name},
                                                     {"k", std::to_string(k)},
                                                     {"existing", existing.str()}});
        absorb(generator.complete_with_retry(fix));
    }

    if (static_cast<int>(accepted.size()) < n)
        throw InsufficientDistinctQuestions(
            "got " + std::to_string(accepted.size()) + " distinct questions for " + topic.name +
            " / " + persona.cluster_id + ", need " + std::to_string(n));
    return accepted;
}

// ---------------------------------------------------------------------------
// QuestionStore
// ---------------------------------------------------------------------------

QuestionStore::QuestionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    question_file_ = std::make_unique<JsonlFile>(dir_ / "questions.jsonl");
    adapted_file_ = std::make_unique<JsonlFile>(dir_ / "adapted_clusters.jsonl");
    for (const auto& j : JsonlFile::read(dir_ / "questions.jsonl")) {
        Question q = question_from_json(j);
        by_id_[q.id] = std::move(q);
    }
    for (const auto& j : JsonlFile::read(dir_ / "adapted_clusters.jsonl")) {
        AdaptedCluster a = adapted_from_json(j);
        adapted_[{a.topic, a.cluster_id}] = std::move(a);
    }
}

const AdaptedCluster* QuestionStore::adapted(const std::string& topic,
                                             const std::string& cluster_id) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = adapted_.find({topic, cluster_id});
    return it == adapted_.end() ? nullptr : &it->second;
}

void QuestionStore::put_adapted(const AdaptedCluster& a) {
    std::lock_guard<std::mutex> lk(mu_);
    if (adapted_.count({a.topic, a.cluster_id})) return;
    adapted_[{a.topic, a.cluster_id}] = a;
    adapted_file_->append(to_json(a));
}

bool QuestionStore::has_question(const std::string& id) const {
    std::lock_guard<std::mutex> lk(mu_);
    return by_id_.count(id) > 0;
}

int QuestionStore::put_questions(const std::vector<Question>& qs) {
    std::lock_guard<std::mutex> lk(mu_);
    int written = 0;
    for (const auto& q : qs) {
        if (by_id_.count(q.id)) continue;
        by_id_[q.id] = q;
        question_file_->append(to_json(q));
        ++written;
    }
    return written;
}

std::vector<Question> QuestionStore::questions() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<Question> out;
    out.reserve(by_id_.size());
    for (const auto& [_, q] : by_id_) out.push_back(q);  // map order == id order
    return out;
}

int QuestionStore::cell_count(const std::string& topic, const std::string& cluster_id) const {
    std::lock_guard<std::mutex> lk(mu_);
    std::string prefix = to_slug(topic) + "/" + cluster_id + "/";
    int n = 0;
    for (auto it = by_id_.lower_bound(prefix); it != by_id_.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        ++n;
    }
    return n;
}

void QuestionStore::write_manifest(const nlohmann::json& manifest) {
    write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

std::optional<nlohmann::json> QuestionStore::manifest() const {
    std::filesystem::path p = dir_ / "manifest.json";
    if (!std::filesystem::exists(p)) return std::nullopt;
    return nlohmann::json::parse(read_file(p));
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

namespace {

// Order-independent content hash of the dataset: fnv over "id|text" lines in
// id order.
std::string dataset_hash(const std::vector<Question>& qs) {
    std::uint64_t h = fnv1a("");
    for (const auto& q : qs) h = fnv1a(q.id + "|" + q.text, h);
    return hex64(h);
}

}  // namespace

AssembleResult assemble_dataset(const AuditConfig& config, Gateway& generator,
                                QuestionStore& store, Clock& clock,
                                const PromptTemplates& templates) {
    struct Cell {
        const TopicId* topic;
        const ClusterDefinition* cluster;
    };
    std::vector<Cell> cells;
    for (const auto& t : config.topics)
        for (const auto& c : config.clusters) cells.push_back({&t, &c});

    AssembleResult result;
    std::mutex stats_mu;

    parallel_for_each(cells, config.parallelism, [&](const Cell& cell) {
        const int want = config.questions_per_cluster;
        if (store.cell_count(cell.topic->name, cell.cluster->id) >= want) {
            std::lock_guard<std::mutex> lk(stats_mu);
            ++result.cells_skipped;
            return;
        }

        AdaptedCluster persona;
        if (const AdaptedCluster* stored = store.adapted(cell.topic->name, cell.cluster->id)) {
            persona = *stored;
        } else {
            persona = adapt_cluster(*cell.topic, *cell.cluster, config.generator_model,
                                    generator, templates);
            store.put_adapted(persona);
            std::lock_guard<std::mutex> lk(stats_mu);
            ++result.adaptations_generated;
        }

        std::vector<std::string> texts = generate_question_texts(
            *cell.topic, persona, want, config.generator_model, generator, templates);
        std::vector<Question> qs;
        qs.reserve(texts.size());
        for (std::size_t i = 0; i < texts.size(); ++i) {
            Question q;
            q.id = make_question_id(*cell.topic, cell.cluster->id, static_cast<int>(i) + 1);
            q.topic = cell.topic->name;
            q.cluster = cell.cluster->id;
            q.text = texts[i];
            qs.push_back(std::move(q));
        }
        // A partially filled cell keeps its stored rows; only unseen ids land.
        int written = store.put_questions(qs);
        std::lock_guard<std::mutex> lk(stats_mu);
        ++result.cells_generated;
        result.questions_written += written;
    });

    result.questions = store.questions();
    result.validation = validate_question_set(result.questions, config);

    nlohmann::json manifest;
    manifest["created_at"] = iso8601_utc(clock.now());
    manifest["generator"] = config.generator_model.key();
    manifest["seed"] = config.seed;
    manifest["template_hash"] = templates.content_hash();
    manifest["dataset_hash"] = dataset_hash(result.questions);
    manifest["question_count"] = result.questions.size();
    manifest["topics"] = config.topics.size();
    manifest["clusters"] = config.clusters.size();
    manifest["questions_per_cluster"] = config.questions_per_cluster;
    manifest["validation_passed"] = result.validation.passed;
    store.write_manifest(manifest);
    return result;
}

}  // namespace choiceeval
