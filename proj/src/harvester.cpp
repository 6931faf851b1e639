#include "choiceeval/harvester.hpp"

#include <algorithm>

#include "choiceeval/errors.hpp"
#include "choiceeval/parallel.hpp"

namespace choiceeval {

namespace {

std::string topic_slug_of(const std::string& question_id) {
    std::size_t slash = question_id.find('/');
    return slash == std::string::npos ? question_id : question_id.substr(0, slash);
}

std::string shard_name(const ResponseRef& ref) {
    return to_slug(ref.model_label) + "__" + topic_slug_of(ref.question_id) + ".jsonl";
}

nlohmann::json failure_to_json(const FailureRecord& f) {
    return {{"question_id", f.ref.question_id},
            {"model_label", f.ref.model_label},
            {"repetition", f.ref.repetition},
            {"error_class", f.error_class},
            {"detail", f.detail},
            {"timestamp", f.timestamp}};
}

FailureRecord failure_from_json(const nlohmann::json& j) {
    FailureRecord f;
    f.ref.question_id = j.at("question_id").get<std::string>();
    f.ref.model_label = j.at("model_label").get<std::string>();
    f.ref.repetition = j.at("repetition").get<int>();
    f.error_class = j.at("error_class").get<std::string>();
    f.detail = j.at("detail").get<std::string>();
    f.timestamp = j.at("timestamp").get<std::string>();
    return f;
}

}  // namespace

ResponseStore::ResponseStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    failure_file_ = std::make_unique<JsonlFile>(dir_ / "failures.jsonl");
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (!entry.is_regular_file()) continue;
        std::filesystem::path p = entry.path();
        if (p.extension() != ".jsonl" || p.filename() == "failures.jsonl") continue;
        for (const auto& j : JsonlFile::read(p)) {
            RawResponse r = response_from_json(j);
            by_ref_[r.ref] = std::move(r);
        }
    }
}

JsonlFile& ResponseStore::file_for(const ResponseRef& ref) {
    std::string name = shard_name(ref);
    auto it = files_.find(name);
    if (it == files_.end())
        it = files_.emplace(name, std::make_unique<JsonlFile>(dir_ / name)).first;
    return *it->second;
}

bool ResponseStore::has(const ResponseRef& ref) const {
    std::lock_guard<std::mutex> lk(mu_);
    return by_ref_.count(ref) > 0;
}

const RawResponse* ResponseStore::find(const ResponseRef& ref) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = by_ref_.find(ref);
    return it == by_ref_.end() ? nullptr : &it->second;
}

bool ResponseStore::put(const RawResponse& response) {
    std::lock_guard<std::mutex> lk(mu_);
    if (by_ref_.count(response.ref)) return false;
    by_ref_[response.ref] = response;
    file_for(response.ref).append(to_json(response));
    return true;
}

void ResponseStore::record_failure(const FailureRecord& failure) {
    std::lock_guard<std::mutex> lk(mu_);
    failure_file_->append(failure_to_json(failure));
}

std::vector<FailureRecord> ResponseStore::failures() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<FailureRecord> out;
    for (const auto& j : JsonlFile::read(dir_ / "failures.jsonl"))
        out.push_back(failure_from_json(j));
    return out;
}

std::vector<RawResponse> ResponseStore::all() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<RawResponse> out;
    out.reserve(by_ref_.size());
    for (const auto& [_, r] : by_ref_) out.push_back(r);
    return out;
}

std::vector<RawResponse> ResponseStore::for_model_topic(const std::string& model_label,
                                                        const std::string& topic) const {
    std::lock_guard<std::mutex> lk(mu_);
    std::string prefix = to_slug(topic) + "/";
    std::vector<RawResponse> out;
    for (const auto& [ref, r] : by_ref_) {
        if (ref.model_label != model_label) continue;
        if (ref.question_id.compare(0, prefix.size(), prefix) != 0) continue;
        out.push_back(r);
    }
    return out;
}

std::size_t ResponseStore::size() const {
    std::lock_guard<std::mutex> lk(mu_);
    return by_ref_.size();
}

bool collect_response(const Question& question, const ModelId& model, int repetition,
                      Gateway& gateway, ResponseStore& store, Clock& clock) {
    ResponseRef ref{question.id, model.label, repetition};
    if (store.has(ref)) return false;

    CompletionRequest req;
    req.model = model;
    req.prompt = question.text;
    std::string text = gateway.complete_with_retry(req);

    RawResponse r;
    r.ref = ref;
    r.text = std::move(text);
    r.timestamp = iso8601_utc(clock.now());
    r.request_metadata = {{"provider", model.provider},
                          {"model", model.model_name},
                          {"temperature", "provider-default"}};
    store.put(r);
    return true;
}

CollectSummary collect_all(const AuditConfig& config, const std::vector<Question>& questions,
                           const std::map<std::string, std::shared_ptr<Gateway>>& gateways,
                           ResponseStore& store, Clock& clock) {
    struct Task {
        const Question* question;
        const ModelId* model;
        int repetition;
    };

    CollectSummary summary;
    std::vector<Task> tasks;
    for (const auto& model : config.models) {
        if (!gateways.count(model.provider))
            throw ConfigError("models." + model.label, "no gateway for provider " + model.provider);
        for (const auto& q : questions)
            for (int rep = 1; rep <= config.repetitions; ++rep) {
                if (store.has({q.id, model.label, rep})) {
                    ++summary.already_present;
                    continue;
                }
                tasks.push_back({&q, &model, rep});
            }
    }
    summary.attempted = static_cast<int>(tasks.size());

    std::mutex summary_mu;
    parallel_for_each(tasks, config.parallelism, [&](const Task& task) {
        Gateway& gw = *gateways.at(task.model->provider);
        try {
            if (collect_response(*task.question, *task.model, task.repetition, gw, store, clock)) {
                std::lock_guard<std::mutex> lk(summary_mu);
                ++summary.fetched;
                ++summary.per_model_new[task.model->label];
            }
        } catch (const Error& e) {
            // Exhausted retries, refusals, protocol junk: log and move on so
            // one bad task cannot sink an overnight batch.
            FailureRecord f;
            f.ref = {task.question->id, task.model->label, task.repetition};
            // An exhausted retry budget is reported as the transient class
            // that kept recurring, not as a generic failure.
            if (auto* ex = dynamic_cast<const ExhaustedRetries*>(&e))
                f.error_class = ex->last_class;
            else
                f.error_class = to_string(classify_error(e));
            f.detail = e.what();
            f.timestamp = iso8601_utc(clock.now());
            store.record_failure(f);
            std::lock_guard<std::mutex> lk(summary_mu);
            ++summary.failed;
            ++summary.failures_by_class[f.error_class];
        }
    });
    return summary;
}

}  // namespace choiceeval
