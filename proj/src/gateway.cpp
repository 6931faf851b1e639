#ifdef CHOICEEVAL_HAVE_OPENSSL  // keep in sync across every TU that includes httplib
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include "choiceeval/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace choiceeval {

// ---------------------------------------------------------------------------
// clocks
// ---------------------------------------------------------------------------

double SystemClock::now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void SystemClock::sleep_for(double s) {
    if (s <= 0.0) return;
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

double FakeClock::now() {
    std::lock_guard<std::mutex> lock(mu_);
    return now_;
}

void FakeClock::sleep_for(double s) {
    std::lock_guard<std::mutex> lock(mu_);
    if (s > 0.0) now_ += s;
    sleeps_.push_back(s);
}

void FakeClock::advance(double s) {
    std::lock_guard<std::mutex> lock(mu_);
    now_ += s;
}

std::vector<double> FakeClock::sleeps() const {
    std::lock_guard<std::mutex> lock(mu_);
    return sleeps_;
}

// ---------------------------------------------------------------------------
// token bucket
// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_min, std::shared_ptr<Clock> clock)
    : capacity_(std::max(1.0, rate_per_min)),
      refill_per_s_(rate_per_min / 60.0),
      tokens_(capacity_),
      clock_(std::move(clock)) {
    last_ = clock_->now();
}

void TokenBucket::acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    for (;;) {
        double now = clock_->now();
        tokens_ = std::min(capacity_, tokens_ + (now - last_) * refill_per_s_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        double wait = (1.0 - tokens_) / refill_per_s_;
        // Sleep outside the lock so other threads can queue up too.
        lock.unlock();
        clock_->sleep_for(wait);
        lock.lock();
    }
}

// ---------------------------------------------------------------------------
// retry policy
// ---------------------------------------------------------------------------

ErrorClass classify_error(const std::exception& e) {
    if (dynamic_cast<const AuthError*>(&e)) return ErrorClass::Auth;
    if (dynamic_cast<const RateLimited*>(&e)) return ErrorClass::RateLimitHit;
    if (dynamic_cast<const Timeout*>(&e)) return ErrorClass::TimedOut;
    if (dynamic_cast<const Refusal*>(&e)) return ErrorClass::Refused;
    if (dynamic_cast<const ProtocolError*>(&e)) return ErrorClass::Protocol;
    return ErrorClass::Other;
}

std::string to_string(ErrorClass c) {
    switch (c) {
        case ErrorClass::Auth: return "auth";
        case ErrorClass::RateLimitHit: return "rate-limited";
        case ErrorClass::TimedOut: return "timeout";
        case ErrorClass::Refused: return "refusal";
        case ErrorClass::Protocol: return "protocol";
        case ErrorClass::Other: return "other";
    }
    return "other";
}

bool retryable(ErrorClass c) {
    return c == ErrorClass::RateLimitHit || c == ErrorClass::TimedOut;
}

double backoff_delay(double base_s, int attempt, double jitter01) {
    if (base_s <= 0.0) return 0.0;
    double cap = base_s * std::pow(2.0, std::max(0, attempt));
    return jitter01 * cap;
}

// ---------------------------------------------------------------------------
// chat-completions wire format
// ---------------------------------------------------------------------------

nlohmann::json build_chat_request(const CompletionRequest& request) {
    nlohmann::json j;
    j["model"] = request.model.model_name;
    // Exactly one user turn: the protocol requires a fresh session per call.
    j["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
    if (request.temperature) j["temperature"] = *request.temperature;
    if (request.max_tokens) j["max_tokens"] = *request.max_tokens;
    return j;
}

namespace {

std::string body_head(const std::string& body) {
    std::string head = body.substr(0, 160);
    std::replace(head.begin(), head.end(), '\n', ' ');
    return head;
}

}  // namespace

std::string parse_chat_reply(int status, const std::string& body,
                             const std::optional<std::string>& retry_after) {
    if (status == 401 || status == 403) {
        throw AuthError("", "provider rejected credentials (status " + std::to_string(status) +
                                "): " + body_head(body));
    }
    if (status == 429) {
        double after = 0.0;
        if (retry_after) {
            try {
                after = std::stod(*retry_after);
            } catch (...) {
                after = 0.0;  // HTTP-date form; fall back to backoff policy
            }
        }
        throw RateLimited(after);
    }
    if (status == 408 || status == 502 || status == 503 || status == 504) {
        throw Timeout("provider unavailable (status " + std::to_string(status) + ")");
    }
    if (status != 200) {
        throw ProtocolError("unexpected status " + std::to_string(status) + ": " +
                            body_head(body));
    }

    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded())
        throw ProtocolError("reply body is not valid JSON: " + body_head(body));

    if (j.contains("error")) {
        const auto& err = j["error"];
        std::string code = err.value("code", err.value("type", std::string()));
        std::string message = err.value("message", body_head(body));
        if (code.find("content_filter") != std::string::npos ||
            code.find("refus") != std::string::npos)
            throw Refusal(message);
        throw ProtocolError("provider error: " + message);
    }

    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
        throw ProtocolError("reply has no choices: " + body_head(body));
    const auto& choice = j["choices"][0];
    std::string finish = choice.value("finish_reason", std::string());
    if (finish == "content_filter") throw Refusal("completion blocked by content filter");
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string())
        throw ProtocolError("reply has no message content: " + body_head(body));
    return choice["message"]["content"].get<std::string>();
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(ProviderProfile profile) : profile_(std::move(profile)) {}

int HttpBackend::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

std::string HttpBackend::complete(const CompletionRequest& request) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        ++calls_;
    }
    const char* key = nullptr;
    if (!profile_.auth_env_var.empty()) {
        key = std::getenv(profile_.auth_env_var.c_str());
        if (key == nullptr || *key == '\0')
            throw AuthError(profile_.auth_env_var,
                            "environment variable " + profile_.auth_env_var + " is not set");
    }
    if (profile_.base_url.empty())
        throw ConfigError("providers." + profile_.name + ".base_url",
                          "required for HTTP providers");

    // Split "scheme://host[:port]/prefix" into client target and path prefix.
    std::string url = profile_.base_url;
    std::size_t scheme_end = url.find("://");
    std::size_t path_start =
        scheme_end == std::string::npos ? url.find('/') : url.find('/', scheme_end + 3);
    std::string host = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client cli(host);
    auto timeout = std::chrono::milliseconds(static_cast<long>(profile_.timeout_s * 1000.0));
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);

    httplib::Headers headers;
    if (key != nullptr) headers.emplace("Authorization", std::string("Bearer ") + key);

    const std::string body = build_chat_request(request).dump();
    auto res = cli.Post(prefix + "/chat/completions", headers, body, "application/json");
    if (!res) {
        httplib::Error err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
            err == httplib::Error::Write)
            throw Timeout("transport timeout: " + httplib::to_string(err));
        throw ProtocolError("transport failure: " + httplib::to_string(err));
    }

    std::optional<std::string> retry_after;
    if (res->has_header("Retry-After")) retry_after = res->get_header_value("Retry-After");
    try {
        return parse_chat_reply(res->status, res->body, retry_after);
    } catch (const AuthError& e) {
        throw AuthError(profile_.auth_env_var, e.what());
    }
}

// ---------------------------------------------------------------------------
// mock backend
// ---------------------------------------------------------------------------

namespace {

bool icontains(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return true;
    auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                          [](unsigned char a, unsigned char b) {
                              return std::tolower(a) == std::tolower(b);
                          });
    return it != haystack.end();
}

std::vector<std::string> find_quoted(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find('"', pos)) != std::string::npos) {
        std::size_t end = text.find('"', pos + 1);
        if (end == std::string::npos) break;
        out.push_back(text.substr(pos + 1, end - pos - 1));
        pos = end + 1;
    }
    return out;
}

// Lines shaped like "3. text" or "3) text".
std::vector<std::string> find_numbered(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::size_t i = line.find_first_not_of(" \t");
        if (i == std::string::npos || !std::isdigit(static_cast<unsigned char>(line[i])))
            continue;
        std::size_t j = i;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        if (j >= line.size() || (line[j] != '.' && line[j] != ')')) continue;
        ++j;
        std::size_t k = line.find_first_not_of(" \t", j);
        if (k == std::string::npos) continue;
        std::string item = line.substr(k);
        while (!item.empty() && (item.back() == '\r' || item.back() == ' ')) item.pop_back();
        out.push_back(item);
    }
    return out;
}

std::optional<int> parse_exactly_n(const std::string& text) {
    std::size_t pos = text.find("exactly ");
    if (pos == std::string::npos) return std::nullopt;
    pos += 8;
    std::size_t end = pos;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) return std::nullopt;
    return std::stoi(text.substr(pos, end - pos));
}

// Platform-stable uniform double in [0, 1).
double next_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

uint64_t mix_seed(uint64_t seed, const std::string& label, const std::string& prompt) {
    uint64_t h = fnv1a(label, seed ^ 0x9e3779b97f4a7c15ull);
    return fnv1a(prompt, h);
}

const std::vector<std::string>& question_aspects() {
    static const std::vector<std::string> aspects = {
        "when reliability matters most",
        "on a tight budget",
        "for a last-minute decision",
        "for frequent use",
        "for a first-time buyer",
        "when comfort is the priority",
        "for long-term value",
        "when comparing premium options",
        "for family needs",
        "when sustainability matters",
        "for business purposes",
        "when service quality is key",
        "for special occasions",
        "when availability is limited",
        "for everyday use",
        "when reviews disagree",
        "for a group decision",
        "when upgrading from a basic option",
        "as a gift for someone picky",
        "when loyalty programs matter",
        "for off-season plans",
        "when safety is the main concern",
        "in an international context",
        "when customization matters",
        "for beginners",
        "for experienced users",
        "when time is short",
        "when certifications matter",
    };
    return aspects;
}

}  // namespace

MockScript MockScript::from_json(const nlohmann::json& j) {
    MockScript s;
    if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array())
        throw ConfigError("rules", "mock script must be an object with a 'rules' array");
    for (std::size_t i = 0; i < j["rules"].size(); ++i) {
        const auto& rj = j["rules"][i];
        const std::string path = "rules[" + std::to_string(i) + "]";
        MockRule r;
        r.name = rj.value("name", path);
        if (rj.contains("model")) r.model = rj["model"].get<std::string>();
        r.match = rj.value("match", std::string());
        if (rj.contains("replies")) r.replies = rj["replies"].get<std::vector<std::string>>();
        r.cycle = rj.value("cycle", false);
        if (rj.contains("variants")) r.variants = rj["variants"].get<std::vector<std::string>>();
        r.mode = rj.value("mode", std::string());
        if (rj.contains("pool")) {
            for (const auto& pj : rj["pool"]) {
                std::string name = pj.at("name").get<std::string>();
                double weight = pj.value("weight", 1.0);
                if (weight <= 0.0)
                    throw ConfigError(path + ".pool", "weights must be positive");
                r.pool.emplace_back(std::move(name), weight);
            }
        }
        r.list_size = rj.value("list_size", 5);
        if (rj.contains("error")) {
            r.error = rj["error"].get<std::string>();
            r.error_times = rj.value("times", 1);
        }
        if (!r.mode.empty() && r.mode != "adapt" && r.mode != "questions" &&
            r.mode != "echo_list" && r.mode != "recommend")
            throw ConfigError(path + ".mode", "unknown mode '" + r.mode + "'");
        if (r.mode == "recommend" && r.pool.size() < static_cast<std::size_t>(r.list_size))
            throw ConfigError(path + ".pool", "recommend rules need at least list_size entries");
        if (r.replies.empty() && r.variants.empty() && r.mode.empty() && !r.error)
            throw ConfigError(path, "rule has no reply source (replies/variants/mode/error)");
        s.rules_.push_back(std::move(r));
    }
    return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open mock script: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("", "mock script is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

MockBackend::MockBackend(MockScript script, uint64_t seed)
    : script_(std::move(script)), seed_(seed) {}

int MockBackend::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

std::string MockBackend::complete(const CompletionRequest& request) {
    const MockRule* rule = nullptr;
    std::size_t rule_index = 0;
    for (std::size_t i = 0; i < script_.rules().size(); ++i) {
        const MockRule& r = script_.rules()[i];
        if (r.model && *r.model != request.model.label) continue;
        if (!icontains(request.prompt, r.match)) continue;
        rule = &r;
        rule_index = i;
        break;
    }
    if (rule == nullptr) {
        std::string head = request.prompt.substr(0, 120);
        std::replace(head.begin(), head.end(), '\n', ' ');
        throw UnscriptedPrompt("no mock rule matches model '" + request.model.label +
                               "' prompt: \"" + head + "\"");
    }

    int served;
    {
        std::lock_guard<std::mutex> lock(mu_);
        ++calls_;
        served = counters_[{rule_index, request.prompt}]++;
    }

    if (rule->error && served < rule->error_times) {
        const std::string& kind = *rule->error;
        if (kind == "rate_limited") throw RateLimited(0.0);
        if (kind == "timeout") throw Timeout("scripted timeout");
        if (kind == "refusal") throw Refusal("scripted refusal");
        if (kind == "auth") throw AuthError("MOCK_API_KEY", "scripted auth failure");
        if (kind == "protocol") throw ProtocolError("scripted protocol error");
        throw ConfigError("rules." + rule->name + ".error", "unknown error kind '" + kind + "'");
    }
    int reply_seq = rule->error ? served - rule->error_times : served;

    if (!rule->replies.empty()) {
        std::size_t n = rule->replies.size();
        std::size_t idx = rule->cycle ? static_cast<std::size_t>(reply_seq) % n
                                      : std::min<std::size_t>(reply_seq, n - 1);
        return rule->replies[idx];
    }
    if (!rule->variants.empty()) {
        uint64_t h = mix_seed(seed_, request.model.label, request.prompt);
        return rule->variants[h % rule->variants.size()];
    }
    return render(*rule, rule_index, request);
}

std::string MockBackend::render(const MockRule& rule, std::size_t rule_index,
                                const CompletionRequest& request) {
    const std::string& prompt = request.prompt;

    if (rule.mode == "adapt") {
        auto quoted = find_quoted(prompt);
        std::string cluster = quoted.size() > 0 ? quoted[0] : "General";
        std::string topic = quoted.size() > 1 ? quoted[1] : "the topic";
        return "Name: " + cluster + " — " + topic + "\nDescription: A " + cluster +
               " persona making " + topic + " decisions.";
    }

    if (rule.mode == "questions") {
        auto quoted = find_quoted(prompt);
        std::string topic = quoted.empty() ? "options" : quoted[0];
        int n = parse_exactly_n(prompt).value_or(5);
        const auto& aspects = question_aspects();
        static const char* stems[] = {
            "What are the best %s options %s?",
            "Which %s would you recommend %s?",
            "How should I choose between %s %s?",
            "What %s stand out %s?",
        };
        // Each distinct prompt (the persona is part of it) gets its own
        // aspect order; otherwise every persona would ask the identical
        // questions and downstream per-cluster statistics would collapse.
        std::vector<std::size_t> order(aspects.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(mix_seed(seed_ + rule_index, request.model.label, prompt));
        std::shuffle(order.begin(), order.end(), rng);
        std::ostringstream out;
        for (int i = 1; i <= n; ++i) {
            std::size_t pick = order[(i - 1) % order.size()];
            std::string aspect = aspects[pick];
            if (static_cast<std::size_t>(i) > aspects.size())
                aspect += " (scenario " + std::to_string(i) + ")";
            char line[512];
            std::snprintf(line, sizeof line, stems[pick % 4], topic.c_str(), aspect.c_str());
            out << i << ". " << line << "\n";
        }
        return out.str();
    }

    if (rule.mode == "echo_list") {
        auto items = find_numbered(prompt);
        std::ostringstream out;
        std::size_t n = std::min<std::size_t>(items.size(), 5);
        for (std::size_t i = 0; i < n; ++i) out << (i + 1) << ". " << items[i] << "\n";
        return out.str();
    }

    if (rule.mode == "recommend") {
        std::mt19937_64 rng(mix_seed(seed_ + rule_index, request.model.label, prompt));
        auto pool = rule.pool;
        std::ostringstream out;
        out << "Here are some options worth considering:\n";
        for (int k = 0; k < rule.list_size && !pool.empty(); ++k) {
            double total = 0.0;
            for (const auto& [name, w] : pool) total += w;
            double r = next_unit(rng) * total;
            std::size_t pick = 0;
            double acc = 0.0;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                acc += pool[i].second;
                if (r < acc) {
                    pick = i;
                    break;
                }
                pick = i;  // numeric slack lands on the last entry
            }
            out << (k + 1) << ". " << pool[pick].first << " — a solid fit for this need.\n";
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        out << "Any of these should serve you well.\n";
        return out.str();
    }

    throw ConfigError("rules." + rule.name + ".mode", "rule has no usable reply source");
}

// ---------------------------------------------------------------------------
// gateway
// ---------------------------------------------------------------------------

Gateway::Gateway(ProviderProfile profile, std::shared_ptr<CompletionBackend> backend,
                 std::shared_ptr<Clock> clock, uint64_t seed)
    : profile_(std::move(profile)),
      backend_(std::move(backend)),
      clock_(clock),
      bucket_(profile_.rate_limit_per_min, clock),
      jitter_rng_(seed ^ fnv1a(profile_.name)) {}

std::string Gateway::complete(const CompletionRequest& request) {
    bucket_.acquire();
    return backend_->complete(request);
}

std::string Gateway::complete_with_retry(const CompletionRequest& request) {
    int attempt = 0;  // completed failures so far
    for (;;) {
        try {
            return complete(request);
        } catch (const std::exception& e) {
            ErrorClass cls = classify_error(e);
            if (!retryable(cls)) throw;
            if (attempt >= profile_.max_retries)
                throw ExhaustedRetries(attempt + 1, to_string(cls), e.what());
            double jitter;
            {
                std::lock_guard<std::mutex> lock(jitter_mu_);
                jitter = next_unit(jitter_rng_);
            }
            double delay = backoff_delay(profile_.backoff_base_s, attempt, jitter);
            if (const auto* rl = dynamic_cast<const RateLimited*>(&e))
                delay = std::max(delay, rl->retry_after_s);
            clock_->sleep_for(delay);
            ++attempt;
        }
    }
}

}  // namespace choiceeval
