#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "choiceeval/core.hpp"
#include "choiceeval/errors.hpp"

namespace choiceeval {

// One self-contained completion call. There is deliberately no notion of
// conversation history here: every request is a fresh single-turn session,
// which the audit protocol depends on.
struct CompletionRequest {
    ModelId model;
    std::string prompt;
    std::optional<double> temperature;  // provider default when unset
    std::optional<int> max_tokens;
};

// ---------------------------------------------------------------------------
// Clock abstraction so throttling and backoff are testable without waiting.
// ---------------------------------------------------------------------------

class Clock {
  public:
    virtual ~Clock() = default;
    virtual double now() = 0;  // seconds; origin is implementation-defined
    virtual void sleep_for(double seconds) = 0;
};

class SystemClock : public Clock {
  public:
    double now() override;             // unix seconds
    void sleep_for(double s) override;
};

// Virtual clock: now() only advances when something sleeps. Thread-safe.
class FakeClock : public Clock {
  public:
    explicit FakeClock(double start = 0.0) : now_(start) {}
    double now() override;
    void sleep_for(double s) override;
    void advance(double s);
    std::vector<double> sleeps() const;  // every sleep duration, in call order

  private:
    mutable std::mutex mu_;
    double now_;
    std::vector<double> sleeps_;
};

// ---------------------------------------------------------------------------
// Token bucket throttle: capacity = rate_limit_per_min tokens, continuous
// refill at rate_limit_per_min / 60 per second, starts full.
// ---------------------------------------------------------------------------

class TokenBucket {
  public:
    TokenBucket(double rate_per_min, std::shared_ptr<Clock> clock);

    // Blocks (via the clock) until a token is available, then consumes it.
    void acquire();

  private:
    double capacity_;
    double refill_per_s_;
    double tokens_;
    double last_;
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Retry policy, kept as pure functions of (error class, attempt number).
// ---------------------------------------------------------------------------

enum class ErrorClass { Auth, RateLimitHit, TimedOut, Refused, Protocol, Other };

ErrorClass classify_error(const std::exception& e);
std::string to_string(ErrorClass c);

// Only transient provider conditions are worth retrying; refusals and auth
// failures would fail identically on every attempt.
bool retryable(ErrorClass c);

// Exponential backoff with full jitter: jitter01 * base * 2^attempt, where
// attempt counts completed failures (0 for the first retry).
double backoff_delay(double base_s, int attempt, double jitter01);

// ---------------------------------------------------------------------------
// Completion backends
// ---------------------------------------------------------------------------

class CompletionBackend {
  public:
    virtual ~CompletionBackend() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
    // Total calls that reached this backend; the batch drivers use it to
    // prove that resumed runs skip finished work.
    virtual int calls() const = 0;
};

// Request/response mapping for chat-completion style HTTP APIs, split out of
// the backend so the wire format is unit-testable offline.
nlohmann::json build_chat_request(const CompletionRequest& request);
std::string parse_chat_reply(int status, const std::string& body,
                             const std::optional<std::string>& retry_after);

class HttpBackend : public CompletionBackend {
  public:
    explicit HttpBackend(ProviderProfile profile);
    std::string complete(const CompletionRequest& request) override;
    int calls() const override;

  private:
    ProviderProfile profile_;
    mutable std::mutex mu_;
    int calls_ = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock backend. Replies are a deterministic function of
// (script, seed, model label, prompt), so concurrent runs produce identical
// stores. Rules are matched top to bottom; see fixtures/mock_script.json for
// the file shape.
// ---------------------------------------------------------------------------

struct MockRule {
    std::string name;
    std::optional<std::string> model;  // only match this model label
    std::string match;                 // case-insensitive substring; empty matches all
    std::vector<std::string> replies;  // literal replies, consumed in call order
    bool cycle = false;                // wrap instead of clamping at the last reply
    std::vector<std::string> variants; // hash-of-prompt choice
    std::string mode;                  // "adapt" | "questions" | "echo_list" | "recommend"
    std::vector<std::pair<std::string, double>> pool;  // for mode == "recommend"
    int list_size = 5;
    std::optional<std::string> error;  // inject: rate_limited|timeout|refusal|auth|protocol
    int error_times = 0;               // how many matching calls fail before replying
};

class MockScript {
  public:
    static MockScript load(const std::filesystem::path& path);
    static MockScript from_json(const nlohmann::json& j);
    const std::vector<MockRule>& rules() const { return rules_; }

  private:
    std::vector<MockRule> rules_;
};

class MockBackend : public CompletionBackend {
  public:
    MockBackend(MockScript script, uint64_t seed);
    std::string complete(const CompletionRequest& request) override;
    int calls() const override;

  private:
    std::string render(const MockRule& rule, std::size_t rule_index,
                       const CompletionRequest& request);

    MockScript script_;
    uint64_t seed_;
    mutable std::mutex mu_;
    int calls_ = 0;
    // (rule index, prompt) -> times served, for ordered literal replies and
    // injected error counts. Deterministic for a fixed per-prompt call order.
    std::map<std::pair<std::size_t, std::string>, int> counters_;
};

// ---------------------------------------------------------------------------
// Gateway: throttling + retry in front of a backend.
// ---------------------------------------------------------------------------

class Gateway {
  public:
    Gateway(ProviderProfile profile, std::shared_ptr<CompletionBackend> backend,
            std::shared_ptr<Clock> clock, uint64_t seed);

    // Single attempt through the rate limiter. Throws provider errors as-is.
    std::string complete(const CompletionRequest& request);

    // Full policy: up to profile.max_retries retries on transient errors with
    // jittered exponential backoff, honouring any server retry-after hint.
    // Non-transient errors propagate immediately; exhausting the budget
    // throws ExhaustedRetries naming the last error class.
    std::string complete_with_retry(const CompletionRequest& request);

    const ProviderProfile& profile() const { return profile_; }
    CompletionBackend& backend() { return *backend_; }

  private:
    ProviderProfile profile_;
    std::shared_ptr<CompletionBackend> backend_;
    std::shared_ptr<Clock> clock_;
    TokenBucket bucket_;
    std::mt19937_64 jitter_rng_;
    std::mutex jitter_mu_;
};

}  // namespace choiceeval
