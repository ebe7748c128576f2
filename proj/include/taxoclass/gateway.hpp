#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "taxoclass/errors.hpp"
#include "taxoclass/json_lines.hpp"
#include "taxoclass/mock.hpp"
#include "taxoclass/prompts.hpp"
#include "taxoclass/response.hpp"

namespace taxoclass {

struct ProviderConfig {
    std::string endpoint = "mock:";
    std::string model_name = "mock";
    double temperature = 0.0;
    int max_retries = 3;
    std::chrono::milliseconds timeout{60000};
    std::string credentials_env = "TAXOCLASS_API_KEY"; // name of the env var holding the secret
    std::size_t max_in_flight = 8;
    double requests_per_second = 0.0; // 0 = unlimited
    bool retry_on_transport = true;
    bool retry_on_timeout = true;
    bool retry_on_auth = false;

    void validate() const {
        if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
        if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
        if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
        if (requests_per_second < 0) throw ConfigError("requests_per_second must be >= 0");
        if (temperature < 0) throw ConfigError("temperature must be >= 0");
    }

    /// Fills fields present in `j`; unknown keys are rejected.
    static ProviderConfig from_json(const json& j) { return from_json(j, ProviderConfig()); }
    static ProviderConfig from_json(const json& j, ProviderConfig base) {
        if (!j.is_object()) throw ConfigError("provider config must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            try {
                if (k == "endpoint") base.endpoint = it->get<std::string>();
                else if (k == "model_name") base.model_name = it->get<std::string>();
                else if (k == "temperature") base.temperature = it->get<double>();
                else if (k == "max_retries") base.max_retries = it->get<int>();
                else if (k == "timeout_ms") base.timeout = std::chrono::milliseconds(it->get<long long>());
                else if (k == "credentials_env") base.credentials_env = it->get<std::string>();
                else if (k == "max_in_flight") base.max_in_flight = it->get<std::size_t>();
                else if (k == "requests_per_second") base.requests_per_second = it->get<double>();
                else if (k == "retry_on_transport") base.retry_on_transport = it->get<bool>();
                else if (k == "retry_on_timeout") base.retry_on_timeout = it->get<bool>();
                else if (k == "retry_on_auth") base.retry_on_auth = it->get<bool>();
                else throw ConfigError("unknown provider config key '" + k + "'");
            } catch (const json::type_error&) {
                throw ConfigError("provider config key '" + k + "' has the wrong type");
            }
        }
        return base;
    }

    /// TAXOCLASS_LLM_ENDPOINT overrides the endpoint from the config file.
    void apply_environment() {
        if (const char* e = std::getenv("TAXOCLASS_LLM_ENDPOINT"); e && *e) endpoint = e;
    }

    std::string credential() const {
        const char* v = credentials_env.empty() ? nullptr : std::getenv(credentials_env.c_str());
        return v ? v : "";
    }
};

/// Chat-completion backend. Implementations must be safe for concurrent calls.
class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string complete(const PromptSpec& spec, const ProviderConfig& config) const = 0;
};

class MockProvider final : public Provider {
public:
    explicit MockProvider(double threshold = kDefaultMockThreshold) : threshold_(threshold) {}
    std::string complete(const PromptSpec& spec, const ProviderConfig&) const override {
        return mock_complete(spec, threshold_);
    }
    double threshold() const noexcept { return threshold_; }

private:
    double threshold_;
};

/// Wraps a callable; handy for scripted replies.
class FunctionProvider final : public Provider {
public:
    using Fn = std::function<std::string(const PromptSpec&)>;
    explicit FunctionProvider(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const PromptSpec& spec, const ProviderConfig&) const override { return fn_(spec); }

private:
    Fn fn_;
};

/// Single provider request after configuration checks. The returned text is
/// uninterpreted; use extract_response on it.
inline std::string complete(const Provider& provider, const PromptSpec& spec, const ProviderConfig& config) {
    config.validate();
    spec.validate();
    return provider.complete(spec, config);
}

/// Bounds in-flight requests and, optionally, the request rate (token bucket
/// with a burst of one).
class RateLimiter {
public:
    explicit RateLimiter(std::size_t max_in_flight = 8, double requests_per_second = 0.0)
        : max_in_flight_(max_in_flight), rps_(requests_per_second) {}

    class Permit {
    public:
        explicit Permit(RateLimiter* owner) : owner_(owner) {}
        Permit(Permit&& o) noexcept : owner_(std::exchange(o.owner_, nullptr)) {}
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit() {
            if (owner_) owner_->release();
        }

    private:
        RateLimiter* owner_;
    };

    Permit acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
        ++in_flight_;
        if (rps_ > 0) {
            auto now = std::chrono::steady_clock::now();
            auto slot = std::max(now, next_slot_);
            next_slot_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(1.0 / rps_));
            lock.unlock();
            std::this_thread::sleep_until(slot);
        }
        return Permit(this);
    }

    std::size_t in_flight() const {
        std::lock_guard lock(mu_);
        return in_flight_;
    }

private:
    void release() {
        {
            std::lock_guard lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t max_in_flight_;
    std::size_t in_flight_ = 0;
    double rps_;
    std::chrono::steady_clock::time_point next_slot_{};
};

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

/// Newline-delimited {timestamp, template_id, doc_id, attempt, outcome}.
class AuditLog {
public:
    using Clock = std::function<std::string()>;

    explicit AuditLog(std::ostream& out, Clock clock = utc_timestamp) : out_(out), clock_(std::move(clock)) {}

    void record(TemplateId id, std::string_view doc_id, int attempt, std::string_view outcome) {
        ordered_json j;
        j["timestamp"] = clock_();
        j["template_id"] = to_string(id);
        j["doc_id"] = doc_id;
        j["attempt"] = attempt;
        j["outcome"] = outcome;
        std::lock_guard lock(mu_);
        out_ << j.dump() << '\n';
        out_.flush();
    }

private:
    std::mutex mu_;
    std::ostream& out_;
    Clock clock_;
};

struct Attempt {
    int number = 0;
    std::string raw;
    std::string outcome; // ok | parse_error:<kind> | timeout | transport_error | auth_error
};

struct CallResult {
    ParsedResponse response;
    std::vector<Attempt> transcript;
};

inline std::string schema_reminder(Schema s, std::string_view problem) {
    return "Your previous reply could not be used (" + std::string(problem) + "). " + detail::format_hint(s, 5);
}

/// complete + extract_response, reissuing up to `config.max_retries` times.
/// Parse failures add a reminder of the required schema to the next attempt;
/// provider failures are retried when the config allows it.
inline CallResult call_with_retry(const Provider& provider, const PromptSpec& spec, const ProviderConfig& config,
                                  AuditLog* audit = nullptr, std::string_view doc_id = {},
                                  RateLimiter* limiter = nullptr) {
    config.validate();
    spec.validate();
    const int max_attempts = config.max_retries + 1;
    CallResult result;
    PromptSpec current = spec;
    std::string last_raw;
    std::string last_problem;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        auto log = [&](std::string outcome, std::string raw) {
            if (audit) audit->record(spec.template_id, doc_id, attempt, outcome);
            result.transcript.push_back({attempt, std::move(raw), std::move(outcome)});
        };
        std::string raw;
        try {
            std::optional<RateLimiter::Permit> permit;
            if (limiter) permit.emplace(limiter->acquire());
            raw = provider.complete(current, config);
        } catch (const TimeoutError& e) {
            log("timeout", "");
            last_problem = e.what();
            if (!config.retry_on_timeout) throw;
            continue;
        } catch (const AuthError& e) {
            log("auth_error", "");
            last_problem = e.what();
            if (!config.retry_on_auth) throw;
            continue;
        } catch (const ProviderError& e) {
            log("transport_error", "");
            last_problem = e.what();
            if (!config.retry_on_transport) throw;
            continue;
        }
        last_raw = raw;
        try {
            auto parsed = extract_response(raw, spec.expected_schema);
            log("ok", std::move(raw));
            result.response = std::move(parsed);
            return result;
        } catch (const ResponseError& e) {
            log(std::string("parse_error:") + to_string(e.kind()), std::move(raw));
            last_problem = e.what();
            current.retry_note = schema_reminder(spec.expected_schema, e.what());
        }
    }
    throw RetryExhaustedError(std::string(to_string(spec.template_id)) + ": gave up after " +
                                  std::to_string(max_attempts) + " attempt(s): " + last_problem,
                              last_raw, max_attempts);
}

/// Shared entry point for strategies: provider + config + prompt library,
/// with rate limiting, audit logging and call/character counters.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<const Provider> provider, ProviderConfig config = {},
                     PromptLibrary prompts = PromptLibrary::builtin(), std::shared_ptr<AuditLog> audit = nullptr)
        : provider_(std::move(provider)),
          config_(std::move(config)),
          prompts_(std::move(prompts)),
          audit_(std::move(audit)),
          limiter_(std::make_unique<RateLimiter>(config_.max_in_flight, config_.requests_per_second)) {
        if (!provider_) throw ConfigError("gateway needs a provider");
        config_.validate();
    }

    CallResult call(const PromptSpec& spec, std::string_view doc_id = {}) const {
        auto result = call_with_retry(*provider_, spec, config_, audit_.get(), doc_id, limiter_.get());
        std::size_t sent = spec.system_text.size() + spec.user_text().size();
        calls_ += result.transcript.size();
        for (const auto& a : result.transcript) chars_ += sent + a.raw.size();
        return result;
    }

    template <typename T>
    T call_as(const PromptSpec& spec, std::string_view doc_id = {}) const {
        return std::get<T>(call(spec, doc_id).response);
    }

    const PromptLibrary& prompts() const noexcept { return prompts_; }
    const ProviderConfig& config() const noexcept { return config_; }
    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t characters() const noexcept { return chars_.load(); }

private:
    std::shared_ptr<const Provider> provider_;
    ProviderConfig config_;
    PromptLibrary prompts_;
    std::shared_ptr<AuditLog> audit_;
    std::unique_ptr<RateLimiter> limiter_;
    mutable std::atomic<std::size_t> calls_{0};
    mutable std::atomic<std::size_t> chars_{0};
};

} // namespace taxoclass
