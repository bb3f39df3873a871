#pragma once
// Uniform access to mentor/intern/judge model backends: remote chat-completion
// endpoints, a deterministic scripted simulator, and a record/replay cache.

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mics/types.hpp"

namespace mics::gw {

struct GatewayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EndpointUnavailable : GatewayError {
    using GatewayError::GatewayError;
};
struct CacheMiss : GatewayError {
    using GatewayError::GatewayError;
};
struct EmptyCompletion : GatewayError {
    using GatewayError::GatewayError;
};
struct UnparseableVerdict : GatewayError {
    using GatewayError::GatewayError;
};

struct ChatRequest {
    std::string role;            // mentor | intern | judge | generator
    std::string endpoint_label;  // roster member label
    std::string system_prompt;
    std::string user_prompt;
    std::vector<std::pair<ImageRef, std::string>> image_payloads;  // ref + base64 bytes
    double temperature = 0.0;
    int max_tokens = 2048;

    // Stable digest over all fields; cache key.
    std::string request_hash() const;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const ChatRequest& req) = 0;
};

// Deterministic lookup-table backend for desk-scale runs and hermetic tests.
// Rules are checked in insertion order; a rule fires when its role/endpoint
// filters match and every needle occurs in the concatenated prompts.
class ScriptedBackend : public Backend {
public:
    void add_rule(std::string role, std::string endpoint_label,
                  std::vector<std::string> needles, std::string response);
    void set_default_response(std::string response) { default_response_ = std::move(response); }

    std::string complete(const ChatRequest& req) override;

private:
    struct Rule {
        std::string role;      // empty = any
        std::string endpoint;  // empty = any
        std::vector<std::string> needles;
        std::string response;
    };
    std::vector<Rule> rules_;
    std::string default_response_;
};

struct RetryPolicy {
    int attempts = 3;
    int base_backoff_ms = 1000;  // doubles per retry
};

struct EndpointConfig {
    std::string base_url;   // e.g. http://host:port
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
};

// Chat-completion HTTP client (message list + temperature + optional image
// attachments). Retries with exponential backoff, then EndpointUnavailable.
class HttpChatBackend : public Backend {
public:
    HttpChatBackend(std::map<std::string, EndpointConfig> endpoints_by_label,
                    RetryPolicy retry);

    std::string complete(const ChatRequest& req) override;

private:
    std::map<std::string, EndpointConfig> endpoints_;
    RetryPolicy retry_;
};

enum class CacheMode { Record, Replay };

// Record/replay wrapper keyed by request_hash. Replay serves only cached
// entries and throws CacheMiss otherwise; record consults the store first,
// so a key is written at most once.
class CachingBackend : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::string store_path, CacheMode mode);

    std::string complete(const ChatRequest& req) override;

private:
    std::shared_ptr<Backend> inner_;
    std::string store_path_;
    CacheMode mode_;
    std::mutex mu_;
    std::unordered_map<std::string, std::string> entries_;
};

std::shared_ptr<Backend> with_cache(std::shared_ptr<Backend> inner,
                                    const std::string& store_path, CacheMode mode);

// Prompt templates for the three search roles. Placeholders: {patient_info},
// {question}, {ground_truth}, {prefix}, {salt}, {generated}.
struct PromptTemplates {
    std::string mentor_system;
    std::string mentor_user;
    std::string intern_system;
    std::string intern_user;
    std::string judge_system;
    std::string judge_user;

    static PromptTemplates defaults();
    // Loads <dir>/{mentor,intern,judge}_{system,user}.txt; missing files keep defaults.
    static PromptTemplates load_dir(const std::string& dir);
};

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& vars);

struct MentorSolution {
    std::vector<std::string> steps;  // first step is the candidate
    std::string derived_answer;

    bool operator==(const MentorSolution&) const = default;
};

// "Step N:" marker parsing. A body without markers is one step.
MentorSolution parse_mentor_solution(const std::string& body);
std::string join_steps(const std::vector<std::string>& steps);

struct GatewayConfig {
    std::vector<MentorId> mentors;
    std::vector<InternId> interns;
    JudgeId judge;
    RetryPolicy retry;
    int inflight_limit = 16;
    int max_tokens = 2048;
    std::string cache_path;
    std::string cache_mode;  // "", "record", "replay"
    std::string prompt_dir;
    std::map<std::string, EndpointConfig> endpoints;  // by roster label

    // Default rosters: 3 mentors; 3 intern backends x temperatures
    // {0.3, 1.2} = 6 interns; one judge.
    static GatewayConfig defaults();
    static GatewayConfig from_json(const json& j);
    json to_json() const;
};

// Role-level operations over a backend: prompt construction, response
// parsing, the mentor step-reuse cache, and the global in-flight limit.
class ModelGateway {
public:
    ModelGateway(std::shared_ptr<Backend> backend, PromptTemplates templates,
                 int max_tokens = 2048, int inflight_limit = 16);

    // Full continuation of `prefix`; the first returned step is the candidate.
    // Serves from the step-reuse cache when this mentor authored the last
    // accepted step and its previous solution still has steps left.
    MentorSolution mentor_extend(const MentorId& mentor, const VqaItem& item,
                                 const ReasoningPath& prefix, const std::string& salt = "");

    // Final answer extracted from the intern's completion. Interns see only
    // Q, the path so far, and images; never the ground truth.
    std::string intern_complete(const InternId& intern, const VqaItem& item,
                                const ReasoningPath& prefix_plus_candidate);

    // Byte-equal answers short-circuit to true without a judge call.
    bool judge_equivalent(const JudgeId& judge, const std::string& generated,
                          const std::string& ground_truth, const std::string& question);

    void clear_reuse_cache();

    // call counters, exposed for budget assertions
    int mentor_calls() const { return mentor_calls_.load(); }
    int intern_calls() const { return intern_calls_.load(); }
    int judge_calls() const { return judge_calls_.load(); }

private:
    std::string run(ChatRequest req);
    static std::string prefix_digest(const ReasoningPath& prefix);

    std::shared_ptr<Backend> backend_;
    PromptTemplates templates_;
    int max_tokens_;
    std::counting_semaphore<> inflight_;

    std::mutex reuse_mu_;
    // (mentor label, accepted-prefix digest) -> remaining solution
    std::map<std::pair<std::string, std::string>, MentorSolution> reuse_;

    std::atomic<int> mentor_calls_{0};
    std::atomic<int> intern_calls_{0};
    std::atomic<int> judge_calls_{0};
};

}  // namespace mics::gw
