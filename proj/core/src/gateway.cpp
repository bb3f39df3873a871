#include "mics/gateway.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include <httplib.h>

#include "mics/digest.hpp"
#include "mics/jsonl.hpp"

namespace mics::gw {

using nlohmann::json;

static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// --- ChatRequest ------------------------------------------------------------

std::string ChatRequest::request_hash() const {
    json j{{"role", role},
           {"endpoint_label", endpoint_label},
           {"system_prompt", system_prompt},
           {"user_prompt", user_prompt},
           {"temperature", temperature},
           {"max_tokens", max_tokens}};
    json imgs = json::array();
    for (const auto& [ref, b64] : image_payloads) imgs.push_back({{"id", ref.image_id}, {"b64", b64}});
    j["images"] = imgs;
    return md5_hex(j.dump());
}

// --- ScriptedBackend --------------------------------------------------------

void ScriptedBackend::add_rule(std::string role, std::string endpoint_label,
                               std::vector<std::string> needles, std::string response) {
    rules_.push_back({std::move(role), std::move(endpoint_label), std::move(needles),
                      std::move(response)});
}

std::string ScriptedBackend::complete(const ChatRequest& req) {
    const std::string haystack = req.system_prompt + "\n" + req.user_prompt;
    for (const auto& rule : rules_) {
        if (!rule.role.empty() && rule.role != req.role) continue;
        if (!rule.endpoint.empty() && rule.endpoint != req.endpoint_label) continue;
        bool all = true;
        for (const auto& n : rule.needles) {
            if (haystack.find(n) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) return rule.response;
    }
    return default_response_;
}

// --- HttpChatBackend --------------------------------------------------------

HttpChatBackend::HttpChatBackend(std::map<std::string, EndpointConfig> endpoints_by_label,
                                 RetryPolicy retry)
    : endpoints_(std::move(endpoints_by_label)), retry_(retry) {}

static json build_chat_body(const EndpointConfig& ep, const ChatRequest& req) {
    json messages = json::array();
    if (!req.system_prompt.empty())
        messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
    if (req.image_payloads.empty()) {
        messages.push_back({{"role", "user"}, {"content", req.user_prompt}});
    } else {
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", req.user_prompt}});
        for (const auto& [ref, b64] : req.image_payloads) {
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:image/png;base64," + b64}}}});
        }
        messages.push_back({{"role", "user"}, {"content", parts}});
    }
    return json{{"model", ep.model},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens},
                {"messages", messages}};
}

std::string HttpChatBackend::complete(const ChatRequest& req) {
    auto it = endpoints_.find(req.endpoint_label);
    if (it == endpoints_.end())
        throw EndpointUnavailable("no endpoint configured for label " + req.endpoint_label);
    const EndpointConfig& ep = it->second;

    const json body = build_chat_body(ep, req);
    int backoff_ms = retry_.base_backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt < retry_.attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        httplib::Client client(ep.base_url);
        httplib::Headers headers;
        if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
        auto res = client.Post(ep.path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error";
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            json parsed = json::parse(res->body);
            return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            last_error = std::string("malformed body: ") + e.what();
            continue;
        }
    }
    throw EndpointUnavailable("endpoint " + req.endpoint_label + " unavailable after " +
                              std::to_string(retry_.attempts) + " attempts: " + last_error);
}

// --- CachingBackend ---------------------------------------------------------

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, std::string store_path,
                               CacheMode mode)
    : inner_(std::move(inner)), store_path_(std::move(store_path)), mode_(mode) {
    std::ifstream in(store_path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            entries_[j.at("key").get<std::string>()] = j.at("response").get<std::string>();
        } catch (const json::exception&) {
            continue;
        }
    }
}

std::string CachingBackend::complete(const ChatRequest& req) {
    const std::string key = req.request_hash();
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(key);
        if (it != entries_.end()) return it->second;
    }
    if (mode_ == CacheMode::Replay)
        throw CacheMiss("replay cache has no entry for request " + key);

    std::string response = inner_->complete(req);

    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = entries_.emplace(key, response);
    if (inserted) {
        std::ofstream out(store_path_, std::ios::app);
        out << json{{"key", key}, {"response", response}}.dump() << "\n";
    }
    return it->second;
}

std::shared_ptr<Backend> with_cache(std::shared_ptr<Backend> inner, const std::string& store_path,
                                    CacheMode mode) {
    return std::make_shared<CachingBackend>(std::move(inner), store_path, mode);
}

// --- prompt templates -------------------------------------------------------

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        auto open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        auto close = tmpl.find('}', open);
        if (close == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        const std::string key = tmpl.substr(open + 1, close - open - 1);
        auto it = vars.find(key);
        if (it != vars.end()) out += it->second;
        else out += tmpl.substr(open, close - open + 1);  // unknown placeholder kept verbatim
        pos = close + 1;
    }
    return out;
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.mentor_system =
        "You are a senior clinician solving a medical visual question step by step.\n"
        "Continue the reasoning from the steps already taken and write a complete solution.\n"
        "Write each reasoning step on its own line, starting with 'Step N:'.\n"
        "Finish with a single line 'Final answer: <answer>'.";
    t.mentor_user =
        "Patient information:\n{patient_info}\n\n"
        "Question:\n{question}\n\n"
        "Reference answer (for your guidance only):\n{ground_truth}\n\n"
        "Reasoning so far:\n{prefix}\n{salt}\n"
        "Continue the reasoning from the steps above and solve the problem completely.";
    t.intern_system =
        "You are a clinical trainee. A senior colleague has started the reasoning below.\n"
        "Continue their reasoning to reach the answer.\n"
        "Finish with a single line 'Final answer: <answer>'.";
    t.intern_user =
        "Question:\n{question}\n\n"
        "Guidance so far:\n{prefix}\n\n"
        "Complete the reasoning and state your final answer.";
    t.judge_system =
        "You compare a candidate answer against the ground truth for a question.\n"
        "Reply with exactly 'Yes' or 'No' on the first line.";
    t.judge_user =
        "Question:\n{question}\n\n"
        "Ground truth:\n{ground_truth}\n\n"
        "Candidate answer:\n{generated}\n\n"
        "Does the candidate answer convey the same meaning as the ground truth?";
    return t;
}

static void maybe_load(const std::filesystem::path& p, std::string& slot) {
    std::ifstream in(p);
    if (!in) return;
    std::stringstream ss;
    ss << in.rdbuf();
    slot = ss.str();
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
    PromptTemplates t = defaults();
    std::filesystem::path d(dir);
    maybe_load(d / "mentor_system.txt", t.mentor_system);
    maybe_load(d / "mentor_user.txt", t.mentor_user);
    maybe_load(d / "intern_system.txt", t.intern_system);
    maybe_load(d / "intern_user.txt", t.intern_user);
    maybe_load(d / "judge_system.txt", t.judge_system);
    maybe_load(d / "judge_user.txt", t.judge_user);
    return t;
}

// --- solution parsing -------------------------------------------------------

static const std::regex kStepRe(R"((^|\n)[ \t]*(?:\*\*)?[Ss]tep[ \t]+[0-9]+[ \t]*[:.][ \t]*)");
static const std::regex kAnswerRe(R"((^|\n)[ \t]*(?:\*\*)?[Ff]inal [Aa]nswer[ \t]*:[ \t]*)");

MentorSolution parse_mentor_solution(const std::string& body) {
    // Split off the trailing final-answer line first.
    std::string head = body;
    std::string answer;
    {
        auto begin = std::sregex_iterator(body.begin(), body.end(), kAnswerRe);
        auto end = std::sregex_iterator();
        std::sregex_iterator last = end;
        for (auto it = begin; it != end; ++it) last = it;
        if (last != end) {
            answer = trim(body.substr(last->position(0) + last->length(0)));
            head = body.substr(0, last->position(0));
        }
    }

    MentorSolution sol;
    std::vector<std::pair<std::size_t, std::size_t>> markers;  // (start, end-of-marker)
    for (auto it = std::sregex_iterator(head.begin(), head.end(), kStepRe);
         it != std::sregex_iterator(); ++it) {
        markers.emplace_back(it->position(0), it->position(0) + it->length(0));
    }
    if (markers.empty()) {
        std::string single = trim(head);
        if (single.empty()) single = trim(body);
        if (!single.empty()) {
            spdlog::debug("mentor solution without step markers; treating as one step");
            sol.steps.push_back(single);
        }
    } else {
        for (std::size_t i = 0; i < markers.size(); ++i) {
            std::size_t content_begin = markers[i].second;
            std::size_t content_end = (i + 1 < markers.size()) ? markers[i + 1].first : head.size();
            std::string step = trim(head.substr(content_begin, content_end - content_begin));
            if (!step.empty()) sol.steps.push_back(std::move(step));
        }
    }
    if (sol.steps.empty() && !answer.empty()) sol.steps.push_back(answer);
    sol.derived_answer = !answer.empty() ? answer : (sol.steps.empty() ? "" : sol.steps.back());
    return sol;
}

std::string join_steps(const std::vector<std::string>& steps) {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        out += "Step " + std::to_string(i + 1) + ": " + steps[i];
        if (i + 1 < steps.size()) out += "\n";
    }
    return out;
}

// --- GatewayConfig ----------------------------------------------------------

GatewayConfig GatewayConfig::defaults() {
    GatewayConfig c;
    for (int i = 0; i < 3; ++i)
        c.mentors.push_back({i, "mentor-" + std::to_string(i + 1), 0.7});
    int idx = 0;
    for (int b = 0; b < 3; ++b) {
        for (double temp : {0.3, 1.2}) {
            c.interns.push_back({idx++, "intern-" + std::to_string(b + 1), temp});
        }
    }
    c.judge = {"judge", 0.0};
    return c;
}

GatewayConfig GatewayConfig::from_json(const json& j) {
    GatewayConfig c = defaults();
    if (j.contains("mentors")) {
        c.mentors.clear();
        int i = 0;
        for (const auto& m : j.at("mentors")) {
            c.mentors.push_back({i++, m.at("label").get<std::string>(), m.value("temperature", 0.7)});
        }
    }
    if (j.contains("interns")) {
        c.interns.clear();
        int i = 0;
        for (const auto& m : j.at("interns")) {
            for (double temp : m.value("temperatures", std::vector<double>{m.value("temperature", 0.3)})) {
                c.interns.push_back({i++, m.at("label").get<std::string>(), temp});
            }
        }
    }
    if (j.contains("judge")) {
        c.judge = {j.at("judge").value("label", "judge"), j.at("judge").value("temperature", 0.0)};
    }
    if (j.contains("retry")) {
        c.retry.attempts = j.at("retry").value("attempts", 3);
        c.retry.base_backoff_ms = j.at("retry").value("base_backoff_ms", 1000);
    }
    c.inflight_limit = j.value("inflight_limit", 16);
    c.max_tokens = j.value("max_tokens", 2048);
    c.cache_path = j.value("cache_path", "");
    c.cache_mode = j.value("cache_mode", "");
    c.prompt_dir = j.value("prompt_dir", "");
    if (j.contains("endpoints")) {
        for (const auto& [label, ep] : j.at("endpoints").items()) {
            EndpointConfig e;
            e.base_url = ep.value("base_url", "");
            e.path = ep.value("path", "/v1/chat/completions");
            e.model = ep.value("model", "");
            e.api_key = ep.value("api_key", "");
            c.endpoints[label] = e;
        }
    }
    // roster uniqueness: (label, temperature) pairs
    auto check_unique = [](const auto& roster, const char* what) {
        std::map<std::pair<std::string, double>, int> seen;
        for (const auto& m : roster) {
            if (++seen[{m.label, m.temperature}] > 1)
                throw std::invalid_argument(std::string(what) + " roster has duplicate (label, temperature): " + m.label);
        }
    };
    check_unique(c.mentors, "mentor");
    check_unique(c.interns, "intern");
    if (c.mentors.empty()) throw std::invalid_argument("mentor roster must be non-empty");
    if (c.interns.empty()) throw std::invalid_argument("intern roster must be non-empty");
    return c;
}

json GatewayConfig::to_json() const {
    json j;
    j["mentors"] = json::array();
    for (const auto& m : this->mentors)
        j["mentors"].push_back({{"label", m.label}, {"temperature", m.temperature}});
    j["interns"] = json::array();
    for (const auto& m : this->interns)
        j["interns"].push_back({{"label", m.label}, {"temperature", m.temperature}});
    j["judge"] = {{"label", judge.label}, {"temperature", judge.temperature}};
    j["retry"] = {{"attempts", retry.attempts}, {"base_backoff_ms", retry.base_backoff_ms}};
    j["inflight_limit"] = inflight_limit;
    j["max_tokens"] = max_tokens;
    j["cache_path"] = cache_path;
    j["cache_mode"] = cache_mode;
    j["prompt_dir"] = prompt_dir;
    return j;
}

// --- ModelGateway -----------------------------------------------------------

ModelGateway::ModelGateway(std::shared_ptr<Backend> backend, PromptTemplates templates,
                           int max_tokens, int inflight_limit)
    : backend_(std::move(backend)),
      templates_(std::move(templates)),
      max_tokens_(max_tokens),
      inflight_(inflight_limit) {}

std::string ModelGateway::run(ChatRequest req) {
    inflight_.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{inflight_};
    return backend_->complete(req);
}

static std::string render_prefix(const ReasoningPath& prefix) {
    std::vector<std::string> texts;
    texts.reserve(prefix.steps.size());
    for (const auto& s : prefix.steps) texts.push_back(s.text);
    return join_steps(texts);
}

std::string ModelGateway::prefix_digest(const ReasoningPath& prefix) {
    std::string buf;
    for (const auto& s : prefix.steps) {
        buf += s.text;
        buf += '\x1f';
    }
    return md5_hex(buf);
}

MentorSolution ModelGateway::mentor_extend(const MentorId& mentor, const VqaItem& item,
                                           const ReasoningPath& prefix, const std::string& salt) {
    const std::string key_digest = md5_hex(item.item_id + "\x1f" + salt) + prefix_digest(prefix);
    {
        std::lock_guard<std::mutex> lock(reuse_mu_);
        auto it = reuse_.find({mentor.label, key_digest});
        if (it != reuse_.end()) {
            MentorSolution sol = it->second;
            // remember the continuation in case this candidate wins again
            if (sol.steps.size() > 1) {
                ReasoningPath extended = prefix;
                extended.steps.push_back({sol.steps.front(), mentor.index,
                                          static_cast<int>(prefix.steps.size()) + 1});
                MentorSolution tail{std::vector<std::string>(sol.steps.begin() + 1, sol.steps.end()),
                                    sol.derived_answer};
                reuse_[{mentor.label, md5_hex(item.item_id + "\x1f" + salt) + prefix_digest(extended)}] =
                    std::move(tail);
            }
            return sol;
        }
    }

    ChatRequest req;
    req.role = "mentor";
    req.endpoint_label = mentor.label;
    req.system_prompt = templates_.mentor_system;
    req.user_prompt = render_template(
        templates_.mentor_user,
        {{"patient_info", item.patient_info},
         {"question", item.question},
         {"ground_truth", item.ground_truth},
         {"prefix", render_prefix(prefix)},
         {"salt", salt}});
    req.temperature = mentor.temperature;
    req.max_tokens = max_tokens_;
    for (const auto& img : item.images) req.image_payloads.emplace_back(img, "");

    mentor_calls_.fetch_add(1);
    MentorSolution sol = parse_mentor_solution(run(std::move(req)));
    if (sol.steps.empty())
        throw EndpointUnavailable("mentor " + mentor.label + " returned an empty solution");

    if (sol.steps.size() > 1) {
        ReasoningPath extended = prefix;
        extended.steps.push_back({sol.steps.front(), mentor.index,
                                  static_cast<int>(prefix.steps.size()) + 1});
        MentorSolution tail{std::vector<std::string>(sol.steps.begin() + 1, sol.steps.end()),
                            sol.derived_answer};
        std::lock_guard<std::mutex> lock(reuse_mu_);
        reuse_[{mentor.label, md5_hex(item.item_id + "\x1f" + salt) + prefix_digest(extended)}] =
            std::move(tail);
    }
    return sol;
}

std::string ModelGateway::intern_complete(const InternId& intern, const VqaItem& item,
                                          const ReasoningPath& prefix_plus_candidate) {
    ChatRequest req;
    req.role = "intern";
    req.endpoint_label = intern.label;
    req.system_prompt = templates_.intern_system;
    req.user_prompt = render_template(templates_.intern_user,
                                      {{"question", item.question},
                                       {"prefix", render_prefix(prefix_plus_candidate)}});
    req.temperature = intern.temperature;
    req.max_tokens = max_tokens_;
    for (const auto& img : item.images) req.image_payloads.emplace_back(img, "");

    intern_calls_.fetch_add(1);
    const std::string completion = run(std::move(req));

    // Take the text after the last final-answer marker; otherwise the whole body.
    std::string answer;
    auto begin = std::sregex_iterator(completion.begin(), completion.end(), kAnswerRe);
    auto end = std::sregex_iterator();
    std::sregex_iterator last = end;
    for (auto it = begin; it != end; ++it) last = it;
    if (last != end) answer = trim(completion.substr(last->position(0) + last->length(0)));
    else answer = trim(completion);

    if (answer.empty()) {
        spdlog::warn("intern {} (T={}) returned an empty completion", intern.label,
                     intern.temperature);
        throw EmptyCompletion("intern " + intern.label + " produced no answer");
    }
    return answer;
}

bool ModelGateway::judge_equivalent(const JudgeId& judge, const std::string& generated,
                                    const std::string& ground_truth, const std::string& question) {
    if (ground_truth.empty()) throw std::invalid_argument("ground_truth must be non-empty");
    if (generated == ground_truth) return true;  // identity short-circuit, no judge call

    ChatRequest req;
    req.role = "judge";
    req.endpoint_label = judge.label;
    req.system_prompt = templates_.judge_system;
    req.user_prompt = render_template(templates_.judge_user,
                                      {{"question", question},
                                       {"ground_truth", ground_truth},
                                       {"generated", generated}});
    req.temperature = judge.temperature;
    req.max_tokens = max_tokens_;

    judge_calls_.fetch_add(1);
    const std::string reply = run(std::move(req));

    // leading token of the first line decides the verdict
    std::string first_line = trim(reply.substr(0, reply.find('\n')));
    std::string token;
    for (char ch : first_line) {
        if (std::isalpha(static_cast<unsigned char>(ch)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else if (!token.empty())
            break;
    }
    if (token == "yes") return true;
    if (token == "no") return false;
    spdlog::warn("judge verdict unparseable: '{}'", first_line);
    throw UnparseableVerdict("judge verdict does not lead with yes/no: " + first_line);
}

void ModelGateway::clear_reuse_cache() {
    std::lock_guard<std::mutex> lock(reuse_mu_);
    reuse_.clear();
}

}  // namespace mics::gw
