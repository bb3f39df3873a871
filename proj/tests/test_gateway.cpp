#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "mics/gateway.hpp"

using namespace mics;
using namespace mics::gw;

namespace {

struct CountingBackend : Backend {
    std::shared_ptr<Backend> inner;
    std::atomic<int> calls{0};
    explicit CountingBackend(std::shared_ptr<Backend> b) : inner(std::move(b)) {}
    std::string complete(const ChatRequest& req) override {
        ++calls;
        return inner->complete(req);
    }
};

VqaItem test_item() {
    VqaItem item;
    item.item_id = "it-1";
    item.question = "What is shown?";
    item.ground_truth = "pneumothorax";
    item.patient_info = "adult";
    return item;
}

}  // namespace

TEST_CASE("scripted mentor with canned 3-step solution") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_rule("mentor", "m1", {},
                      "Step 1: look at the film\nStep 2: note the lucency\nStep 3: conclude\n"
                      "Final answer: pneumothorax");
    ModelGateway gw(backend, PromptTemplates::defaults());
    auto sol = gw.mentor_extend({0, "m1", 0.0}, test_item(), {});
    CHECK(sol.steps.size() == 3);
    CHECK(sol.steps[0] == "look at the film");
    CHECK(sol.derived_answer == "pneumothorax");
}

TEST_CASE("step reuse: accepted step's author continues from its cached solution") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_rule("mentor", "m1", {},
                      "Step 1: first step\nStep 2: second step\nFinal answer: done");
    auto counting = std::make_shared<CountingBackend>(backend);
    ModelGateway gw(counting, PromptTemplates::defaults());

    auto item = test_item();
    auto sol = gw.mentor_extend({0, "m1", 0.0}, item, {});
    CHECK(counting->calls == 1);

    ReasoningPath prefix;
    prefix.steps.push_back({sol.steps[0], 0, 1});
    auto cont = gw.mentor_extend({0, "m1", 0.0}, item, prefix);
    CHECK(counting->calls == 1);  // served from the reuse cache
    CHECK(cont.steps.front() == "second step");
    CHECK(cont.derived_answer == "done");
}

TEST_CASE("solution without step markers is a single step") {
    auto sol = parse_mentor_solution("The film shows a large left lucency.");
    CHECK(sol.steps.size() == 1);
    CHECK(sol.derived_answer == sol.steps[0]);
}

TEST_CASE("step parse round-trips well-formed solutions") {
    std::mt19937_64 rng(11);
    static const char* words[] = {"mass", "lesion", "sign", "margin", "density"};
    for (int i = 0; i < 200; ++i) {
        std::vector<std::string> steps;
        const int n = 1 + static_cast<int>(rng() % 5);
        for (int s = 0; s < n; ++s) {
            std::string text;
            const int len = 1 + static_cast<int>(rng() % 4);
            for (int wdx = 0; wdx < len; ++wdx) {
                if (wdx) text += ' ';
                text += words[rng() % 5];
            }
            steps.push_back(text);
        }
        auto sol = parse_mentor_solution(join_steps(steps));
        CHECK(sol.steps == steps);
    }
}

TEST_CASE("intern completion: scripted answer and final-answer extraction") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_rule("intern", "i1", {}, "I reason a bit.\nFinal answer: pneumothorax");
    ModelGateway gw(backend, PromptTemplates::defaults());
    ReasoningPath path;
    path.steps.push_back({"a step", 0, 1});
    CHECK(gw.intern_complete({0, "i1", 0.3}, test_item(), path) == "pneumothorax");
}

TEST_CASE("intern empty completion raises EmptyCompletion") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->set_default_response("");
    ModelGateway gw(backend, PromptTemplates::defaults());
    ReasoningPath path;
    path.steps.push_back({"a step", 0, 1});
    CHECK_THROWS_AS(gw.intern_complete({0, "i1", 0.3}, test_item(), path), EmptyCompletion);
}

TEST_CASE("six interns each invoked once yield six answers") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->set_default_response("pneumothorax");
    auto counting = std::make_shared<CountingBackend>(backend);
    ModelGateway gw(counting, PromptTemplates::defaults());

    auto cfg = GatewayConfig::defaults();
    REQUIRE(cfg.interns.size() == 6);
    ReasoningPath path;
    path.steps.push_back({"a step", 0, 1});
    int answers = 0;
    for (const auto& intern : cfg.interns) {
        CHECK(gw.intern_complete(intern, test_item(), path) == "pneumothorax");
        ++answers;
    }
    CHECK(answers == 6);
    CHECK(counting->calls == 6);
}

TEST_CASE("judge: byte-equal short-circuit makes no call") {
    auto backend = std::make_shared<ScriptedBackend>();
    auto counting = std::make_shared<CountingBackend>(backend);
    ModelGateway gw(counting, PromptTemplates::defaults());
    CHECK(gw.judge_equivalent({"judge", 0.0}, "pneumothorax", "pneumothorax", "q?"));
    CHECK(counting->calls == 0);
}

TEST_CASE("judge verdict parsing") {
    auto backend = std::make_shared<ScriptedBackend>();
    ModelGateway gw(backend, PromptTemplates::defaults());

    backend->set_default_response("No");
    CHECK_FALSE(gw.judge_equivalent({"judge", 0.0}, "a", "b", "q?"));

    auto yes_backend = std::make_shared<ScriptedBackend>();
    yes_backend->set_default_response("Yes, they match.");
    ModelGateway gw2(yes_backend, PromptTemplates::defaults());
    // the leading token of the first line decides
    CHECK(gw2.judge_equivalent({"judge", 0.0}, "a", "b", "q?"));

    auto maybe_backend = std::make_shared<ScriptedBackend>();
    maybe_backend->set_default_response("Maybe");
    ModelGateway gw3(maybe_backend, PromptTemplates::defaults());
    CHECK_THROWS_AS(gw3.judge_equivalent({"judge", 0.0}, "a", "b", "q?"), UnparseableVerdict);

    auto clean_yes = std::make_shared<ScriptedBackend>();
    clean_yes->set_default_response("Yes.\nBecause they describe the same finding.");
    ModelGateway gw4(clean_yes, PromptTemplates::defaults());
    CHECK(gw4.judge_equivalent({"judge", 0.0}, "a", "b", "q?"));
}

TEST_CASE("cache: hit serves without inner call; replay misses throw") {
    namespace fs = std::filesystem;
    const std::string store = (fs::temp_directory_path() / "mics_cache_test.jsonl").string();
    std::remove(store.c_str());

    auto scripted = std::make_shared<ScriptedBackend>();
    scripted->set_default_response("hello");
    auto counting = std::make_shared<CountingBackend>(scripted);

    ChatRequest req;
    req.role = "mentor";
    req.endpoint_label = "m1";
    req.user_prompt = "prompt";

    {
        auto cached = with_cache(counting, store, CacheMode::Record);
        CHECK(cached->complete(req) == "hello");
        CHECK(cached->complete(req) == "hello");
        CHECK(counting->calls == 1);
    }
    {
        auto replay = with_cache(counting, store, CacheMode::Replay);
        CHECK(replay->complete(req) == "hello");
        ChatRequest unseen = req;
        unseen.user_prompt = "different";
        CHECK_THROWS_AS(replay->complete(unseen), CacheMiss);
        CHECK(counting->calls == 1);
    }
    std::remove(store.c_str());
}

TEST_CASE("http backend: malformed body exhausts retries into EndpointUnavailable") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.set_content("{not json", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::map<std::string, EndpointConfig> eps;
    eps["m1"] = {"http://127.0.0.1:" + std::to_string(port), "/v1/chat/completions", "model", ""};
    HttpChatBackend backend(eps, RetryPolicy{3, 1});

    ChatRequest req;
    req.role = "mentor";
    req.endpoint_label = "m1";
    req.user_prompt = "hi";
    CHECK_THROWS_AS(backend.complete(req), EndpointUnavailable);
    CHECK(hits == 3);

    CHECK_THROWS_AS(
        backend.complete([] {
            ChatRequest r;
            r.endpoint_label = "unknown";
            return r;
        }()),
        EndpointUnavailable);

    server.stop();
    t.join();
}

TEST_CASE("scripted determinism: same request always yields the same response") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_rule("mentor", "", {"alpha"}, "A");
    backend->add_rule("mentor", "", {}, "B");
    ChatRequest req;
    req.role = "mentor";
    req.user_prompt = "contains alpha here";
    for (int i = 0; i < 20; ++i) CHECK(backend->complete(req) == "A");
    req.user_prompt = "nothing";
    for (int i = 0; i < 20; ++i) CHECK(backend->complete(req) == "B");
}
