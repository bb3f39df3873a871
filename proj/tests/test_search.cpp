#include <doctest.h>

#include <algorithm>
#include <random>

#include "mics/search.hpp"
#include "scripted_world.hpp"

using namespace mics;
using namespace mics::search;

TEST_CASE("select_step: unique max wins outright") {
    CompetitivenessLedger ledger(3);
    std::vector<ScoredCandidate> cands{
        {0, {"a", 0, 1}, Score(1, 2)},
        {1, {"b", 1, 1}, Score(5, 6)},
        {2, {"c", 2, 1}, Score(1, 3)},
    };
    auto [sel, reason] = select_step(cands, {0, 0, 0}, ledger);
    CHECK(sel == 1);
    CHECK(reason == SelectionReason::HighestScore);
}

TEST_CASE("select_step: sub-full tie prefers the unselected mentor") {
    CompetitivenessLedger ledger(2);
    std::vector<ScoredCandidate> cands{
        {0, {"a", 0, 2}, Score(1, 2)},
        {1, {"b", 1, 2}, Score(1, 2)},
    };
    auto [sel, reason] = select_step(cands, {1, 0}, ledger);  // mentor 0 selected at depth 1
    CHECK(sel == 1);
    CHECK(reason == SelectionReason::ExplorationTieBreak);
}

TEST_CASE("select_step: full-score tie goes to the higher competitiveness product") {
    CompetitivenessLedger ledger(3);
    ledger.record(0, Score(1, 2));
    ledger.record(0, Score(5, 6));  // 5/12
    ledger.record(2, Score(1, 3));
    ledger.record(2, Score(5, 6));  // 5/18
    std::vector<ScoredCandidate> cands{
        {0, {"a", 0, 3}, Score(1)},
        {2, {"c", 2, 3}, Score(1)},
    };
    CHECK(ledger.value(0) == Score(5, 12));
    CHECK(ledger.value(2) == Score(5, 18));
    auto [sel, reason] = select_step(cands, {0, 0, 0}, ledger);
    CHECK(sel == 0);
    CHECK(reason == SelectionReason::CompetitivenessTieBreak);
}

TEST_CASE("select_step: exact residual ties fall back to the lowest index") {
    CompetitivenessLedger ledger(2);
    std::vector<ScoredCandidate> cands{
        {1, {"b", 1, 1}, Score(1)},
        {0, {"a", 0, 1}, Score(1)},
    };
    auto [sel, reason] = select_step(cands, {0, 0}, ledger);
    CHECK(sel == 0);
    CHECK(reason == SelectionReason::LexicographicTieBreak);
}

TEST_CASE("select_step is invariant under candidate arrival order") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 3);
        CompetitivenessLedger ledger(n);
        std::vector<int> counts(n);
        std::vector<ScoredCandidate> cands;
        for (int v = 0; v < n; ++v) {
            ledger.record(v, Score(static_cast<int>(rng() % 6), 6));
            counts[v] = static_cast<int>(rng() % 3);
            cands.push_back({v, {"t" + std::to_string(v), v, 1},
                             Score(static_cast<int>(rng() % 7), 6)});
        }
        auto expected = select_step(cands, counts, ledger);
        for (int shuffle = 0; shuffle < 20; ++shuffle) {
            std::shuffle(cands.begin(), cands.end(), rng);
            CHECK(select_step(cands, counts, ledger) == expected);
        }
    }
}

TEST_CASE("score_candidate: direct ratio with mixed verdicts") {
    auto backend = std::make_shared<gw::ScriptedBackend>();
    // interns 1-3 answer correctly, 4-6 wrong
    for (int i = 1; i <= 3; ++i)
        backend->add_rule("intern", "intern-" + std::to_string(i), {}, scripted_world::kGroundTruth);
    backend->set_default_response("No");  // wrong interns fall to default; judge says no
    gw::ModelGateway gateway(backend, gw::PromptTemplates::defaults());

    std::vector<InternId> interns;
    for (int i = 0; i < 6; ++i) interns.push_back({i, "intern-" + std::to_string(i + 1), 0.0});

    VqaItem item;
    item.item_id = "x";
    item.question = "q?";
    item.ground_truth = scripted_world::kGroundTruth;
    auto r = score_candidate(gateway, item, {}, {"step one", 0, 1}, interns, {"judge", 0.0});
    CHECK(r.score == Score(1, 2));
    CHECK(std::count(r.verdicts.begin(), r.verdicts.end(), true) == 3);
}

TEST_CASE("score_candidate: zero and full scores") {
    std::vector<InternId> interns;
    for (int i = 0; i < 6; ++i) interns.push_back({i, "intern-" + std::to_string(i + 1), 0.0});
    VqaItem item;
    item.item_id = "x";
    item.question = "q?";
    item.ground_truth = scripted_world::kGroundTruth;

    auto all_wrong = std::make_shared<gw::ScriptedBackend>();
    all_wrong->add_rule("intern", "", {}, "WRONG");
    all_wrong->set_default_response("No");
    gw::ModelGateway g1(all_wrong, gw::PromptTemplates::defaults());
    CHECK(score_candidate(g1, item, {}, {"s", 0, 1}, interns, {"judge", 0.0}).score == Score(0));

    auto all_right = std::make_shared<gw::ScriptedBackend>();
    all_right->set_default_response(scripted_world::kGroundTruth);
    gw::ModelGateway g2(all_right, gw::PromptTemplates::defaults());
    CHECK(score_candidate(g2, item, {}, {"s", 0, 1}, interns, {"judge", 0.0}).score == Score(1));
}

TEST_CASE("full score at depth 1 stops the search with the winning path") {
    // mentor 2's candidate convinces every intern; others convince nobody
    auto backend = std::make_shared<gw::ScriptedBackend>();
    backend->add_rule("mentor", "mentor-1", {}, "Step 1: weak idea\nFinal answer: wrong");
    backend->add_rule("mentor", "mentor-2", {},
                      "Step 1: the key insight\nStep 2: confirm it\nFinal answer: GT");
    backend->add_rule("mentor", "mentor-3", {}, "Step 1: off track\nFinal answer: wrong");
    backend->add_rule("intern", "", {"the key insight"}, scripted_world::kGroundTruth);
    backend->set_default_response("No");

    gw::ModelGateway gateway(backend, gw::PromptTemplates::defaults());
    SearchConfig cfg;
    for (int v = 0; v < 3; ++v) cfg.mentors.push_back({v, "mentor-" + std::to_string(v + 1), 0.0});
    for (int i = 0; i < 6; ++i) cfg.interns.push_back({i, "intern-" + std::to_string(i + 1), 0.0});
    cfg.judge = {"judge", 0.0};

    VqaItem item;
    item.item_id = "full-score";
    item.question = "q?";
    item.ground_truth = scripted_world::kGroundTruth;

    auto trace = mics_search(gateway, item, cfg);
    CHECK(trace.stop_reason == StopReason::FullScore);
    CHECK(trace.iterations.size() == 1);
    CHECK(trace.iterations[0].selected_mentor == 1);
    REQUIRE(trace.final_path.has_value());
    CHECK(trace.final_path->steps.size() == 2);  // accepted step + solution tail
    CHECK(trace.final_path->final_answer == "GT");
    CHECK(gateway.mentor_calls() == 3);
    CHECK(gateway.intern_calls() == 3 * 6);
}

TEST_CASE("all-zero world re-searches then fails") {
    auto backend = std::make_shared<gw::ScriptedBackend>();
    backend->add_rule("mentor", "", {}, "Step 1: dead end\nFinal answer: wrong");
    backend->add_rule("intern", "", {}, "WRONG");
    backend->set_default_response("No");

    gw::ModelGateway gateway(backend, gw::PromptTemplates::defaults());
    SearchConfig cfg;
    cfg.max_research_attempts = 2;
    for (int v = 0; v < 3; ++v) cfg.mentors.push_back({v, "mentor-" + std::to_string(v + 1), 0.0});
    for (int i = 0; i < 6; ++i) cfg.interns.push_back({i, "intern-" + std::to_string(i + 1), 0.0});
    cfg.judge = {"judge", 0.0};

    VqaItem item;
    item.item_id = "hopeless";
    item.question = "q?";
    item.ground_truth = scripted_world::kGroundTruth;

    CHECK_THROWS_AS(mics_search(gateway, item, cfg), SearchFailed);
    try {
        mics_search(gateway, item, cfg);
    } catch (const SearchFailed& e) {
        CHECK(e.trace.stop_reason == StopReason::AllZeroFailure);
        CHECK_FALSE(e.trace.final_path.has_value());
        CHECK(e.trace.research_attempt == 2);
    }
}

TEST_CASE("engine matches the reference on randomized scripted worlds") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 60; ++i) {
        auto w = scripted_world::make_world(i, rng);
        auto expected = scripted_world::reference_search(w);
        auto got = scripted_world::engine_search(w);
        REQUIRE(got.failed == expected.failed);
        CHECK(got.trace == expected.trace);
    }
}

TEST_CASE("rising-score trajectory reaches full score at max depth") {
    // single mentor; intern correctness widens with depth: 2/6, 4/6, 5/6, 6/6
    auto backend = std::make_shared<gw::ScriptedBackend>();
    backend->add_rule("mentor", "", {"step three"}, "Step 1: step four\nFinal answer: GT");
    backend->add_rule("mentor", "", {"step two"}, "Step 1: step three\nFinal answer: GT");
    backend->add_rule("mentor", "", {"step one"}, "Step 1: step two\nFinal answer: GT");
    backend->add_rule("mentor", "", {}, "Step 1: step one\nFinal answer: GT");
    auto correct_up_to = [&](const char* needle, int k) {
        for (int i = 0; i < k; ++i)
            backend->add_rule("intern", "intern-" + std::to_string(i + 1), {needle},
                              scripted_world::kGroundTruth);
    };
    correct_up_to("step four", 6);
    correct_up_to("step three", 5);
    correct_up_to("step two", 4);
    correct_up_to("step one", 2);
    backend->set_default_response("No");

    gw::ModelGateway gateway(backend, gw::PromptTemplates::defaults());
    SearchConfig cfg;
    cfg.max_depth = 4;
    cfg.mentors.push_back({0, "mentor-1", 0.0});
    for (int i = 0; i < 6; ++i) cfg.interns.push_back({i, "intern-" + std::to_string(i + 1), 0.0});
    cfg.judge = {"judge", 0.0};

    VqaItem item;
    item.item_id = "rising";
    item.question = "q?";
    item.ground_truth = scripted_world::kGroundTruth;

    auto trace = mics_search(gateway, item, cfg);
    CHECK(trace.iterations.size() == 4);
    CHECK(trace.stop_reason == StopReason::FullScore);
    REQUIRE(trace.final_path.has_value());
    const std::vector<Score> want{Score(1, 3), Score(2, 3), Score(5, 6), Score(1)};
    CHECK(trace.final_path->score_history == want);
}

TEST_CASE("ledger equals the per-mentor product of recorded scores") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        auto w = scripted_world::make_world(10000 + trial, rng);
        auto got = scripted_world::engine_search(w);
        // recompute products from the trace itself
        std::vector<Score> product(w.n, Score(1));
        for (const auto& it : got.trace.iterations)
            for (const auto& c : it.candidates) product[c.mentor] *= c.score;
        CHECK(got.trace.competitiveness == product);
        for (const auto& p : product) {
            CHECK(p >= Score(0));
            CHECK(p <= Score(1));
        }
    }
}
