#include <doctest.h>

#include <random>

#include "mics/types.hpp"

using namespace mics;

TEST_CASE("validate_case: one non-empty field suffices") {
    CaseRecord c{"c1", "info", "CT shows...", "", {}};
    auto r = validate_case(c);
    CHECK(r.valid);
    CHECK_FALSE(r.incomplete);
}

TEST_CASE("validate_case: both C and D empty is incomplete") {
    CaseRecord c{"c2", "info", "", "", {}};
    auto r = validate_case(c);
    CHECK(r.valid);
    CHECK(r.incomplete);
    CHECK_FALSE(r.failures.empty());
}

TEST_CASE("validate_case: missing case_id is invalid") {
    CaseRecord c{"", "info", "CT", "", {}};
    auto r = validate_case(c);
    CHECK_FALSE(r.valid);
}

TEST_CASE("validate_case: non-positive image dimensions are invalid") {
    CaseRecord c{"c3", "", "CT", "", {{"img1", "u", 0, 10, "h", ""}}};
    CHECK_FALSE(validate_case(c).valid);
}

TEST_CASE("score string round-trip") {
    CHECK(to_string(Score(3, 6)) == "1/2");
    CHECK(score_from_string("5/12") == Score(5, 12));
    CHECK(score_from_string("1") == Score(1));
}

namespace {

std::string random_text(std::mt19937_64& rng) {
    static const char* words[] = {"mass", "lesion", "left", "lobe", "effusion", "normal"};
    std::string out;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += words[rng() % 6];
    }
    return out;
}

SearchTrace random_trace(std::mt19937_64& rng) {
    SearchTrace t;
    t.item_id = "item-" + std::to_string(rng() % 1000);
    const int m = 1 + static_cast<int>(rng() % 6);
    const int depths = 1 + static_cast<int>(rng() % 4);
    ReasoningPath path;
    for (int d = 1; d <= depths; ++d) {
        IterationRecord rec;
        rec.depth = d;
        const int n = 1 + static_cast<int>(rng() % 3);
        for (int v = 0; v < n; ++v) {
            CandidateRecord c;
            c.mentor = v;
            c.step = {random_text(rng), v, d};
            std::vector<bool> verdicts(m);
            int correct = 0;
            for (int w = 0; w < m; ++w) {
                verdicts[w] = rng() % 2;
                correct += verdicts[w];
            }
            c.score = Score(correct, m);
            c.intern_verdicts = verdicts;
            rec.candidates.push_back(c);
        }
        rec.selected_mentor = static_cast<int>(rng() % n);
        rec.reason = SelectionReason::HighestScore;
        t.iterations.push_back(rec);
        path.steps.push_back(rec.candidates[rec.selected_mentor].step);
        path.score_history.push_back(rec.candidates[rec.selected_mentor].score);
    }
    path.final_answer = random_text(rng);
    t.final_path = path;
    t.stop_reason = StopReason::MaxDepth;
    t.competitiveness = {Score(1, 2), Score(5, 12)};
    return t;
}

}  // namespace

TEST_CASE("serialization round-trip is identity for core types") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 200; ++i) {
        SearchTrace t = random_trace(rng);
        json j = t;
        auto back = j.get<SearchTrace>();
        CHECK(back == t);

        CaseRecord c{"case-" + std::to_string(i), random_text(rng), random_text(rng),
                     random_text(rng),
                     {{"img", "file://x", 200, 300, "abc", i % 2 ? "ct" : ""}}};
        json jc = c;
        CHECK(jc.get<CaseRecord>() == c);

        VqaItem item{"it-" + std::to_string(i), random_text(rng) + "?", random_text(rng),
                     random_text(rng), {}, Scenario::DoctorToDoctor};
        json ji = item;
        CHECK(ji.get<VqaItem>() == item);
    }
}

TEST_CASE("score_history entries are exact multiples of 1/m") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        SearchTrace t = random_trace(rng);
        for (const auto& rec : t.iterations) {
            for (const auto& c : rec.candidates) {
                const auto m = static_cast<std::int64_t>(c.intern_verdicts.size());
                Score s = c.score;
                // c.score * m must be an integer in [0, m]
                Score scaled = s * Score(m);
                CHECK(scaled.denominator() == 1);
                CHECK(scaled.numerator() >= 0);
                CHECK(scaled.numerator() <= m);
            }
        }
    }
}
