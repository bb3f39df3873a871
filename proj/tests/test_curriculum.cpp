#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "mics/curriculum.hpp"

using namespace mics;
using namespace mics::curriculum;

namespace {

CorpusRegistry small_registry() {
    CorpusRegistry reg;
    std::vector<std::string> a, b;
    for (int i = 0; i < 100; ++i) a.push_back("a-" + std::to_string(i));
    for (int i = 0; i < 40; ++i) b.push_back("b-" + std::to_string(i));
    reg.register_corpus("alpha", a);
    reg.register_corpus("beta", b);
    return reg;
}

}  // namespace

TEST_CASE("build_manifest: without replacement, counts match the plan") {
    auto reg = small_registry();
    StagePlan plan{1, {{"alpha", 60}, {"beta", 40}}, 7};
    auto m = build_manifest(plan, reg);
    CHECK(m.entries.size() == 100);
    CHECK(m.counts.at("alpha") == 60);
    CHECK(m.counts.at("beta") == 40);
    CHECK(m.oversampled.empty());

    // no duplicates when the corpus suffices
    std::set<std::string> alpha_ids;
    for (const auto& e : m.entries)
        if (e.corpus == "alpha") alpha_ids.insert(e.record_id);
    CHECK(alpha_ids.size() == 60);
}

TEST_CASE("build_manifest is deterministic for a fixed seed") {
    auto reg = small_registry();
    StagePlan plan{2, {{"alpha", 80}, {"beta", 30}}, 1234};
    auto m1 = build_manifest(plan, reg);
    auto m2 = build_manifest(plan, reg);
    CHECK(m1 == m2);

    StagePlan other = plan;
    other.seed = 1235;
    auto m3 = build_manifest(other, reg);
    CHECK(m3.entries != m1.entries);
}

TEST_CASE("oversampling repeats whole shuffled passes and is flagged") {
    auto reg = small_registry();
    // ~2x the beta corpus: 40 available, 85 requested
    StagePlan plan{1, {{"beta", 85}}, 99};
    auto m = build_manifest(plan, reg);
    CHECK(m.entries.size() == 85);
    REQUIRE(m.oversampled == std::vector<std::string>{"beta"});

    std::map<std::string, int> freq;
    for (const auto& e : m.entries) ++freq[e.record_id];
    // two full passes plus a 5-record remainder: every id appears 2 or 3 times
    CHECK(freq.size() == 40);
    int threes = 0;
    for (const auto& [id, n] : freq) {
        CHECK(n >= 2);
        CHECK(n <= 3);
        if (n == 3) ++threes;
    }
    CHECK(threes == 5);
}

TEST_CASE("oversampling can be disabled") {
    auto reg = small_registry();
    StagePlan plan{1, {{"beta", 85}}, 99};
    CHECK_THROWS_AS(build_manifest(plan, reg, /*allow_repetition=*/false), CountUnsatisfiable);
}

TEST_CASE("unknown corpus raises") {
    auto reg = small_registry();
    StagePlan plan{1, {{"gamma", 5}}, 1};
    CHECK_THROWS_AS(build_manifest(plan, reg), UnknownCorpus);
}

TEST_CASE("validate_manifest flags dangling records and count mismatches") {
    auto reg = small_registry();
    StagePlan plan{1, {{"alpha", 10}}, 3};
    auto m = build_manifest(plan, reg);
    CHECK(validate_manifest(m, reg, &plan).valid);

    auto dangling = m;
    dangling.entries[0].record_id = "a-does-not-exist";
    CHECK_FALSE(validate_manifest(dangling, reg, &plan).valid);

    auto short_m = m;
    short_m.entries.pop_back();
    short_m.counts["alpha"] = 9;
    CHECK_FALSE(validate_manifest(short_m, reg, &plan).valid);
}

TEST_CASE("validate_manifest reports the duplicate rate") {
    auto reg = small_registry();
    StagePlan plan{1, {{"beta", 80}}, 42};  // exactly two passes
    auto m = build_manifest(plan, reg);
    auto rep = validate_manifest(m, reg, &plan);
    CHECK(rep.valid);
    CHECK(rep.duplicate_rate == doctest::Approx(0.5));
}

TEST_CASE("default stage plans carry the published mixture sizes") {
    auto plans = default_stage_plans(7);
    REQUIRE(plans.size() == 3);

    auto total = [](const StagePlan& p) {
        std::int64_t sum = 0;
        for (const auto& r : p.rows) sum += r.count;
        return sum;
    };

    CHECK(plans[0].stage == 1);
    CHECK(total(plans[0]) == 111260 + 129351 + 129351 + 30520 + 1794 + 3951 + 3934);

    CHECK(plans[1].stage == 2);
    CHECK(total(plans[1]) == 413311);

    CHECK(plans[2].stage == 3);
    std::map<std::string, std::int64_t> stage3;
    for (const auto& r : plans[2].rows) stage3[r.corpus] = r.count;
    CHECK(stage3.at("mmrp_part1") == 55630);
    CHECK(stage3.at("mmrp_part2") == 29390);
    CHECK(stage3.at("mmrp_part3") == 183150);
    CHECK(stage3.at("huatuov_a") == 646759);
    CHECK(stage3.at("huatuov_i") == 646759);
    CHECK(stage3.at("pmc_vqa") == 152603);
    CHECK(stage3.at("vqa_rad") == 8970);
    CHECK(stage3.at("slake") == 9835);
    CHECK(stage3.at("path_vqa") == 19755);
}

TEST_CASE("manifest JSON round-trip") {
    auto reg = small_registry();
    StagePlan plan{1, {{"alpha", 10}, {"beta", 45}}, 5};
    auto m = build_manifest(plan, reg);
    json j = m;
    CHECK(j.get<DatasetManifest>() == m);
}
