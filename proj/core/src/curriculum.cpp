#include "mics/curriculum.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mics/digest.hpp"

namespace mics::curriculum {

using nlohmann::json;

void CorpusRegistry::register_corpus(const std::string& name, std::vector<std::string> record_ids) {
    index_[name] = std::set<std::string>(record_ids.begin(), record_ids.end());
    corpora_[name] = std::move(record_ids);
}

CorpusRegistry CorpusRegistry::from_files(const std::map<std::string, std::string>& jsonl_by_name) {
    CorpusRegistry reg;
    for (const auto& [name, path] : jsonl_by_name) {
        std::vector<std::string> ids;
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open corpus file: " + path);
        std::string line;
        std::int64_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error&) {
                continue;
            }
            if (j.contains("header")) continue;
            std::string id;
            for (const char* key : {"record_id", "item_id", "case_id", "id"}) {
                if (j.contains(key) && j.at(key).is_string()) {
                    id = j.at(key).get<std::string>();
                    break;
                }
            }
            if (id.empty()) id = "line-" + std::to_string(lineno);
            ids.push_back(std::move(id));
        }
        reg.register_corpus(name, std::move(ids));
    }
    return reg;
}

const std::vector<std::string>* CorpusRegistry::find(const std::string& name) const {
    auto it = corpora_.find(name);
    return it == corpora_.end() ? nullptr : &it->second;
}

bool CorpusRegistry::has_record(const std::string& corpus, const std::string& record_id) const {
    auto it = index_.find(corpus);
    return it != index_.end() && it->second.count(record_id) > 0;
}

// --- deterministic sampling -------------------------------------------------

namespace {

// splitmix64; stable across platforms, unlike distribution-based shuffling
struct Rng {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }
};

std::uint64_t corpus_seed(std::uint64_t base, int stage, const std::string& corpus) {
    const std::string hex = md5_hex(std::to_string(base) + "/" + std::to_string(stage) + "/" + corpus);
    return std::stoull(hex.substr(0, 16), nullptr, 16);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

DatasetManifest build_manifest(const StagePlan& plan, const CorpusRegistry& registry,
                               bool allow_repetition) {
    DatasetManifest m;
    m.stage = plan.stage;
    m.seed = plan.seed;

    for (const auto& row : plan.rows) {
        if (row.count < 0) throw std::invalid_argument("negative count for corpus " + row.corpus);
        if (row.count == 0) {
            m.counts[row.corpus] = 0;
            continue;
        }
        const auto* ids = registry.find(row.corpus);
        if (!ids) throw UnknownCorpus("corpus not registered: " + row.corpus);
        const auto avail = static_cast<std::int64_t>(ids->size());
        if (avail == 0 || (row.count > avail && !allow_repetition))
            throw CountUnsatisfiable("corpus " + row.corpus + " has " + std::to_string(avail) +
                                     " records, " + std::to_string(row.count) + " requested");

        Rng rng{corpus_seed(plan.seed, plan.stage, row.corpus)};
        const std::int64_t full_passes = row.count / avail;
        const std::int64_t remainder = row.count % avail;
        if (row.count > avail) m.oversampled.push_back(row.corpus);

        for (std::int64_t pass = 0; pass < full_passes; ++pass) {
            auto order = shuffled_indices(static_cast<std::size_t>(avail), rng);
            for (std::size_t i : order) m.entries.push_back({row.corpus, (*ids)[i]});
        }
        if (remainder > 0) {
            auto order = shuffled_indices(static_cast<std::size_t>(avail), rng);
            for (std::int64_t i = 0; i < remainder; ++i)
                m.entries.push_back({row.corpus, (*ids)[order[static_cast<std::size_t>(i)]]});
        }
        m.counts[row.corpus] = row.count;
    }
    return m;
}

ManifestReport validate_manifest(const DatasetManifest& manifest, const CorpusRegistry& registry,
                                 const StagePlan* plan) {
    ManifestReport r;
    std::map<std::string, std::int64_t> observed;
    std::set<std::pair<std::string, std::string>> unique;
    for (const auto& e : manifest.entries) {
        ++observed[e.corpus];
        unique.insert({e.corpus, e.record_id});
        if (!registry.has_record(e.corpus, e.record_id)) {
            r.valid = false;
            r.failures.push_back("dangling record: " + e.corpus + "/" + e.record_id);
        }
    }
    for (const auto& [corpus, count] : manifest.counts) {
        if (observed[corpus] != count) {
            r.valid = false;
            r.failures.push_back("count mismatch for " + corpus + ": summary says " +
                                 std::to_string(count) + ", entries hold " +
                                 std::to_string(observed[corpus]));
        }
    }
    if (plan) {
        for (const auto& row : plan->rows) {
            if (observed[row.corpus] != row.count) {
                r.valid = false;
                r.failures.push_back("plan mismatch for " + row.corpus + ": planned " +
                                     std::to_string(row.count) + ", got " +
                                     std::to_string(observed[row.corpus]));
            }
        }
    }
    if (!manifest.entries.empty()) {
        r.duplicate_rate = 1.0 - static_cast<double>(unique.size()) /
                                     static_cast<double>(manifest.entries.size());
    }
    return r;
}

std::vector<StagePlan> default_stage_plans(std::uint64_t seed) {
    std::vector<StagePlan> plans(3);
    plans[0] = {1,
                {{"mmrp_part1", 111260},
                 {"huatuov_a", 129351},
                 {"huatuov_i", 129351},
                 {"pmc_vqa", 30520},
                 {"vqa_rad", 1794},
                 {"slake", 3951},
                 {"path_vqa", 3934}},
                seed};
    plans[1] = {2,
                {{"mmrp_part1", 55630},
                 {"mmrp_part2", 58780},
                 {"huatuov_a", 129351},
                 {"huatuov_i", 129351},
                 {"pmc_vqa", 30520},
                 {"vqa_rad", 1794},
                 {"slake", 3951},
                 {"path_vqa", 3934}},
                seed};
    plans[2] = {3,
                {{"mmrp_part1", 55630},
                 {"mmrp_part2", 29390},
                 {"mmrp_part3", 183150},
                 {"huatuov_a", 646759},
                 {"huatuov_i", 646759},
                 {"pmc_vqa", 152603},
                 {"vqa_rad", 8970},
                 {"slake", 9835},
                 {"path_vqa", 19755}},
                seed};
    return plans;
}

// --- JSON -------------------------------------------------------------------

void to_json(json& j, const DatasetManifest& v) {
    json entries = json::array();
    for (const auto& e : v.entries) entries.push_back({{"corpus", e.corpus}, {"record_id", e.record_id}});
    j = json{{"stage", v.stage},
             {"seed", v.seed},
             {"entries", entries},
             {"counts", v.counts},
             {"oversampled", v.oversampled}};
}

void from_json(const json& j, DatasetManifest& v) {
    j.at("stage").get_to(v.stage);
    j.at("seed").get_to(v.seed);
    v.entries.clear();
    for (const auto& e : j.at("entries"))
        v.entries.push_back({e.at("corpus").get<std::string>(), e.at("record_id").get<std::string>()});
    v.counts = j.value("counts", std::map<std::string, std::int64_t>{});
    v.oversampled = j.value("oversampled", std::vector<std::string>{});
}

void to_json(json& j, const StagePlan& v) {
    json rows = json::array();
    for (const auto& r : v.rows) rows.push_back({{"corpus", r.corpus}, {"count", r.count}});
    j = json{{"stage", v.stage}, {"rows", rows}, {"seed", v.seed}};
}

void from_json(const json& j, StagePlan& v) {
    j.at("stage").get_to(v.stage);
    v.rows.clear();
    for (const auto& r : j.at("rows"))
        v.rows.push_back({r.at("corpus").get<std::string>(), r.at("count").get<std::int64_t>()});
    v.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace mics::curriculum
