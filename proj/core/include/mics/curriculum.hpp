#pragma once
// Stage-wise dataset fusion: deterministic seeded sampling of registered
// corpora into per-stage training manifests.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mics/types.hpp"

namespace mics::curriculum {

struct StageRow {
    std::string corpus;
    std::int64_t count = 0;
};

struct StagePlan {
    int stage = 1;  // 1..3
    std::vector<StageRow> rows;
    std::uint64_t seed = 0;
};

struct UnknownCorpus : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CountUnsatisfiable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class CorpusRegistry {
public:
    void register_corpus(const std::string& name, std::vector<std::string> record_ids);

    // Loads each JSONL file and takes record ids from the first of
    // record_id/item_id/case_id/id, falling back to the line number.
    static CorpusRegistry from_files(const std::map<std::string, std::string>& jsonl_by_name);

    const std::vector<std::string>* find(const std::string& name) const;
    bool has_record(const std::string& corpus, const std::string& record_id) const;

private:
    std::map<std::string, std::vector<std::string>> corpora_;
    std::map<std::string, std::set<std::string>> index_;  // fast has_record lookups
};

struct ManifestEntry {
    std::string corpus;
    std::string record_id;
    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    int stage = 1;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;
    std::map<std::string, std::int64_t> counts;   // per corpus
    std::vector<std::string> oversampled;         // corpora sampled with repetition

    bool operator==(const DatasetManifest&) const = default;
};

void to_json(json& j, const DatasetManifest& v);
void from_json(const json& j, DatasetManifest& v);

void to_json(json& j, const StagePlan& v);
void from_json(const json& j, StagePlan& v);

// Deterministic seeded sample. Sampling is without replacement while the
// corpus suffices; repetition kicks in (and is flagged) only when the
// requested count exceeds availability, unless allow_repetition is false.
DatasetManifest build_manifest(const StagePlan& plan, const CorpusRegistry& registry,
                               bool allow_repetition = true);

struct ManifestReport {
    bool valid = true;
    std::vector<std::string> failures;
    double duplicate_rate = 0.0;
};

ManifestReport validate_manifest(const DatasetManifest& manifest, const CorpusRegistry& registry,
                                 const StagePlan* plan = nullptr);

// The shipped three-stage mixing defaults.
std::vector<StagePlan> default_stage_plans(std::uint64_t seed);

}  // namespace mics::curriculum
