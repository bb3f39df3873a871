#pragma once
// Data construction: segmented QA generation from text cases, image-text
// alignment units, and scenario VQA generation feeding the search engine.

#include <functional>
#include <string>
#include <vector>

#include "mics/gateway.hpp"
#include "mics/types.hpp"

namespace mics::pipeline {

struct OptionChoice {
    std::string label;
    std::string text;
    bool operator==(const OptionChoice&) const = default;
};

struct QaQuadruplet {
    std::string question;
    std::vector<OptionChoice> options;
    std::string answer;  // must be one of the option labels
    std::string rationale;
    int level = 1;  // 1..4

    bool operator==(const QaQuadruplet&) const = default;
};

enum class AlignmentMode { Coarse, Precise };

std::string to_string(AlignmentMode m);

struct AlignmentUnit {
    std::vector<ImageRef> images;  // 1..10, one modality, deduplicated
    std::string question;
    std::string analysis;  // verbatim imaging-analysis text
    AlignmentMode mode = AlignmentMode::Coarse;

    bool operator==(const AlignmentUnit&) const = default;
};

void to_json(json& j, const QaQuadruplet& v);
void from_json(const json& j, QaQuadruplet& v);
void to_json(json& j, const AlignmentUnit& v);
void from_json(const json& j, AlignmentUnit& v);

using Tokenizer = std::function<int(const std::string&)>;

// Default tokenizer: whitespace-delimited token count.
int whitespace_token_count(const std::string& text);

struct PipelineConfig {
    // closed upper bounds for levels 1..3; above the last bound is level 4
    std::vector<int> token_thresholds{256, 512, 1024};
    std::vector<int> pairs_per_level{1, 2, 3, 4};
    std::vector<std::string> ambiguity_phrases{"this case", "this image"};
    int min_resolution = 196;
    int max_group_images = 10;
};

// Information-richness level from token_count(C) + token_count(D).
int bucket_case(const CaseRecord& c, const Tokenizer& tokenizer,
                const PipelineConfig& cfg = {});

// false iff any field contains a configured ambiguity phrase (case-insensitive).
bool filter_ambiguous(const QaQuadruplet& q, const PipelineConfig& cfg = {});

struct QaGenStats {
    int parsed = 0;
    int dropped_unparseable = 0;
    int dropped_ambiguous = 0;
    int dropped_bad_label = 0;
};

// Asks the generator for level-dependent pair counts and parses its output
// (a JSON array of {question, options, answer, rationale} objects).
// Unparseable or filtered items are dropped and counted.
std::vector<QaQuadruplet> generate_qa(const CaseRecord& c, int level,
                                      gw::Backend& generator, const PipelineConfig& cfg = {},
                                      QaGenStats* stats = nullptr);

struct AlignmentStats {
    int dedup_dropped = 0;
    int low_res_dropped = 0;
    int oversize_groups_dropped = 0;
};

// Groups images per modality, dedups by content hash, drops low-resolution
// images and oversize groups, then emits coarse units (and precise units
// when the analysis carries "(image N)" bindings).
std::vector<AlignmentUnit> build_alignment_units(const CaseRecord& c,
                                                 const PipelineConfig& cfg = {},
                                                 AlignmentStats* stats = nullptr);

struct ScenarioStats {
    int parsed = 0;
    int dropped_unparseable = 0;
    int dropped_not_question = 0;
    int dropped_yes_no = 0;
};

// Scenario VQA generation. Patient-to-doctor questions may be yes/no; the
// other scenarios must be open-ended.
std::vector<VqaItem> generate_scenario_vqa(const CaseRecord& c, Scenario scenario,
                                           gw::Backend& generator,
                                           const PipelineConfig& cfg = {},
                                           ScenarioStats* stats = nullptr);

// Validator used by generate_scenario_vqa, exposed for tests: a question must
// contain a question mark, and open-ended scenarios reject yes/no phrasing.
bool valid_scenario_question(const std::string& question, Scenario scenario);

}  // namespace mics::pipeline
