#pragma once
// Domain types shared by every module. All types here are immutable-by-value
// and carry no I/O; JSONL (de)serialization lives next to them so every tool
// reads and writes the same schemas.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mics/rational.hpp"

namespace mics {

using json = nlohmann::json;

struct ImageRef {
    std::string image_id;
    std::string uri;
    int width = 0;
    int height = 0;
    std::string content_hash;  // file-level MD5 hex digest
    std::string modality;      // optional annotation; empty when unannotated

    bool operator==(const ImageRef&) const = default;
};

// One clinical-style source case. P = patient_info, C = imaging_analysis,
// D = discussion.
struct CaseRecord {
    std::string case_id;
    std::string patient_info;
    std::string imaging_analysis;
    std::string discussion;
    std::vector<ImageRef> images;

    bool operator==(const CaseRecord&) const = default;
};

enum class Scenario { PatientToDoctor, DoctorToDoctor, InternToSenior, Generic };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

// One search task handed to the engine.
struct VqaItem {
    std::string item_id;
    std::string question;
    std::string ground_truth;
    std::string patient_info;
    std::vector<ImageRef> images;
    Scenario scenario = Scenario::Generic;

    bool operator==(const VqaItem&) const = default;
};

// Roster identities. Index is the roster position; label names the backend
// endpoint; temperature is the sampling temperature used for that member.
struct MentorId {
    int index = 0;
    std::string label;
    double temperature = 0.0;
    bool operator==(const MentorId&) const = default;
};

struct InternId {
    int index = 0;
    std::string label;
    double temperature = 0.0;
    bool operator==(const InternId&) const = default;
};

struct JudgeId {
    std::string label;
    double temperature = 0.0;
    bool operator==(const JudgeId&) const = default;
};

struct ReasoningStep {
    std::string text;
    int author = 0;  // mentor roster index
    int depth = 1;   // 1-based iteration index

    bool operator==(const ReasoningStep&) const = default;
};

struct ReasoningPath {
    std::vector<ReasoningStep> steps;
    std::vector<Score> score_history;  // one entry per accepted iteration
    std::optional<std::string> final_answer;

    bool operator==(const ReasoningPath&) const = default;
};

enum class SelectionReason {
    HighestScore,
    ExplorationTieBreak,
    CompetitivenessTieBreak,
    LexicographicTieBreak,
};

std::string to_string(SelectionReason r);
SelectionReason selection_reason_from_string(const std::string& s);

enum class StopReason { FullScore, MaxDepth, AllZeroFailure };

std::string to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

// One candidate from one mentor in one iteration, with its evaluation.
struct CandidateRecord {
    int mentor = 0;  // roster index
    ReasoningStep step;
    Score score{0};
    std::vector<bool> intern_verdicts;  // indexed by intern roster position

    bool operator==(const CandidateRecord&) const = default;
};

struct IterationRecord {
    int depth = 1;
    std::vector<CandidateRecord> candidates;  // ordered by mentor roster index
    int selected_mentor = 0;
    SelectionReason reason = SelectionReason::HighestScore;

    bool operator==(const IterationRecord&) const = default;
};

// Full audit of one search run over one item.
struct SearchTrace {
    std::string item_id;
    std::vector<IterationRecord> iterations;
    StopReason stop_reason = StopReason::AllZeroFailure;
    int research_attempt = 0;  // attempt index that produced this trace
    std::optional<ReasoningPath> final_path;
    std::vector<Score> competitiveness;  // final ledger, by mentor roster index

    bool operator==(const SearchTrace&) const = default;
};

// --- validation -------------------------------------------------------------

struct ValidationReport {
    bool valid = true;
    bool incomplete = false;  // both C and D empty
    std::vector<std::string> failures;
};

// Total function: reports every violated invariant instead of throwing.
ValidationReport validate_case(const CaseRecord& c);

// --- JSONL schemas ----------------------------------------------------------

void to_json(json& j, const ImageRef& v);
void from_json(const json& j, ImageRef& v);
void to_json(json& j, const CaseRecord& v);
void from_json(const json& j, CaseRecord& v);
void to_json(json& j, const VqaItem& v);
void from_json(const json& j, VqaItem& v);
void to_json(json& j, const ReasoningStep& v);
void from_json(const json& j, ReasoningStep& v);
void to_json(json& j, const ReasoningPath& v);
void from_json(const json& j, ReasoningPath& v);
void to_json(json& j, const CandidateRecord& v);
void from_json(const json& j, CandidateRecord& v);
void to_json(json& j, const IterationRecord& v);
void from_json(const json& j, IterationRecord& v);
void to_json(json& j, const SearchTrace& v);
void from_json(const json& j, SearchTrace& v);

}  // namespace mics
