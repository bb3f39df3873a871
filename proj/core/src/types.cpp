#include "mics/types.hpp"

#include <stdexcept>

namespace mics {

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::PatientToDoctor: return "patient_to_doctor";
        case Scenario::DoctorToDoctor: return "doctor_to_doctor";
        case Scenario::InternToSenior: return "intern_to_senior";
        case Scenario::Generic: return "generic";
    }
    throw std::logic_error("bad scenario");
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "patient_to_doctor") return Scenario::PatientToDoctor;
    if (s == "doctor_to_doctor") return Scenario::DoctorToDoctor;
    if (s == "intern_to_senior") return Scenario::InternToSenior;
    if (s == "generic") return Scenario::Generic;
    throw std::invalid_argument("unknown scenario: " + s);
}

std::string to_string(SelectionReason r) {
    switch (r) {
        case SelectionReason::HighestScore: return "highest_score";
        case SelectionReason::ExplorationTieBreak: return "exploration_tie_break";
        case SelectionReason::CompetitivenessTieBreak: return "competitiveness_tie_break";
        case SelectionReason::LexicographicTieBreak: return "lexicographic_tie_break";
    }
    throw std::logic_error("bad selection reason");
}

SelectionReason selection_reason_from_string(const std::string& s) {
    if (s == "highest_score") return SelectionReason::HighestScore;
    if (s == "exploration_tie_break") return SelectionReason::ExplorationTieBreak;
    if (s == "competitiveness_tie_break") return SelectionReason::CompetitivenessTieBreak;
    if (s == "lexicographic_tie_break") return SelectionReason::LexicographicTieBreak;
    throw std::invalid_argument("unknown selection reason: " + s);
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::FullScore: return "full_score";
        case StopReason::MaxDepth: return "max_depth";
        case StopReason::AllZeroFailure: return "all_zero_failure";
    }
    throw std::logic_error("bad stop reason");
}

StopReason stop_reason_from_string(const std::string& s) {
    if (s == "full_score") return StopReason::FullScore;
    if (s == "max_depth") return StopReason::MaxDepth;
    if (s == "all_zero_failure") return StopReason::AllZeroFailure;
    throw std::invalid_argument("unknown stop reason: " + s);
}

ValidationReport validate_case(const CaseRecord& c) {
    ValidationReport r;
    if (c.case_id.empty()) {
        r.valid = false;
        r.failures.push_back("missing case_id");
    }
    if (c.imaging_analysis.empty() && c.discussion.empty()) {
        r.incomplete = true;
        r.failures.push_back("incomplete: imaging_analysis and discussion both empty");
    }
    for (const auto& img : c.images) {
        if (img.image_id.empty()) {
            r.valid = false;
            r.failures.push_back("image with empty image_id");
        }
        if (img.width < 1 || img.height < 1) {
            r.valid = false;
            r.failures.push_back("image " + img.image_id + " has non-positive dimensions");
        }
    }
    return r;
}

// --- JSON -------------------------------------------------------------------

static json scores_to_json(const std::vector<Score>& v) {
    json arr = json::array();
    for (const auto& s : v) arr.push_back(to_string(s));
    return arr;
}

static std::vector<Score> scores_from_json(const json& arr) {
    std::vector<Score> v;
    for (const auto& e : arr) v.push_back(score_from_string(e.get<std::string>()));
    return v;
}

void to_json(json& j, const ImageRef& v) {
    j = json{{"image_id", v.image_id}, {"uri", v.uri},       {"width", v.width},
             {"height", v.height},     {"content_hash", v.content_hash}};
    if (!v.modality.empty()) j["modality"] = v.modality;
}

void from_json(const json& j, ImageRef& v) {
    j.at("image_id").get_to(v.image_id);
    j.at("uri").get_to(v.uri);
    j.at("width").get_to(v.width);
    j.at("height").get_to(v.height);
    j.at("content_hash").get_to(v.content_hash);
    v.modality = j.value("modality", "");
}

void to_json(json& j, const CaseRecord& v) {
    j = json{{"case_id", v.case_id},
             {"patient_info", v.patient_info},
             {"imaging_analysis", v.imaging_analysis},
             {"discussion", v.discussion},
             {"images", v.images}};
}

void from_json(const json& j, CaseRecord& v) {
    j.at("case_id").get_to(v.case_id);
    v.patient_info = j.value("patient_info", "");
    v.imaging_analysis = j.value("imaging_analysis", "");
    v.discussion = j.value("discussion", "");
    v.images = j.value("images", std::vector<ImageRef>{});
}

void to_json(json& j, const VqaItem& v) {
    j = json{{"item_id", v.item_id},         {"question", v.question},
             {"ground_truth", v.ground_truth}, {"patient_info", v.patient_info},
             {"images", v.images},           {"scenario", to_string(v.scenario)}};
}

void from_json(const json& j, VqaItem& v) {
    j.at("item_id").get_to(v.item_id);
    j.at("question").get_to(v.question);
    j.at("ground_truth").get_to(v.ground_truth);
    v.patient_info = j.value("patient_info", "");
    v.images = j.value("images", std::vector<ImageRef>{});
    v.scenario = scenario_from_string(j.value("scenario", "generic"));
}

void to_json(json& j, const ReasoningStep& v) {
    j = json{{"text", v.text}, {"author", v.author}, {"depth", v.depth}};
}

void from_json(const json& j, ReasoningStep& v) {
    j.at("text").get_to(v.text);
    j.at("author").get_to(v.author);
    j.at("depth").get_to(v.depth);
}

void to_json(json& j, const ReasoningPath& v) {
    j = json{{"steps", v.steps}, {"score_history", scores_to_json(v.score_history)}};
    if (v.final_answer) j["final_answer"] = *v.final_answer;
}

void from_json(const json& j, ReasoningPath& v) {
    v.steps = j.value("steps", std::vector<ReasoningStep>{});
    v.score_history = scores_from_json(j.value("score_history", json::array()));
    if (j.contains("final_answer")) v.final_answer = j.at("final_answer").get<std::string>();
    else v.final_answer.reset();
}

void to_json(json& j, const CandidateRecord& v) {
    j = json{{"mentor", v.mentor},
             {"step", v.step},
             {"score", to_string(v.score)},
             {"intern_verdicts", v.intern_verdicts}};
}

void from_json(const json& j, CandidateRecord& v) {
    j.at("mentor").get_to(v.mentor);
    j.at("step").get_to(v.step);
    v.score = score_from_string(j.at("score").get<std::string>());
    v.intern_verdicts = j.value("intern_verdicts", std::vector<bool>{});
}

void to_json(json& j, const IterationRecord& v) {
    j = json{{"depth", v.depth},
             {"candidates", v.candidates},
             {"selected_mentor", v.selected_mentor},
             {"reason", to_string(v.reason)}};
}

void from_json(const json& j, IterationRecord& v) {
    j.at("depth").get_to(v.depth);
    v.candidates = j.value("candidates", std::vector<CandidateRecord>{});
    j.at("selected_mentor").get_to(v.selected_mentor);
    v.reason = selection_reason_from_string(j.at("reason").get<std::string>());
}

void to_json(json& j, const SearchTrace& v) {
    j = json{{"item_id", v.item_id},
             {"iterations", v.iterations},
             {"stop_reason", to_string(v.stop_reason)},
             {"research_attempt", v.research_attempt},
             {"competitiveness", scores_to_json(v.competitiveness)}};
    if (v.final_path) j["final_path"] = *v.final_path;
}

void from_json(const json& j, SearchTrace& v) {
    j.at("item_id").get_to(v.item_id);
    v.iterations = j.value("iterations", std::vector<IterationRecord>{});
    v.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    v.research_attempt = j.value("research_attempt", 0);
    v.competitiveness = scores_from_json(j.value("competitiveness", json::array()));
    if (j.contains("final_path")) v.final_path = j.at("final_path").get<ReasoningPath>();
    else v.final_path.reset();
}

}  // namespace mics
