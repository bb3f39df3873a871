#include "mics/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace mics::pipeline {

using nlohmann::json;

std::string to_string(AlignmentMode m) {
    return m == AlignmentMode::Coarse ? "coarse" : "precise";
}

void to_json(json& j, const QaQuadruplet& v) {
    json opts = json::array();
    for (const auto& o : v.options) opts.push_back({{"label", o.label}, {"text", o.text}});
    j = json{{"question", v.question},
             {"options", opts},
             {"answer", v.answer},
             {"rationale", v.rationale},
             {"level", v.level}};
}

void from_json(const json& j, QaQuadruplet& v) {
    j.at("question").get_to(v.question);
    v.options.clear();
    for (const auto& o : j.at("options"))
        v.options.push_back({o.at("label").get<std::string>(), o.at("text").get<std::string>()});
    j.at("answer").get_to(v.answer);
    j.at("rationale").get_to(v.rationale);
    v.level = j.value("level", 1);
}

void to_json(json& j, const AlignmentUnit& v) {
    j = json{{"images", v.images},
             {"question", v.question},
             {"analysis", v.analysis},
             {"mode", to_string(v.mode)}};
}

void from_json(const json& j, AlignmentUnit& v) {
    v.images = j.at("images").get<std::vector<ImageRef>>();
    j.at("question").get_to(v.question);
    j.at("analysis").get_to(v.analysis);
    v.mode = j.at("mode").get<std::string>() == "precise" ? AlignmentMode::Precise
                                                          : AlignmentMode::Coarse;
}

int whitespace_token_count(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    int count = 0;
    while (in >> tok) ++count;
    return count;
}

int bucket_case(const CaseRecord& c, const Tokenizer& tokenizer, const PipelineConfig& cfg) {
    if (!tokenizer) throw std::invalid_argument("bucket_case: tokenizer unavailable");
    const int tokens = tokenizer(c.imaging_analysis) + tokenizer(c.discussion);
    int level = 1;
    for (int bound : cfg.token_thresholds) {
        if (tokens <= bound) return level;  // closed upper bound -> lower bucket
        ++level;
    }
    return level;
}

static std::string lowered(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

static bool contains_phrase(const std::string& text, const std::vector<std::string>& phrases) {
    const std::string low = lowered(text);
    for (const auto& p : phrases) {
        if (low.find(lowered(p)) != std::string::npos) return true;
    }
    return false;
}

bool filter_ambiguous(const QaQuadruplet& q, const PipelineConfig& cfg) {
    if (contains_phrase(q.question, cfg.ambiguity_phrases)) return false;
    if (contains_phrase(q.rationale, cfg.ambiguity_phrases)) return false;
    if (contains_phrase(q.answer, cfg.ambiguity_phrases)) return false;
    for (const auto& o : q.options)
        if (contains_phrase(o.text, cfg.ambiguity_phrases)) return false;
    return true;
}

std::vector<QaQuadruplet> generate_qa(const CaseRecord& c, int level, gw::Backend& generator,
                                      const PipelineConfig& cfg, QaGenStats* stats) {
    if (level < 1 || level > 4) throw std::invalid_argument("generate_qa: level must be 1..4");
    const int want = cfg.pairs_per_level.at(static_cast<std::size_t>(level - 1));

    gw::ChatRequest req;
    req.role = "generator";
    req.endpoint_label = "qa_generator";
    req.system_prompt =
        "You write multiple-choice medical exam questions from a clinical case.\n"
        "Reply with a JSON array of objects, each with fields: question, options\n"
        "(array of {label, text}), answer (a label), rationale.";
    req.user_prompt = "Write " + std::to_string(want) +
                      " question(s).\n\nPatient information:\n" + c.patient_info +
                      "\n\nImaging analysis:\n" + c.imaging_analysis + "\n\nDiscussion:\n" +
                      c.discussion;
    req.temperature = 0.7;

    const std::string body = generator.complete(req);

    QaGenStats local;
    std::vector<QaQuadruplet> out;
    json parsed;
    try {
        parsed = json::parse(body);
    } catch (const json::parse_error&) {
        // tolerate fenced or prefixed output: take the outermost JSON array
        auto open = body.find('[');
        auto close = body.rfind(']');
        if (open == std::string::npos || close == std::string::npos || close < open) {
            spdlog::warn("qa generator output unparseable for case {}", c.case_id);
            local.dropped_unparseable = want;
            if (stats) *stats = local;
            return out;
        }
        try {
            parsed = json::parse(body.substr(open, close - open + 1));
        } catch (const json::parse_error&) {
            local.dropped_unparseable = want;
            if (stats) *stats = local;
            return out;
        }
    }
    if (!parsed.is_array()) parsed = json::array({parsed});

    for (const auto& entry : parsed) {
        QaQuadruplet q;
        try {
            from_json(entry, q);
        } catch (const json::exception&) {
            ++local.dropped_unparseable;
            continue;
        }
        q.level = level;
        if (q.question.empty() || q.answer.empty() || q.rationale.empty() || q.options.empty()) {
            ++local.dropped_unparseable;
            continue;
        }
        const bool label_ok = std::any_of(q.options.begin(), q.options.end(),
                                          [&](const OptionChoice& o) { return o.label == q.answer; });
        if (!label_ok) {
            ++local.dropped_bad_label;
            continue;
        }
        if (!filter_ambiguous(q, cfg)) {
            ++local.dropped_ambiguous;
            continue;
        }
        ++local.parsed;
        out.push_back(std::move(q));
    }
    if (stats) *stats = local;
    return out;
}

std::vector<AlignmentUnit> build_alignment_units(const CaseRecord& c, const PipelineConfig& cfg,
                                                 AlignmentStats* stats) {
    AlignmentStats local;

    // group per modality, preserving image order
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<ImageRef>> groups;
    for (const auto& img : c.images) {
        const std::string key = img.modality.empty() ? "unknown" : img.modality;
        if (!groups.count(key)) group_order.push_back(key);
        groups[key].push_back(img);
    }

    static const std::regex kBindingRe(R"(\(image\s+([0-9]+)\))", std::regex::icase);

    std::vector<AlignmentUnit> out;
    for (const auto& key : group_order) {
        std::vector<ImageRef> kept;
        std::set<std::string> seen_hashes;
        for (const auto& img : groups[key]) {
            if (img.width < cfg.min_resolution || img.height < cfg.min_resolution) {
                ++local.low_res_dropped;
                continue;
            }
            if (!seen_hashes.insert(img.content_hash).second) {
                ++local.dedup_dropped;
                continue;
            }
            kept.push_back(img);
        }
        if (kept.empty()) continue;
        if (static_cast<int>(kept.size()) > cfg.max_group_images) {
            ++local.oversize_groups_dropped;
            continue;
        }

        AlignmentUnit coarse;
        coarse.images = kept;
        coarse.question = "Describe the findings shown in these images, in order.";
        coarse.analysis = c.imaging_analysis;
        coarse.mode = AlignmentMode::Coarse;
        out.push_back(coarse);

        // precise unit only when the analysis binds keywords to image indices
        bool has_valid_binding = false;
        for (auto it = std::sregex_iterator(c.imaging_analysis.begin(), c.imaging_analysis.end(),
                                            kBindingRe);
             it != std::sregex_iterator(); ++it) {
            const int idx = std::stoi((*it)[1].str());
            if (idx >= 1 && idx <= static_cast<int>(kept.size())) {
                has_valid_binding = true;
                break;
            }
        }
        if (has_valid_binding) {
            AlignmentUnit precise = coarse;
            precise.question =
                "Identify which finding corresponds to each referenced image index.";
            precise.mode = AlignmentMode::Precise;
            out.push_back(precise);
        }
    }
    if (stats) *stats = local;
    return out;
}

bool valid_scenario_question(const std::string& question, Scenario scenario) {
    if (question.find('?') == std::string::npos) return false;
    if (scenario == Scenario::PatientToDoctor) return true;  // yes/no form permitted

    static const std::set<std::string> kYesNoLeads = {
        "is",  "are",  "am",   "was",  "were", "do",   "does",  "did",  "can",
        "could", "will", "would", "should", "shall", "has", "have", "had", "may", "might"};
    std::istringstream in(lowered(question));
    std::string first;
    in >> first;
    while (!first.empty() && !std::isalpha(static_cast<unsigned char>(first.back())))
        first.pop_back();
    return !kYesNoLeads.count(first);
}

std::vector<VqaItem> generate_scenario_vqa(const CaseRecord& c, Scenario scenario,
                                           gw::Backend& generator, const PipelineConfig& cfg,
                                           ScenarioStats* stats) {
    (void)cfg;
    if (scenario == Scenario::Generic)
        throw std::invalid_argument("generate_scenario_vqa: scenario must be one of the three clinical scenarios");

    std::string persona;
    switch (scenario) {
        case Scenario::PatientToDoctor:
            persona =
                "Write questions a patient would ask their doctor about this case: colloquial,\n"
                "non-technical, possibly emotional, yes/no form allowed.";
            break;
        case Scenario::DoctorToDoctor:
            persona =
                "Write open-ended questions one physician would ask another about the case's\n"
                "condition, diagnosis, or treatment. No yes/no questions.";
            break;
        case Scenario::InternToSenior:
            persona =
                "Write open-ended questions an intern would ask a senior physician about the\n"
                "imaging analysis of this case, requiring reasoning. No yes/no questions.";
            break;
        default: break;
    }

    gw::ChatRequest req;
    req.role = "generator";
    req.endpoint_label = "scenario_generator";
    req.system_prompt =
        persona + "\nReply with a JSON array of objects with fields: question, answer.";
    req.user_prompt = "Patient information:\n" + c.patient_info + "\n\nImaging analysis:\n" +
                      c.imaging_analysis + "\n\nDiscussion:\n" + c.discussion;
    req.temperature = 0.7;

    const std::string body = generator.complete(req);

    ScenarioStats local;
    std::vector<VqaItem> out;
    json parsed;
    try {
        parsed = json::parse(body);
    } catch (const json::parse_error&) {
        auto open = body.find('[');
        auto close = body.rfind(']');
        if (open == std::string::npos || close == std::string::npos || close < open) {
            ++local.dropped_unparseable;
            if (stats) *stats = local;
            return out;
        }
        try {
            parsed = json::parse(body.substr(open, close - open + 1));
        } catch (const json::parse_error&) {
            ++local.dropped_unparseable;
            if (stats) *stats = local;
            return out;
        }
    }
    if (!parsed.is_array()) parsed = json::array({parsed});

    int seq = 0;
    for (const auto& entry : parsed) {
        std::string question, answer;
        try {
            question = entry.at("question").get<std::string>();
            answer = entry.at("answer").get<std::string>();
        } catch (const json::exception&) {
            ++local.dropped_unparseable;
            continue;
        }
        if (question.empty() || answer.empty()) {
            ++local.dropped_unparseable;
            continue;
        }
        if (question.find('?') == std::string::npos) {
            ++local.dropped_not_question;
            continue;
        }
        if (!valid_scenario_question(question, scenario)) {
            ++local.dropped_yes_no;
            continue;
        }
        VqaItem item;
        item.item_id = c.case_id + "/" + to_string(scenario) + "/" + std::to_string(seq++);
        item.question = question;
        item.ground_truth = answer;
        item.patient_info = c.patient_info;
        item.images = c.images;
        item.scenario = scenario;
        ++local.parsed;
        out.push_back(std::move(item));
    }
    if (stats) *stats = local;
    return out;
}

}  // namespace mics::pipeline
