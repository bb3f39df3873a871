#include "mics/qc.hpp"

namespace mics::qc {

std::string to_string(TrendClass t) {
    switch (t) {
        case TrendClass::MonotonicallyIncreasing: return "monotonically_increasing";
        case TrendClass::NonIncreasing: return "non_increasing";
        case TrendClass::Constant: return "constant";
        case TrendClass::Fluctuating: return "fluctuating";
    }
    throw std::logic_error("bad trend class");
}

std::string to_string(FlagReason r) {
    switch (r) {
        case FlagReason::NoUpwardTrend: return "no_upward_trend";
        case FlagReason::ConsistentlyZero: return "consistently_zero";
        case FlagReason::RisingThenFalling: return "rising_then_falling";
    }
    throw std::logic_error("bad flag reason");
}

TrendClass classify_trend(const std::vector<Score>& scores) {
    if (scores.empty()) throw EmptySequence("classify_trend: empty score sequence");
    bool any_up = false, any_down = false;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[i - 1]) any_up = true;
        if (scores[i] < scores[i - 1]) any_down = true;
    }
    if (!any_up && !any_down) return TrendClass::Constant;
    if (any_up && !any_down) return TrendClass::MonotonicallyIncreasing;
    if (!any_up && any_down) return TrendClass::NonIncreasing;
    return TrendClass::Fluctuating;
}

QcVerdict qc_filter(const SearchTrace& trace) {
    if (!trace.final_path)
        throw std::invalid_argument("qc_filter: trace has no final path (search failure)");
    const auto& history = trace.final_path->score_history;

    QcVerdict v;
    v.trend = classify_trend(history);
    switch (v.trend) {
        case TrendClass::MonotonicallyIncreasing:
            v.accepted = true;
            break;
        case TrendClass::Constant:
            if (history.front() > Score(0)) {
                v.accepted = true;
            } else {
                v.accepted = false;
                v.reason = FlagReason::ConsistentlyZero;
            }
            break;
        case TrendClass::NonIncreasing:
            v.accepted = false;
            v.reason = FlagReason::NoUpwardTrend;
            break;
        case TrendClass::Fluctuating:
            v.accepted = false;
            v.reason = FlagReason::RisingThenFalling;
            break;
    }
    return v;
}

}  // namespace mics::qc
