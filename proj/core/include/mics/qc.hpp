#pragma once
// Score-history trend classification and quality-control filtering of
// searched reasoning paths.

#include <stdexcept>
#include <string>
#include <vector>

#include "mics/types.hpp"

namespace mics::qc {

enum class TrendClass { MonotonicallyIncreasing, NonIncreasing, Constant, Fluctuating };

std::string to_string(TrendClass t);

struct EmptySequence : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Constant iff all equal; monotonically increasing iff non-decreasing with a
// strict increase; non-increasing iff non-increasing with a strict decrease;
// everything else fluctuates. Length-1 histories are Constant.
TrendClass classify_trend(const std::vector<Score>& scores);

enum class FlagReason { NoUpwardTrend, ConsistentlyZero, RisingThenFalling };

std::string to_string(FlagReason r);

struct QcVerdict {
    bool accepted = false;
    TrendClass trend = TrendClass::Constant;
    FlagReason reason = FlagReason::NoUpwardTrend;  // meaningful only when flagged
};

// Accepted iff the history rises monotonically or holds constant at a
// nonzero score. Requires a trace with a final path.
QcVerdict qc_filter(const SearchTrace& trace);

}  // namespace mics::qc
