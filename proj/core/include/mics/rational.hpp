#pragma once
// Exact score arithmetic. MICS-Scores are count ratios c/m; storing them as
// rationals keeps tie-break equality comparisons exact.

#include <boost/rational.hpp>
#include <cstdint>
#include <string>
#include <stdexcept>

namespace mics {

using Score = boost::rational<std::int64_t>;

inline std::string to_string(const Score& s) {
    return std::to_string(s.numerator()) + "/" + std::to_string(s.denominator());
}

inline Score score_from_string(const std::string& text) {
    auto slash = text.find('/');
    if (slash == std::string::npos) {
        return Score(std::stoll(text), 1);
    }
    std::int64_t num = std::stoll(text.substr(0, slash));
    std::int64_t den = std::stoll(text.substr(slash + 1));
    if (den == 0) throw std::invalid_argument("score denominator is zero: " + text);
    return Score(num, den);
}

}  // namespace mics
