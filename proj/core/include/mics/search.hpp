#pragma once
// Mentor-intern collaborative search: iterative candidate extension by the
// mentor roster, intern-frequency scoring, exploration/competitiveness
// tie-breaking, early stopping, and re-search on all-zero iterations.

#include <stdexcept>
#include <vector>

#include "mics/gateway.hpp"
#include "mics/types.hpp"

namespace mics::search {

struct SearchConfig {
    int max_depth = 4;
    int max_research_attempts = 2;
    std::vector<MentorId> mentors;
    std::vector<InternId> interns;
    JudgeId judge;
};

// Per-mentor running product of candidate scores across completed iterations.
class CompetitivenessLedger {
public:
    explicit CompetitivenessLedger(std::size_t mentor_count)
        : products_(mentor_count, Score(1)) {}

    void record(int mentor, const Score& score) { products_.at(mentor) *= score; }
    const Score& value(int mentor) const { return products_.at(mentor); }
    const std::vector<Score>& values() const { return products_; }

private:
    std::vector<Score> products_;
};

struct ScoredCandidate {
    int mentor = 0;  // roster index
    ReasoningStep step;
    Score score{0};
};

// Greedy selection with the tie-break ladder: unique max wins outright; ties
// below full score go to the least-selected mentor; full-score ties go to the
// highest competitiveness product; exact residual ties to the lowest index.
std::pair<int, SelectionReason> select_step(const std::vector<ScoredCandidate>& candidates,
                                            const std::vector<int>& prior_selection_counts,
                                            const CompetitivenessLedger& ledger);

struct ScoreResult {
    Score score{0};
    std::vector<bool> verdicts;  // by intern roster index
};

// Fraction of interns whose completed answer the judge accepts. Individual
// intern failures count as incorrect; EndpointUnavailable propagates only
// when every intern fails with it.
ScoreResult score_candidate(gw::ModelGateway& gateway, const VqaItem& item,
                            const ReasoningPath& prefix, const ReasoningStep& candidate,
                            const std::vector<InternId>& interns, const JudgeId& judge);

// Thrown when every re-search attempt ended with an all-zero iteration.
// Carries the trace of the last attempt for audit output.
struct SearchFailed : std::runtime_error {
    explicit SearchFailed(SearchTrace t)
        : std::runtime_error("search failed: all candidates scored zero in every attempt"),
          trace(std::move(t)) {}
    SearchTrace trace;
};

SearchTrace mics_search(gw::ModelGateway& gateway, const VqaItem& item, const SearchConfig& cfg);

// Prompt salt appended on re-search attempts; empty for the first attempt.
std::string research_salt(const std::string& item_id, int attempt);

}  // namespace mics::search
