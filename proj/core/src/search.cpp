#include "mics/search.hpp"

#include <algorithm>
#include <future>

#include <spdlog/spdlog.h>

#include "mics/digest.hpp"

namespace mics::search {

std::string research_salt(const std::string& item_id, int attempt) {
    if (attempt == 0) return "";
    const std::string tag = md5_hex(item_id + "#" + std::to_string(attempt)).substr(0, 8);
    return "\n[re-search attempt " + std::to_string(attempt) + ", tag " + tag + "]\n";
}

std::pair<int, SelectionReason> select_step(const std::vector<ScoredCandidate>& candidates,
                                            const std::vector<int>& prior_selection_counts,
                                            const CompetitivenessLedger& ledger) {
    if (candidates.empty()) throw std::invalid_argument("select_step: no candidates");

    Score best = candidates.front().score;
    for (const auto& c : candidates) best = std::max(best, c.score);

    std::vector<const ScoredCandidate*> tied;
    for (const auto& c : candidates)
        if (c.score == best) tied.push_back(&c);

    if (tied.size() == 1) return {tied.front()->mentor, SelectionReason::HighestScore};

    if (best == Score(1)) {
        Score top = ledger.value(tied.front()->mentor);
        for (const auto* c : tied) top = std::max(top, ledger.value(c->mentor));
        std::vector<const ScoredCandidate*> comp;
        for (const auto* c : tied)
            if (ledger.value(c->mentor) == top) comp.push_back(c);
        if (comp.size() == 1) return {comp.front()->mentor, SelectionReason::CompetitivenessTieBreak};
        int lowest = comp.front()->mentor;
        for (const auto* c : comp) lowest = std::min(lowest, c->mentor);
        return {lowest, SelectionReason::LexicographicTieBreak};
    }

    // below full score: least-selected mentor wins (zero prior selections first)
    int min_count = prior_selection_counts.at(tied.front()->mentor);
    for (const auto* c : tied) min_count = std::min(min_count, prior_selection_counts.at(c->mentor));
    std::vector<const ScoredCandidate*> least;
    for (const auto* c : tied)
        if (prior_selection_counts.at(c->mentor) == min_count) least.push_back(c);
    if (least.size() == 1) return {least.front()->mentor, SelectionReason::ExplorationTieBreak};
    int lowest = least.front()->mentor;
    for (const auto* c : least) lowest = std::min(lowest, c->mentor);
    return {lowest, SelectionReason::LexicographicTieBreak};
}

ScoreResult score_candidate(gw::ModelGateway& gateway, const VqaItem& item,
                            const ReasoningPath& prefix, const ReasoningStep& candidate,
                            const std::vector<InternId>& interns, const JudgeId& judge) {
    if (candidate.text.empty()) throw std::invalid_argument("score_candidate: empty candidate");
    if (interns.empty()) throw std::invalid_argument("score_candidate: empty intern roster");

    ReasoningPath with_candidate = prefix;
    with_candidate.steps.push_back(candidate);

    enum class Outcome { Correct, Incorrect, Unavailable };
    std::vector<std::future<Outcome>> futures;
    futures.reserve(interns.size());
    for (const auto& intern : interns) {
        futures.push_back(std::async(std::launch::async, [&, intern]() {
            try {
                const std::string answer = gateway.intern_complete(intern, item, with_candidate);
                return gateway.judge_equivalent(judge, answer, item.ground_truth, item.question)
                           ? Outcome::Correct
                           : Outcome::Incorrect;
            } catch (const gw::EndpointUnavailable&) {
                return Outcome::Unavailable;
            } catch (const gw::GatewayError& e) {
                spdlog::warn("intern {} counted incorrect: {}", intern.label, e.what());
                return Outcome::Incorrect;
            }
        }));
    }

    ScoreResult result;
    result.verdicts.resize(interns.size(), false);
    std::int64_t correct = 0;
    std::size_t unavailable = 0;
    for (std::size_t w = 0; w < futures.size(); ++w) {
        Outcome o = futures[w].get();
        if (o == Outcome::Correct) {
            result.verdicts[w] = true;
            ++correct;
        } else if (o == Outcome::Unavailable) {
            ++unavailable;
        }
    }
    if (unavailable == interns.size())
        throw gw::EndpointUnavailable("all interns unavailable while scoring candidate");
    result.score = Score(correct, static_cast<std::int64_t>(interns.size()));
    return result;
}

namespace {

struct AttemptOutcome {
    bool failed = false;  // ended in an all-zero iteration
    SearchTrace trace;
};

ReasoningPath assemble_final_path(const ReasoningPath& prefix, int winner,
                                  const gw::MentorSolution& solution) {
    ReasoningPath path = prefix;
    // prefix already ends with the winner's candidate (solution step 1);
    // append the rest of the winner's complete solution.
    for (std::size_t i = 1; i < solution.steps.size(); ++i) {
        path.steps.push_back({solution.steps[i], winner,
                              static_cast<int>(path.steps.size()) + 1});
    }
    path.final_answer = solution.derived_answer;
    return path;
}

AttemptOutcome run_attempt(gw::ModelGateway& gateway, const VqaItem& item,
                           const SearchConfig& cfg, int attempt) {
    const std::string salt = research_salt(item.item_id, attempt);
    const std::size_t n = cfg.mentors.size();

    AttemptOutcome out;
    out.trace.item_id = item.item_id;
    out.trace.research_attempt = attempt;

    CompetitivenessLedger ledger(n);
    std::vector<int> selection_counts(n, 0);
    ReasoningPath prefix;

    for (int depth = 1; depth <= cfg.max_depth; ++depth) {
        // all mentor extensions in parallel, aggregated by roster index
        std::vector<std::future<gw::MentorSolution>> mentor_futures;
        mentor_futures.reserve(n);
        for (const auto& mentor : cfg.mentors) {
            mentor_futures.push_back(std::async(std::launch::async, [&, mentor]() {
                return gateway.mentor_extend(mentor, item, prefix, salt);
            }));
        }
        std::vector<gw::MentorSolution> solutions(n);
        for (std::size_t v = 0; v < n; ++v) solutions[v] = mentor_futures[v].get();

        IterationRecord record;
        record.depth = depth;
        std::vector<ScoredCandidate> candidates(n);
        std::vector<std::future<ScoreResult>> score_futures;
        score_futures.reserve(n);
        for (std::size_t v = 0; v < n; ++v) {
            candidates[v].mentor = static_cast<int>(v);
            candidates[v].step = {solutions[v].steps.front(), static_cast<int>(v), depth};
            score_futures.push_back(std::async(std::launch::async, [&, v]() {
                return score_candidate(gateway, item, prefix, candidates[v].step, cfg.interns,
                                       cfg.judge);
            }));
        }
        record.candidates.resize(n);
        for (std::size_t v = 0; v < n; ++v) {
            ScoreResult r = score_futures[v].get();
            candidates[v].score = r.score;
            record.candidates[v] = {static_cast<int>(v), candidates[v].step, r.score, r.verdicts};
            ledger.record(static_cast<int>(v), r.score);
        }

        const bool all_zero =
            std::all_of(candidates.begin(), candidates.end(),
                        [](const ScoredCandidate& c) { return c.score == Score(0); });

        auto [selected, reason] = select_step(candidates, selection_counts, ledger);
        record.selected_mentor = selected;
        record.reason = reason;
        out.trace.iterations.push_back(record);

        if (all_zero) {
            out.failed = true;
            out.trace.stop_reason = StopReason::AllZeroFailure;
            out.trace.competitiveness = ledger.values();
            return out;
        }

        selection_counts[selected] += 1;
        prefix.steps.push_back(candidates[selected].step);
        prefix.score_history.push_back(candidates[selected].score);

        if (candidates[selected].score == Score(1)) {
            out.trace.stop_reason = StopReason::FullScore;
            out.trace.final_path = assemble_final_path(prefix, selected, solutions[selected]);
            out.trace.competitiveness = ledger.values();
            return out;
        }
        if (depth == cfg.max_depth) {
            out.trace.stop_reason = StopReason::MaxDepth;
            out.trace.final_path = assemble_final_path(prefix, selected, solutions[selected]);
            out.trace.competitiveness = ledger.values();
            return out;
        }
    }
    throw std::logic_error("unreachable: search loop exited without a stop reason");
}

}  // namespace

SearchTrace mics_search(gw::ModelGateway& gateway, const VqaItem& item, const SearchConfig& cfg) {
    if (cfg.max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    if (cfg.mentors.empty() || cfg.interns.empty())
        throw std::invalid_argument("mentor and intern rosters must be non-empty");
    if (item.question.empty() || item.ground_truth.empty())
        throw std::invalid_argument("item must carry a question and a ground truth");

    AttemptOutcome last;
    for (int attempt = 0; attempt <= cfg.max_research_attempts; ++attempt) {
        last = run_attempt(gateway, item, cfg, attempt);
        if (!last.failed) return last.trace;
        spdlog::info("item {}: all-zero iteration at attempt {}, re-searching", item.item_id,
                     attempt);
    }
    throw SearchFailed(std::move(last.trace));
}

}  // namespace mics::search
