#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqe/frameql.hpp"
#include "vqe/proxy.hpp"
#include "vqe/relalg.hpp"
#include "vqe/tracestore.hpp"

namespace vqe::scrub {

// Conjunction of (class, minimum count) conditions.
struct ScrubPredicate {
    struct Conjunct {
        std::string object_class;
        std::int64_t min_count = 1;
    };
    std::vector<Conjunct> conjuncts;

    static ScrubPredicate from_having(const std::vector<frameql::HavingTerm>& having) {
        ScrubPredicate pred;
        for (const auto& h : having) {
            if (h.kind != frameql::HavingTerm::Kind::SumClassEq || h.op != ">=")
                throw std::invalid_argument(
                    "scrubbing predicate must be a conjunction of SUM(class='X') >= N");
            pred.conjuncts.push_back({h.class_name, static_cast<std::int64_t>(h.value)});
        }
        if (pred.conjuncts.empty())
            throw std::invalid_argument("scrubbing predicate needs at least one conjunct");
        return pred;
    }
};

struct RankedFrame {
    std::int64_t timestamp = 0;
    double score = 0.0;  // sum over conjuncts of P(count >= N_k)
};

// Score every frame in the range with the proxy and sort by descending
// confidence (ties by ascending timestamp). Zero oracle calls.
inline std::vector<RankedFrame> rank_frames(const proxy::ProxyModel& model,
                                            const VideoTrace& trace, FrameRange range,
                                            const ScrubPredicate& pred,
                                            proxy::ProxyCost* cost = nullptr) {
    std::vector<std::size_t> head_idx;
    std::vector<std::int64_t> thresholds;
    for (const auto& cj : pred.conjuncts) {
        const proxy::ClassHead* head = model.head_for(cj.object_class);
        if (!head)
            throw std::invalid_argument("class not in model: " + cj.object_class);
        head_idx.push_back(static_cast<std::size_t>(head - model.heads.data()));
        // rare-event thresholds usually exceed the head's cap (the cap keeps
        // only counts seen in >= 1% of training frames); clamp so frames whose
        // predicted count saturates at the cap still rank first
        thresholds.push_back(
            std::min<std::int64_t>(cj.min_count, head->count_cap));
    }

    auto preds = proxy::infer(model, trace, range, cost);
    std::vector<RankedFrame> ranked;
    ranked.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        RankedFrame rf;
        rf.timestamp = range.begin + static_cast<std::int64_t>(i);
        for (std::size_t k = 0; k < pred.conjuncts.size(); ++k)
            rf.score += proxy::tail_probability(preds[i].softmaxes[head_idx[k]],
                                                thresholds[k]);
        ranked.push_back(rf);
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedFrame& a, const RankedFrame& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.timestamp < b.timestamp;
    });
    return ranked;
}

struct ScrubResult {
    std::vector<std::int64_t> timestamps;  // verified true positives, unordered in time
    std::int64_t candidates_checked = 0;
    bool fallback = false;
};

// Walk the ranked list, verifying each candidate with the oracle; accept a
// frame only if the predicate holds on ground truth and it is at least `gap`
// frames from every accepted frame. Stops at `limit` accepted frames.
using FrameAccept = std::function<bool(const std::vector<DetectionRecord>&)>;

inline FrameAccept accept_from_having(std::vector<frameql::HavingTerm> having) {
    return [having = std::move(having)](const std::vector<DetectionRecord>& records) {
        return relalg::frame_satisfies(having, records);
    };
}

inline ScrubResult ranked_search(const std::vector<RankedFrame>& ranked, Oracle& oracle,
                                 const FrameAccept& accept, std::int64_t limit,
                                 std::int64_t gap) {
    ScrubResult res;
    for (const RankedFrame& rf : ranked) {
        if (static_cast<std::int64_t>(res.timestamps.size()) >= limit) break;
        if (gap > 0 && !relalg::gap_ok(res.timestamps, rf.timestamp, gap)) continue;
        ++res.candidates_checked;
        if (accept(oracle.detect(rf.timestamp))) res.timestamps.push_back(rf.timestamp);
    }
    return res;
}

// Sequential oracle scan for predicates the proxy cannot serve (class absent
// from training). `prefilter`, when set, skips a frame without an oracle
// call; same acceptance semantics, timestamps come out in order.
inline ScrubResult fallback_scan(Oracle& oracle, FrameRange range, const FrameAccept& accept,
                                 std::int64_t limit, std::int64_t gap,
                                 const std::function<bool(std::int64_t)>& prefilter = nullptr) {
    ScrubResult res;
    res.fallback = true;
    for (std::int64_t t = range.begin; t < range.end; ++t) {
        if (static_cast<std::int64_t>(res.timestamps.size()) >= limit) break;
        if (gap > 0 && !relalg::gap_ok(res.timestamps, t, gap)) continue;
        if (prefilter && !prefilter(t)) continue;
        ++res.candidates_checked;
        if (accept(oracle.detect(t))) res.timestamps.push_back(t);
    }
    return res;
}

}  // namespace vqe::scrub
