#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "vqe/frameql.hpp"
#include "vqe/proxy.hpp"
#include "vqe/relalg.hpp"
#include "vqe/tracestore.hpp"

namespace vqe::select {

struct SpatialFilter {
    Box roi;
    double resized_width = 0;
    double resized_height = 0;
};

struct TemporalFilter {
    std::int64_t stride = 1;
    std::int64_t duration_k = 0;  // HAVING duration bound the stride came from
};

struct LabelFilter {
    std::string object_class;
    proxy::ThresholdEstimate threshold;
};

struct ContentFilter {
    std::string udf;
    proxy::ThresholdEstimate threshold;
};

struct FilterPlan {
    std::optional<SpatialFilter> spatial;
    std::optional<TemporalFilter> temporal;
    std::vector<LabelFilter> label;
    std::vector<ContentFilter> content;
    double estimated_selectivity = 0.0;  // estimated fraction of frames discarded
};

namespace detail {

// Collect top-level AND conjuncts (a single comparison counts as one).
inline void conjuncts(const frameql::ExprPtr& e, std::vector<frameql::ExprPtr>& out) {
    using frameql::Expr;
    if (!e) return;
    if (e->kind == Expr::Kind::And) {
        for (const auto& c : e->children) conjuncts(c, out);
    } else {
        out.push_back(e);
    }
}

struct MaskBound {
    std::string coord;  // xmin/xmax/ymin/ymax
    std::string op;
    double value;
};

inline std::optional<MaskBound> as_mask_bound(const frameql::ExprPtr& e) {
    using frameql::Expr;
    if (e->kind != Expr::Kind::Compare) return std::nullopt;
    const auto& lhs = e->children[0];
    const auto& rhs = e->children[1];
    static const std::set<std::string> coords{"xmin", "xmax", "ymin", "ymax"};
    if (lhs->kind == Expr::Kind::Call && coords.count(lhs->name) &&
        rhs->kind == Expr::Kind::NumberLit)
        return MaskBound{lhs->name, e->op, rhs->number};
    return std::nullopt;
}

struct UdfBound {
    std::string udf;
};

inline std::optional<std::string> as_frame_udf(const frameql::ExprPtr& e,
                                               const relalg::UdfRegistry& udfs) {
    using frameql::Expr;
    if (e->kind != Expr::Kind::Compare) return std::nullopt;
    const auto& lhs = e->children[0];
    if (lhs->kind != Expr::Kind::Call) return std::nullopt;
    const relalg::UdfDef* def = udfs.find(lhs->name);
    if (def && def->frame_applicable) return lhs->name;
    return std::nullopt;
}

inline std::optional<std::string> as_class_equality(const frameql::ExprPtr& e) {
    using frameql::Expr;
    if (e->kind != Expr::Kind::Compare || e->op != "=") return std::nullopt;
    const auto& lhs = e->children[0];
    const auto& rhs = e->children[1];
    if (lhs->kind == Expr::Kind::Column && lhs->name == "class" &&
        rhs->kind == Expr::Kind::StringLit)
        return rhs->str;
    return std::nullopt;
}

// Zero-FN cutoff padded down to the midpoint between the weakest positive
// and the strongest negative below it. Held-out false negatives stay at zero
// (the cutoff only moves down); the margin guards against unseen positives
// slightly weaker than the few seen in the held-out split.
inline proxy::ThresholdEstimate padded_threshold(const std::vector<double>& signals,
                                                 const std::vector<bool>& labels) {
    auto est = proxy::estimate_threshold(signals, labels);
    double best_negative = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < signals.size(); ++i)
        if (signals[i] < est.cutoff) best_negative = std::max(best_negative, signals[i]);
    if (std::isfinite(best_negative)) {
        est.cutoff = 0.5 * (est.cutoff + best_negative);
        std::int64_t below = 0;
        for (double s : signals)
            if (s < est.cutoff) ++below;
        est.heldout_selectivity =
            static_cast<double>(below) / static_cast<double>(signals.size());
    }
    return est;
}

}  // namespace detail

// Duration bound K implied by GROUP BY trackid HAVING COUNT(*) cmp K.
inline std::optional<std::int64_t> duration_bound(const frameql::Query& q) {
    if (q.group_by != frameql::GroupBy::TrackId) return std::nullopt;
    for (const auto& h : q.having)
        if (h.kind == frameql::HavingTerm::Kind::CountStar && (h.op == ">" || h.op == ">="))
            return static_cast<std::int64_t>(h.value);
    return std::nullopt;
}

inline std::int64_t stride_for_duration(std::int64_t k) {
    return std::max<std::int64_t>(1, (k - 1) / 2);
}

// Infer the four filter classes from the query and the labeled data. Every
// statistical filter carries a held-out threshold with zero held-out false
// negatives; filters with no held-out positives are omitted.
inline FilterPlan infer_plan(const frameql::Query& query, const VideoTrace& trace,
                             const LabeledSplit& split, const proxy::ProxyModel* model,
                             const relalg::UdfRegistry& udfs = relalg::default_registry(),
                             proxy::ProxyCost* cost = nullptr) {
    FilterPlan plan;
    std::vector<frameql::ExprPtr> terms;
    detail::conjuncts(query.where, terms);

    // spatial: mask coordinate bounds shrink the ROI
    Box roi = trace.frame_box();
    bool have_roi = false;
    for (const auto& t : terms) {
        if (auto mb = detail::as_mask_bound(t)) {
            if (mb->coord == "xmax" && (mb->op == "<" || mb->op == "<=")) {
                roi.xmax = std::min(roi.xmax, mb->value);
                have_roi = true;
            } else if (mb->coord == "xmin" && (mb->op == ">" || mb->op == ">=")) {
                roi.xmin = std::max(roi.xmin, mb->value);
                have_roi = true;
            } else if (mb->coord == "ymax" && (mb->op == "<" || mb->op == "<=")) {
                roi.ymax = std::min(roi.ymax, mb->value);
                have_roi = true;
            } else if (mb->coord == "ymin" && (mb->op == ">" || mb->op == ">=")) {
                roi.ymin = std::max(roi.ymin, mb->value);
                have_roi = true;
            }
        }
    }
    if (have_roi && roi.valid()) {
        SpatialFilter sf;
        sf.roi = roi;
        sf.resized_width = roi.width();
        sf.resized_height = roi.height();
        plan.spatial = sf;
    }

    // temporal: subsample at (K-1)/2 for duration-K constraints
    if (auto k = duration_bound(query))
        plan.temporal = TemporalFilter{stride_for_duration(*k), *k};

    // held-out frame labels: a frame is positive when it holds a record
    // satisfying the full record-level WHERE
    std::vector<bool> positive;
    positive.reserve(static_cast<std::size_t>(split.heldout.size()));
    for (std::int64_t t = split.heldout.begin; t < split.heldout.end; ++t) {
        bool pos = false;
        for (const auto& r : trace.frame(t).records)
            if (relalg::matches(query.where, r, udfs)) {
                pos = true;
                break;
            }
        positive.push_back(pos);
    }
    bool any_positive = std::find(positive.begin(), positive.end(), true) != positive.end();

    // label: proxy tail probability per queried class
    if (model && any_positive) {
        for (const auto& t : terms) {
            if (auto cls = detail::as_class_equality(t)) {
                const proxy::ClassHead* head = model->head_for(*cls);
                if (!head) continue;
                std::size_t head_idx = static_cast<std::size_t>(head - model->heads.data());
                auto preds = proxy::infer(*model, trace, split.heldout, cost);
                std::vector<double> signals;
                signals.reserve(preds.size());
                for (const auto& p : preds)
                    signals.push_back(proxy::tail_probability(p.softmaxes[head_idx], 1));
                plan.label.push_back({*cls, detail::padded_threshold(signals, positive)});
            }
        }
    }

    // content: frame-level UDF signal thresholds
    if (any_positive) {
        std::set<std::string> seen;
        for (const auto& t : terms) {
            if (auto name = detail::as_frame_udf(t, udfs)) {
                if (!seen.insert(*name).second) continue;
                const relalg::UdfDef* def = udfs.find(*name);
                std::vector<double> signals;
                signals.reserve(positive.size());
                for (std::int64_t f = split.heldout.begin; f < split.heldout.end; ++f)
                    signals.push_back(def->frame_eval(trace.frame_descriptor(f)));
                if (cost) cost->add_filter_frames(split.heldout.size());
                plan.content.push_back({*name, detail::padded_threshold(signals, positive)});
            }
        }
    }

    double pass = 1.0;
    for (const auto& f : plan.label) pass *= 1.0 - f.threshold.heldout_selectivity;
    for (const auto& f : plan.content) pass *= 1.0 - f.threshold.heldout_selectivity;
    plan.estimated_selectivity = 1.0 - pass;
    return plan;
}

struct ApplyResult {
    std::vector<DetectionRecord> records;
    std::int64_t frames_considered = 0;
    std::int64_t frames_detected = 0;  // unique frames sent to the oracle
};

struct FilterAblation {
    bool use_spatial = true;
    bool use_temporal = true;
    bool use_label = true;
    bool use_content = true;
};

// Execute a selection plan: stride through the range, drop frames failing
// content/label cutoffs, run the (memoized) oracle with the ROI on the
// survivors, and verify duration constraints by expanding each candidate to
// its full same-class run. Every emitted record is oracle-verified, so
// errors are false negatives only.
inline ApplyResult apply_plan(const FilterPlan& plan, const VideoTrace& trace, Oracle& oracle,
                              const frameql::Query& query, FrameRange range,
                              const proxy::ProxyModel* model,
                              const relalg::UdfRegistry& udfs = relalg::default_registry(),
                              proxy::ProxyCost* cost = nullptr,
                              const FilterAblation& ablate = {}) {
    ApplyResult res;
    oracle.set_memoize(true);

    std::optional<Box> roi;
    if (plan.spatial && ablate.use_spatial) roi = plan.spatial->roi;
    std::int64_t stride = (plan.temporal && ablate.use_temporal) ? plan.temporal->stride : 1;

    std::set<std::string> query_classes;
    {
        std::vector<frameql::ExprPtr> terms;
        detail::conjuncts(query.where, terms);
        for (const auto& t : terms)
            if (auto cls = select::detail::as_class_equality(t)) query_classes.insert(*cls);
    }

    // proxy predictions for label filtering, one pass over the range
    std::vector<proxy::FramePrediction> preds;
    std::vector<std::size_t> label_heads;
    if (!plan.label.empty() && ablate.use_label && model) {
        preds = proxy::infer(*model, trace, range, cost);
        for (const auto& lf : plan.label) {
            const proxy::ClassHead* head = model->head_for(lf.object_class);
            label_heads.push_back(static_cast<std::size_t>(head - model->heads.data()));
        }
    }

    auto duration_k = duration_bound(query);
    std::set<std::int64_t> detected_frames;
    std::map<std::int64_t, std::vector<DetectionRecord>> frame_cache;

    auto detect_frame = [&](std::int64_t t) -> const std::vector<DetectionRecord>& {
        auto it = frame_cache.find(t);
        if (it != frame_cache.end()) return it->second;
        auto recs = oracle.detect(t, roi);
        detected_frames.insert(t);
        return frame_cache.emplace(t, std::move(recs)).first->second;
    };

    std::vector<DetectionRecord> emitted;
    std::set<std::tuple<std::int64_t, std::string, double, double>> emitted_keys;
    auto emit = [&](const DetectionRecord& r) {
        auto key = std::make_tuple(r.timestamp, r.object_class, r.mask.xmin, r.mask.ymin);
        if (emitted_keys.insert(key).second) emitted.push_back(r);
    };

    for (std::int64_t t = range.begin; t < range.end; t += stride) {
        ++res.frames_considered;

        bool pass = true;
        if (ablate.use_content) {
            for (const auto& cf : plan.content) {
                const relalg::UdfDef* def = udfs.find(cf.udf);
                double signal = def->frame_eval(trace.frame_descriptor(t));
                if (cost) cost->add_filter_frames(1);
                if (signal < cf.threshold.cutoff) {
                    pass = false;
                    break;
                }
            }
        }
        if (pass && !label_heads.empty()) {
            const auto& p = preds[static_cast<std::size_t>(t - range.begin)];
            for (std::size_t i = 0; i < plan.label.size(); ++i) {
                double signal = proxy::tail_probability(p.softmaxes[label_heads[i]], 1);
                if (signal < plan.label[i].threshold.cutoff) {
                    pass = false;
                    break;
                }
            }
        }
        if (!pass) continue;

        const auto& records = detect_frame(t);
        std::vector<DetectionRecord> matching = relalg::filter(records, query.where, udfs);
        if (matching.empty()) continue;

        if (!duration_k) {
            for (const auto& r : matching) emit(r);
            continue;
        }

        // expand the candidate to its full same-class run
        auto links = [&](std::int64_t a, std::int64_t b) {
            const auto& ra = detect_frame(a);
            const auto& rb = detect_frame(b);
            for (const auto& x : ra) {
                if (!query_classes.empty() && !query_classes.count(x.object_class)) continue;
                for (const auto& y : rb)
                    if (x.object_class == y.object_class && iou(x.mask, y.mask) >= 0.7)
                        return true;
            }
            return false;
        };
        std::int64_t lo = t, hi = t;
        while (lo - 1 >= range.begin && links(lo - 1, lo)) --lo;
        while (hi + 1 < range.end && links(hi, hi + 1)) ++hi;

        // resolve tracks locally on the window and apply GROUP BY/HAVING
        VideoTrace window;
        window.width = trace.width;
        window.height = trace.height;
        window.feature_dim = 0;
        for (std::int64_t f = lo; f <= hi; ++f) {
            Frame frame;
            frame.records = detect_frame(f);
            window.frames.push_back(std::move(frame));
        }
        window = vqe::resolve_tracks(std::move(window));

        std::vector<DetectionRecord> window_matching;
        for (std::int64_t f = lo; f <= hi; ++f)
            for (const auto& r : window.frames[static_cast<std::size_t>(f - lo)].records)
                if (relalg::matches(query.where, r, udfs)) window_matching.push_back(r);

        auto groups = relalg::group_records(window_matching, frameql::GroupBy::TrackId);
        for (const auto& [tid, group] : groups)
            if (relalg::having_holds(query.having, group))
                for (const auto& r : group) emit(r);
    }

    res.frames_detected = static_cast<std::int64_t>(detected_frames.size());
    res.records = std::move(emitted);
    std::sort(res.records.begin(), res.records.end(),
              [](const DetectionRecord& a, const DetectionRecord& b) {
                  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                  if (a.object_class != b.object_class) return a.object_class < b.object_class;
                  return a.mask.xmin < b.mask.xmin;
              });
    return res;
}

}  // namespace vqe::select
