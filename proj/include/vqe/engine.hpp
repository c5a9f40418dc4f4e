#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqe/aggcv.hpp"
#include "vqe/frameql.hpp"
#include "vqe/proxy.hpp"
#include "vqe/relalg.hpp"
#include "vqe/scrub.hpp"
#include "vqe/select.hpp"
#include "vqe/tracestore.hpp"

namespace vqe::engine {

enum class PlanKind {
    AggregateRewrite,
    AggregateControlVariates,
    AggregatePlainAQP,
    AggregateExact,
    ScrubRanked,
    ScrubFallback,
    SelectionFiltered,
    ExactScan,
};

inline const char* plan_name(PlanKind k) {
    switch (k) {
        case PlanKind::AggregateRewrite: return "agg-rewrite";
        case PlanKind::AggregateControlVariates: return "agg-control-variates";
        case PlanKind::AggregatePlainAQP: return "agg-plain-aqp";
        case PlanKind::AggregateExact: return "agg-exact";
        case PlanKind::ScrubRanked: return "scrub-ranked";
        case PlanKind::ScrubFallback: return "scrub-fallback";
        case PlanKind::SelectionFiltered: return "selection-filtered";
        case PlanKind::ExactScan: return "exact-scan";
    }
    return "?";
}

enum class QueryClass { Aggregate, Scrubbing, Selection, Exact };

struct EngineConfig {
    double rewrite_threshold = 0.1;  // error bound at or above which rewrite is tried
    int bootstrap_B = 1000;
    proxy::TrainConfig train;
    double train_frac = 0.2;
    double heldout_frac = 0.1;
    std::uint64_t seed = 0;
    std::optional<PlanKind> force_plan;  // tests can force a path
};

struct Plan {
    PlanKind kind = PlanKind::ExactScan;
    std::optional<double> error_bound;
    double confidence = 0.95;
    std::optional<std::string> statistic_class;  // aggregate target class
    select::FilterPlan filters;                  // selection plans
};

struct PlanReport {
    PlanKind plan = PlanKind::ExactScan;
    std::optional<double> value;
    std::optional<double> half_width;
    double confidence = 0.95;
    std::int64_t n_samples = 0;
    std::vector<std::int64_t> timestamps;
    std::vector<DetectionRecord> records;
    bool verified = false;
    std::int64_t oracle_calls = 0;
    double cost_units = 0.0;
    double proxy_cost_units = 0.0;
    double offline_cost_units = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"plan", plan_name(plan)},
                         {"confidence", confidence},
                         {"n_samples", n_samples},
                         {"oracle_calls", oracle_calls},
                         {"cost_units", cost_units},
                         {"proxy_cost_units", proxy_cost_units},
                         {"offline_cost_units", offline_cost_units}};
        if (value) j["value"] = *value;
        if (half_width) j["half_width"] = *half_width;
        if (!timestamps.empty() || plan == PlanKind::ScrubRanked ||
            plan == PlanKind::ScrubFallback) {
            j["timestamps"] = timestamps;
            j["verified"] = verified;
        }
        if (!records.empty()) {
            nlohmann::json recs = nlohmann::json::array();
            for (const auto& r : records) {
                nlohmann::json rec{{"timestamp", r.timestamp},
                                   {"class", r.object_class},
                                   {"box", {r.mask.xmin, r.mask.ymin, r.mask.xmax, r.mask.ymax}},
                                   {"conf", r.confidence},
                                   {"content", r.content}};
                if (r.trackid) rec["trackid"] = *r.trackid;
                recs.push_back(std::move(rec));
            }
            j["records"] = std::move(recs);
        }
        return j;
    }
};

// Single class-equality conjunct in WHERE, when the whole WHERE is that
// conjunct (plus any UDF/mask terms); this is the statistic the proxy can
// learn to count.
inline std::optional<std::string> aggregate_target_class(const frameql::Query& q) {
    using frameql::Expr;
    if (!q.where) return std::nullopt;
    std::vector<frameql::ExprPtr> terms;
    if (q.where->kind == Expr::Kind::And)
        terms = q.where->children;
    else
        terms = {q.where};
    std::optional<std::string> cls;
    for (const auto& t : terms) {
        if (t->kind != Expr::Kind::Compare || t->op != "=") return std::nullopt;
        const auto& lhs = t->children[0];
        const auto& rhs = t->children[1];
        if (lhs->kind == Expr::Kind::Column && lhs->name == "class" &&
            rhs->kind == Expr::Kind::StringLit) {
            if (cls) return std::nullopt;  // multiple class terms
            cls = rhs->str;
        } else {
            return std::nullopt;  // non-class predicate; statistic is not a pure class count
        }
    }
    return cls;
}

inline bool references_trackid(const frameql::Query& q) {
    if (q.group_by == frameql::GroupBy::TrackId) return true;
    if (q.select_list.agg == frameql::AggKind::CountDistinct &&
        q.select_list.distinct_column == "trackid")
        return true;
    for (const auto& c : q.select_list.columns)
        if (c == "trackid") return true;
    std::function<bool(const frameql::ExprPtr&)> uses = [&](const frameql::ExprPtr& e) {
        if (!e) return false;
        if (e->kind == frameql::Expr::Kind::Column && e->name == "trackid") return true;
        for (const auto& ch : e->children)
            if (uses(ch)) return true;
        return false;
    };
    return uses(q.where);
}

inline QueryClass classify(const frameql::Query& q) {
    using frameql::AggKind;
    if (q.select_list.agg == AggKind::FCount || q.select_list.agg == AggKind::Count)
        return QueryClass::Aggregate;
    if (q.select_list.agg == AggKind::CountDistinct) return QueryClass::Exact;
    if (q.select_list.columns == std::vector<std::string>{"timestamp"} && q.limit)
        return QueryClass::Scrubbing;
    // selection: record projection with content/mask predicates
    std::function<bool(const frameql::ExprPtr&)> has_udf = [&](const frameql::ExprPtr& e) {
        if (!e) return false;
        if (e->kind == frameql::Expr::Kind::Call) return true;
        for (const auto& c : e->children)
            if (has_udf(c)) return true;
        return false;
    };
    if (!q.select_list.is_aggregate() && has_udf(q.where)) return QueryClass::Selection;
    return QueryClass::Exact;
}

class Engine {
  public:
    Engine(const VideoTrace& trace, EngineConfig cfg = {})
        : trace_(trace), cfg_(std::move(cfg)) {
        split_ = default_split(trace.n_frames(), cfg_.train_frac, cfg_.heldout_frac);
    }

    Engine(const VideoTrace& trace, LabeledSplit split, EngineConfig cfg = {})
        : trace_(trace), cfg_(std::move(cfg)), split_(split) {}

    const LabeledSplit& split() const { return split_; }
    const EngineConfig& config() const { return cfg_; }

    Plan optimize(const frameql::Query& q) {
        Plan plan;
        plan.error_bound = q.error_bound;
        plan.confidence = q.confidence.value_or(0.95);
        if (cfg_.force_plan) {
            plan.kind = *cfg_.force_plan;
            plan.statistic_class = aggregate_target_class(q);
            return plan;
        }
        switch (classify(q)) {
            case QueryClass::Aggregate: {
                if (!q.error_bound) {
                    plan.kind = PlanKind::AggregateExact;
                    break;
                }
                plan.statistic_class = aggregate_target_class(q);
                if (!plan.statistic_class || !trainable(*plan.statistic_class)) {
                    plan.kind = PlanKind::AggregatePlainAQP;
                    break;
                }
                double frame_bound = *q.error_bound;
                if (q.select_list.agg == frameql::AggKind::Count)
                    frame_bound /= double(split_.unseen.size());
                plan.kind = frame_bound >= cfg_.rewrite_threshold
                                ? PlanKind::AggregateRewrite
                                : PlanKind::AggregateControlVariates;
                break;
            }
            case QueryClass::Scrubbing: {
                auto pred = scrub::ScrubPredicate::from_having(q.having);
                bool instances = false;
                for (std::int64_t t = split_.train.begin; t < split_.train.end && !instances; ++t)
                    instances = relalg::frame_satisfies(q.having, trace_.frame(t).records);
                bool heads_ok = true;
                for (const auto& cj : pred.conjuncts)
                    if (!trainable(cj.object_class)) heads_ok = false;
                plan.kind = (instances && heads_ok) ? PlanKind::ScrubRanked
                                                    : PlanKind::ScrubFallback;
                break;
            }
            case QueryClass::Selection:
                plan.kind = PlanKind::SelectionFiltered;
                break;
            case QueryClass::Exact:
                plan.kind = PlanKind::ExactScan;
                break;
        }
        return plan;
    }

    PlanReport execute(const Plan& plan, const frameql::Query& q) {
        Oracle oracle(trace_);
        proxy::ProxyCost proxy_cost;
        PlanReport report;
        report.plan = plan.kind;
        report.confidence = plan.confidence;

        switch (plan.kind) {
            case PlanKind::AggregateExact:
            case PlanKind::ExactScan:
                run_exact(q, oracle, report);
                break;
            case PlanKind::AggregatePlainAQP:
                run_plain_aqp(q, oracle, report);
                break;
            case PlanKind::AggregateRewrite:
            case PlanKind::AggregateControlVariates:
                run_model_aggregate(plan, q, oracle, proxy_cost, report);
                break;
            case PlanKind::ScrubRanked:
            case PlanKind::ScrubFallback:
                run_scrub(plan, q, oracle, proxy_cost, report);
                break;
            case PlanKind::SelectionFiltered:
                run_selection(q, oracle, proxy_cost, report);
                break;
        }

        report.oracle_calls = oracle.call_count();
        report.cost_units = oracle.cost_units();
        report.proxy_cost_units = proxy_cost.cost_units();
        report.offline_cost_units = offline_cost_;
        return report;
    }

    PlanReport run(const frameql::Query& q) { return execute(optimize(q), q); }

    PlanReport run(const std::string& sql) { return run(frameql::parse(sql)); }

    // Per-frame count of records matching the query's WHERE, through an oracle.
    static std::int64_t frame_statistic(Oracle& oracle, std::int64_t t,
                                        const frameql::ExprPtr& where) {
        auto recs = oracle.detect(t);
        std::int64_t n = 0;
        for (const auto& r : recs)
            if (relalg::matches(where, r)) ++n;
        return n;
    }

    const proxy::ProxyModel& model_for(const std::vector<std::string>& classes) {
        std::string key;
        for (const auto& c : classes) key += c + ",";
        auto it = models_.find(key);
        if (it != models_.end()) return it->second;
        charge_labeling();
        proxy::TrainConfig tc = cfg_.train;
        tc.seed = cfg_.seed;
        auto model = proxy::train(trace_, split_.train, classes, tc);
        return models_.emplace(key, std::move(model)).first->second;
    }

    // Trainable: the class's count cap over the training split is >= 1,
    // i.e. at least 1% of training frames contain the class.
    bool trainable(const std::string& cls) {
        auto it = trainable_.find(cls);
        if (it != trainable_.end()) return it->second;
        std::vector<std::int64_t> counts;
        for (std::int64_t t = split_.train.begin; t < split_.train.end; ++t)
            counts.push_back(proxy::true_count(trace_.frame(t), cls));
        bool any = std::any_of(counts.begin(), counts.end(),
                               [](std::int64_t c) { return c > 0; });
        bool ok = any && proxy::count_cap(counts) >= 1;
        trainable_[cls] = ok;
        return ok;
    }

  private:
    // One-time offline cost of oracle-labeling the train and held-out days.
    void charge_labeling() {
        if (labeled_) return;
        labeled_ = true;
        double frame_cost = trace_.frame_box().area() / Oracle::kReferenceArea;
        offline_cost_ += frame_cost * double(split_.train.size() + split_.heldout.size());
    }

    void run_exact(const frameql::Query& q, Oracle& oracle, PlanReport& report) {
        FrameRange range = split_.unseen;
        std::vector<DetectionRecord> records;
        if (references_trackid(q)) {
            VideoTrace sub;
            sub.width = trace_.width;
            sub.height = trace_.height;
            for (std::int64_t t = range.begin; t < range.end; ++t) {
                Frame f;
                f.records = oracle.detect(t);
                sub.frames.push_back(std::move(f));
            }
            sub = vqe::resolve_tracks(std::move(sub));
            for (const auto& f : sub.frames)
                records.insert(records.end(), f.records.begin(), f.records.end());
        } else {
            records = full_scan(oracle, range);
        }

        auto matching = relalg::filter(records, q.where);

        if (q.group_by != frameql::GroupBy::None && !q.having.empty()) {
            auto groups = relalg::group_records(matching, q.group_by);
            std::vector<DetectionRecord> kept;
            for (const auto& [key, group] : groups)
                if (relalg::having_holds(q.having, group))
                    kept.insert(kept.end(), group.begin(), group.end());
            matching = std::move(kept);
        }

        using frameql::AggKind;
        switch (q.select_list.agg) {
            case AggKind::FCount:
                report.value = double(matching.size()) / double(range.size());
                return;
            case AggKind::Count:
                report.value = double(matching.size());
                return;
            case AggKind::CountDistinct: {
                std::set<std::int64_t> ids;
                for (const auto& r : matching) ids.insert(r.trackid.value_or(-1));
                report.value = double(ids.size());
                return;
            }
            case AggKind::None:
                break;
        }

        if (q.select_list.columns == std::vector<std::string>{"timestamp"}) {
            std::set<std::int64_t> stamps;
            for (const auto& r : matching) stamps.insert(r.timestamp);
            std::vector<std::int64_t> accepted;
            std::int64_t limit = q.limit.value_or(trace_.n_frames());
            std::int64_t gap = q.gap.value_or(0);
            for (std::int64_t t : stamps) {
                if (static_cast<std::int64_t>(accepted.size()) >= limit) break;
                if (gap > 0 && !relalg::gap_ok(accepted, t, gap)) continue;
                accepted.push_back(t);
            }
            report.timestamps = std::move(accepted);
            report.verified = true;
            return;
        }

        if (q.limit && static_cast<std::int64_t>(matching.size()) > *q.limit)
            matching.resize(static_cast<std::size_t>(*q.limit));
        report.records = std::move(matching);
        report.verified = true;
    }

    aggcv::SamplerConfig sampler_config(const frameql::Query& q) {
        aggcv::SamplerConfig cfg;
        cfg.epsilon = *q.error_bound;
        // COUNT bounds are totals over the unseen range; the sampler works on
        // the per-frame mean
        if (q.select_list.agg == frameql::AggKind::Count)
            cfg.epsilon /= double(split_.unseen.size());
        cfg.confidence = q.confidence.value_or(0.95);
        cfg.seed = cfg_.seed;
        // K from the labeled (train + held-out) data
        charge_labeling();
        std::vector<double> labeled;
        for (std::int64_t t = split_.train.begin; t < split_.heldout.end; ++t) {
            std::int64_t n = 0;
            for (const auto& r : trace_.frame(t).records)
                if (relalg::matches(q.where, r)) ++n;
            labeled.push_back(double(n));
        }
        cfg.range_K = aggcv::estimate_range_K(labeled);
        return cfg;
    }

    void finish_aggregate(const frameql::Query& q, const aggcv::Estimate& est,
                          PlanReport& report) {
        double scale =
            q.select_list.agg == frameql::AggKind::Count ? double(split_.unseen.size()) : 1.0;
        report.value = est.value * scale;
        report.half_width = est.half_width * scale;
        report.n_samples = est.n_samples;
        if (est.exact && report.plan != PlanKind::AggregateExact)
            report.plan = PlanKind::AggregateExact;  // exhausted; answer is exact
    }

    void run_plain_aqp(const frameql::Query& q, Oracle& oracle, PlanReport& report) {
        auto cfg = sampler_config(q);
        FrameRange range = split_.unseen;
        auto stat = [&](std::int64_t i) {
            return double(frame_statistic(oracle, range.begin + i, q.where));
        };
        finish_aggregate(q, aggcv::adaptive_sample(range.size(), stat, cfg), report);
    }

    void run_model_aggregate(const Plan& plan, const frameql::Query& q, Oracle& oracle,
                             proxy::ProxyCost& proxy_cost, PlanReport& report) {
        const std::string& cls = *plan.statistic_class;
        const auto& model = model_for({cls});
        FrameRange range = split_.unseen;
        double scale =
            q.select_list.agg == frameql::AggKind::Count ? double(range.size()) : 1.0;
        double uerr = *q.error_bound / scale;  // per-frame bound
        double conf = q.confidence.value_or(0.95);

        if (plan.kind == PlanKind::AggregateRewrite) {
            auto rewrite = aggcv::rewrite_with_proxy(model, trace_, range, split_.heldout, cls,
                                                     uerr, conf, cfg_.bootstrap_B,
                                                     cfg_.seed + 1, &proxy_cost);
            if (rewrite.estimate) {
                report.value = rewrite.estimate->value * scale;
                report.half_width = rewrite.estimate->half_width * scale;
                report.n_samples = 0;
                return;
            }
            report.plan = PlanKind::AggregateControlVariates;  // fall through per dispatch
        }

        // control variates: proxy statistic materialized over the unseen range
        const proxy::ClassHead* head = model.head_for(cls);
        std::size_t head_idx = static_cast<std::size_t>(head - model.heads.data());
        auto preds = proxy::infer(model, trace_, range, &proxy_cost);
        std::vector<double> proxy_counts(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i)
            proxy_counts[i] = double(preds[i].counts[head_idx]);

        auto cfg = sampler_config(q);
        auto stat = [&](std::int64_t i) {
            return double(frame_statistic(oracle, range.begin + i, q.where));
        };
        finish_aggregate(
            q, aggcv::control_variates_sample(range.size(), stat, proxy_counts, cfg), report);
    }

    void run_scrub(const Plan& plan, const frameql::Query& q, Oracle& oracle,
                   proxy::ProxyCost& proxy_cost, PlanReport& report) {
        FrameRange range = split_.unseen;
        std::int64_t limit = q.limit.value_or(1);
        std::int64_t gap = q.gap.value_or(0);
        auto accept = [&](const std::vector<DetectionRecord>& records) {
            auto matching = relalg::filter(records, q.where);
            return relalg::frame_satisfies(q.having, matching);
        };

        scrub::ScrubResult result;
        if (plan.kind == PlanKind::ScrubRanked) {
            auto pred = scrub::ScrubPredicate::from_having(q.having);
            std::vector<std::string> classes;
            for (const auto& cj : pred.conjuncts) classes.push_back(cj.object_class);
            const auto& model = model_for(classes);
            auto ranked = scrub::rank_frames(model, trace_, range, pred, &proxy_cost);
            result = scrub::ranked_search(ranked, oracle, accept, limit, gap);
        } else {
            result = scrub::fallback_scan(oracle, range, accept, limit, gap);
        }
        report.timestamps = std::move(result.timestamps);
        report.verified = true;
    }

    void run_selection(const frameql::Query& q, Oracle& oracle, proxy::ProxyCost& proxy_cost,
                       PlanReport& report) {
        FrameRange range = split_.unseen;
        const proxy::ProxyModel* model = nullptr;
        std::vector<std::string> classes;
        {
            std::vector<frameql::ExprPtr> terms;
            if (q.where) {
                if (q.where->kind == frameql::Expr::Kind::And)
                    terms = q.where->children;
                else
                    terms = {q.where};
            }
            for (const auto& t : terms) {
                if (t->kind == frameql::Expr::Kind::Compare && t->op == "=" &&
                    t->children[0]->kind == frameql::Expr::Kind::Column &&
                    t->children[0]->name == "class" &&
                    t->children[1]->kind == frameql::Expr::Kind::StringLit &&
                    trainable(t->children[1]->str))
                    classes.push_back(t->children[1]->str);
            }
        }
        if (!classes.empty()) model = &model_for(classes);

        charge_labeling();
        auto filter_plan = select::infer_plan(q, trace_, split_, model,
                                              relalg::default_registry(), &proxy_cost);
        auto result = select::apply_plan(filter_plan, trace_, oracle, q, range, model,
                                         relalg::default_registry(), &proxy_cost);

        auto matching = std::move(result.records);
        if (q.group_by == frameql::GroupBy::Timestamp && !q.having.empty()) {
            auto groups = relalg::group_records(matching, q.group_by);
            std::vector<DetectionRecord> kept;
            for (const auto& [key, group] : groups)
                if (relalg::having_holds(q.having, group))
                    kept.insert(kept.end(), group.begin(), group.end());
            matching = std::move(kept);
        }
        if (q.limit && static_cast<std::int64_t>(matching.size()) > *q.limit)
            matching.resize(static_cast<std::size_t>(*q.limit));
        report.records = std::move(matching);
        report.verified = true;
    }

    const VideoTrace& trace_;
    EngineConfig cfg_;
    LabeledSplit split_;
    std::map<std::string, proxy::ProxyModel> models_;
    std::map<std::string, bool> trainable_;
    bool labeled_ = false;
    double offline_cost_ = 0.0;
};

}  // namespace vqe::engine
