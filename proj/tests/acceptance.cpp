// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and seeded for reproducibility.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vqe/engine.hpp"
#include "vqe/frameql.hpp"
#include "vqe/stats.hpp"
#include "vqe/synthgen.hpp"

using namespace vqe;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::ostringstream os;
    os << "criterion " << number << " (" << name << "): " << (pass ? "PASS" : "FAIL");
    if (!detail.empty()) os << " [" << detail << "]";
    os << " (" << seconds << "s)";
    std::cout << os.str() << "\n";
    if (!pass) ++failures;
}

template <typename Fn>
void run_criterion(int number, const std::string& name, Fn&& fn) {
    auto start = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        pass = fn(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(number, name, pass, detail, seconds);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> class_counts(const VideoTrace& trace, const std::string& cls,
                                 FrameRange range) {
    std::vector<double> out;
    out.reserve(std::size_t(range.size()));
    for (std::int64_t t = range.begin; t < range.end; ++t)
        out.push_back(double(proxy::true_count(trace.frame(t), cls)));
    return out;
}

// ---------------------------------------------------------------------------
// 1. parser corpus + round-trip property
// ---------------------------------------------------------------------------

struct AstGen {
    std::mt19937_64 rng;
    explicit AstGen(std::uint64_t seed) : rng(seed) {}

    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }
    double num() {
        double v = std::uniform_real_distribution<double>(0.0, 1000.0)(rng);
        return std::round(v * 100.0) / 100.0;
    }
    std::string ident() {
        static const char* names[] = {"car", "bus", "boat", "sedan", "truck"};
        return names[pick(5)];
    }
    std::string cmp_op() {
        static const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
        return ops[pick(6)];
    }

    frameql::ExprPtr operand() {
        using frameql::Expr;
        auto e = std::make_shared<Expr>();
        switch (pick(4)) {
            case 0:
                e->kind = Expr::Kind::Column;
                e->name = std::vector<std::string>{"class", "timestamp", "trackid"}[pick(3)];
                break;
            case 1:
                e->kind = Expr::Kind::StringLit;
                e->str = ident();
                break;
            case 2:
                e->kind = Expr::Kind::NumberLit;
                e->number = num();
                break;
            default: {
                e->kind = Expr::Kind::Call;
                e->name = std::vector<std::string>{"redness", "area", "classify"}[pick(3)];
                auto arg = std::make_shared<Expr>();
                arg->kind = Expr::Kind::Column;
                arg->name = e->name == "area" ? "mask" : "content";
                e->children.push_back(arg);
                break;
            }
        }
        return e;
    }

    frameql::ExprPtr comparison() {
        auto e = std::make_shared<frameql::Expr>();
        e->kind = frameql::Expr::Kind::Compare;
        e->op = cmp_op();
        e->children = {operand(), operand()};
        return e;
    }

    frameql::ExprPtr boolean(int depth) {
        using frameql::Expr;
        if (depth == 0 || pick(2) == 0) return comparison();
        auto kind = pick(2) ? Expr::Kind::And : Expr::Kind::Or;
        return frameql::make_connective(kind, {boolean(depth - 1), boolean(depth - 1)});
    }

    frameql::Query query() {
        using frameql::AggKind;
        using frameql::GroupBy;
        using frameql::HavingTerm;
        frameql::Query q;
        q.source = "trace" + std::to_string(pick(10));
        switch (pick(4)) {
            case 0:
                q.select_list.agg = AggKind::FCount;
                break;
            case 1:
                q.select_list.agg = AggKind::Count;
                break;
            case 2:
                q.select_list.agg = AggKind::CountDistinct;
                q.select_list.distinct_column = "trackid";
                break;
            default: {
                static const char* cols[] = {"*", "timestamp", "class", "mask", "trackid"};
                int n = 1 + pick(3);
                for (int i = 0; i < n; ++i) q.select_list.columns.push_back(cols[pick(5)]);
                break;
            }
        }
        if (pick(2)) q.where = boolean(2);
        if (pick(3) == 0) q.group_by = pick(2) ? GroupBy::Timestamp : GroupBy::TrackId;
        if (pick(3) == 0) {
            int n = 1 + pick(2);
            for (int i = 0; i < n; ++i) {
                HavingTerm h;
                if (pick(2)) {
                    h.kind = HavingTerm::Kind::SumClassEq;
                    h.class_name = ident();
                } else {
                    h.kind = HavingTerm::Kind::CountStar;
                }
                h.op = cmp_op();
                h.value = std::floor(num());
                q.having.push_back(h);
            }
        }
        if (q.select_list.is_aggregate() && pick(2)) {
            q.error_bound = 0.01 + num() / 1000.0;
            q.confidence = std::vector<double>{0.9, 0.95, 0.99}[pick(3)];
        }
        if (pick(3) == 0) q.fpr_bound = num() / 1000.0;
        if (pick(3) == 0) q.fnr_bound = num() / 1000.0;
        if (pick(2)) {
            q.limit = 1 + pick(100);
            if (pick(2)) q.gap = pick(500);
        }
        return q;
    }
};

bool criterion_parser(std::string& detail) {
    const char* corpus[] = {
        "SELECT FCOUNT(*)\nFROM taipei\nWHERE class = 'car'\nERROR WITHIN 0.1\n"
        "AT CONFIDENCE 95%",
        "SELECT timestamp\nFROM taipei\nGROUP BY timestamp\nHAVING SUM(class='bus')>=1\n"
        "   AND SUM(class='car')>=5\nLIMIT 10 GAP 300",
        "SELECT *\nFROM taipei\nWHERE class = 'bus'\n  AND redness(content) >= 17.5\n"
        "  AND area(mask) > 100000\nGROUP BY trackid\nHAVING COUNT(*) > 15",
        "SELECT COUNT (DISTINCT trackid)\nFROM taipei\nWHERE class = 'car'",
        "SELECT COUNT(*)\nFROM taipei\nWHERE class = 'car'\nERROR WITHIN 0.1 CONFIDENCE 95%",
        "SELECT timestamp\nFROM taipei\nWHERE class = 'car'\nFNR WITHIN 0.01\nFPR WITHIN 0.01",
        "SELECT *\nFROM taipei\nWHERE class = 'car'\n  AND classify(content) = 'sedan'",
    };
    for (const char* text : corpus) {
        frameql::Query q = frameql::parse(text);
        frameql::Query again = frameql::parse(frameql::print(q));
        if (!(again == q)) {
            detail = "corpus round trip failed";
            return false;
        }
    }
    AstGen gen(20240817);
    for (int i = 0; i < 500; ++i) {
        frameql::Query q = gen.query();
        std::string text = frameql::print(q);
        frameql::Query reparsed = frameql::parse(text);
        if (!(reparsed == q) || frameql::print(reparsed) != text) {
            detail = "generated AST " + std::to_string(i) + " failed round trip";
            return false;
        }
    }
    detail = "7 corpus queries + 500 generated ASTs";
    return true;
}

// ---------------------------------------------------------------------------
// 2. error-bound coverage
// ---------------------------------------------------------------------------

VideoTrace coverage_trace() {
    synth::TraceSpec spec;
    spec.n_frames = 100000;
    spec.classes = {{"car", 0.35, 6.0}};
    spec.feature_dim = 1;
    spec.seed = 1001;
    return synth::generate(spec);
}

bool criterion_coverage(std::string& detail) {
    auto trace = coverage_trace();
    auto m = class_counts(trace, "car", {0, trace.n_frames()});
    double truth = stats::mean(m);
    std::int64_t n = std::int64_t(m.size());

    aggcv::SamplerConfig cfg;
    cfg.epsilon = 0.05;
    cfg.confidence = 0.95;
    cfg.range_K = aggcv::estimate_range_K(m);

    // correlated proxy for the CV runs
    std::mt19937_64 rng(7);
    double sd_m = std::sqrt(stats::variance(m));
    std::normal_distribution<double> noise(0.0, sd_m * 0.5);
    std::vector<double> proxy_vals(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) proxy_vals[i] = m[i] + noise(rng);

    int aqp_ok = 0, cv_ok = 0;
    const int runs = 200;
    for (int r = 0; r < runs; ++r) {
        cfg.seed = std::uint64_t(r);
        auto aqp = aggcv::adaptive_sample(
            n, [&](std::int64_t i) { return m[std::size_t(i)]; }, cfg);
        if (std::abs(aqp.value - truth) <= cfg.epsilon) ++aqp_ok;
        auto cv = aggcv::control_variates_sample(
            n, [&](std::int64_t i) { return m[std::size_t(i)]; }, proxy_vals, cfg);
        if (std::abs(cv.value - truth) <= cfg.epsilon) ++cv_ok;
    }
    std::ostringstream os;
    os << "AQP " << aqp_ok << "/200, CV " << cv_ok << "/200 within 0.05";
    detail = os.str();
    return aqp_ok >= 186 && cv_ok >= 186;
}

// ---------------------------------------------------------------------------
// 3. control-variates gain
// ---------------------------------------------------------------------------

bool criterion_cv_gain(std::string& detail) {
    auto trace = coverage_trace();
    auto m = class_counts(trace, "car", {0, trace.n_frames()});
    std::int64_t n = std::int64_t(m.size());
    double sd_m = std::sqrt(stats::variance(m));

    // rho ~ 0.9: t = m + noise with sd chosen from rho = sd_m / sd_t
    std::mt19937_64 rng(13);
    std::vector<double> t_corr(m.size()), t_indep(m.size());
    {
        std::normal_distribution<double> noise(0.0, sd_m * 0.4843);
        for (std::size_t i = 0; i < m.size(); ++i) t_corr[i] = m[i] + noise(rng);
        std::normal_distribution<double> indep(0.0, sd_m);
        for (std::size_t i = 0; i < m.size(); ++i) t_indep[i] = indep(rng);
    }
    double rho_corr = stats::correlation(m, t_corr);
    double rho_indep = stats::correlation(m, t_indep);

    aggcv::SamplerConfig cfg;
    cfg.epsilon = 0.02;
    cfg.confidence = 0.95;
    cfg.range_K = aggcv::estimate_range_K(m);
    cfg.round_step = 100;  // fine-grained rounds sharpen the sample-count ratio

    auto stat = [&](std::int64_t i) { return m[std::size_t(i)]; };
    std::vector<double> aqp_n, cv_corr_n, cv_indep_n;
    for (int r = 0; r < 100; ++r) {
        cfg.seed = std::uint64_t(1000 + r);
        aqp_n.push_back(double(aggcv::adaptive_sample(n, stat, cfg).n_samples));
        cv_corr_n.push_back(
            double(aggcv::control_variates_sample(n, stat, t_corr, cfg).n_samples));
        cv_indep_n.push_back(
            double(aggcv::control_variates_sample(n, stat, t_indep, cfg).n_samples));
    }
    double gain = median(cv_corr_n) / median(aqp_n);
    double null_ratio = median(cv_indep_n) / median(aqp_n);
    std::ostringstream os;
    os << "rho=" << rho_corr << " ratio=" << gain << "; rho=" << rho_indep
       << " ratio=" << null_ratio;
    detail = os.str();
    return gain <= 0.6 && null_ratio >= 0.9 && null_ratio <= 1.1;
}

// ---------------------------------------------------------------------------
// 4. variance identity
// ---------------------------------------------------------------------------

bool criterion_variance_identity(std::string& detail) {
    std::ostringstream os;
    for (double target_rho : {0.5, 0.9}) {
        std::mt19937_64 rng(std::uint64_t(target_rho * 100));
        std::normal_distribution<double> g(0.0, 1.0);
        std::size_t n = 100000;
        std::vector<double> t_vals(n), m_vals(n);
        for (std::size_t i = 0; i < n; ++i) {
            double t = g(rng), u = g(rng);
            t_vals[i] = t;
            m_vals[i] = target_rho * t + std::sqrt(1 - target_rho * target_rho) * u;
        }
        double rho = stats::correlation(m_vals, t_vals);
        double tau = stats::mean(t_vals);
        double c = -stats::sample_covariance(m_vals, t_vals) / stats::variance(t_vals);
        std::vector<double> corrected(n);
        for (std::size_t i = 0; i < n; ++i)
            corrected[i] = m_vals[i] + c * (t_vals[i] - tau);
        double ratio = stats::variance(corrected) / stats::variance(m_vals);
        double predicted = 1.0 - rho * rho;
        os << "rho=" << rho << " ratio=" << ratio << " predicted=" << predicted << "; ";
        if (std::abs(ratio - predicted) > 0.05) {
            detail = os.str();
            return false;
        }
    }
    detail = os.str();
    return true;
}

// ---------------------------------------------------------------------------
// 5. rewrite path
// ---------------------------------------------------------------------------

bool criterion_rewrite(std::string& detail) {
    synth::TraceSpec spec;
    spec.n_frames = 20000;
    spec.classes = {{"car", 0.35, 6.0}};
    spec.feature_dim = 1;
    spec.feature_snr = 0.0;  // noise-free: the proxy can qualify
    spec.seed = 2001;
    auto trace = synth::generate(spec);

    engine::EngineConfig cfg;
    cfg.train.epochs = 10;
    cfg.bootstrap_B = 500;
    engine::Engine eng(trace, cfg);
    auto rep = eng.run("SELECT FCOUNT(*) FROM t WHERE class='car' ERROR WITHIN 0.1");
    if (rep.plan != engine::PlanKind::AggregateRewrite) {
        detail = "rewrite not chosen";
        return false;
    }
    auto range = eng.split().unseen;
    double truth = stats::mean(class_counts(trace, "car", range));
    double err = std::abs(*rep.value - truth);
    if (err > 0.1 || rep.oracle_calls != 0) {
        detail = "rewrite error " + std::to_string(err);
        return false;
    }

    // day swap: train on a sparse segment, apply to a busy one; the proxy
    // mean must track the new segment, not repeat the training average
    synth::TraceSpec sparse = spec, busy = spec;
    sparse.classes[0].occupancy = 0.15;
    sparse.n_frames = 10000;
    sparse.seed = 2002;
    busy.classes[0].occupancy = 0.55;
    busy.n_frames = 10000;
    busy.seed = 2003;
    auto trace_a = synth::generate(sparse);
    auto trace_b = synth::generate(busy);

    proxy::TrainConfig tc;
    tc.epochs = 10;
    auto model = proxy::train(trace_a, {0, 5000}, {"car"}, tc);
    auto mean_on = [&](const VideoTrace& t) {
        auto preds = proxy::infer(model, t, {0, t.n_frames()});
        double s = 0;
        for (const auto& p : preds) s += double(p.counts[0]);
        return s / double(preds.size());
    };
    double pa = mean_on(trace_a), pb = mean_on(trace_b);
    double ta = stats::mean(class_counts(trace_a, "car", {0, trace_a.n_frames()}));
    double tb = stats::mean(class_counts(trace_b, "car", {0, trace_b.n_frames()}));
    std::ostringstream os;
    os << "rewrite err=" << err << "; swap proxy " << pa << "->" << pb << " truth " << ta
       << "->" << tb;
    detail = os.str();
    // direction must match and the proxy must move most of the way
    return (tb - ta) * (pb - pa) > 0 && std::abs(pb - pa) > 0.5 * std::abs(tb - ta);
}

// ---------------------------------------------------------------------------
// 6. scrubbing efficiency
// ---------------------------------------------------------------------------

double auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    // probability a random positive outranks a random negative
    double pos = 0, neg = 0, won = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        ++pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j])
                won += 1.0;
            else if (scores[i] == scores[j])
                won += 0.5;
        }
    }
    for (bool l : labels)
        if (!l) ++neg;
    if (pos == 0 || neg == 0) return 1.0;
    return won / (pos * neg);
}

bool criterion_scrubbing(std::string& detail) {
    std::vector<double> calls;
    double min_auc = 1.0;
    const std::int64_t kGap = 25;
    for (int s = 0; s < 20; ++s) {
        synth::TraceSpec spec;
        spec.n_frames = 30000;
        spec.classes = {{"car", 0.15, 4.0}};
        spec.feature_dim = 1;
        spec.seed = std::uint64_t(3000 + s);
        synth::RarePattern rp;
        rp.conjuncts = {{"car", 4}};
        rp.prevalence = 0.001;
        rp.duration = 1;
        rp.min_separation = 40;
        spec.rare = rp;
        auto trace = synth::generate(spec);

        FrameRange train{0, 6000}, heldout{6000, 9000}, unseen{9000, 30000};
        proxy::TrainConfig tc;
        tc.epochs = 10;
        auto model = proxy::train(trace, train, {"car"}, tc);

        scrub::ScrubPredicate pred;
        pred.conjuncts = {{"car", 4}};

        // held-out ranking quality
        auto ranked_held = scrub::rank_frames(model, trace, heldout, pred);
        std::vector<double> scores(std::size_t(heldout.size()));
        std::vector<bool> labels(std::size_t(heldout.size()));
        for (const auto& rf : ranked_held)
            scores[std::size_t(rf.timestamp - heldout.begin)] = rf.score;
        for (std::int64_t t = heldout.begin; t < heldout.end; ++t)
            labels[std::size_t(t - heldout.begin)] =
                proxy::true_count(trace.frame(t), "car") >= 4;
        min_auc = std::min(min_auc, auc(scores, labels));

        auto ranked = scrub::rank_frames(model, trace, unseen, pred);
        Oracle oracle(trace);
        auto accept = [&](const std::vector<DetectionRecord>& recs) {
            std::int64_t cars = 0;
            for (const auto& r : recs)
                if (r.object_class == "car") ++cars;
            return cars >= 4;
        };
        auto res = scrub::ranked_search(ranked, oracle, accept, 10, kGap);
        if (res.timestamps.size() != 10) {
            detail = "seed " + std::to_string(s) + ": found " +
                     std::to_string(res.timestamps.size()) + " of 10";
            return false;
        }
        for (std::size_t i = 0; i < res.timestamps.size(); ++i) {
            if (proxy::true_count(trace.frame(res.timestamps[i]), "car") < 4) {
                detail = "false positive returned";
                return false;
            }
            for (std::size_t j = i + 1; j < res.timestamps.size(); ++j)
                if (std::llabs(res.timestamps[i] - res.timestamps[j]) < kGap) {
                    detail = "GAP violated";
                    return false;
                }
        }
        calls.push_back(double(res.candidates_checked));
    }
    double med = median(calls);
    double budget = (10.0 / 0.001) / 50.0;  // 1/50 of the random-search expectation
    std::ostringstream os;
    os << "median oracle calls " << med << " (budget " << budget << "), min held-out AUC "
       << min_auc;
    detail = os.str();
    return med <= budget && min_auc >= 0.95;
}

// ---------------------------------------------------------------------------
// 7. selection filters
// ---------------------------------------------------------------------------

bool criterion_selection(std::string& detail) {
    const char* sql = "SELECT * FROM t WHERE class='bus' AND redness(content) >= 200";
    std::vector<double> fnrs;
    double worst_frac = 0.0;

    for (int s = 0; s < 20; ++s) {
        synth::TraceSpec spec;
        spec.n_frames = 5000;
        spec.classes = {{"bus", 0.10, 6.0}, {"car", 0.2, 5.0}};
        spec.feature_dim = 2;
        spec.red_class = "bus";
        spec.red_fraction = 0.5;
        spec.seed = std::uint64_t(4000 + s);
        auto trace = synth::generate(spec);

        engine::EngineConfig cfg;
        cfg.train.epochs = 8;
        engine::Engine eng(trace, cfg);
        auto rep = eng.run(sql);
        if (rep.plan != engine::PlanKind::SelectionFiltered) {
            detail = "selection plan not chosen";
            return false;
        }
        auto range = eng.split().unseen;
        worst_frac = std::max(worst_frac, double(rep.oracle_calls) / double(range.size()));

        auto q = frameql::parse(sql);
        std::int64_t truth = 0;
        for (std::int64_t t = range.begin; t < range.end; ++t)
            for (const auto& r : trace.frame(t).records)
                if (relalg::matches(q.where, r)) ++truth;
        for (const auto& r : rep.records)
            if (!relalg::matches(q.where, r)) {
                detail = "false positive emitted";
                return false;
            }
        double fnr = truth == 0
                         ? 0.0
                         : double(truth - std::int64_t(rep.records.size())) / double(truth);
        fnrs.push_back(fnr);
    }

    // factor test: disabling any filter class must not lower the oracle cost
    bool factor_ok = true;
    for (int s = 0; s < 5 && factor_ok; ++s) {
        synth::TraceSpec spec;
        spec.n_frames = 5000;
        spec.classes = {{"bus", 0.10, 6.0}, {"car", 0.2, 5.0}};
        spec.feature_dim = 2;
        spec.red_class = "bus";
        spec.red_fraction = 0.5;
        spec.seed = std::uint64_t(4100 + s);
        auto trace = synth::generate(spec);
        auto split = default_split(trace.n_frames());
        proxy::TrainConfig tc;
        tc.epochs = 8;
        auto model = proxy::train(trace, split.train, {"bus"}, tc);
        auto q = frameql::parse(sql);
        auto plan = select::infer_plan(q, trace, split, &model);

        auto cost_with = [&](const select::FilterAblation& ab) {
            Oracle oracle(trace);
            select::apply_plan(plan, trace, oracle, q, split.unseen, &model,
                               relalg::default_registry(), nullptr, ab);
            return oracle.cost_units();
        };
        double full = cost_with({});
        for (int which = 0; which < 4; ++which) {
            select::FilterAblation ab;
            if (which == 0) ab.use_spatial = false;
            if (which == 1) ab.use_temporal = false;
            if (which == 2) ab.use_label = false;
            if (which == 3) ab.use_content = false;
            if (cost_with(ab) < full - 1e-9) {
                factor_ok = false;
                break;
            }
        }
    }

    double med_fnr = median(fnrs);
    std::ostringstream os;
    os << "worst oracle fraction " << worst_frac << ", median FNR " << med_fnr
       << ", factor test " << (factor_ok ? "ok" : "violated");
    detail = os.str();
    return worst_frac <= 0.20 && med_fnr <= 0.05 && factor_ok;
}

// ---------------------------------------------------------------------------
// 8. entity resolution
// ---------------------------------------------------------------------------

bool criterion_entity_resolution(std::string& detail) {
    auto two_frames = [](Box a, Box b) {
        VideoTrace t;
        t.width = 1280;
        t.height = 720;
        for (int i = 0; i < 2; ++i) {
            Frame f;
            DetectionRecord r;
            r.timestamp = i;
            r.object_class = "car";
            r.mask = i == 0 ? a : b;
            f.records.push_back(r);
            t.frames.push_back(f);
        }
        return resolve_tracks(std::move(t));
    };
    // shift s gives IOU (100-s)/(100+s) for 100x100 boxes
    double s_69 = 100.0 * (1 - 0.69) / (1 + 0.69);
    double s_71 = 100.0 * (1 - 0.71) / (1 + 0.71);
    auto below = two_frames(Box{0, 0, 100, 100}, Box{s_69, 0, 100 + s_69, 100});
    auto above = two_frames(Box{0, 0, 100, 100}, Box{s_71, 0, 100 + s_71, 100});
    if (below.frames[0].records[0].trackid == below.frames[1].records[0].trackid) {
        detail = "IOU 0.69 merged";
        return false;
    }
    if (above.frames[0].records[0].trackid != above.frames[1].records[0].trackid) {
        detail = "IOU 0.71 split";
        return false;
    }

    synth::TraceSpec spec;
    spec.n_frames = 10000;
    spec.classes = {{"car", 0.4, 8.0}, {"bus", 0.15, 12.0}};
    spec.feature_dim = 2;
    spec.seed = 5001;
    auto trace = resolve_tracks(synth::generate(spec));

    std::map<std::int64_t, std::vector<const DetectionRecord*>> tracks;
    for (const auto& f : trace.frames)
        for (const auto& r : f.records) {
            if (!r.trackid) {
                detail = "record without trackid";
                return false;
            }
            tracks[*r.trackid].push_back(&r);
        }
    for (const auto& [tid, recs] : tracks) {
        for (std::size_t i = 1; i < recs.size(); ++i) {
            if (recs[i]->timestamp != recs[i - 1]->timestamp + 1) {
                detail = "track with a temporal hole";
                return false;
            }
            if (recs[i]->object_class != recs[0]->object_class) {
                detail = "track mixes classes";
                return false;
            }
            if (iou(recs[i - 1]->mask, recs[i]->mask) < 0.7) {
                detail = "consecutive IOU below cutoff";
                return false;
            }
        }
    }
    detail = "fixtures + " + std::to_string(tracks.size()) + " tracks on 10k frames";
    return true;
}

// ---------------------------------------------------------------------------
// 9. oracle-equivalence of optimized plans
// ---------------------------------------------------------------------------

bool criterion_equivalence(std::string& detail) {
    int checked = 0;
    for (std::uint64_t trace_seed : {6001, 6002, 6003, 6004, 6005}) {
        synth::TraceSpec spec;
        spec.n_frames = 1000;
        spec.classes = {{"car", 0.35, 6.0}, {"bus", 0.12, 8.0}};
        spec.feature_dim = 2;
        spec.red_class = "car";
        spec.red_fraction = 0.3;
        spec.seed = trace_seed;
        auto trace = synth::generate(spec);

        engine::EngineConfig cfg;
        cfg.train.epochs = 5;
        cfg.bootstrap_B = 200;
        cfg.seed = trace_seed;
        engine::Engine eng(trace, cfg);
        auto range = eng.split().unseen;

        auto count_matching = [&](const frameql::Query& q) {
            std::int64_t n = 0;
            for (std::int64_t t = range.begin; t < range.end; ++t)
                for (const auto& r : trace.frame(t).records)
                    if (relalg::matches(q.where, r)) ++n;
            return n;
        };

        std::vector<std::string> sqls = {
            "SELECT FCOUNT(*) FROM t WHERE class='car'",
            "SELECT COUNT(*) FROM t WHERE class='bus'",
            "SELECT FCOUNT(*) FROM t WHERE class='car' ERROR WITHIN 0.2",
            "SELECT FCOUNT(*) FROM t WHERE class='bus' ERROR WITHIN 0.15",
            "SELECT FCOUNT(*) FROM t WHERE redness(content) >= 100 ERROR WITHIN 0.2",
            "SELECT COUNT(DISTINCT trackid) FROM t WHERE class='car'",
            "SELECT timestamp FROM t GROUP BY timestamp HAVING SUM(class='car') >= 2 "
            "LIMIT 3 GAP 20",
            "SELECT timestamp FROM t GROUP BY timestamp HAVING SUM(class='bus') >= 1 "
            "LIMIT 5 GAP 10",
            "SELECT * FROM t WHERE class='car' AND redness(content) >= 200",
            "SELECT * FROM t WHERE class='car' AND area(mask) > 50000",
        };
        for (const auto& sql : sqls) {
            auto q = frameql::parse(sql);
            auto rep = eng.run(q);
            ++checked;
            using frameql::AggKind;
            if (q.select_list.agg == AggKind::FCount || q.select_list.agg == AggKind::Count) {
                double exact = double(count_matching(q));
                if (q.select_list.agg == AggKind::FCount) exact /= double(range.size());
                double bound = q.error_bound.value_or(0.0);
                if (std::abs(*rep.value - exact) > bound + 1e-9) {
                    detail = sql + ": value " + std::to_string(*rep.value) + " vs exact " +
                             std::to_string(exact);
                    return false;
                }
            } else if (q.select_list.agg == AggKind::CountDistinct) {
                VideoTrace sub;
                sub.width = trace.width;
                sub.height = trace.height;
                for (std::int64_t t = range.begin; t < range.end; ++t) {
                    Frame f;
                    f.records = trace.frame(t).records;
                    sub.frames.push_back(std::move(f));
                }
                sub = resolve_tracks(std::move(sub));
                std::set<std::int64_t> ids;
                for (const auto& f : sub.frames)
                    for (const auto& r : f.records)
                        if (relalg::matches(q.where, r)) ids.insert(*r.trackid);
                if (*rep.value != double(ids.size())) {
                    detail = sql + ": distinct mismatch";
                    return false;
                }
            } else if (!q.having.empty() && q.limit) {  // scrubbing
                for (std::size_t i = 0; i < rep.timestamps.size(); ++i) {
                    std::int64_t t = rep.timestamps[i];
                    if (!range.contains(t) ||
                        !relalg::frame_satisfies(
                            q.having, relalg::filter(trace.frame(t).records, q.where))) {
                        detail = sql + ": unverified timestamp";
                        return false;
                    }
                    for (std::size_t j = i + 1; j < rep.timestamps.size(); ++j)
                        if (q.gap && std::llabs(rep.timestamps[i] - rep.timestamps[j]) < *q.gap) {
                            detail = sql + ": GAP violated";
                            return false;
                        }
                }
                if (std::int64_t(rep.timestamps.size()) > *q.limit) {
                    detail = sql + ": LIMIT exceeded";
                    return false;
                }
            } else {  // selection: containment, false negatives only
                for (const auto& r : rep.records) {
                    if (!range.contains(r.timestamp) || !relalg::matches(q.where, r)) {
                        detail = sql + ": false positive record";
                        return false;
                    }
                }
                if (std::int64_t(rep.records.size()) > count_matching(q)) {
                    detail = sql + ": more records than exist";
                    return false;
                }
            }
        }
    }
    detail = std::to_string(checked) + " query/trace pairs";
    return true;
}

}  // namespace

int main() {
    run_criterion(1, "parser corpus and round trip", criterion_parser);
    run_criterion(2, "error-bound coverage", criterion_coverage);
    run_criterion(3, "control-variates gain", criterion_cv_gain);
    run_criterion(4, "variance identity", criterion_variance_identity);
    run_criterion(5, "rewrite path", criterion_rewrite);
    run_criterion(6, "scrubbing efficiency", criterion_scrubbing);
    run_criterion(7, "selection filters", criterion_selection);
    run_criterion(8, "entity resolution", criterion_entity_resolution);
    run_criterion(9, "plan-contract equivalence", criterion_equivalence);

    if (failures) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 9 criteria passed\n";
    return 0;
}
