#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "vqe/select.hpp"
#include "vqe/synthgen.hpp"

using namespace vqe;

namespace {

synth::TraceSpec red_car_spec(std::int64_t n_frames, std::uint64_t seed = 23) {
    synth::TraceSpec spec;
    spec.n_frames = n_frames;
    spec.classes = {{"car", 0.3, 6.0}};
    spec.feature_dim = 1;
    spec.red_class = "car";
    spec.red_fraction = 0.25;
    spec.seed = seed;
    return spec;
}

std::vector<DetectionRecord> brute_force(const VideoTrace& trace, const frameql::Query& q,
                                         FrameRange range) {
    std::vector<DetectionRecord> out;
    for (std::int64_t t = range.begin; t < range.end; ++t)
        for (const auto& r : trace.frame(t).records)
            if (relalg::matches(q.where, r)) out.push_back(r);
    return out;
}

}  // namespace

TEST_CASE("record-level UDF evaluation") {
    DetectionRecord r;
    r.object_class = "car";
    r.mask = Box{0, 0, 400, 250};
    r.content = {210.0, 90.0, 40.0};

    SUBCASE("redness is the first content channel") {
        auto q = frameql::parse("SELECT * FROM t WHERE redness(content) >= 200");
        CHECK(relalg::matches(q.where, r));
        r.content[0] = 199.0;
        CHECK(!relalg::matches(q.where, r));
    }

    SUBCASE("area boundary: 400x250 = 100000 is excluded by a strict bound") {
        auto q = frameql::parse("SELECT * FROM t WHERE area(mask) > 100000");
        CHECK(!relalg::matches(q.where, r));  // exactly 100000
        r.mask.xmax = 401;
        CHECK(relalg::matches(q.where, r));
    }

    SUBCASE("classify splits on the second channel") {
        auto q = frameql::parse("SELECT * FROM t WHERE classify(content) = 'sedan'");
        CHECK(relalg::matches(q.where, r));  // 90 < 128
        r.content[1] = 128.0;
        CHECK(!relalg::matches(q.where, r));
    }
}

TEST_CASE("temporal stride arithmetic") {
    CHECK(select::stride_for_duration(1) == 1);
    CHECK(select::stride_for_duration(2) == 1);
    CHECK(select::stride_for_duration(3) == 1);
    CHECK(select::stride_for_duration(5) == 2);
    CHECK(select::stride_for_duration(29) == 14);  // 14-frame stride for ~1s at 30 fps
    CHECK(select::stride_for_duration(30) == 14);
    CHECK(select::stride_for_duration(31) == 15);
}

TEST_CASE("duration bound comes from GROUP BY trackid HAVING COUNT(*)") {
    auto q = frameql::parse(
        "SELECT * FROM t WHERE class='car' GROUP BY trackid HAVING COUNT(*) >= 10");
    REQUIRE(select::duration_bound(q).has_value());
    CHECK(*select::duration_bound(q) == 10);

    auto no_group = frameql::parse("SELECT * FROM t WHERE class='car'");
    CHECK(!select::duration_bound(no_group).has_value());

    auto by_ts = frameql::parse(
        "SELECT * FROM t GROUP BY timestamp HAVING COUNT(*) >= 2 LIMIT 5");
    CHECK(!select::duration_bound(by_ts).has_value());
}

TEST_CASE("spatial filter from mask coordinate bounds") {
    auto trace = synth::generate(red_car_spec(300));
    auto split = default_split(trace.n_frames());
    auto q = frameql::parse(
        "SELECT * FROM t WHERE class='car' AND xmin(mask) >= 100 AND xmax(mask) <= 900 "
        "AND ymin(mask) >= 50");
    auto plan = select::infer_plan(q, trace, split, nullptr);
    REQUIRE(plan.spatial.has_value());
    CHECK(plan.spatial->roi.xmin == doctest::Approx(100));
    CHECK(plan.spatial->roi.xmax == doctest::Approx(900));
    CHECK(plan.spatial->roi.ymin == doctest::Approx(50));
    CHECK(plan.spatial->roi.ymax == doctest::Approx(720));
    CHECK(plan.spatial->resized_width == doctest::Approx(800));
}

TEST_CASE("content filter carries a zero-false-negative heldout threshold") {
    auto trace = synth::generate(red_car_spec(3000));
    auto split = default_split(trace.n_frames());
    auto q = frameql::parse("SELECT * FROM t WHERE class='car' AND redness(content) >= 200");
    auto plan = select::infer_plan(q, trace, split, nullptr);
    REQUIRE(plan.content.size() == 1);
    CHECK(plan.content[0].udf == "redness");
    CHECK(plan.content[0].threshold.heldout_false_negatives == 0);
    CHECK(plan.content[0].threshold.cutoff > 0.0);
    CHECK(plan.content[0].threshold.heldout_selectivity > 0.0);
    CHECK(plan.estimated_selectivity == doctest::Approx(
              plan.content[0].threshold.heldout_selectivity));
}

TEST_CASE("plans without heldout positives omit statistical filters") {
    auto trace = synth::generate(red_car_spec(300));
    auto split = default_split(trace.n_frames());
    // impossible predicate: nothing matches, so no positives to calibrate on
    auto q = frameql::parse("SELECT * FROM t WHERE class='car' AND redness(content) >= 9999");
    auto plan = select::infer_plan(q, trace, split, nullptr);
    CHECK(plan.content.empty());
    CHECK(plan.label.empty());
}

TEST_CASE("empty plan reproduces the brute-force scan exactly") {
    auto trace = synth::generate(red_car_spec(500));
    auto q = frameql::parse("SELECT * FROM t WHERE class='car' AND redness(content) >= 200");
    FrameRange range{150, 500};

    select::FilterPlan empty_plan;  // no filters: every frame hits the oracle
    Oracle oracle(trace);
    auto res = select::apply_plan(empty_plan, trace, oracle, q, range, nullptr);
    auto truth = brute_force(trace, q, range);

    REQUIRE(res.records.size() == truth.size());
    std::multiset<std::tuple<std::int64_t, double, double>> got, want;
    for (const auto& r : res.records) got.insert({r.timestamp, r.mask.xmin, r.mask.ymin});
    for (const auto& r : truth) want.insert({r.timestamp, r.mask.xmin, r.mask.ymin});
    CHECK(got == want);
    CHECK(res.frames_detected == range.size());
}

TEST_CASE("content filtering keeps every match at a fraction of the detections") {
    auto trace = synth::generate(red_car_spec(5000));
    auto split = default_split(trace.n_frames());
    auto q = frameql::parse("SELECT * FROM t WHERE class='car' AND redness(content) >= 200");
    auto plan = select::infer_plan(q, trace, split, nullptr);
    REQUIRE(!plan.content.empty());

    Oracle oracle(trace);
    auto res = select::apply_plan(plan, trace, oracle, q, split.unseen, nullptr);
    auto truth = brute_force(trace, q, split.unseen);

    // zero false positives: every emitted record satisfies the predicate
    for (const auto& r : res.records) CHECK(relalg::matches(q.where, r));
    // false-negative rate stays small
    CHECK(res.records.size() <= truth.size());
    if (!truth.empty())
        CHECK(double(truth.size() - res.records.size()) / double(truth.size()) <= 0.05);
    // the filter actually pruned oracle work
    CHECK(res.frames_detected < split.unseen.size());
}

TEST_CASE("label filter prunes frames using the proxy") {
    auto spec = red_car_spec(6000);
    spec.feature_snr = 0.0;
    auto trace = synth::generate(spec);
    auto split = default_split(trace.n_frames());
    proxy::TrainConfig tc;
    tc.epochs = 10;
    auto model = proxy::train(trace, split.train, {"car"}, tc);

    auto q = frameql::parse("SELECT * FROM t WHERE class='car' AND redness(content) >= 0");
    auto plan = select::infer_plan(q, trace, split, &model);
    REQUIRE(!plan.label.empty());
    CHECK(plan.label[0].object_class == "car");
    CHECK(plan.label[0].threshold.heldout_false_negatives == 0);

    Oracle oracle(trace);
    auto res = select::apply_plan(plan, trace, oracle, q, split.unseen, &model);
    auto truth = brute_force(trace, q, split.unseen);
    for (const auto& r : res.records) CHECK(relalg::matches(q.where, r));
    if (!truth.empty())
        CHECK(double(truth.size() - res.records.size()) / double(truth.size()) <= 0.05);
    // frames without cars skip the oracle entirely
    CHECK(res.frames_detected < split.unseen.size());
}

TEST_CASE("temporal stride with duration verification") {
    // one long car run (30 frames) and one short blip (3 frames)
    VideoTrace trace;
    trace.width = 1280;
    trace.height = 720;
    trace.feature_dim = 1;
    auto put_car = [&](Frame& f, std::int64_t t) {
        DetectionRecord r;
        r.timestamp = t;
        r.object_class = "car";
        r.mask = Box{100, 100, 300, 300};
        r.content = {10, 10, 10};
        f.records.push_back(r);
    };
    for (std::int64_t t = 0; t < 200; ++t) {
        Frame f;
        f.feature = {0.0};
        if ((t >= 40 && t < 70) || (t >= 150 && t < 153)) put_car(f, t);
        trace.frames.push_back(std::move(f));
    }

    auto q = frameql::parse(
        "SELECT * FROM t WHERE class='car' AND area(mask) > 100 "
        "GROUP BY trackid HAVING COUNT(*) >= 10");
    select::FilterPlan plan;
    plan.temporal = select::TemporalFilter{select::stride_for_duration(10), 10};
    CHECK(plan.temporal->stride == 4);

    Oracle oracle(trace);
    auto res = select::apply_plan(plan, trace, oracle, q, {0, 200}, nullptr);

    // the 30-frame run is found in full; the 3-frame blip fails HAVING
    std::set<std::int64_t> stamps;
    for (const auto& r : res.records) stamps.insert(r.timestamp);
    CHECK(stamps.size() == 30);
    CHECK(*stamps.begin() == 40);
    CHECK(*stamps.rbegin() == 69);
    // striding + window expansion detects fewer frames than a full scan
    CHECK(res.frames_detected < 200);
}

TEST_CASE("ablating a filter never reduces the detection count") {
    auto trace = synth::generate(red_car_spec(4000));
    auto split = default_split(trace.n_frames());
    auto q = frameql::parse("SELECT * FROM t WHERE class='car' AND redness(content) >= 200");
    auto plan = select::infer_plan(q, trace, split, nullptr);
    REQUIRE(!plan.content.empty());

    Oracle with_oracle(trace);
    auto with = select::apply_plan(plan, trace, with_oracle, q, split.unseen, nullptr);

    select::FilterAblation off;
    off.use_content = false;
    Oracle without_oracle(trace);
    auto without =
        select::apply_plan(plan, trace, without_oracle, q, split.unseen, nullptr,
                           relalg::default_registry(), nullptr, off);

    CHECK(without.frames_detected >= with.frames_detected);
    CHECK(without.records.size() >= with.records.size());
}
