#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqe/trace.hpp"

namespace vqe::synth {

struct ClassSpec {
    std::string name;
    double occupancy = 0.0;       // fraction of frames with >= 1 object present
    double mean_duration = 10.0;  // mean on-screen run length in frames
};

// Planted rare events: at each event frame, every conjunct class is forced
// to have at least min_count objects present.
struct RarePattern {
    struct Conjunct {
        std::string object_class;
        int min_count = 1;
    };
    std::vector<Conjunct> conjuncts;
    double prevalence = 0.0;  // target fraction of event frames
    int duration = 1;         // frames per planted event
    int min_separation = 0;   // minimum distance between event starts
};

struct TraceSpec {
    std::string name = "synthetic";
    std::int64_t n_frames = 1000;
    std::vector<ClassSpec> classes;
    int width = 1280;
    int height = 720;
    double fps = 30.0;
    int feature_dim = 8;
    // Feature snr: per-frame feature[k] = count of class k + N(0, 1/snr).
    // snr <= 0 means noise-free (infinite snr).
    double feature_snr = 0.0;
    // Fraction of red_class objects that are "red" (content[0] >= red_level).
    std::string red_class;
    double red_fraction = 0.0;
    double red_level = 200.0;
    std::optional<RarePattern> rare;
    std::uint64_t seed = 0;
};

namespace detail {

struct ActiveObject {
    std::string object_class;
    Box box;
    std::vector<double> content;
    std::int64_t remaining;  // frames left on screen
};

inline std::int64_t geometric_duration(std::mt19937_64& rng, double mean) {
    if (mean <= 1.0) return 1;
    // duration = 1 + Geom(p), E = mean
    std::geometric_distribution<std::int64_t> g(1.0 / mean);
    return 1 + g(rng);
}

}  // namespace detail

// Deterministic synthetic trace generation. Object lifetimes follow a
// birth-death process: per class, births per frame are Poisson(b) with
// b = -ln(1 - occupancy) / mean_duration, so the stationary count is
// Poisson(b * mean_duration) and P(count >= 1) equals the target occupancy.
inline VideoTrace generate(const TraceSpec& spec) {
    if (spec.n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
    for (const auto& c : spec.classes)
        if (c.occupancy < 0.0 || c.occupancy >= 1.0)
            throw std::invalid_argument("occupancy must be in [0,1)");
    if (spec.rare && spec.rare->prevalence > 1.0)
        throw std::invalid_argument("rare-event prevalence must be <= 1");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    VideoTrace trace;
    trace.name = spec.name;
    trace.width = spec.width;
    trace.height = spec.height;
    trace.fps = spec.fps;
    trace.feature_dim = spec.feature_dim;
    if (static_cast<std::size_t>(spec.feature_dim) < spec.classes.size())
        throw std::invalid_argument("feature_dim must be >= number of classes");

    auto make_object = [&](const std::string& cls) {
        detail::ActiveObject obj;
        obj.object_class = cls;
        double w = 100 + unit(rng) * (spec.width / 2.0 - 100);
        double h = 100 + unit(rng) * (spec.height / 2.0 - 100);
        double x = unit(rng) * (spec.width - w);
        double y = unit(rng) * (spec.height - h);
        obj.box = Box{x, y, x + w, y + h};
        obj.content.resize(3);
        bool red = cls == spec.red_class && unit(rng) < spec.red_fraction;
        if (red)
            obj.content[0] = spec.red_level + unit(rng) * 40.0;
        else
            obj.content[0] = unit(rng) * 30.0;
        obj.content[1] = unit(rng) * 256.0;
        obj.content[2] = unit(rng) * 256.0;
        return obj;
    };

    // Event frames for the rare pattern: starts spaced at least
    // min_separation apart, chosen by seeded rejection sampling.
    std::vector<std::int64_t> event_starts;
    if (spec.rare && spec.rare->prevalence > 0.0) {
        const auto& rp = *spec.rare;
        std::int64_t n_events = static_cast<std::int64_t>(
            std::llround(rp.prevalence * double(spec.n_frames) / std::max(1, rp.duration)));
        std::uniform_int_distribution<std::int64_t> pos(0, spec.n_frames - rp.duration);
        int attempts = 0;
        while (static_cast<std::int64_t>(event_starts.size()) < n_events) {
            if (++attempts > 1000000)
                throw std::invalid_argument("rare pattern infeasible: cannot place events");
            std::int64_t s = pos(rng);
            bool ok = true;
            for (std::int64_t e : event_starts)
                if (std::llabs(e - s) < std::max<std::int64_t>(rp.min_separation, rp.duration)) {
                    ok = false;
                    break;
                }
            if (ok) event_starts.push_back(s);
        }
        std::sort(event_starts.begin(), event_starts.end());
    }
    std::size_t next_event = 0;

    const std::size_t n_classes = spec.classes.size();
    std::vector<double> birth_rate(n_classes);
    std::vector<std::vector<detail::ActiveObject>> active(n_classes);

    for (std::size_t k = 0; k < n_classes; ++k) {
        const auto& cs = spec.classes[k];
        double lambda = cs.occupancy > 0.0 ? -std::log(1.0 - cs.occupancy) : 0.0;
        birth_rate[k] = lambda / std::max(1.0, cs.mean_duration);
        // start from the stationary distribution (geometric lifetimes are
        // memoryless, so fresh durations are valid residuals)
        std::poisson_distribution<int> init(lambda);
        int n0 = cs.occupancy > 0.0 ? init(rng) : 0;
        for (int i = 0; i < n0; ++i) {
            auto obj = make_object(cs.name);
            obj.remaining = detail::geometric_duration(rng, cs.mean_duration);
            active[k].push_back(std::move(obj));
        }
    }

    double noise_sd = spec.feature_snr > 0.0 ? 1.0 / spec.feature_snr : 0.0;
    std::normal_distribution<double> noise(0.0, 1.0);

    trace.frames.reserve(static_cast<std::size_t>(spec.n_frames));
    for (std::int64_t t = 0; t < spec.n_frames; ++t) {
        // births
        for (std::size_t k = 0; k < n_classes; ++k) {
            if (birth_rate[k] <= 0.0) continue;
            std::poisson_distribution<int> births(birth_rate[k]);
            int nb = births(rng);
            for (int i = 0; i < nb; ++i) {
                auto obj = make_object(spec.classes[k].name);
                obj.remaining = detail::geometric_duration(rng, spec.classes[k].mean_duration);
                active[k].push_back(std::move(obj));
            }
        }

        // planted event boost
        std::vector<detail::ActiveObject> planted;
        if (spec.rare) {
            while (next_event < event_starts.size() &&
                   event_starts[next_event] + spec.rare->duration <= t)
                ++next_event;
            bool in_event = next_event < event_starts.size() &&
                            event_starts[next_event] <= t &&
                            t < event_starts[next_event] + spec.rare->duration;
            if (in_event) {
                for (const auto& cj : spec.rare->conjuncts) {
                    std::int64_t present = 0;
                    for (std::size_t k = 0; k < n_classes; ++k)
                        if (spec.classes[k].name == cj.object_class)
                            present += static_cast<std::int64_t>(active[k].size());
                    for (std::int64_t i = present; i < cj.min_count; ++i) {
                        auto obj = make_object(cj.object_class);
                        obj.remaining = 1;
                        planted.push_back(std::move(obj));
                    }
                }
            }
        }

        Frame frame;
        std::vector<double> counts(n_classes, 0.0);
        auto emit = [&](const detail::ActiveObject& obj) {
            DetectionRecord rec;
            rec.timestamp = t;
            rec.object_class = obj.object_class;
            rec.mask = obj.box;
            rec.content = obj.content;
            rec.confidence = 0.6 + 0.4 * unit(rng);
            frame.records.push_back(std::move(rec));
            for (std::size_t k = 0; k < n_classes; ++k)
                if (spec.classes[k].name == frame.records.back().object_class) counts[k] += 1.0;
        };
        for (auto& cls_objects : active)
            for (auto& obj : cls_objects) emit(obj);
        for (auto& obj : planted) emit(obj);

        frame.feature.resize(static_cast<std::size_t>(spec.feature_dim));
        for (int j = 0; j < spec.feature_dim; ++j) {
            double base = static_cast<std::size_t>(j) < n_classes ? counts[j] : 0.0;
            frame.feature[j] = base + (noise_sd > 0.0 ? noise(rng) * noise_sd : 0.0);
        }
        trace.frames.push_back(std::move(frame));

        // deaths
        for (auto& cls_objects : active) {
            for (auto& obj : cls_objects) --obj.remaining;
            std::erase_if(cls_objects, [](const detail::ActiveObject& o) { return o.remaining <= 0; });
        }
    }

    return trace;
}

}  // namespace vqe::synth
