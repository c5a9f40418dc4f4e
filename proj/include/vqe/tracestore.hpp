#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vqe/trace.hpp"

namespace vqe {

struct TraceIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline TraceIoError schema_error(int line, const std::string& what) {
    std::ostringstream os;
    os << "trace schema violation at line " << line << ": " << what;
    return TraceIoError(os.str());
}

}  // namespace detail

// Trace file format: JSON lines. First line is a header object
// {name,width,height,fps,feature_dim,thresholds}; each following line is one
// frame {t, feature, objects:[{class, box:[xmin,ymin,xmax,ymax], conf,
// content}]}. Records whose conf falls below the per-class threshold are
// dropped at load time.
inline VideoTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TraceIoError("cannot open trace file: " + path);

    VideoTrace trace;
    std::string line;
    int lineno = 0;

    if (!std::getline(in, line)) throw detail::schema_error(1, "missing header line");
    ++lineno;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw detail::schema_error(lineno, e.what());
    }
    for (const char* key : {"name", "width", "height", "fps", "feature_dim", "thresholds"})
        if (!header.contains(key)) throw detail::schema_error(lineno, std::string("header missing key '") + key + "'");
    trace.name = header["name"].get<std::string>();
    trace.width = header["width"].get<int>();
    trace.height = header["height"].get<int>();
    trace.fps = header["fps"].get<double>();
    trace.feature_dim = header["feature_dim"].get<int>();
    for (auto& [cls, thr] : header["thresholds"].items())
        trace.class_threshold[cls] = thr.get<double>();

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw detail::schema_error(lineno, e.what());
        }
        if (!j.contains("t") || !j.contains("feature") || !j.contains("objects"))
            throw detail::schema_error(lineno, "frame line missing 't', 'feature' or 'objects'");
        std::int64_t t = j["t"].get<std::int64_t>();
        if (t != trace.n_frames())
            throw detail::schema_error(lineno, "timestamps must be contiguous from 0");

        Frame frame;
        frame.feature = j["feature"].get<std::vector<double>>();
        if (static_cast<int>(frame.feature.size()) != trace.feature_dim)
            throw detail::schema_error(lineno, "feature dimension mismatch");

        for (const auto& o : j["objects"]) {
            DetectionRecord rec;
            rec.timestamp = t;
            rec.object_class = o.at("class").get<std::string>();
            auto box = o.at("box").get<std::vector<double>>();
            if (box.size() != 4) throw detail::schema_error(lineno, "box must have 4 entries");
            rec.mask = Box{box[0], box[1], box[2], box[3]};
            if (!rec.mask.valid() || rec.mask.xmin < 0 || rec.mask.ymin < 0 ||
                rec.mask.xmax > trace.width || rec.mask.ymax > trace.height)
                throw detail::schema_error(lineno, "box outside frame bounds");
            rec.confidence = o.at("conf").get<double>();
            if (rec.confidence < 0.0 || rec.confidence > 1.0)
                throw detail::schema_error(lineno, "conf outside [0,1]");
            rec.content = o.at("content").get<std::vector<double>>();
            if (o.contains("trackid")) rec.trackid = o["trackid"].get<std::int64_t>();

            auto it = trace.class_threshold.find(rec.object_class);
            if (it != trace.class_threshold.end() && rec.confidence < it->second) continue;
            frame.records.push_back(std::move(rec));
        }
        trace.frames.push_back(std::move(frame));
    }

    if (trace.frames.empty()) throw detail::schema_error(lineno, "trace has no frames");
    return trace;
}

inline void save_trace(const VideoTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw TraceIoError("cannot open output file: " + path);

    nlohmann::json header{{"name", trace.name},
                          {"width", trace.width},
                          {"height", trace.height},
                          {"fps", trace.fps},
                          {"feature_dim", trace.feature_dim},
                          {"thresholds", trace.class_threshold}};
    out << header.dump() << "\n";

    for (std::int64_t t = 0; t < trace.n_frames(); ++t) {
        const Frame& f = trace.frame(t);
        nlohmann::json objects = nlohmann::json::array();
        for (const auto& r : f.records) {
            nlohmann::json o{{"class", r.object_class},
                             {"box", {r.mask.xmin, r.mask.ymin, r.mask.xmax, r.mask.ymax}},
                             {"conf", r.confidence},
                             {"content", r.content}};
            if (r.trackid) o["trackid"] = *r.trackid;
            objects.push_back(std::move(o));
        }
        nlohmann::json j{{"t", t}, {"feature", f.feature}, {"objects", std::move(objects)}};
        out << j.dump() << "\n";
    }
}

// The expensive-detector stand-in. Every detect() call is counted and
// costed; cost of one call is area(roi or frame) / (1280*720). Accumulators
// use atomics so concurrent detect calls never lose counts.
class Oracle {
  public:
    static constexpr double kReferenceArea = 1280.0 * 720.0;

    explicit Oracle(const VideoTrace& trace) : trace_(&trace) {}

    std::vector<DetectionRecord> detect(std::int64_t t, std::optional<Box> roi = std::nullopt) {
        const Frame& f = trace_->frame(t);
        Box region = roi.value_or(trace_->frame_box());
        if (roi && !trace_->frame_box().contains(*roi))
            throw std::out_of_range("roi outside frame bounds");

        if (memoize_) {
            std::lock_guard<std::mutex> lk(memo_mutex_);
            auto key = memo_key(t, region);
            auto it = memo_.find(key);
            if (it != memo_.end()) return it->second;
        }

        calls_.fetch_add(1, std::memory_order_relaxed);
        add_cost(region.area() / kReferenceArea);

        std::vector<DetectionRecord> out;
        for (const auto& r : f.records)
            if (r.mask.intersects(region)) out.push_back(r);

        if (memoize_) {
            std::lock_guard<std::mutex> lk(memo_mutex_);
            memo_[memo_key(t, region)] = out;
        }
        return out;
    }

    std::int64_t call_count() const { return calls_.load(std::memory_order_relaxed); }
    double cost_units() const { return cost_.load(std::memory_order_relaxed); }

    void set_memoize(bool on) { memoize_ = on; }

    const VideoTrace& trace() const { return *trace_; }

  private:
    void add_cost(double c) {
        double cur = cost_.load(std::memory_order_relaxed);
        while (!cost_.compare_exchange_weak(cur, cur + c, std::memory_order_relaxed)) {}
    }

    static std::string memo_key(std::int64_t t, const Box& b) {
        std::ostringstream os;
        os << t << ":" << b.xmin << "," << b.ymin << "," << b.xmax << "," << b.ymax;
        return os.str();
    }

    const VideoTrace* trace_;
    std::atomic<std::int64_t> calls_{0};
    std::atomic<double> cost_{0.0};
    bool memoize_ = false;
    std::mutex memo_mutex_;
    std::unordered_map<std::string, std::vector<DetectionRecord>> memo_;
};

// Entity resolution: greedy same-class IOU matching across consecutive
// frames. Matched records inherit the earlier trackid; unmatched records
// open a new one. An object that exits and re-enters gets a new trackid.
inline VideoTrace resolve_tracks(VideoTrace trace, double iou_cutoff = 0.7) {
    std::int64_t next_id = 1;
    if (trace.frames.empty()) return trace;

    for (auto& r : trace.frames[0].records) r.trackid = next_id++;

    for (std::size_t t = 1; t < trace.frames.size(); ++t) {
        auto& prev = trace.frames[t - 1].records;
        auto& cur = trace.frames[t].records;

        struct Cand {
            double iou;
            std::size_t prev_i, cur_i;
        };
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < prev.size(); ++i)
            for (std::size_t j = 0; j < cur.size(); ++j) {
                if (prev[i].object_class != cur[j].object_class) continue;
                double v = iou(prev[i].mask, cur[j].mask);
                if (v >= iou_cutoff) cands.push_back({v, i, j});
            }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            if (a.prev_i != b.prev_i) return a.prev_i < b.prev_i;
            return a.cur_i < b.cur_i;
        });

        std::vector<bool> prev_used(prev.size(), false), cur_used(cur.size(), false);
        for (const Cand& c : cands) {
            if (prev_used[c.prev_i] || cur_used[c.cur_i]) continue;
            prev_used[c.prev_i] = true;
            cur_used[c.cur_i] = true;
            cur[c.cur_i].trackid = prev[c.prev_i].trackid;
        }
        for (std::size_t j = 0; j < cur.size(); ++j)
            if (!cur_used[j]) cur[j].trackid = next_id++;
    }
    return trace;
}

// Brute-force baseline: object detection on every frame, cost accounted.
inline std::vector<DetectionRecord> full_scan(Oracle& oracle) {
    std::vector<DetectionRecord> out;
    for (std::int64_t t = 0; t < oracle.trace().n_frames(); ++t) {
        auto recs = oracle.detect(t);
        out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
}

inline std::vector<DetectionRecord> full_scan(Oracle& oracle, FrameRange range) {
    std::vector<DetectionRecord> out;
    for (std::int64_t t = range.begin; t < range.end; ++t) {
        auto recs = oracle.detect(t);
        out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
}

}  // namespace vqe
