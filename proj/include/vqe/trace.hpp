#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqe {

// Axis-aligned pixel box, xmin < xmax and ymin < ymax.
struct Box {
    double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double area() const { return width() * height(); }

    bool valid() const { return xmin < xmax && ymin < ymax; }

    bool intersects(const Box& o) const {
        return xmin < o.xmax && o.xmin < xmax && ymin < o.ymax && o.ymin < ymax;
    }
    bool contains(const Box& o) const {
        return xmin <= o.xmin && o.xmax <= xmax && ymin <= o.ymin && o.ymax <= ymax;
    }

    friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
    double iy = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// One object in one frame.
struct DetectionRecord {
    std::int64_t timestamp = 0;
    std::string object_class;
    Box mask;
    std::optional<std::int64_t> trackid;
    std::vector<double> content;  // channel means; index 0 = red channel
    double confidence = 1.0;
};

struct Frame {
    std::vector<DetectionRecord> records;
    std::vector<double> feature;
};

struct VideoTrace {
    std::string name;
    int width = 1280;
    int height = 720;
    double fps = 30.0;
    int feature_dim = 0;
    std::map<std::string, double> class_threshold;
    std::vector<Frame> frames;

    std::int64_t n_frames() const { return static_cast<std::int64_t>(frames.size()); }

    const Frame& frame(std::int64_t t) const {
        if (t < 0 || t >= n_frames()) throw std::out_of_range("frame index out of range");
        return frames[static_cast<std::size_t>(t)];
    }

    Box frame_box() const { return Box{0, 0, double(width), double(height)}; }

    // Cheap frame-level content descriptor: component-wise max of the object
    // content vectors, zeros when the frame is empty. Stand-in for whole-frame
    // pixel statistics used by frame-level UDF filters; max (rather than mean)
    // keeps a strong per-object signal from being diluted by co-occurring
    // objects, so ">= cutoff" frame filters stay conservative.
    std::vector<double> frame_descriptor(std::int64_t t) const {
        const Frame& f = frame(t);
        std::size_t dim = 0;
        for (const auto& r : f.records) dim = std::max(dim, r.content.size());
        std::vector<double> out(std::max<std::size_t>(dim, 1), 0.0);
        for (const auto& r : f.records)
            for (std::size_t i = 0; i < r.content.size(); ++i)
                out[i] = std::max(out[i], r.content[i]);
        return out;
    }
};

// Contiguous [begin, end) frame range.
struct FrameRange {
    std::int64_t begin = 0;
    std::int64_t end = 0;
    std::int64_t size() const { return end - begin; }
    bool contains(std::int64_t t) const { return t >= begin && t < end; }
};

// Train / held-out / test(unseen) partition of a trace.
struct LabeledSplit {
    FrameRange train;
    FrameRange heldout;
    FrameRange unseen;
};

inline LabeledSplit default_split(std::int64_t n, double train_frac = 0.2, double heldout_frac = 0.1) {
    std::int64_t a = static_cast<std::int64_t>(n * train_frac);
    std::int64_t b = a + static_cast<std::int64_t>(n * heldout_frac);
    return LabeledSplit{{0, a}, {a, b}, {b, n}};
}

}  // namespace vqe
