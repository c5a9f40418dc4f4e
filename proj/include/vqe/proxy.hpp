#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqe/trace.hpp"

namespace vqe::proxy {

// Proxy inference throughput relative to the detector: the detector runs at
// 3 fps, specialized models at 10,000 fps, so one detector-equivalent cost
// unit covers ~3333 proxy frames. Simple frame-level filters run at 100,000
// fps, i.e. ~33333 frames per unit.
constexpr double kProxyFramesPerUnit = 10000.0 / 3.0;
constexpr double kFilterFramesPerUnit = 100000.0 / 3.0;

struct TrainConfig {
    int epochs = 1;
    int batch_size = 16;
    double momentum = 0.9;
    double step_size = 0.1;  // decayed as step_size / sqrt(1 + batch index)
    std::uint64_t seed = 0;
};

struct TrainingRefused : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One multinomial logistic head per target class: feature vector ->
// softmax over counts 0..cap.
struct ClassHead {
    std::string object_class;
    int count_cap = 0;
    // (cap+1) x (dim+1) weights, last column is the bias.
    std::vector<std::vector<double>> weights;
};

struct ProxyModel {
    int feature_dim = 0;
    std::vector<ClassHead> heads;
    // standardization computed on the training split
    std::vector<double> feature_mean;
    std::vector<double> feature_sd;
    TrainConfig metadata;

    const ClassHead* head_for(const std::string& cls) const {
        for (const auto& h : heads)
            if (h.object_class == cls) return &h;
        return nullptr;
    }
};

// Number of per-frame objects of one class.
inline std::int64_t true_count(const Frame& frame, const std::string& cls) {
    std::int64_t n = 0;
    for (const auto& r : frame.records)
        if (r.object_class == cls) ++n;
    return n;
}

// Largest count value whose frequency over the training frames is at least
// 1%; the head then has cap+1 output classes (counts 0..cap).
inline int count_cap(const std::vector<std::int64_t>& train_counts) {
    if (train_counts.empty()) throw std::invalid_argument("count_cap: empty counts");
    std::int64_t max_count = *std::max_element(train_counts.begin(), train_counts.end());
    std::vector<std::int64_t> freq(static_cast<std::size_t>(max_count) + 1, 0);
    for (auto c : train_counts) ++freq[static_cast<std::size_t>(c)];
    double min_frames = 0.01 * static_cast<double>(train_counts.size());
    for (std::int64_t c = max_count; c >= 0; --c)
        if (static_cast<double>(freq[static_cast<std::size_t>(c)]) >= min_frames)
            return static_cast<int>(c);
    return 0;
}

namespace detail {

inline std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline std::vector<double> standardize(const ProxyModel& model, const std::vector<double>& x) {
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        z[i] = (x[i] - model.feature_mean[i]) / model.feature_sd[i];
    return z;
}

inline std::vector<double> head_probs(const ProxyModel& model, const ClassHead& head,
                                      const std::vector<double>& feature) {
    auto z = standardize(model, feature);
    std::vector<double> logits(head.weights.size());
    for (std::size_t c = 0; c < head.weights.size(); ++c) {
        double v = head.weights[c].back();
        for (std::size_t i = 0; i < z.size(); ++i) v += head.weights[c][i] * z[i];
        logits[c] = v;
    }
    return softmax(logits);
}

}  // namespace detail

// Momentum-SGD training of the per-class count heads on the labeled train
// range. Deterministic given the seed. Refuses when a requested class has
// no usable count signal in the training data (cap 0 with no positives).
inline ProxyModel train(const VideoTrace& trace, FrameRange train_range,
                        const std::vector<std::string>& classes,
                        const TrainConfig& cfg = {}) {
    if (train_range.size() <= 0) throw std::invalid_argument("empty training range");

    ProxyModel model;
    model.feature_dim = trace.feature_dim;
    model.metadata = cfg;

    std::int64_t n = train_range.size();
    model.feature_mean.assign(static_cast<std::size_t>(trace.feature_dim), 0.0);
    model.feature_sd.assign(static_cast<std::size_t>(trace.feature_dim), 0.0);
    for (std::int64_t t = train_range.begin; t < train_range.end; ++t)
        for (int j = 0; j < trace.feature_dim; ++j)
            model.feature_mean[j] += trace.frame(t).feature[j];
    for (double& m : model.feature_mean) m /= static_cast<double>(n);
    for (std::int64_t t = train_range.begin; t < train_range.end; ++t)
        for (int j = 0; j < trace.feature_dim; ++j) {
            double d = trace.frame(t).feature[j] - model.feature_mean[j];
            model.feature_sd[j] += d * d;
        }
    for (double& s : model.feature_sd) s = std::max(std::sqrt(s / static_cast<double>(n)), 1e-9);

    std::mt19937_64 rng(cfg.seed);

    for (const auto& cls : classes) {
        std::vector<std::int64_t> counts;
        counts.reserve(static_cast<std::size_t>(n));
        for (std::int64_t t = train_range.begin; t < train_range.end; ++t)
            counts.push_back(true_count(trace.frame(t), cls));

        bool any_positive = std::any_of(counts.begin(), counts.end(),
                                        [](std::int64_t c) { return c > 0; });
        if (!any_positive)
            throw TrainingRefused("class '" + cls + "' absent from training data");

        ClassHead head;
        head.object_class = cls;
        head.count_cap = count_cap(counts);
        int n_out = head.count_cap + 1;
        std::size_t dim = static_cast<std::size_t>(trace.feature_dim);
        head.weights.assign(static_cast<std::size_t>(n_out), std::vector<double>(dim + 1, 0.0));
        std::vector<std::vector<double>> velocity = head.weights;

        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), train_range.begin);

        std::int64_t step = 0;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t stop = std::min(order.size(), start + cfg.batch_size);
                double lr = cfg.step_size / std::sqrt(1.0 + static_cast<double>(step));
                ++step;

                std::vector<std::vector<double>> grad(
                    static_cast<std::size_t>(n_out), std::vector<double>(dim + 1, 0.0));
                for (std::size_t bi = start; bi < stop; ++bi) {
                    std::int64_t t = order[bi];
                    const auto& f = trace.frame(t);
                    auto z = detail::standardize(model, f.feature);
                    std::vector<double> logits(static_cast<std::size_t>(n_out));
                    for (int c = 0; c < n_out; ++c) {
                        double v = head.weights[c].back();
                        for (std::size_t i = 0; i < dim; ++i) v += head.weights[c][i] * z[i];
                        logits[static_cast<std::size_t>(c)] = v;
                    }
                    auto p = detail::softmax(logits);
                    int label = static_cast<int>(
                        std::min<std::int64_t>(true_count(f, cls), head.count_cap));
                    for (int c = 0; c < n_out; ++c) {
                        double g = p[static_cast<std::size_t>(c)] - (c == label ? 1.0 : 0.0);
                        for (std::size_t i = 0; i < dim; ++i) grad[c][i] += g * z[i];
                        grad[c].back() += g;
                    }
                }
                double scale = 1.0 / static_cast<double>(stop - start);
                for (int c = 0; c < n_out; ++c)
                    for (std::size_t i = 0; i <= dim; ++i) {
                        velocity[c][i] = cfg.momentum * velocity[c][i] - lr * scale * grad[c][i];
                        head.weights[c][i] += velocity[c][i];
                    }
            }
        }
        model.heads.push_back(std::move(head));
    }
    return model;
}

struct FramePrediction {
    // parallel to model.heads
    std::vector<std::int64_t> counts;
    std::vector<std::vector<double>> softmaxes;
};

class ProxyCost {
  public:
    void add_proxy_frames(std::int64_t n) { cost_ += static_cast<double>(n) / kProxyFramesPerUnit; }
    void add_filter_frames(std::int64_t n) { cost_ += static_cast<double>(n) / kFilterFramesPerUnit; }
    double cost_units() const { return cost_; }

  private:
    double cost_ = 0.0;
};

// Proxy inference over a frame range. No oracle involvement; cost accounted
// at the proxy rate. Count estimate is the softmax argmax, ties broken
// toward the lower count.
inline std::vector<FramePrediction> infer(const ProxyModel& model, const VideoTrace& trace,
                                          FrameRange range, ProxyCost* cost = nullptr) {
    if (trace.feature_dim != model.feature_dim)
        throw std::invalid_argument("feature dimension mismatch");
    std::vector<FramePrediction> out;
    out.reserve(static_cast<std::size_t>(range.size()));
    for (std::int64_t t = range.begin; t < range.end; ++t) {
        FramePrediction pred;
        for (const auto& head : model.heads) {
            auto p = detail::head_probs(model, head, trace.frame(t).feature);
            std::int64_t best = 0;
            for (std::size_t c = 1; c < p.size(); ++c)
                if (p[c] > p[static_cast<std::size_t>(best)]) best = static_cast<std::int64_t>(c);
            pred.counts.push_back(best);
            pred.softmaxes.push_back(std::move(p));
        }
        out.push_back(std::move(pred));
    }
    if (cost) cost->add_proxy_frames(range.size());
    return out;
}

// P(count >= threshold) from one head's softmax tail; 0 when the threshold
// exceeds the head's cap.
inline double tail_probability(const std::vector<double>& softmax_probs, std::int64_t threshold) {
    if (threshold <= 0) return 1.0;
    if (threshold >= static_cast<std::int64_t>(softmax_probs.size())) return 0.0;
    double p = 0.0;
    for (std::size_t c = static_cast<std::size_t>(threshold); c < softmax_probs.size(); ++c)
        p += softmax_probs[c];
    return p;
}

struct ThresholdEstimate {
    double cutoff = 0.0;
    std::int64_t heldout_false_negatives = 0;  // zero by construction
    double heldout_selectivity = 0.0;          // fraction of held-out frames below cutoff
};

// Largest cutoff with zero false negatives on the held-out signals: the
// minimum signal among positive-labeled frames.
inline ThresholdEstimate estimate_threshold(const std::vector<double>& signals,
                                            const std::vector<bool>& labels) {
    if (signals.size() != labels.size())
        throw std::invalid_argument("estimate_threshold: size mismatch");
    double cutoff = std::numeric_limits<double>::infinity();
    bool any_positive = false;
    for (std::size_t i = 0; i < signals.size(); ++i)
        if (labels[i]) {
            any_positive = true;
            cutoff = std::min(cutoff, signals[i]);
        }
    if (!any_positive)
        throw std::invalid_argument("estimate_threshold: no positive labels");

    ThresholdEstimate est;
    est.cutoff = cutoff;
    std::int64_t below = 0;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        if (signals[i] < cutoff) ++below;
        if (labels[i] && signals[i] < cutoff) ++est.heldout_false_negatives;
    }
    est.heldout_selectivity = static_cast<double>(below) / static_cast<double>(signals.size());
    return est;
}

struct BootstrapResult {
    double err_estimate = 0.0;
    double prob_within = 0.0;  // P(err < uerr) over resamples
};

// Bootstrap estimate of the proxy's count error on held-out data: for B
// resamples with replacement, |mean(proxy counts) - mean(true counts)|.
inline BootstrapResult bootstrap_error(const ProxyModel& model, const VideoTrace& trace,
                                       FrameRange heldout, const std::string& cls, double uerr,
                                       int B = 1000, std::uint64_t seed = 1,
                                       ProxyCost* cost = nullptr) {
    if (heldout.size() <= 0) throw std::invalid_argument("empty held-out range");
    const ClassHead* head = model.head_for(cls);
    if (!head) throw std::invalid_argument("class not in model: " + cls);
    std::size_t head_idx = static_cast<std::size_t>(head - model.heads.data());

    auto preds = infer(model, trace, heldout, cost);
    std::vector<double> proxy_counts, truth;
    for (std::int64_t t = heldout.begin; t < heldout.end; ++t) {
        proxy_counts.push_back(
            static_cast<double>(preds[static_cast<std::size_t>(t - heldout.begin)].counts[head_idx]));
        truth.push_back(static_cast<double>(true_count(trace.frame(t), cls)));
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, proxy_counts.size() - 1);
    double err_sum = 0.0;
    int within = 0;
    for (int b = 0; b < B; ++b) {
        double sp = 0.0, st = 0.0;
        for (std::size_t i = 0; i < proxy_counts.size(); ++i) {
            std::size_t j = pick(rng);
            sp += proxy_counts[j];
            st += truth[j];
        }
        double err = std::abs(sp - st) / static_cast<double>(proxy_counts.size());
        err_sum += err;
        if (err < uerr) ++within;
    }
    return BootstrapResult{err_sum / B, static_cast<double>(within) / B};
}

// ---------------------------------------------------------------------------
// Model persistence (proxy_format 1)
// ---------------------------------------------------------------------------

inline void save_model(const ProxyModel& model, const std::string& path) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : model.heads)
        heads.push_back({{"class", h.object_class},
                         {"count_cap", h.count_cap},
                         {"weights", h.weights}});
    nlohmann::json j{{"proxy_format", 1},
                     {"feature_dim", model.feature_dim},
                     {"feature_mean", model.feature_mean},
                     {"feature_sd", model.feature_sd},
                     {"heads", std::move(heads)},
                     {"metadata",
                      {{"epochs", model.metadata.epochs},
                       {"batch_size", model.metadata.batch_size},
                       {"momentum", model.metadata.momentum},
                       {"step_size", model.metadata.step_size},
                       {"seed", model.metadata.seed}}}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
    out << j.dump(2) << "\n";
}

inline ProxyModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.contains("proxy_format") || j["proxy_format"].get<int>() != 1)
        throw std::runtime_error("unsupported proxy_format in " + path);
    ProxyModel model;
    model.feature_dim = j["feature_dim"].get<int>();
    model.feature_mean = j["feature_mean"].get<std::vector<double>>();
    model.feature_sd = j["feature_sd"].get<std::vector<double>>();
    for (const auto& h : j["heads"]) {
        ClassHead head;
        head.object_class = h["class"].get<std::string>();
        head.count_cap = h["count_cap"].get<int>();
        head.weights = h["weights"].get<std::vector<std::vector<double>>>();
        model.heads.push_back(std::move(head));
    }
    const auto& m = j["metadata"];
    model.metadata.epochs = m["epochs"].get<int>();
    model.metadata.batch_size = m["batch_size"].get<int>();
    model.metadata.momentum = m["momentum"].get<double>();
    model.metadata.step_size = m["step_size"].get<double>();
    model.metadata.seed = m["seed"].get<std::uint64_t>();
    return model;
}

}  // namespace vqe::proxy
