#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vqe/proxy.hpp"
#include "vqe/stats.hpp"
#include "vqe/trace.hpp"
#include "vqe/tracestore.hpp"

namespace vqe::aggcv {

struct SamplerConfig {
    double epsilon = 0.1;     // absolute error bound
    double confidence = 0.95; // 1 - delta
    double range_K = 1.0;     // range of the estimated quantity
    std::int64_t round_step = 0;  // samples added per round; 0 = initial size
    std::uint64_t seed = 0;
};

struct Estimate {
    double value = 0.0;
    double half_width = 0.0;
    std::int64_t n_samples = 0;
    bool exact = false;  // population exhausted; value is the full mean
    double c = 0.0;      // control-variate coefficient at termination
};

// K = max per-frame statistic over the labeled data, plus one.
inline double estimate_range_K(const std::vector<double>& labeled_values) {
    double mx = 0.0;
    for (double v : labeled_values) mx = std::max(mx, v);
    return mx + 1.0;
}

inline std::int64_t initial_samples(const SamplerConfig& cfg) {
    return static_cast<std::int64_t>(std::ceil(cfg.range_K / cfg.epsilon));
}

namespace detail {

// Shared adaptive loop. Samples uniformly without replacement from
// [0, population), starting at ceil(K/eps) samples and adding round_step per
// round. Terminates when Q(1-delta/2) * sigma_hat < epsilon, where sigma_hat
// is the standard error of the (possibly corrected) sample mean with the
// finite-population correction. `corrected` maps the raw samples to the
// values whose mean is reported.
template <typename StatFn, typename CorrectFn>
Estimate adaptive_loop(std::int64_t population, StatFn&& statistic, CorrectFn&& correct,
                       const SamplerConfig& cfg) {
    if (cfg.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    if (cfg.confidence <= 0.0 || cfg.confidence >= 1.0)
        throw std::invalid_argument("confidence must be in (0,1)");
    if (population <= 0) throw std::invalid_argument("empty population");

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(population));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double q = stats::normal_quantile(1.0 - (1.0 - cfg.confidence) / 2.0);
    std::int64_t n0 = std::min<std::int64_t>(initial_samples(cfg), population);
    std::int64_t step = cfg.round_step > 0 ? cfg.round_step : n0;

    std::vector<std::int64_t> indices;
    std::vector<double> raw;
    std::int64_t target = n0;

    for (;;) {
        while (static_cast<std::int64_t>(raw.size()) < std::min(target, population)) {
            std::int64_t idx = order[raw.size()];
            indices.push_back(idx);
            raw.push_back(statistic(idx));
        }
        std::int64_t n = static_cast<std::int64_t>(raw.size());

        std::vector<double> values = correct(indices, raw);
        double m = stats::mean(values);
        double s2 = stats::sample_variance(values);
        double fpc = population > 1
                         ? std::sqrt(double(population - n) / double(population - 1))
                         : 0.0;
        double sigma_hat = std::sqrt(s2 / static_cast<double>(n)) * fpc;
        double half = q * sigma_hat;

        if (half < cfg.epsilon) {
            Estimate est;
            est.value = m;
            est.half_width = half;
            est.n_samples = n;
            est.exact = (n == population);
            return est;
        }
        if (n == population) {
            Estimate est;
            est.value = m;
            est.half_width = 0.0;
            est.n_samples = n;
            est.exact = true;
            return est;
        }
        target = std::min(population, n + step);
    }
}

}  // namespace detail

// Plain adaptive sampling (traditional AQP) over a frame range. The
// statistic is evaluated through the oracle for each sampled frame.
inline Estimate adaptive_sample(std::int64_t population,
                                const std::function<double(std::int64_t)>& statistic,
                                const SamplerConfig& cfg) {
    return detail::adaptive_loop(
        population, statistic,
        [](const std::vector<std::int64_t>&, const std::vector<double>& raw) { return raw; },
        cfg);
}

struct CvState {
    double tau = 0.0;    // exact mean of the proxy statistic on the unseen range
    double var_t = 0.0;  // exact variance of the proxy statistic
};

// Control-variates sampling: corrected samples m_i + c (t_i - tau) with
// c = -Cov(m,t)/Var(t) re-estimated from the samples at every round. The
// proxy statistic must already be materialized over the whole range, so tau
// and Var(t) are exact.
inline Estimate control_variates_sample(std::int64_t population,
                                        const std::function<double(std::int64_t)>& statistic,
                                        const std::vector<double>& proxy_values,
                                        const SamplerConfig& cfg) {
    if (static_cast<std::int64_t>(proxy_values.size()) != population)
        throw std::invalid_argument("proxy statistic must cover the whole population");

    CvState cv;
    cv.tau = stats::mean(proxy_values);
    cv.var_t = stats::variance(proxy_values);

    double final_c = 0.0;
    auto correct = [&](const std::vector<std::int64_t>& indices,
                       const std::vector<double>& raw) {
        std::vector<double> t_sampled(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i)
            t_sampled[i] = proxy_values[static_cast<std::size_t>(indices[i])];
        double c = 0.0;
        if (cv.var_t > 0.0) c = -stats::sample_covariance(raw, t_sampled) / cv.var_t;
        final_c = c;
        std::vector<double> out(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            out[i] = raw[i] + c * (t_sampled[i] - cv.tau);
        return out;
    };

    Estimate est = detail::adaptive_loop(population, statistic, correct, cfg);
    est.c = final_c;
    return est;
}

struct Refusal {
    proxy::BootstrapResult bootstrap;
};

// Query rewriting: if the proxy's bootstrapped held-out error is within the
// user's bound at the requested confidence, answer with the proxy mean over
// the unseen range (zero oracle calls there); otherwise refuse so the caller
// can fall through to control variates.
struct RewriteResult {
    std::optional<Estimate> estimate;
    std::optional<Refusal> refusal;
};

inline RewriteResult rewrite_with_proxy(const proxy::ProxyModel& model, const VideoTrace& trace,
                                        FrameRange unseen, FrameRange heldout,
                                        const std::string& cls, double uerr, double conf,
                                        int bootstrap_B = 1000, std::uint64_t seed = 1,
                                        proxy::ProxyCost* cost = nullptr) {
    auto boot = proxy::bootstrap_error(model, trace, heldout, cls, uerr, bootstrap_B, seed, cost);
    if (boot.prob_within < conf) return RewriteResult{std::nullopt, Refusal{boot}};

    const proxy::ClassHead* head = model.head_for(cls);
    std::size_t head_idx = static_cast<std::size_t>(head - model.heads.data());
    auto preds = proxy::infer(model, trace, unseen, cost);
    double sum = 0.0;
    for (const auto& p : preds) sum += static_cast<double>(p.counts[head_idx]);

    Estimate est;
    est.value = sum / static_cast<double>(unseen.size());
    est.half_width = uerr;
    est.n_samples = 0;
    return RewriteResult{est, std::nullopt};
}

}  // namespace vqe::aggcv
