#include "qf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qf {

ImputeResult impute_linear(const TimeSeries& series) {
    const std::size_t n = series.size();
    ImputeResult out;
    out.original_mask = series.mask;
    out.series = series;
    auto& values = out.series.values;
    auto& mask = out.series.mask;

    std::size_t first_obs = n;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) {
            first_obs = i;
            break;
        }
    if (first_obs == n) throw std::invalid_argument("impute_linear: series has no observed value");

    std::size_t prev = first_obs;
    for (std::size_t i = 0; i < first_obs; ++i) values[i] = values[first_obs];  // leading hold
    for (std::size_t i = first_obs + 1; i < n; ++i) {
        if (!mask[i]) continue;
        if (i > prev + 1) {
            const double lo = values[prev], hi = values[i];
            const double span = static_cast<double>(i - prev);
            for (std::size_t k = prev + 1; k < i; ++k)
                values[k] = lo + (hi - lo) * (static_cast<double>(k - prev) / span);
        }
        prev = i;
    }
    for (std::size_t i = prev + 1; i < n; ++i) values[i] = values[prev];  // trailing hold
    std::fill(mask.begin(), mask.end(), 1);
    return out;
}

ImputeResult impute_knn(const TimeSeries& series, const ImputerSpec& spec) {
    const int w = spec.window_steps;
    if (spec.k < 1) throw std::invalid_argument("impute_knn: k must be >= 1");
    if (w < 1) throw std::invalid_argument("impute_knn: window length must be >= 1");
    const std::size_t n = series.size();
    if (n < static_cast<std::size_t>(w))
        throw std::invalid_argument("impute_knn: series shorter than the pattern window");

    // all fully observed windows, by start index
    std::vector<std::size_t> complete;
    {
        int run = 0;
        for (std::size_t i = 0; i < n; ++i) {
            run = series.mask[i] ? run + 1 : 0;
            if (run >= w) complete.push_back(i + 1 - w);
        }
    }
    if (static_cast<int>(complete.size()) < spec.k) {
        ImputeResult out = impute_linear(series);
        out.knn_fell_back = true;
        return out;
    }

    ImputeResult out;
    out.original_mask = series.mask;
    out.series = series;
    auto& values = out.series.values;
    auto& mask = out.series.mask;

    const std::size_t half = static_cast<std::size_t>((w - 1) / 2);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (series.mask[idx]) continue;
        const std::size_t start = std::min(idx >= half ? idx - half : 0, n - w);
        const std::size_t offset = idx - start;

        scored.clear();
        scored.reserve(complete.size());
        for (std::size_t cand : complete) {
            double d2 = 0.0;
            for (int j = 0; j < w; ++j) {
                if (!series.mask[start + j]) continue;  // compare observed positions only
                const double diff = series.values[start + j] - series.values[cand + j];
                d2 += diff * diff;
            }
            scored.emplace_back(d2, cand);
        }
        std::partial_sort(scored.begin(), scored.begin() + spec.k, scored.end());

        double sum = 0.0;
        for (int j = 0; j < spec.k; ++j) sum += series.values[scored[j].second + offset];
        values[idx] = sum / spec.k;
        mask[idx] = 1;
    }
    return out;
}

TwoPhaseResult run_two_phase(const TimeSeries& series, const ImputerSpec& imputer,
                             const TrainConfig& cfg, const SplitSpec& split) {
    ImputerSpec spec = imputer;
    if (spec.window_steps == 0) spec.window_steps = cfg.lag_steps;
    ImputeResult imputed = spec.kind == ImputerSpec::Kind::linear ? impute_linear(series)
                                                                  : impute_knn(series, spec);
    TwoPhaseResult out;
    out.knn_fell_back = imputed.knn_fell_back;
    out.fit = fit(imputed.series, cfg, split);
    return out;
}

}  // namespace qf
