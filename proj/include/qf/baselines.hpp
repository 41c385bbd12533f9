#pragma once

#include "qf/pipeline.hpp"
#include "qf/train.hpp"

namespace qf {

struct ImputerSpec {
    enum class Kind { linear, knn };
    Kind kind = Kind::linear;
    int k = 5;            // neighbor count (knn)
    int window_steps = 0;  // pattern window length for knn; 0 means the model lag
};

struct ImputeResult {
    TimeSeries series;                        // mask all ones
    std::vector<std::uint8_t> original_mask;  // provenance of the fills
    bool knn_fell_back = false;               // not enough complete windows for knn
};

/**
 * Straight-line fill of every gap between its nearest observed neighbors;
 * leading and trailing gaps hold the nearest observed value.
 */
ImputeResult impute_linear(const TimeSeries& series);

/**
 * Pattern-matching fill: for each gap position, the surrounding window is
 * compared (Euclidean distance over its observed entries) against every fully
 * observed window in the series, and the k nearest contribute the mean of
 * their values at the gap offset. Ties break toward the earliest window.
 * Falls back to linear interpolation when fewer than k complete windows
 * exist.
 */
ImputeResult impute_knn(const TimeSeries& series, const ImputerSpec& spec);

struct TwoPhaseResult {
    FitResult fit;
    bool knn_fell_back = false;
};

/**
 * The impute-then-train benchmark: completes the series with the chosen
 * imputer, marks everything observed, and trains the same forecaster with
 * the same configuration as the end-to-end path.
 */
TwoPhaseResult run_two_phase(const TimeSeries& series, const ImputerSpec& imputer,
                             const TrainConfig& cfg, const SplitSpec& split);

}  // namespace qf
