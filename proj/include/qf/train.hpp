#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qf/model.hpp"
#include "qf/pipeline.hpp"

namespace qf {

Vec default_quantile_levels();  // 0.05, 0.10, ..., 0.95

struct TrainConfig {
    Vec quantile_levels = default_quantile_levels();
    double learning_rate = 1e-3;
    int batch_size = 64;
    int window_count = 32;  // consecutive windows per sequence instance
    int lag_steps = 3;      // 15 minutes of history at 5-minute resolution
    int num_layers = 16;
    int hidden_size = 32;
    std::uint64_t seed = 1;
    int patience = 20;  // epochs of train<val before stopping
    int max_epochs = 200;
    bool grad_through_imputation = true;  // backpropagate into imputed inputs
    OptimizerKind optimizer = OptimizerKind::adam;
    int train_stride = 0;  // 0: non-overlapping (= window_count)
    int threads = 0;       // 0: hardware concurrency

    void validate() const;
    ModelArch arch() const { return ModelArch{num_layers, hidden_size, lag_steps}; }
    int effective_train_stride() const { return train_stride > 0 ? train_stride : window_count; }
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int stop_epoch = 0;
    std::string stop_reason;  // "early-stop" | "max-epochs"
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

std::string train_report_to_json(const TrainReport& report);
TrainReport train_report_from_json(const std::string& text);

/**
 * Sum over levels of the asymmetric quantile loss
 *   level * max(0, obs - q) + (1 - level) * max(0, q - obs).
 */
double pinball_loss(double observation, std::span<const double> levels,
                    std::span<const double> quantile_values);

/// pinball_loss gated by the target's presence bit: exactly 0 when unobserved.
double masked_step_loss(double target, bool target_observed, std::span<const double> levels,
                        std::span<const double> quantile_values);

// One step's imputation decision, kept for auditing: the value appended to
// the next window is the observation when present, else the median forecast.
struct ImputationRecord {
    std::int64_t position = 0;
    bool observed = false;
    double value_used = 0.0;
    double median = 0.0;
};

struct RolloutResult {
    double loss = 0.0;                    // mean masked step loss over the windows
    std::vector<Vec> fans;                // raw per-step quantile values [window][level]
    Vec appended;                         // per-step next-window entry (observation or median)
    std::vector<ImputationRecord> audit;  // one record per step
};

/**
 * Rolls the forecaster across one sequence instance: forecast the level set
 * from the current window, append the observation (or, when it is missing,
 * the median forecast) to form the next window, and average the masked
 * quantile losses over all windows.
 */
RolloutResult rollout_sequence(const ForecasterParams& params, const SequenceInstance& instance,
                               const TrainConfig& cfg);

/**
 * Same rollout, reverse-mode: accumulates d(loss)/d(params) into `grads`,
 * including the paths through imputed window entries when
 * cfg.grad_through_imputation is set. Returns the rollout loss.
 */
double rollout_backward(const ForecasterParams& params, const SequenceInstance& instance,
                        const TrainConfig& cfg, ForecasterParams& grads);

// Stop once train loss has stayed strictly below validation loss for
// `patience` consecutive epochs.
class EarlyStopRule {
  public:
    explicit EarlyStopRule(int patience) : patience_(patience) {}
    bool observe(double train_loss, double val_loss) {
        streak_ = train_loss < val_loss ? streak_ + 1 : 0;
        return streak_ >= patience_;
    }
    int streak() const { return streak_; }

  private:
    int patience_;
    int streak_ = 0;
};

/**
 * One pass over the instances in seeded shuffled order, averaging gradients
 * per batch and applying the optimizer. Returns the mean instance loss.
 * Instance gradients are reduced in instance order, so the result does not
 * depend on the worker count.
 */
double train_epoch(ForecasterParams& params, const std::vector<SequenceInstance>& instances,
                   const TrainConfig& cfg, OptimizerState& opt_state, std::uint64_t shuffle_seed);

struct FitResult {
    ForecasterParams params;  // checkpoint with the lowest validation loss
    TrainReport report;
};

/**
 * Full training on a normalized series: builds train/validation instances
 * from the chronological split, then runs epochs until the early-stop rule
 * fires or max_epochs is reached.
 */
FitResult fit(const TimeSeries& series, const TrainConfig& cfg, const SplitSpec& split);

// ---------------------------------------------------------------------------
// Grid search over architecture, lag and learning rate.

struct GridSpec {
    std::vector<int> num_layers{16};
    std::vector<int> hidden_size{32};
    std::vector<int> lag_steps{3};
    Vec learning_rate{1e-3};
    int epochs = 10;  // scaled-down budget per grid point
};

struct GridEntry {
    TrainConfig cfg;
    double val_loss = 0.0;
    bool failed = false;
    std::string error;
};

struct GridResult {
    TrainConfig best;
    std::vector<GridEntry> entries;
};

// Index of the best usable entry: lowest validation loss, ties broken by
// smaller num_layers, then hidden_size, then lag_steps, then learning_rate.
std::size_t select_best(const std::vector<GridEntry>& entries);

GridResult grid_search(const TimeSeries& series, const GridSpec& grid, const TrainConfig& base,
                       const SplitSpec& split, std::uint64_t seed);

}  // namespace qf
