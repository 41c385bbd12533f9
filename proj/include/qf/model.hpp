#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "qf/numkernel.hpp"
#include "qf/scaling.hpp"

namespace qf {

struct ModelArch {
    int num_layers = 1;   // LSTM layers in the residual stack
    int hidden_size = 8;  // units per layer
    int lag_steps = 3;    // history window length fed to the model
};

/**
 * Quantile forecaster: a stack of LSTM layers with identity skip connections
 * from the second layer on, followed by a scalar dense head. The first layer
 * consumes two features per step, the window value and the quantile level the
 * forecast is conditioned on; deeper layers consume the H-dim residual
 * stream.
 */
struct ForecasterParams {
    std::vector<LstmLayerParams> layers;
    DenseParams head;
    ModelArch arch;

    static ForecasterParams zeros(const ModelArch& arch);
    // Uniform init in [-1/sqrt(H), 1/sqrt(H)]; forget-gate biases shifted +1.
    static ForecasterParams init(const ModelArch& arch, std::uint64_t seed);
};

// Fixed-order visitation of every parameter tensor; the flat layouts used by
// the optimizer and the finite-difference harnesses both derive from it.
void visit_tensors(ForecasterParams& p, const std::function<void(double*, std::size_t)>& fn);
void visit_tensors(const ForecasterParams& p, const std::function<void(const double*, std::size_t)>& fn);
std::size_t param_count(const ForecasterParams& p);
Vec flatten(const ForecasterParams& p);
void assign_flat(ForecasterParams& p, std::span<const double> flat);

/// Forecasted quantiles for one origin, one-step-ahead. Levels are sorted and
/// values are non-decreasing after monotonize().
struct QuantileFan {
    std::int64_t origin = -1;
    Vec levels;
    Vec values;

    double value_at(double level) const;  // exact-level lookup
    void monotonize();                    // quantile-crossing repair by sorting
};

struct ForwardResult {
    double value = 0.0;
    std::vector<Vec> final_hidden;  // per-layer h at the last step
};

// Cached intermediates of one window evaluated over a batch of levels.
struct WindowTrace {
    std::vector<std::vector<LstmStepTrace>> steps;  // [lag][layer]
    Mat head_in;                                    // residual stream at last step, H x A
    Vec levels;
};

/**
 * Evaluates the forecaster on one fully imputed window (no NaN entries) for a
 * batch of quantile levels; returns one raw forecast per level. Pass a trace
 * to enable backward_window.
 */
Vec forward_window(const ForecasterParams& p, std::span<const double> window,
                   std::span<const double> levels, WindowTrace* trace = nullptr);

/**
 * Reverse-mode pass over a traced window. out_grads holds one upstream
 * gradient per level; parameter gradients accumulate into `grads` and the
 * returned vector is the gradient w.r.t. the window entries.
 */
Vec backward_window(const ForecasterParams& p, const WindowTrace& trace,
                    std::span<const double> out_grads, ForecasterParams& grads);

ForwardResult forward(const ForecasterParams& p, std::span<const double> window, double alpha);
QuantileFan forecast_fan(const ForecasterParams& p, std::span<const double> window,
                         std::span<const double> levels);
double median_forecast(const ForecasterParams& p, std::span<const double> window);

// ---------------------------------------------------------------------------
// Checkpointing. Versioned JSON container: architecture, quantile levels,
// normalization constants and every tensor, round-tripping bit-exactly.

struct Checkpoint {
    ForecasterParams params;
    MinMaxScale norm;
    Vec quantile_levels;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qf
