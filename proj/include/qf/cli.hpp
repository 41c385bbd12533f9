#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qf/baselines.hpp"
#include "qf/eval.hpp"
#include "qf/pipeline.hpp"
#include "qf/train.hpp"

namespace qf {

/**
 * Fully resolved description of one experiment run. The snapshot written next
 * to every training run round-trips through JSON, and rerunning from it
 * reproduces the outputs byte for byte.
 */
struct RunConfig {
    std::string data;
    std::string out_dir;  // empty: $QFORECAST_OUT, else "out"
    std::string method = "endtoend";  // endtoend | li | knn
    std::uint64_t seed = 1;
    double missing_rate = 0.0;
    SplitSpec split{};
    int lag_minutes = 15;  // converted to steps via the data resolution
    TrainConfig train{};
    int knn_k = 5;
    int knn_window_steps = 0;  // 0: model lag
    bool use_grid = false;
    GridSpec grid{};  // grid.lag_steps is ignored; grid_lag_minutes is used
    std::vector<int> grid_lag_minutes{15};

    void validate() const;
    std::string to_json_text() const;
    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
};

std::filesystem::path default_out_dir();
int lag_minutes_to_steps(int lag_minutes, int resolution_sec);

struct TrainOutputs {
    std::filesystem::path checkpoint;
    std::filesystem::path report;
    std::filesystem::path snapshot;
    TrainReport train_report;
};

/// Ingest, corrupt, normalize, train via the selected pipeline; write the
/// checkpoint, the training report and the resolved config snapshot.
TrainOutputs run_train(const RunConfig& cfg);

struct EvaluateArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::filesystem::path out_dir;
    std::uint64_t seed = 1;
    double missing_rate = 0.0;
    SplitSpec split{};
};

struct EvaluateOutputs {
    std::filesystem::path report_json;
    std::filesystem::path report_csv;
    std::filesystem::path forecasts_csv;
    EvaluationReport report;
};

/// Rebuilds the evaluation conditions (same seed-derived gaps), sweeps the
/// test segment and writes the report plus a per-origin forecast table.
EvaluateOutputs run_evaluate(const EvaluateArgs& args);

struct SimulateArgs {
    std::filesystem::path out;
    std::size_t length = 0;
    std::uint64_t seed = 1;
    double capacity = 52.5;
    int resolution_sec = 300;
};

/// Writes a synthetic series in the ingest format plus a sidecar JSON with
/// the generating-process parameters.
void run_simulate(const SimulateArgs& args);

struct CompareRow {
    std::string label;
    double reliability_pct = 0.0;
    double sharpness = 0.0;
    double skill = 0.0;
    bool best_reliability = false;
    bool best_sharpness = false;
    bool best_skill = false;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    std::string text;  // rendered table
    std::string csv;
};

/// Side-by-side metric table over two or more evaluation reports. Best value
/// per column is flagged (lowest deviation, lowest width, highest skill);
/// ties keep the first row.
CompareResult run_compare(const std::vector<std::filesystem::path>& reports);

}  // namespace qf
