#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qf/model.hpp"
#include "qf/pipeline.hpp"
#include "qf/train.hpp"

namespace qf {

/**
 * Verification summary for a set of quantile fans against observations.
 *
 * reliability: per level, |level - observed frequency of (obs <= quantile)|,
 * averaged and reported in percent. sharpness: mean width of the central
 * prediction intervals formed by symmetric level pairs (a, 1-a). skill: the
 * nonpositive score combining both; closer to zero is better.
 */
struct EvaluationReport {
    Vec levels;            // quantile levels shared by all fans
    Vec level_deviation;   // per-level |level - observed frequency|
    double reliability_pct = 0.0;
    Vec pi_coverage;       // nominal coverage of each central interval (1 - 2a)
    Vec pi_width;          // mean width per interval
    double sharpness = 0.0;
    double skill = 0.0;
    std::size_t n_samples = 0;

    // run metadata
    double missing_rate = 0.0;
    std::uint64_t seed = 0;
    std::string model_id;
};

struct ReliabilityResult {
    Vec deviation;
    double mean_pct = 0.0;
};

ReliabilityResult reliability(const std::vector<QuantileFan>& fans,
                              std::span<const double> observations);

struct SharpnessResult {
    Vec coverage;  // nominal central-interval coverages, widest first
    Vec width;     // mean observed width per interval
    double mean = 0.0;
};

SharpnessResult sharpness(const std::vector<QuantileFan>& fans);

double skill(const std::vector<QuantileFan>& fans, std::span<const double> observations);

/// One forecast origin of the evaluation sweep.
struct ForecastRecord {
    std::int64_t origin = 0;  // index of the window's last entry
    double target = 0.0;      // next-step observation (NaN when missing)
    bool target_observed = false;
    QuantileFan fan;  // monotonized
};

struct EvaluationOutput {
    EvaluationReport report;
    std::vector<ForecastRecord> records;  // every swept origin, in order
};

/**
 * Sweeps the model across [begin, end) of a normalized series: windows are
 * completed with the model's own median forecast where entries are missing,
 * a fan is recorded at every origin, and the three metrics are computed over
 * the origins whose next-step target is observed.
 */
EvaluationOutput evaluate_model(const ForecasterParams& params, const TimeSeries& series,
                                std::size_t begin, std::size_t end, const TrainConfig& cfg);

std::string evaluation_report_to_json(const EvaluationReport& report);
EvaluationReport evaluation_report_from_json(const std::string& text);

/// Per-level rows (level, deviation) then interval rows (coverage, width).
std::string evaluation_report_to_csv(const EvaluationReport& report);

}  // namespace qf
