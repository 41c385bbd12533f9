#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "qf/matrix.hpp"
#include "qf/scaling.hpp"

namespace qf {

/**
 * Evenly spaced scalar series with a presence mask (1 = observed). Entries
 * with mask 0 hold NaN and must never be read as data.
 */
struct TimeSeries {
    std::int64_t start_epoch = 0;  // unix seconds of the first sample
    int resolution_sec = 300;
    Vec values;
    std::vector<std::uint8_t> mask;

    std::size_t size() const { return values.size(); }
    std::int64_t timestamp_at(std::size_t i) const {
        return start_epoch + static_cast<std::int64_t>(i) * resolution_sec;
    }
    std::size_t observed_count() const;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct ColumnSpec {
    std::string timestamp = "timestamp";
    std::string value = "power";
};

/**
 * Reads a (timestamp, value) CSV with a header row. Timestamps are ISO-8601
 * ("2020-01-01T00:05:00", optional trailing Z, space accepted for 'T') or
 * epoch seconds; an empty or NaN value field marks the sample missing.
 * Rows must be strictly increasing in time at a uniform resolution; any
 * violation reports the offending row number.
 */
TimeSeries ingest_csv(const std::filesystem::path& path, const ColumnSpec& columns = {});

/// Writes the same CSV format ingest_csv reads (missing -> empty field).
void write_csv(const std::filesystem::path& path, const TimeSeries& series,
               const ColumnSpec& columns = {});

/// Chronological train/validation/test fractions; contiguous and in order.
struct SplitSpec {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;

    void validate() const;

    struct Bounds {
        std::size_t train_end = 0;  // [0, train_end) is the training segment
        std::size_t val_end = 0;    // [train_end, val_end) validation, rest test
        std::size_t n = 0;
    };
    Bounds bounds(std::size_t n) const;
};

/**
 * Fits min-max constants on the observed values of the training segment only
 * and rescales every observed value of the series. Values outside the
 * training range map outside [0, 1]; that is expected and preserved.
 */
std::pair<TimeSeries, MinMaxScale> minmax_fit_apply(const TimeSeries& series,
                                                    const SplitSpec& split);

/**
 * Drops each observed entry independently with the given probability
 * (missing-completely-at-random). Existing gaps are preserved; the result is
 * deterministic per seed.
 */
TimeSeries apply_mcar(const TimeSeries& series, double rate, std::uint64_t seed);

/**
 * One training unit: a run of `window_count` lag windows advancing one step
 * at a time, stored as the underlying slice of lag_steps + window_count
 * values plus masks. Masked entries hold NaN except inside the first window,
 * which is pre-filled by linear interpolation (and flagged) so rollouts start
 * from complete history.
 */
struct SequenceInstance {
    std::int64_t origin = 0;  // absolute index of the first window's last entry
    int lag_steps = 0;
    int window_count = 0;
    Vec values;                      // lag_steps + window_count entries
    std::vector<std::uint8_t> mask;  // parallel to values
    bool bootstrap_filled = false;   // first window had gaps that were pre-filled

    double target(int step) const { return values[lag_steps + step]; }
    bool target_observed(int step) const { return mask[lag_steps + step] != 0; }
};

/**
 * Emits instances with origins begin+lag_steps-1, +stride, ... covering
 * [begin, end). A shorter-than-(lag+count) range is an error.
 */
std::vector<SequenceInstance> make_instances(const TimeSeries& series, int lag_steps,
                                             int window_count, int stride, std::size_t begin = 0,
                                             std::size_t end = SIZE_MAX);

// ---------------------------------------------------------------------------
// Synthetic data: a seasonal profile plus an autoregressive disturbance,
// clamped to [0, capacity]. Stands in for real generation-output feeds.

struct SyntheticSpec {
    std::size_t length = 0;
    double capacity = 52.5;
    int resolution_sec = 300;
    std::int64_t start_epoch = 1577836800;  // 2020-01-01T00:00:00Z
    double daily_period_steps = 288.0;
    double secondary_period_steps = 37.0;
    double ar_coeff = 0.98;
    double noise_scale = 0.04;  // AR innovation scale as a fraction of capacity
};

TimeSeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace qf
