#include "qf/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "qf/rng.hpp"

namespace qf {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_timestamp(const std::string& raw, std::int64_t& out) {
    const std::string s = trim(raw);
    if (s.empty()) return false;
    bool digits_only = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i == 0 && (s[i] == '-' || s[i] == '+')) continue;
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            digits_only = false;
            break;
        }
    }
    if (digits_only) {
        try {
            out = std::stoll(s);
            return true;
        } catch (...) {
            return false;
        }
    }
    int y, mo, d, h, mi, se;
    char sep;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &se) != 7)
        return false;
    if (sep != 'T' && sep != ' ') return false;
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    out = static_cast<std::int64_t>(timegm(&tm));
    return true;
}

bool parse_value(const std::string& raw, double& out, bool& missing) {
    const std::string s = trim(raw);
    if (s.empty()) {
        missing = true;
        return true;
    }
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') return false;
    if (std::isnan(v)) {
        missing = true;
        return true;
    }
    missing = false;
    out = v;
    return true;
}

[[noreturn]] void row_error(const std::filesystem::path& path, std::size_t line_no,
                            const std::string& what) {
    throw std::runtime_error(path.string() + ": row " + std::to_string(line_no) + ": " + what);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Linear fill of the masked entries in window [0, lag); entries outside the
// window (the slice's targets) serve only as a last-resort hold source when
// the window itself has no observed value.
bool fill_window_linear(Vec& values, const std::vector<std::uint8_t>& mask, int lag) {
    auto observed_in_window = [&](int from, int dir) -> int {
        for (int i = from; i >= 0 && i < lag; i += dir)
            if (mask[i]) return i;
        return -1;
    };
    for (int i = 0; i < lag; ++i) {
        if (mask[i]) continue;
        const int left = observed_in_window(i - 1, -1);
        const int right = observed_in_window(i + 1, +1);
        if (left >= 0 && right >= 0) {
            const double w = static_cast<double>(i - left) / (right - left);
            values[i] = values[left] + w * (values[right] - values[left]);
        } else if (left >= 0) {
            values[i] = values[left];
        } else if (right >= 0) {
            values[i] = values[right];
        } else {
            // whole window missing: hold from the slice's first observed entry
            int src = -1;
            for (std::size_t k = lag; k < mask.size(); ++k)
                if (mask[k]) {
                    src = static_cast<int>(k);
                    break;
                }
            if (src < 0) return false;
            values[i] = values[src];
        }
    }
    return true;
}

}  // namespace

std::size_t TimeSeries::observed_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
}

TimeSeries ingest_csv(const std::filesystem::path& path, const ColumnSpec& columns) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_csv: cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("ingest_csv: " + path.string() + " is empty");
    const auto header = split_csv_line(line);
    int ts_col = -1, val_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == columns.timestamp) ts_col = static_cast<int>(i);
        if (trim(header[i]) == columns.value) val_col = static_cast<int>(i);
    }
    if (ts_col < 0 || val_col < 0)
        throw std::runtime_error("ingest_csv: " + path.string() + ": header must contain '" +
                                 columns.timestamp + "' and '" + columns.value + "' columns");

    TimeSeries series;
    std::vector<std::int64_t> stamps;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) <= std::max(ts_col, val_col))
            row_error(path, line_no, "expected at least " +
                                         std::to_string(std::max(ts_col, val_col) + 1) + " fields");
        std::int64_t ts;
        if (!parse_timestamp(fields[ts_col], ts))
            row_error(path, line_no, "unparseable timestamp '" + fields[ts_col] + "'");
        double v = 0.0;
        bool missing = false;
        if (!parse_value(fields[val_col], v, missing))
            row_error(path, line_no, "unparseable value '" + fields[val_col] + "'");
        stamps.push_back(ts);
        series.values.push_back(missing ? kMissing : v);
        series.mask.push_back(missing ? 0 : 1);
        const std::size_t i = stamps.size() - 1;
        if (i >= 1) {
            if (stamps[i] == stamps[i - 1]) row_error(path, line_no, "duplicate timestamp");
            if (stamps[i] < stamps[i - 1]) row_error(path, line_no, "timestamps not increasing");
            if (i >= 2 && stamps[i] - stamps[i - 1] != stamps[1] - stamps[0])
                row_error(path, line_no,
                          "irregular spacing: expected " + std::to_string(stamps[1] - stamps[0]) +
                              "s, got " + std::to_string(stamps[i] - stamps[i - 1]) + "s");
        }
    }
    if (stamps.empty()) throw std::runtime_error("ingest_csv: " + path.string() + ": no data rows");
    series.start_epoch = stamps.front();
    series.resolution_sec =
        stamps.size() >= 2 ? static_cast<int>(stamps[1] - stamps[0]) : 300;
    if (series.resolution_sec <= 0)
        throw std::runtime_error("ingest_csv: " + path.string() + ": non-positive resolution");
    return series;
}

void write_csv(const std::filesystem::path& path, const TimeSeries& series,
               const ColumnSpec& columns) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
    out << columns.timestamp << ',' << columns.value << '\n';
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << series.timestamp_at(i) << ',';
        if (series.mask[i]) out << format_double(series.values[i]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write_csv: write failed for " + path.string());
}

void SplitSpec::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0))
        throw std::invalid_argument("split: all fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
}

SplitSpec::Bounds SplitSpec::bounds(std::size_t n) const {
    validate();
    Bounds b;
    b.n = n;
    b.train_end = static_cast<std::size_t>(train * static_cast<double>(n));
    b.val_end = static_cast<std::size_t>((train + val) * static_cast<double>(n));
    b.train_end = std::min(b.train_end, n);
    b.val_end = std::min(std::max(b.val_end, b.train_end), n);
    return b;
}

std::pair<TimeSeries, MinMaxScale> minmax_fit_apply(const TimeSeries& series,
                                                    const SplitSpec& split) {
    const auto b = split.bounds(series.size());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t observed = 0;
    for (std::size_t i = 0; i < b.train_end; ++i) {
        if (!series.mask[i]) continue;
        ++observed;
        lo = std::min(lo, series.values[i]);
        hi = std::max(hi, series.values[i]);
    }
    if (observed < 2 || lo == hi)
        throw std::invalid_argument(
            "minmax_fit_apply: training split needs at least two distinct observed values");
    MinMaxScale scale{lo, hi};
    TimeSeries out = series;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.mask[i]) out.values[i] = scale.apply(out.values[i]);
    return {std::move(out), scale};
}

TimeSeries apply_mcar(const TimeSeries& series, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0))
        throw std::invalid_argument("apply_mcar: rate must be in [0, 1]");
    TimeSeries out = series;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out.mask[i]) continue;  // never resurrects, never re-draws
        if (uniform01(rng) < rate) {
            out.mask[i] = 0;
            out.values[i] = kMissing;
        }
    }
    return out;
}

std::vector<SequenceInstance> make_instances(const TimeSeries& series, int lag_steps,
                                             int window_count, int stride, std::size_t begin,
                                             std::size_t end) {
    if (lag_steps < 1 || window_count < 1 || stride < 1)
        throw std::invalid_argument("make_instances: lag, window count and stride must be >= 1");
    end = std::min<std::size_t>(end, series.size());
    if (begin > end) throw std::invalid_argument("make_instances: begin past end");
    const std::size_t len = end - begin;
    const std::size_t need = static_cast<std::size_t>(lag_steps) + window_count;
    if (len < need)
        throw std::invalid_argument("make_instances: range of " + std::to_string(len) +
                                    " steps is shorter than lag+windows = " + std::to_string(need));

    std::vector<SequenceInstance> out;
    for (std::size_t origin = begin + lag_steps - 1; origin + window_count < end;
         origin += stride) {
        SequenceInstance inst;
        inst.origin = static_cast<std::int64_t>(origin);
        inst.lag_steps = lag_steps;
        inst.window_count = window_count;
        const std::size_t s = origin + 1 - lag_steps;
        inst.values.resize(need);
        inst.mask.resize(need);
        for (std::size_t k = 0; k < need; ++k) {
            inst.mask[k] = series.mask[s + k];
            inst.values[k] = inst.mask[k] ? series.values[s + k] : kMissing;
        }
        bool first_window_complete = true;
        for (int k = 0; k < lag_steps; ++k)
            if (!inst.mask[k]) first_window_complete = false;
        if (!first_window_complete) {
            if (!fill_window_linear(inst.values, inst.mask, lag_steps))
                continue;  // nothing observed anywhere in the slice
            inst.bootstrap_filled = true;
        }
        out.push_back(std::move(inst));
    }
    return out;
}

TimeSeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.capacity <= 0.0) throw std::invalid_argument("generate_synthetic: capacity must be > 0");
    if (spec.resolution_sec <= 0)
        throw std::invalid_argument("generate_synthetic: resolution must be > 0");
    TimeSeries series;
    series.start_epoch = spec.start_epoch;
    series.resolution_sec = spec.resolution_sec;
    series.values.reserve(spec.length);
    series.mask.assign(spec.length, 1);

    std::mt19937_64 rng(seed);
    double ar = 0.0;
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t t = 0; t < spec.length; ++t) {
        const double phase = static_cast<double>(t);
        const double seasonal =
            spec.capacity * (0.45 + 0.25 * std::sin(two_pi * phase / spec.daily_period_steps) +
                             0.12 * std::sin(two_pi * phase / spec.secondary_period_steps + 1.3));
        ar = spec.ar_coeff * ar + spec.noise_scale * spec.capacity * gauss(rng);
        series.values.push_back(std::clamp(seasonal + ar, 0.0, spec.capacity));
    }
    return series;
}

}  // namespace qf
