#include "qf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qf {

namespace {

// closed step: H(0) = 1, so an observation equal to the quantile counts as
// covered
double unit_step(double u) { return u >= 0.0 ? 1.0 : 0.0; }

void check_fan_set(const std::vector<QuantileFan>& fans) {
    if (fans.empty()) throw std::invalid_argument("metrics: empty fan set");
    const Vec& levels = fans.front().levels;
    if (levels.empty()) throw std::invalid_argument("metrics: fan without levels");
    for (const auto& fan : fans) {
        if (fan.levels != levels)
            throw std::invalid_argument("metrics: fans disagree on the quantile level set");
        if (fan.values.size() != levels.size())
            throw std::invalid_argument("metrics: fan values/levels length mismatch");
    }
}

void check_paired(const std::vector<QuantileFan>& fans, std::span<const double> observations) {
    check_fan_set(fans);
    if (fans.size() != observations.size())
        throw std::invalid_argument("metrics: fan count " + std::to_string(fans.size()) +
                                    " != observation count " + std::to_string(observations.size()));
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ReliabilityResult reliability(const std::vector<QuantileFan>& fans,
                              std::span<const double> observations) {
    check_paired(fans, observations);
    const Vec& levels = fans.front().levels;
    const double n = static_cast<double>(fans.size());
    ReliabilityResult out;
    out.deviation.resize(levels.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        double covered = 0.0;
        for (std::size_t k = 0; k < fans.size(); ++k)
            covered += unit_step(fans[k].values[i] - observations[k]);
        out.deviation[i] = std::abs(levels[i] - covered / n);
        sum += out.deviation[i];
    }
    out.mean_pct = 100.0 * sum / static_cast<double>(levels.size());
    return out;
}

SharpnessResult sharpness(const std::vector<QuantileFan>& fans) {
    check_fan_set(fans);
    const Vec& levels = fans.front().levels;

    // symmetric level pairs (a, 1-a) readable from the fan itself
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] >= 0.5) continue;
        const double mirror = 1.0 - levels[i];
        std::size_t j = levels.size();
        for (std::size_t k = 0; k < levels.size(); ++k)
            if (std::abs(levels[k] - mirror) < 1e-9) j = k;
        if (j == levels.size())
            throw std::invalid_argument("sharpness: level " + std::to_string(levels[i]) +
                                        " has no mirror quantile " + std::to_string(mirror) +
                                        " in the fan");
        pairs.emplace_back(i, j);
    }
    if (pairs.empty())
        throw std::invalid_argument("sharpness: no symmetric level pairs in the fan");

    SharpnessResult out;
    const double n = static_cast<double>(fans.size());
    double total = 0.0;
    for (const auto& [lo, hi] : pairs) {
        double width = 0.0;
        for (const auto& fan : fans) width += fan.values[hi] - fan.values[lo];
        width /= n;
        out.coverage.push_back(1.0 - 2.0 * levels[lo]);
        out.width.push_back(width);
        total += width;
    }
    out.mean = total / static_cast<double>(pairs.size());
    return out;
}

double skill(const std::vector<QuantileFan>& fans, std::span<const double> observations) {
    check_paired(fans, observations);
    const Vec& levels = fans.front().levels;
    double sum = 0.0;
    for (std::size_t k = 0; k < fans.size(); ++k) {
        const double x = observations[k];
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const double q = fans[k].values[i];
            sum += (unit_step(q - x) - levels[i]) * (x - q);
        }
    }
    return sum / static_cast<double>(fans.size());
}

EvaluationOutput evaluate_model(const ForecasterParams& params, const TimeSeries& series,
                                std::size_t begin, std::size_t end, const TrainConfig& cfg) {
    cfg.validate();
    end = std::min(end, series.size());
    const int lag = params.arch.lag_steps;
    if (begin >= end || end - begin < static_cast<std::size_t>(lag) + 1)
        throw std::invalid_argument("evaluate_model: range too short for one forecast");
    const auto& levels = cfg.quantile_levels;
    std::size_t mid = levels.size();
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - 0.5) < 1e-12) mid = i;
    if (mid == levels.size())
        throw std::invalid_argument("evaluate_model: level set lacks the median");

    // working copy of the range; gaps are filled as the sweep advances
    const std::size_t len = end - begin;
    Vec work(len);
    for (std::size_t i = 0; i < len; ++i) work[i] = series.values[begin + i];

    // the first window needs complete history before the model can take over:
    // interpolate inside it, holding the nearest observation at the edges
    {
        auto obs_at = [&](std::size_t i) { return series.mask[begin + i] != 0; };
        for (int i = 0; i < lag; ++i) {
            if (obs_at(i)) continue;
            int left = -1, right = -1;
            for (int k = i - 1; k >= 0; --k)
                if (obs_at(k)) {
                    left = k;
                    break;
                }
            for (int k = i + 1; k < lag; ++k)
                if (obs_at(k)) {
                    right = k;
                    break;
                }
            if (left >= 0 && right >= 0)
                work[i] = work[left] +
                          (work[right] - work[left]) * (static_cast<double>(i - left) / (right - left));
            else if (left >= 0)
                work[i] = work[left];
            else if (right >= 0)
                work[i] = work[right];
            else {
                std::size_t src = len;
                for (std::size_t k = lag; k < len; ++k)
                    if (series.mask[begin + k]) {
                        src = k;
                        break;
                    }
                if (src == len)
                    throw std::runtime_error("evaluate_model: nothing observed in the range");
                work[i] = work[src];
            }
        }
    }

    EvaluationOutput out;
    std::vector<QuantileFan> scored_fans;
    Vec scored_obs;
    for (std::size_t origin = lag - 1; origin + 1 < len; ++origin) {
        const std::span<const double> window(&work[origin + 1 - lag], static_cast<std::size_t>(lag));
        const Vec raw = forward_window(params, window, levels);

        ForecastRecord rec;
        rec.origin = static_cast<std::int64_t>(begin + origin);
        rec.fan.origin = rec.origin;
        rec.fan.levels = levels;
        rec.fan.values = raw;
        rec.fan.monotonize();

        const std::size_t tgt = origin + 1;
        rec.target_observed = series.mask[begin + tgt] != 0;
        rec.target = rec.target_observed ? series.values[begin + tgt] : kMissing;
        if (rec.target_observed) {
            scored_fans.push_back(rec.fan);
            scored_obs.push_back(rec.target);
            work[tgt] = rec.target;
        } else {
            work[tgt] = raw[mid];  // the median forecast stands in for the gap
        }
        out.records.push_back(std::move(rec));
    }
    if (scored_fans.empty())
        throw std::runtime_error("evaluate_model: no observed targets in the evaluation range");

    const auto rel = reliability(scored_fans, scored_obs);
    const auto sharp = sharpness(scored_fans);
    out.report.levels = levels;
    out.report.level_deviation = rel.deviation;
    out.report.reliability_pct = rel.mean_pct;
    out.report.pi_coverage = sharp.coverage;
    out.report.pi_width = sharp.width;
    out.report.sharpness = sharp.mean;
    out.report.skill = skill(scored_fans, scored_obs);
    out.report.n_samples = scored_fans.size();
    return out;
}

std::string evaluation_report_to_json(const EvaluationReport& report) {
    nlohmann::json j;
    j["levels"] = report.levels;
    j["level_deviation"] = report.level_deviation;
    j["reliability_pct"] = report.reliability_pct;
    j["pi_coverage"] = report.pi_coverage;
    j["pi_width"] = report.pi_width;
    j["sharpness"] = report.sharpness;
    j["skill"] = report.skill;
    j["n_samples"] = report.n_samples;
    j["missing_rate"] = report.missing_rate;
    j["seed"] = report.seed;
    j["model_id"] = report.model_id;
    return j.dump(1) + "\n";
}

EvaluationReport evaluation_report_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    EvaluationReport r;
    r.levels = j.at("levels").get<Vec>();
    r.level_deviation = j.at("level_deviation").get<Vec>();
    r.reliability_pct = j.at("reliability_pct").get<double>();
    r.pi_coverage = j.at("pi_coverage").get<Vec>();
    r.pi_width = j.at("pi_width").get<Vec>();
    r.sharpness = j.at("sharpness").get<double>();
    r.skill = j.at("skill").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.missing_rate = j.at("missing_rate").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.model_id = j.at("model_id").get<std::string>();
    return r;
}

std::string evaluation_report_to_csv(const EvaluationReport& report) {
    std::ostringstream out;
    out << "section,key,value\n";
    for (std::size_t i = 0; i < report.levels.size(); ++i)
        out << "reliability_deviation," << fmt(report.levels[i]) << ','
            << fmt(report.level_deviation[i]) << '\n';
    for (std::size_t i = 0; i < report.pi_coverage.size(); ++i)
        out << "pi_width," << fmt(report.pi_coverage[i]) << ',' << fmt(report.pi_width[i]) << '\n';
    out << "summary,reliability_pct," << fmt(report.reliability_pct) << '\n';
    out << "summary,sharpness," << fmt(report.sharpness) << '\n';
    out << "summary,skill," << fmt(report.skill) << '\n';
    out << "summary,n_samples," << report.n_samples << '\n';
    return out.str();
}

}  // namespace qf
