#include "qf/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qf/parallel.hpp"
#include "qf/rng.hpp"
#include "json.hpp"

namespace qf {

namespace {

constexpr std::uint64_t kSeedInit = 0x11;
constexpr std::uint64_t kSeedShuffleBase = 0x5E0;
constexpr std::uint64_t kSeedGridBase = 0x9D00;

std::size_t median_index(std::span<const double> levels) {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - 0.5) < 1e-12) return i;
    throw std::invalid_argument("quantile level set must contain 0.5");
}

// d(pinball)/d(quantile value) for one level
double pinball_grad(double observation, double level, double quantile_value) {
    return observation >= quantile_value ? -level : 1.0 - level;
}

std::vector<std::span<double>> tensor_views(ForecasterParams& p) {
    std::vector<std::span<double>> views;
    visit_tensors(p, [&](double* d, std::size_t n) { views.emplace_back(d, n); });
    return views;
}

void zero_params(ForecasterParams& p) {
    visit_tensors(p, [](double* d, std::size_t n) { std::fill(d, d + n, 0.0); });
}

void check_instance(const ForecasterParams& params, const SequenceInstance& inst) {
    if (inst.lag_steps != params.arch.lag_steps)
        throw std::invalid_argument("rollout: instance lag " + std::to_string(inst.lag_steps) +
                                    " != model lag " + std::to_string(params.arch.lag_steps));
    if (inst.window_count < 1) throw std::invalid_argument("rollout: empty instance");
    if (inst.values.size() != static_cast<std::size_t>(inst.lag_steps) + inst.window_count ||
        inst.mask.size() != inst.values.size())
        throw std::invalid_argument("rollout: malformed instance buffers");
    for (int k = 0; k < inst.lag_steps; ++k)
        if (!std::isfinite(inst.values[k]))
            throw std::invalid_argument("rollout: first window incomplete; impute it first");
}

struct RolloutScratch {
    Vec work;                         // slice with appended entries materialized
    std::vector<WindowTrace> traces;  // one per window when backward is needed
};

double rollout_core(const ForecasterParams& params, const SequenceInstance& inst,
                    const TrainConfig& cfg, RolloutResult* result, RolloutScratch* scratch) {
    check_instance(params, inst);
    const auto& levels = cfg.quantile_levels;
    const std::size_t mid = median_index(levels);
    const int lag = inst.lag_steps;
    const int count = inst.window_count;

    Vec local_work;
    Vec& work = scratch ? scratch->work : local_work;
    work = inst.values;
    if (scratch) scratch->traces.assign(count, WindowTrace{});

    double loss_sum = 0.0;
    for (int i = 0; i < count; ++i) {
        const std::span<const double> window(&work[i], static_cast<std::size_t>(lag));
        Vec outputs = forward_window(params, window, levels,
                                     scratch ? &scratch->traces[i] : nullptr);
        const double median = outputs[mid];
        const double target = inst.target(i);
        const bool observed = inst.target_observed(i);
        if (observed) loss_sum += pinball_loss(target, levels, outputs);
        const double appended = observed ? target : median;
        work[lag + i] = appended;
        if (result) {
            result->fans.push_back(std::move(outputs));
            result->appended.push_back(appended);
            result->audit.push_back(
                ImputationRecord{inst.origin + 1 + i, observed, appended, median});
        }
    }
    const double loss = loss_sum / count;
    if (result) result->loss = loss;
    return loss;
}

}  // namespace

Vec default_quantile_levels() {
    Vec q(19);
    for (int i = 1; i <= 19; ++i) q[i - 1] = static_cast<double>(i) / 20.0;
    return q;
}

void TrainConfig::validate() const {
    if (quantile_levels.empty()) throw std::invalid_argument("config: empty quantile level set");
    for (std::size_t i = 0; i < quantile_levels.size(); ++i) {
        const double q = quantile_levels[i];
        if (!(q > 0.0 && q < 1.0))
            throw std::invalid_argument("config: quantile level outside (0, 1)");
        if (i > 0 && q <= quantile_levels[i - 1])
            throw std::invalid_argument("config: quantile levels must be strictly increasing");
    }
    median_index(quantile_levels);  // 0.5 is required by the imputation rule
    if (learning_rate < 0.0) throw std::invalid_argument("config: negative learning rate");
    if (batch_size < 1) throw std::invalid_argument("config: batch size must be >= 1");
    if (window_count < 1) throw std::invalid_argument("config: window count must be >= 1");
    if (lag_steps < 1) throw std::invalid_argument("config: lag must be >= 1");
    if (num_layers < 1 || hidden_size < 1)
        throw std::invalid_argument("config: architecture fields must be >= 1");
    if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("config: max epochs must be >= 1");
    if (train_stride < 0 || threads < 0)
        throw std::invalid_argument("config: stride and threads must be >= 0");
}

double pinball_loss(double observation, std::span<const double> levels,
                    std::span<const double> quantile_values) {
    if (levels.size() != quantile_values.size())
        throw std::invalid_argument("pinball_loss: level/value length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const double diff = observation - quantile_values[i];
        sum += diff >= 0.0 ? levels[i] * diff : (levels[i] - 1.0) * diff;
    }
    return sum;
}

double masked_step_loss(double target, bool target_observed, std::span<const double> levels,
                        std::span<const double> quantile_values) {
    return target_observed ? pinball_loss(target, levels, quantile_values) : 0.0;
}

RolloutResult rollout_sequence(const ForecasterParams& params, const SequenceInstance& instance,
                               const TrainConfig& cfg) {
    RolloutResult result;
    rollout_core(params, instance, cfg, &result, nullptr);
    return result;
}

double rollout_backward(const ForecasterParams& params, const SequenceInstance& instance,
                        const TrainConfig& cfg, ForecasterParams& grads) {
    RolloutScratch scratch;
    RolloutResult result;
    const double loss = rollout_core(params, instance, cfg, &result, &scratch);

    const auto& levels = cfg.quantile_levels;
    const std::size_t mid = median_index(levels);
    const int lag = instance.lag_steps;
    const int count = instance.window_count;
    const double inv_count = 1.0 / count;

    // Gradient w.r.t. each appended window entry, filled while walking the
    // windows backward; only model-imputed entries propagate further.
    Vec entry_grad(scratch.work.size(), 0.0);
    Vec out_grads(levels.size());
    for (int i = count - 1; i >= 0; --i) {
        const bool observed = instance.target_observed(i);
        const double target = instance.target(i);
        const Vec& fan = result.fans[i];
        for (std::size_t j = 0; j < levels.size(); ++j)
            out_grads[j] = observed ? inv_count * pinball_grad(target, levels[j], fan[j]) : 0.0;
        if (cfg.grad_through_imputation && !observed)
            out_grads[mid] += entry_grad[lag + i];

        Vec wgrad = backward_window(params, scratch.traces[i], out_grads, grads);
        for (int k = 0; k < lag; ++k) {
            const int pos = i + k;
            if (pos >= lag && !instance.mask[pos]) entry_grad[pos] += wgrad[k];
        }
    }
    return loss;
}

double train_epoch(ForecasterParams& params, const std::vector<SequenceInstance>& instances,
                   const TrainConfig& cfg, OptimizerState& opt_state, std::uint64_t shuffle_seed) {
    cfg.validate();
    if (instances.empty()) throw std::invalid_argument("train_epoch: no instances");

    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);

    OptimizerConfig opt_cfg;
    opt_cfg.kind = cfg.optimizer;
    opt_cfg.learning_rate = cfg.learning_rate;

    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    std::vector<ForecasterParams> buffers;
    std::vector<double> losses;
    Vec flat = flatten(params);
    ForecasterParams batch_grads = ForecasterParams::zeros(params.arch);

    double loss_sum = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++batch_id) {
        const std::size_t n = std::min(batch, order.size() - begin);
        if (buffers.size() < n) {
            buffers.reserve(n);
            while (buffers.size() < n) buffers.push_back(ForecasterParams::zeros(params.arch));
        }
        losses.assign(n, 0.0);
        parallel_for(n, cfg.threads, [&](std::size_t j) {
            zero_params(buffers[j]);
            losses[j] = rollout_backward(params, instances[order[begin + j]], cfg, buffers[j]);
        });

        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(losses[j]))
                throw std::runtime_error(
                    "train_epoch: non-finite loss in batch " + std::to_string(batch_id) +
                    ", instance origin " +
                    std::to_string(instances[order[begin + j]].origin));
            loss_sum += losses[j];
        }

        // deterministic reduction: instance order, then scale by 1/n
        zero_params(batch_grads);
        auto total_views = tensor_views(batch_grads);
        for (std::size_t j = 0; j < n; ++j) {
            auto views = tensor_views(buffers[j]);
            for (std::size_t t = 0; t < views.size(); ++t)
                for (std::size_t k = 0; k < views[t].size(); ++k)
                    total_views[t][k] += views[t][k];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& view : total_views)
            for (double& g : view) g *= inv_n;

        Vec flat_grads = flatten(batch_grads);
        optimizer_step(flat, flat_grads, opt_state, opt_cfg);
        assign_flat(params, flat);
    }
    return loss_sum / static_cast<double>(order.size());
}

namespace {

double validation_loss(const ForecasterParams& params,
                       const std::vector<SequenceInstance>& instances, const TrainConfig& cfg) {
    std::vector<double> losses(instances.size());
    parallel_for(instances.size(), cfg.threads, [&](std::size_t i) {
        losses[i] = rollout_core(params, instances[i], cfg, nullptr, nullptr);
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(losses.size());
}

}  // namespace

FitResult fit(const TimeSeries& series, const TrainConfig& cfg, const SplitSpec& split) {
    cfg.validate();
    const auto bounds = split.bounds(series.size());

    auto train_instances = make_instances(series, cfg.lag_steps, cfg.window_count,
                                          cfg.effective_train_stride(), 0, bounds.train_end);
    auto val_instances = make_instances(series, cfg.lag_steps, cfg.window_count, cfg.window_count,
                                        bounds.train_end, bounds.val_end);
    if (train_instances.empty() || val_instances.empty())
        throw std::runtime_error("fit: a split segment yielded no usable instances");

    ForecasterParams params = ForecasterParams::init(cfg.arch(), derive_seed(cfg.seed, kSeedInit));
    OptimizerState opt_state;
    EarlyStopRule rule(cfg.patience);

    FitResult out;
    out.report.best_val_loss = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double train_loss = train_epoch(params, train_instances, cfg, opt_state,
                                              derive_seed(cfg.seed, kSeedShuffleBase + epoch));
        const double val_loss = validation_loss(params, val_instances, cfg);
        out.report.train_loss.push_back(train_loss);
        out.report.val_loss.push_back(val_loss);
        if (val_loss < out.report.best_val_loss) {
            out.report.best_val_loss = val_loss;
            out.report.best_epoch = epoch;
            out.params = params;
        }
        if (rule.observe(train_loss, val_loss)) {
            out.report.stop_epoch = epoch;
            out.report.stop_reason = "early-stop";
            return out;
        }
    }
    out.report.stop_epoch = cfg.max_epochs;
    out.report.stop_reason = "max-epochs";
    return out;
}

std::string train_report_to_json(const TrainReport& report) {
    nlohmann::json j;
    j["train_loss"] = report.train_loss;
    j["val_loss"] = report.val_loss;
    j["stop_epoch"] = report.stop_epoch;
    j["stop_reason"] = report.stop_reason;
    j["best_epoch"] = report.best_epoch;
    j["best_val_loss"] = report.best_val_loss;
    return j.dump(1) + "\n";
}

TrainReport train_report_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TrainReport r;
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.val_loss = j.at("val_loss").get<std::vector<double>>();
    r.stop_epoch = j.at("stop_epoch").get<int>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_loss = j.at("best_val_loss").get<double>();
    return r;
}

std::size_t select_best(const std::vector<GridEntry>& entries) {
    std::size_t best = entries.size();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].failed) continue;
        if (best == entries.size()) {
            best = i;
            continue;
        }
        const auto& a = entries[i];
        const auto& b = entries[best];
        const auto key = [](const GridEntry& e) {
            return std::make_tuple(e.val_loss, e.cfg.num_layers, e.cfg.hidden_size,
                                   e.cfg.lag_steps, e.cfg.learning_rate);
        };
        if (key(a) < key(b)) best = i;
    }
    if (best == entries.size()) throw std::runtime_error("grid_search: every configuration failed");
    return best;
}

GridResult grid_search(const TimeSeries& series, const GridSpec& grid, const TrainConfig& base,
                       const SplitSpec& split, std::uint64_t seed) {
    if (grid.num_layers.empty() || grid.hidden_size.empty() || grid.lag_steps.empty() ||
        grid.learning_rate.empty())
        throw std::invalid_argument("grid_search: empty grid axis");

    GridResult result;
    std::size_t index = 0;
    for (int nl : grid.num_layers)
        for (int hs : grid.hidden_size)
            for (int lag : grid.lag_steps)
                for (double lr : grid.learning_rate) {
                    GridEntry entry;
                    entry.cfg = base;
                    entry.cfg.num_layers = nl;
                    entry.cfg.hidden_size = hs;
                    entry.cfg.lag_steps = lag;
                    entry.cfg.learning_rate = lr;
                    entry.cfg.max_epochs = grid.epochs;
                    entry.cfg.seed = derive_seed(seed, kSeedGridBase + index);
                    try {
                        const FitResult fitres = fit(series, entry.cfg, split);
                        entry.val_loss = fitres.report.best_val_loss;
                    } catch (const std::exception& e) {
                        entry.failed = true;
                        entry.error = e.what();
                    }
                    result.entries.push_back(std::move(entry));
                    ++index;
                }

    const std::size_t best = select_best(result.entries);
    result.best = result.entries[best].cfg;
    result.best.max_epochs = base.max_epochs;  // the winner is retrained at full budget
    result.best.seed = base.seed;
    return result;
}

}  // namespace qf
