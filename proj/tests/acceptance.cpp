// Acceptance suite: nine independently runnable criteria, one PASS/FAIL line
// each. Exit code is the number of failed criteria.
//
//   acceptance                 run everything
//   acceptance --criterion N   run a single criterion

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qf/baselines.hpp"
#include "qf/cli.hpp"
#include "qf/eval.hpp"
#include "qf/model.hpp"
#include "qf/pipeline.hpp"
#include "qf/rng.hpp"
#include "qf/train.hpp"

namespace fs = std::filesystem;
using namespace qf;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << std::fixed << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients of the rollout loss vs central finite differences,
//    imputation chain included, on >= 20 random desk-scale configurations.

SequenceInstance random_instance(std::mt19937_64& rng, int lag, int windows, double missing) {
    SequenceInstance inst;
    inst.lag_steps = lag;
    inst.window_count = windows;
    inst.origin = lag - 1;
    inst.values.resize(lag + windows);
    inst.mask.assign(lag + windows, 1);
    for (std::size_t i = 0; i < inst.values.size(); ++i) {
        inst.values[i] = uniform01(rng);
        if (i >= static_cast<std::size_t>(lag) && uniform01(rng) < missing) {
            inst.mask[i] = 0;
            inst.values[i] = kMissing;
        }
    }
    return inst;
}

Outcome criterion_gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(90210);
    int configs = 0;
    std::size_t entries = 0;
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        TrainConfig cfg;
        cfg.quantile_levels = {0.2, 0.5, 0.8};
        cfg.num_layers = 1 + static_cast<int>(rng() % 2);    // <= 2
        cfg.hidden_size = 2 + static_cast<int>(rng() % 3);   // <= 4
        cfg.lag_steps = 2 + static_cast<int>(rng() % 2);     // <= 3
        cfg.window_count = 3 + static_cast<int>(rng() % 3);  // <= 5
        ForecasterParams params = ForecasterParams::init(cfg.arch(), rng());
        const SequenceInstance inst =
            random_instance(rng, cfg.lag_steps, cfg.window_count, rep % 3 == 0 ? 0.0 : 0.45);

        ForecasterParams grads = ForecasterParams::zeros(cfg.arch());
        rollout_backward(params, inst, cfg, grads);
        const Vec analytic = flatten(grads);

        Vec flat = flatten(params);
        ForecasterParams probe = ForecasterParams::zeros(cfg.arch());
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double keep = flat[i];
            flat[i] = keep + 1e-5;
            assign_flat(probe, flat);
            const double hi = rollout_sequence(probe, inst, cfg).loss;
            flat[i] = keep - 1e-5;
            assign_flat(probe, flat);
            const double lo = rollout_sequence(probe, inst, cfg).loss;
            flat[i] = keep;
            const double fd = (hi - lo) / 2e-5;
            worst = std::max(worst, rel_err(analytic[i], fd));
            ++entries;
        }
        ++configs;
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Outcome out;
    out.pass = worst < 1e-4 && elapsed < 60.0 && configs >= 20;
    out.detail = std::to_string(configs) + " configs, " + std::to_string(entries) +
                 " parameters, worst relative error " + fmt(worst, 8) + ", " + fmt(elapsed, 1) +
                 "s";
    return out;
}

// ---------------------------------------------------------------------------
// 2. Metric implementations vs brute-force references, and the
//    skill = -pinball identity, to 1e-12 on 1000 random fan/observation sets.

Outcome criterion_metric_oracles() {
    std::mt19937_64 rng(424242);
    const Vec levels = default_quantile_levels();
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<QuantileFan> fans(n);
        Vec obs(n);
        for (std::size_t k = 0; k < n; ++k) {
            fans[k].levels = levels;
            fans[k].values.resize(levels.size());
            for (double& v : fans[k].values) v = uniform_in(rng, -2.0, 2.0);
            obs[k] = uniform_in(rng, -2.0, 2.0);
        }

        // brute-force references, recomputed from scratch
        double rel_ref = 0.0;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            double freq = 0.0;
            for (std::size_t k = 0; k < n; ++k) freq += fans[k].values[i] >= obs[k] ? 1.0 : 0.0;
            rel_ref += std::abs(levels[i] - freq / static_cast<double>(n));
        }
        rel_ref *= 100.0 / static_cast<double>(levels.size());

        double sharp_ref = 0.0;
        int pair_count = 0;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (levels[i] >= 0.5) continue;
            for (std::size_t j = 0; j < levels.size(); ++j)
                if (std::abs(levels[j] - (1.0 - levels[i])) < 1e-9) {
                    ++pair_count;
                    for (std::size_t k = 0; k < n; ++k)
                        sharp_ref += fans[k].values[j] - fans[k].values[i];
                }
        }
        sharp_ref /= static_cast<double>(pair_count) * static_cast<double>(n);

        double skill_ref = 0.0;
        double pinball_total = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < levels.size(); ++i) {
                const double q = fans[k].values[i];
                const double a = levels[i];
                skill_ref += ((q >= obs[k] ? 1.0 : 0.0) - a) * (obs[k] - q);
                pinball_total +=
                    a * std::max(0.0, obs[k] - q) + (1 - a) * std::max(0.0, q - obs[k]);
            }
        skill_ref /= static_cast<double>(n);

        worst = std::max(worst, std::abs(reliability(fans, obs).mean_pct - rel_ref));
        worst = std::max(worst, std::abs(sharpness(fans).mean - sharp_ref));
        const double got_skill = skill(fans, obs);
        worst = std::max(worst, std::abs(got_skill - skill_ref));
        // identity: mean skill == -(mean summed pinball)
        worst = std::max(worst, std::abs(got_skill + pinball_total / static_cast<double>(n)));
    }
    Outcome out;
    out.pass = worst < 1e-12;
    out.detail = "1000 sets, worst absolute deviation " + fmt(worst, 16);
    return out;
}

// ---------------------------------------------------------------------------
// 3. Calibration sanity with the true-quantile stub on uniform targets.

Outcome criterion_calibration() {
    std::mt19937_64 rng(777);
    const Vec levels = default_quantile_levels();
    const std::size_t n = 10000;
    std::vector<QuantileFan> fans(n);
    Vec obs(n);
    for (std::size_t k = 0; k < n; ++k) {
        fans[k].levels = levels;
        fans[k].values = levels;  // the uniform(0,1) quantile function is the identity
        obs[k] = uniform01(rng);
    }
    const double rel = reliability(fans, obs).mean_pct;
    const double sharp = sharpness(fans).mean;
    Outcome out;
    out.pass = rel <= 1.5 && std::abs(sharp - 0.5) <= 0.01;
    out.detail = "reliability " + fmt(rel, 3) + "% (<= 1.5), width " + fmt(sharp, 4) +
                 " (0.5 +- 0.01) on 10000 uniform targets";
    return out;
}

// ---------------------------------------------------------------------------
// Shared experiment plumbing for criteria 4 and 5.

struct MethodResult {
    std::string method;
    EvaluationReport report;
    std::string checkpoint_text;
    std::string report_text;
};

MethodResult train_and_evaluate(const TimeSeries& raw, const std::string& method,
                                const TrainConfig& base_cfg, double missing_rate,
                                std::uint64_t seed) {
    const SplitSpec split{};
    TrainConfig cfg = base_cfg;
    cfg.seed = seed;

    const TimeSeries corrupted = apply_mcar(raw, missing_rate, derive_seed(seed, 0xA7));
    auto [normalized, scale] = minmax_fit_apply(corrupted, split);

    FitResult fitres;
    if (method == "endtoend") {
        fitres = fit(normalized, cfg, split);
    } else {
        ImputerSpec imputer;
        imputer.kind = method == "li" ? ImputerSpec::Kind::linear : ImputerSpec::Kind::knn;
        fitres = run_two_phase(normalized, imputer, cfg, split).fit;
    }

    const auto bounds = split.bounds(normalized.size());
    EvaluationOutput eval =
        evaluate_model(fitres.params, normalized, bounds.val_end, normalized.size(), cfg);
    eval.report.missing_rate = missing_rate;
    eval.report.seed = seed;
    eval.report.model_id = "checkpoint.json";

    MethodResult out;
    out.method = method;
    out.report = eval.report;
    out.report_text = evaluation_report_to_json(eval.report);

    const fs::path tmp = fs::temp_directory_path() /
                         ("qf_accept_" + method + "_" + std::to_string(seed) + ".ckpt.json");
    save_checkpoint(tmp, Checkpoint{fitres.params, scale, cfg.quantile_levels});
    out.checkpoint_text = slurp(tmp);
    fs::remove(tmp);
    return out;
}

// 4. At missing rate zero every pipeline degenerates to the same training
//    run: checkpoints and evaluation reports must match byte for byte.

Outcome criterion_zero_missing_degeneracy() {
    SyntheticSpec spec;
    spec.length = 3000;
    const TimeSeries raw = generate_synthetic(spec, 11);

    TrainConfig cfg;
    cfg.quantile_levels = default_quantile_levels();
    cfg.num_layers = 1;
    cfg.hidden_size = 6;
    cfg.lag_steps = 3;
    cfg.window_count = 8;
    cfg.batch_size = 16;
    cfg.max_epochs = 3;

    const auto e2e = train_and_evaluate(raw, "endtoend", cfg, 0.0, 5);
    const auto li = train_and_evaluate(raw, "li", cfg, 0.0, 5);
    const auto knn = train_and_evaluate(raw, "knn", cfg, 0.0, 5);

    Outcome out;
    const bool ckpt_equal =
        e2e.checkpoint_text == li.checkpoint_text && e2e.checkpoint_text == knn.checkpoint_text;
    const bool report_equal =
        e2e.report_text == li.report_text && e2e.report_text == knn.report_text;
    out.pass = ckpt_equal && report_equal;
    out.detail = std::string("checkpoints ") + (ckpt_equal ? "hash-equal" : "DIFFER") +
                 ", reports " + (report_equal ? "identical" : "DIFFER") +
                 " across endtoend/li/knn at rate 0";
    return out;
}

// ---------------------------------------------------------------------------
// 5. Qualitative ordering on a long corrupted synthetic series: the
//    end-to-end pipeline beats both two-phase baselines on mean skill and
//    mean reliability across three seeds.

Outcome criterion_ordering() {
    SyntheticSpec spec;
    spec.length = 50400;  // 175 days of 5-minute samples
    const TimeSeries raw = generate_synthetic(spec, 2029);

    TrainConfig cfg;
    cfg.quantile_levels = default_quantile_levels();
    cfg.num_layers = 2;
    cfg.hidden_size = 32;
    cfg.lag_steps = 3;  // 15 minutes of history
    cfg.window_count = 32;
    cfg.batch_size = 64;
    cfg.learning_rate = 1e-3;
    cfg.max_epochs = 10;  // well under the 50-epoch ceiling
    cfg.patience = 20;

    const std::vector<std::uint64_t> seeds{1, 2, 3};
    std::ostringstream table;
    double rel_sum[3] = {0, 0, 0}, skill_sum[3] = {0, 0, 0};
    const char* methods[3] = {"endtoend", "li", "knn"};
    for (std::uint64_t seed : seeds) {
        for (int m = 0; m < 3; ++m) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto res = train_and_evaluate(raw, methods[m], cfg, 0.25, seed);
            const double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rel_sum[m] += res.report.reliability_pct;
            skill_sum[m] += res.report.skill;
            std::ostringstream row;
            row << "  seed " << seed << " " << methods[m] << ": reliability "
                << fmt(res.report.reliability_pct, 2) << "%, width "
                << fmt(res.report.sharpness, 4) << ", skill " << fmt(res.report.skill, 4)
                << "  (" << fmt(dt, 0) << "s)\n";
            table << row.str();
            std::cerr << row.str();  // progress for long runs
        }
    }
    const double n = static_cast<double>(seeds.size());
    const double rel_e2e = rel_sum[0] / n, rel_li = rel_sum[1] / n, rel_knn = rel_sum[2] / n;
    const double sk_e2e = skill_sum[0] / n, sk_li = skill_sum[1] / n, sk_knn = skill_sum[2] / n;

    Outcome out;
    out.pass = sk_e2e > sk_li && sk_e2e > sk_knn && rel_e2e < rel_li && rel_e2e < rel_knn;
    std::ostringstream d;
    d << "mean over " << seeds.size() << " seeds: skill endtoend " << fmt(sk_e2e, 4) << " vs li "
      << fmt(sk_li, 4) << " / knn " << fmt(sk_knn, 4) << "; reliability endtoend "
      << fmt(rel_e2e, 2) << "% vs li " << fmt(rel_li, 2) << "% / knn " << fmt(rel_knn, 2) << "%\n"
      << table.str();
    out.detail = d.str();
    return out;
}

// ---------------------------------------------------------------------------
// 6. Imputation audit: every rollout input is either the observation (bitwise)
//    or the recorded median forecast (bitwise), over 1000 instances.

Outcome criterion_imputation_audit() {
    SyntheticSpec spec;
    spec.length = 1100;
    TimeSeries series = generate_synthetic(spec, 6);
    series = apply_mcar(series, 0.3, 60);
    auto [normalized, scale] = minmax_fit_apply(series, SplitSpec{0.9, 0.05, 0.05});

    TrainConfig cfg;
    cfg.quantile_levels = {0.1, 0.5, 0.9};
    cfg.num_layers = 1;
    cfg.hidden_size = 4;
    cfg.lag_steps = 3;
    cfg.window_count = 32;
    const auto instances = make_instances(normalized, cfg.lag_steps, cfg.window_count, 1);

    ForecasterParams params = ForecasterParams::init(cfg.arch(), 123);
    std::size_t records = 0, violations = 0, imputed = 0, instance_count = 0;
    for (const auto& inst : instances) {
        if (instance_count >= 1000) break;
        ++instance_count;
        const RolloutResult r = rollout_sequence(params, inst, cfg);
        for (int i = 0; i < inst.window_count; ++i) {
            const auto& rec = r.audit[i];
            ++records;
            if (rec.observed) {
                if (rec.value_used != inst.target(i)) ++violations;
            } else {
                ++imputed;
                if (rec.value_used != rec.median) ++violations;
            }
        }
    }
    Outcome out;
    out.pass = instance_count >= 1000 && violations == 0;
    out.detail = std::to_string(instance_count) + " instances, " + std::to_string(records) +
                 " audited inputs (" + std::to_string(imputed) + " imputed), " +
                 std::to_string(violations) + " violations";
    return out;
}

// ---------------------------------------------------------------------------
// 7. The early-stop rule fires at the first epoch after exactly `patience`
//    consecutive epochs of train < validation, never earlier or later.

Outcome criterion_early_stop() {
    bool ok = true;
    std::ostringstream detail;

    auto stop_epoch_for = [](const std::function<double(int)>& train_loss, int patience,
                             int horizon) {
        EarlyStopRule rule(patience);
        for (int epoch = 1; epoch <= horizon; ++epoch)
            if (rule.observe(train_loss(epoch), 1.0)) return epoch;
        return -1;
    };

    // holds from epoch 1: stops exactly at epoch 20
    ok = ok && stop_epoch_for([](int) { return 0.5; }, 20, 100) == 20;
    // holds from epoch 7: stops exactly at 26
    ok = ok && stop_epoch_for([](int e) { return e >= 7 ? 0.5 : 2.0; }, 20, 100) == 26;
    // a break at epoch 20 resets a 19-epoch streak: stops at 40
    ok = ok && stop_epoch_for([](int e) { return e == 20 ? 2.0 : 0.5; }, 20, 100) == 40;
    // equality never qualifies
    ok = ok && stop_epoch_for([](int) { return 1.0; }, 20, 100) == -1;
    // one epoch short of the streak never fires
    ok = ok && stop_epoch_for([](int e) { return e % 20 == 0 ? 2.0 : 0.5; }, 20, 200) == -1;

    // end-to-end wiring: nearly-flat training segment, wild validation
    // segment makes train < val from the first epoch
    TimeSeries series;
    series.values.resize(600);
    series.mask.assign(600, 1);
    std::mt19937_64 rng(5);
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (i < 360)
            series.values[i] = 0.5 + 0.01 * std::sin(0.05 * static_cast<double>(i));
        else
            series.values[i] = uniform01(rng);
    }
    TrainConfig cfg;
    cfg.quantile_levels = {0.25, 0.5, 0.75};
    cfg.num_layers = 1;
    cfg.hidden_size = 3;
    cfg.lag_steps = 2;
    cfg.window_count = 6;
    cfg.batch_size = 16;
    cfg.patience = 3;
    cfg.max_epochs = 30;
    const FitResult res = fit(series, cfg, SplitSpec{});
    const bool fired = res.report.stop_reason == "early-stop";
    ok = ok && fired;
    if (fired) {
        // the rule must have held for exactly the last `patience` epochs
        const auto& tr = res.report.train_loss;
        const auto& va = res.report.val_loss;
        const int stop = res.report.stop_epoch;
        ok = ok && stop == static_cast<int>(tr.size());
        for (int e = stop - cfg.patience + 1; e <= stop; ++e) ok = ok && tr[e - 1] < va[e - 1];
        const int before = stop - cfg.patience;
        if (before >= 1) ok = ok && !(tr[before - 1] < va[before - 1]);
        detail << "scripted cases exact; fit stopped at epoch " << stop << " with patience "
               << cfg.patience;
    } else {
        detail << "fit never triggered the early stop (reason " << res.report.stop_reason << ")";
    }

    Outcome out;
    out.pass = ok;
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// 8. MCAR drop counts across 100 seeds stay inside the central 99.9%
//    binomial band [2356, 2645] for n = 10000, rate 0.25.

Outcome criterion_mcar_statistics() {
    TimeSeries base;
    base.values.assign(10000, 1.0);
    base.mask.assign(10000, 1);
    int outliers = 0;
    std::size_t lo = 10000, hi = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const TimeSeries r = apply_mcar(base, 0.25, derive_seed(1000, seed));
        const std::size_t dropped = 10000 - r.observed_count();
        lo = std::min(lo, dropped);
        hi = std::max(hi, dropped);
        if (dropped < 2356 || dropped > 2645) ++outliers;
    }
    Outcome out;
    out.pass = outliers <= 1;
    out.detail = "drop counts in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                 "] over 100 seeds, " + std::to_string(outliers) + " outside [2356, 2645]";
    return out;
}

// ---------------------------------------------------------------------------
// 9. Rerunning train + evaluate from the same resolved snapshot produces
//    byte-identical outputs, exercised through the CLI binary.

Outcome criterion_determinism() {
    const fs::path dir = fs::temp_directory_path() / "qf_accept_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = QF_CLI_PATH;
    auto shell = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };

    const std::string data = (dir / "data.csv").string();
    if (shell("simulate --out " + data + " --length 2400 --seed 9") != 0)
        return {false, "simulate failed"};

    RunConfig cfg;
    cfg.data = data;
    cfg.out_dir = (dir / "run").string();
    cfg.method = "endtoend";
    cfg.seed = 77;
    cfg.missing_rate = 0.25;
    cfg.lag_minutes = 15;
    cfg.train.num_layers = 1;
    cfg.train.hidden_size = 4;
    cfg.train.window_count = 8;
    cfg.train.batch_size = 16;
    cfg.train.max_epochs = 3;
    const fs::path cfg_path = dir / "run.json";
    {
        std::ofstream out(cfg_path);
        out << cfg.to_json_text();
    }

    if (shell("train --config " + cfg_path.string()) != 0) return {false, "train failed"};
    if (shell("evaluate --config " + cfg_path.string()) != 0) return {false, "evaluate failed"};

    const std::vector<std::string> files{"checkpoint.json", "train_report.json",
                                         "evaluation_report.json", "evaluation_report.csv",
                                         "forecasts.csv"};
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(slurp(dir / "run" / f));

    // rerun from the snapshot the first run wrote, into the same directory
    const fs::path snapshot = dir / "run" / "config_snapshot.json";
    if (shell("train --config " + snapshot.string()) != 0) return {false, "train rerun failed"};
    if (shell("evaluate --config " + snapshot.string()) != 0)
        return {false, "evaluate rerun failed"};

    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < files.size(); ++i)
        if (slurp(dir / "run" / files[i]) != first[i]) ++mismatches;

    fs::remove_all(dir);
    Outcome out;
    out.pass = mismatches == 0;
    out.detail = std::to_string(files.size()) + " output files compared, " +
                 std::to_string(mismatches) + " differ after the snapshot rerun";
    return out;
}

using CriterionFn = Outcome (*)();

struct Criterion {
    int id;
    const char* name;
    CriterionFn fn;
};

const Criterion kCriteria[] = {
    {1, "gradient suite vs finite differences", &criterion_gradient_suite},
    {2, "metric brute-force oracles and skill identity", &criterion_metric_oracles},
    {3, "calibration sanity on uniform targets", &criterion_calibration},
    {4, "zero-missing degeneracy of all pipelines", &criterion_zero_missing_degeneracy},
    {5, "method ordering on a corrupted long series", &criterion_ordering},
    {6, "imputation audit over 1000 instances", &criterion_imputation_audit},
    {7, "early-stop rule timing", &criterion_early_stop},
    {8, "mcar drop-count statistics", &criterion_mcar_statistics},
    {9, "snapshot rerun determinism", &criterion_determinism},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
            only = std::atoi(argv[++i]);
    }

    int failures = 0;
    for (const auto& crit : kCriteria) {
        if (only != 0 && crit.id != only) continue;
        const double t0 = now_seconds();
        Outcome outcome;
        try {
            outcome = crit.fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double dt = now_seconds() - t0;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << crit.id << " ("
                  << crit.name << ", " << fmt(dt, 1) << "s): " << outcome.detail << '\n';
        std::cout.flush();
        if (!outcome.pass) ++failures;
    }
    return failures;
}
