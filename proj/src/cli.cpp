#include "qf/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "qf/rng.hpp"
#include "json.hpp"

namespace qf {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSeedMcar = 0xA7;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string short_level(double level) {
    std::ostringstream s;
    s << level;
    return s.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

std::filesystem::path default_out_dir() {
    if (const char* env = std::getenv("QFORECAST_OUT"); env && *env) return env;
    return "out";
}

int lag_minutes_to_steps(int lag_minutes, int resolution_sec) {
    if (lag_minutes <= 0) throw std::invalid_argument("lag must be positive");
    const int seconds = lag_minutes * 60;
    if (resolution_sec <= 0 || seconds % resolution_sec != 0)
        throw std::invalid_argument("lag of " + std::to_string(lag_minutes) +
                                    " minutes is not a whole number of " +
                                    std::to_string(resolution_sec) + "s steps");
    return seconds / resolution_sec;
}

void RunConfig::validate() const {
    if (data.empty()) throw std::invalid_argument("config: data path is required");
    if (method != "endtoend" && method != "li" && method != "knn")
        throw std::invalid_argument("config: method must be endtoend, li or knn");
    if (!(missing_rate >= 0.0 && missing_rate <= 1.0))
        throw std::invalid_argument("config: missing rate must be in [0, 1]");
    split.validate();
    if (lag_minutes <= 0) throw std::invalid_argument("config: lag minutes must be positive");
    if (knn_k < 1) throw std::invalid_argument("config: knn k must be >= 1");
}

std::string RunConfig::to_json_text() const {
    json j;
    j["data"] = data;
    j["out_dir"] = out_dir;
    j["method"] = method;
    j["seed"] = seed;
    j["missing_rate"] = missing_rate;
    j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
    j["lag_minutes"] = lag_minutes;
    j["train"] = {{"quantile_levels", train.quantile_levels},
                  {"learning_rate", train.learning_rate},
                  {"batch_size", train.batch_size},
                  {"window_count", train.window_count},
                  {"num_layers", train.num_layers},
                  {"hidden_size", train.hidden_size},
                  {"patience", train.patience},
                  {"max_epochs", train.max_epochs},
                  {"grad_through_imputation", train.grad_through_imputation},
                  {"optimizer", train.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                  {"train_stride", train.train_stride},
                  {"threads", train.threads}};
    j["knn"] = {{"k", knn_k}, {"window_steps", knn_window_steps}};
    j["grid"] = {{"enabled", use_grid},
                 {"num_layers", grid.num_layers},
                 {"hidden_size", grid.hidden_size},
                 {"lag_minutes", grid_lag_minutes},
                 {"learning_rate", grid.learning_rate},
                 {"epochs", grid.epochs}};
    return j.dump(1) + "\n";
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    RunConfig c;
    c.data = j.value("data", "");
    c.out_dir = j.value("out_dir", "");
    c.method = j.value("method", "endtoend");
    c.seed = j.value("seed", std::uint64_t{1});
    c.missing_rate = j.value("missing_rate", 0.0);
    if (j.contains("split")) {
        c.split.train = j["split"].value("train", 0.6);
        c.split.val = j["split"].value("val", 0.2);
        c.split.test = j["split"].value("test", 0.2);
    }
    c.lag_minutes = j.value("lag_minutes", 15);
    if (j.contains("train")) {
        const json& t = j["train"];
        if (t.contains("quantile_levels")) c.train.quantile_levels = t["quantile_levels"].get<Vec>();
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.window_count = t.value("window_count", c.train.window_count);
        c.train.num_layers = t.value("num_layers", c.train.num_layers);
        c.train.hidden_size = t.value("hidden_size", c.train.hidden_size);
        c.train.patience = t.value("patience", c.train.patience);
        c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
        c.train.grad_through_imputation =
            t.value("grad_through_imputation", c.train.grad_through_imputation);
        if (t.value("optimizer", "adam") == "sgd") c.train.optimizer = OptimizerKind::sgd;
        c.train.train_stride = t.value("train_stride", c.train.train_stride);
        c.train.threads = t.value("threads", c.train.threads);
    }
    if (j.contains("knn")) {
        c.knn_k = j["knn"].value("k", 5);
        c.knn_window_steps = j["knn"].value("window_steps", 0);
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        c.use_grid = g.value("enabled", false);
        if (g.contains("num_layers")) c.grid.num_layers = g["num_layers"].get<std::vector<int>>();
        if (g.contains("hidden_size")) c.grid.hidden_size = g["hidden_size"].get<std::vector<int>>();
        if (g.contains("lag_minutes"))
            c.grid_lag_minutes = g["lag_minutes"].get<std::vector<int>>();
        if (g.contains("learning_rate")) c.grid.learning_rate = g["learning_rate"].get<Vec>();
        c.grid.epochs = g.value("epochs", c.grid.epochs);
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    try {
        return from_json_text(read_text_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }
}

TrainOutputs run_train(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    if (cfg.out_dir.empty()) cfg.out_dir = default_out_dir().string();
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path out_dir(cfg.out_dir);

    const TimeSeries raw = ingest_csv(cfg.data);
    TrainConfig train_cfg = cfg.train;
    train_cfg.lag_steps = lag_minutes_to_steps(cfg.lag_minutes, raw.resolution_sec);
    train_cfg.seed = cfg.seed;

    const TimeSeries corrupted =
        apply_mcar(raw, cfg.missing_rate, derive_seed(cfg.seed, kSeedMcar));
    auto [normalized, scale] = minmax_fit_apply(corrupted, cfg.split);

    if (cfg.use_grid) {
        GridSpec grid = cfg.grid;
        grid.lag_steps.clear();
        for (int m : cfg.grid_lag_minutes)
            grid.lag_steps.push_back(lag_minutes_to_steps(m, raw.resolution_sec));
        const GridResult gres = grid_search(normalized, grid, train_cfg, cfg.split, cfg.seed);
        train_cfg = gres.best;
    }

    FitResult fitres;
    bool knn_fell_back = false;
    if (cfg.method == "endtoend") {
        fitres = fit(normalized, train_cfg, cfg.split);
    } else {
        ImputerSpec imputer;
        imputer.kind = cfg.method == "li" ? ImputerSpec::Kind::linear : ImputerSpec::Kind::knn;
        imputer.k = cfg.knn_k;
        imputer.window_steps = cfg.knn_window_steps;
        TwoPhaseResult two = run_two_phase(normalized, imputer, train_cfg, cfg.split);
        fitres = std::move(two.fit);
        knn_fell_back = two.knn_fell_back;
    }
    if (knn_fell_back)
        std::fprintf(stderr, "warning: knn imputation fell back to linear interpolation\n");

    TrainOutputs outputs;
    outputs.checkpoint = out_dir / "checkpoint.json";
    outputs.report = out_dir / "train_report.json";
    outputs.snapshot = out_dir / "config_snapshot.json";
    save_checkpoint(outputs.checkpoint,
                    Checkpoint{fitres.params, scale, train_cfg.quantile_levels});
    write_text_file(outputs.report, train_report_to_json(fitres.report));
    write_text_file(outputs.snapshot, cfg.to_json_text());
    outputs.train_report = std::move(fitres.report);
    return outputs;
}

EvaluateOutputs run_evaluate(const EvaluateArgs& args) {
    std::filesystem::path out_dir = args.out_dir;
    if (out_dir.empty()) out_dir = default_out_dir();
    std::filesystem::create_directories(out_dir);

    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const TimeSeries raw = ingest_csv(args.data);
    const TimeSeries corrupted =
        apply_mcar(raw, args.missing_rate, derive_seed(args.seed, kSeedMcar));

    TimeSeries normalized = corrupted;
    for (std::size_t i = 0; i < normalized.size(); ++i)
        if (normalized.mask[i]) normalized.values[i] = ckpt.norm.apply(normalized.values[i]);

    TrainConfig cfg;
    cfg.quantile_levels = ckpt.quantile_levels;
    cfg.lag_steps = ckpt.params.arch.lag_steps;
    cfg.num_layers = ckpt.params.arch.num_layers;
    cfg.hidden_size = ckpt.params.arch.hidden_size;

    const auto bounds = args.split.bounds(normalized.size());
    EvaluationOutput eval =
        evaluate_model(ckpt.params, normalized, bounds.val_end, normalized.size(), cfg);
    eval.report.missing_rate = args.missing_rate;
    eval.report.seed = args.seed;
    eval.report.model_id = args.checkpoint.filename().string();

    EvaluateOutputs outputs;
    outputs.report = eval.report;
    outputs.report_json = out_dir / "evaluation_report.json";
    outputs.report_csv = out_dir / "evaluation_report.csv";
    outputs.forecasts_csv = out_dir / "forecasts.csv";
    write_text_file(outputs.report_json, evaluation_report_to_json(eval.report));
    write_text_file(outputs.report_csv, evaluation_report_to_csv(eval.report));

    // long-format fan table in original units, one row per swept origin
    std::ostringstream fc;
    fc << "timestamp,observation,mask";
    for (double level : ckpt.quantile_levels) fc << ",q" << short_level(level);
    fc << '\n';
    for (const auto& rec : eval.records) {
        fc << normalized.timestamp_at(static_cast<std::size_t>(rec.origin) + 1) << ',';
        if (rec.target_observed) fc << fmt(ckpt.norm.invert(rec.target));
        fc << ',' << (rec.target_observed ? 1 : 0);
        for (double v : rec.fan.values) fc << ',' << fmt(ckpt.norm.invert(v));
        fc << '\n';
    }
    write_text_file(outputs.forecasts_csv, fc.str());
    return outputs;
}

void run_simulate(const SimulateArgs& args) {
    SyntheticSpec spec;
    spec.length = args.length;
    spec.capacity = args.capacity;
    spec.resolution_sec = args.resolution_sec;
    if (spec.capacity <= 0.0) throw std::invalid_argument("simulate: capacity must be positive");
    const TimeSeries series = generate_synthetic(spec, args.seed);
    if (args.out.has_parent_path()) std::filesystem::create_directories(args.out.parent_path());
    write_csv(args.out, series);

    json meta;
    meta["seed"] = args.seed;
    meta["length"] = spec.length;
    meta["capacity"] = spec.capacity;
    meta["resolution_sec"] = spec.resolution_sec;
    meta["start_epoch"] = spec.start_epoch;
    meta["daily_period_steps"] = spec.daily_period_steps;
    meta["secondary_period_steps"] = spec.secondary_period_steps;
    meta["ar_coeff"] = spec.ar_coeff;
    meta["noise_scale"] = spec.noise_scale;
    std::filesystem::path meta_path = args.out;
    meta_path += ".meta.json";
    write_text_file(meta_path, meta.dump(1) + "\n");
}

CompareResult run_compare(const std::vector<std::filesystem::path>& reports) {
    if (reports.size() < 2)
        throw std::invalid_argument("compare: need at least two report files");
    CompareResult result;
    for (const auto& path : reports) {
        EvaluationReport rep;
        try {
            rep = evaluation_report_from_json(read_text_file(path));
        } catch (const json::exception& e) {
            throw std::runtime_error("compare: " + path.string() + ": " + e.what());
        }
        CompareRow row;
        row.label = path.stem().string();
        if (row.label == "evaluation_report" && path.has_parent_path())
            row.label = path.parent_path().filename().string();
        if (row.label.empty()) row.label = path.string();
        row.reliability_pct = rep.reliability_pct;
        row.sharpness = rep.sharpness;
        row.skill = rep.skill;
        result.rows.push_back(std::move(row));
    }

    std::size_t best_rel = 0, best_sharp = 0, best_skill = 0;
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        if (result.rows[i].reliability_pct < result.rows[best_rel].reliability_pct) best_rel = i;
        if (result.rows[i].sharpness < result.rows[best_sharp].sharpness) best_sharp = i;
        if (result.rows[i].skill > result.rows[best_skill].skill) best_skill = i;
    }
    result.rows[best_rel].best_reliability = true;
    result.rows[best_sharp].best_sharpness = true;
    result.rows[best_skill].best_skill = true;

    std::ostringstream text;
    std::size_t width = 6;
    for (const auto& r : result.rows) width = std::max(width, r.label.size());
    text << std::left << std::setw(static_cast<int>(width) + 2) << "method"
         << std::right << std::setw(14) << "reliability%" << std::setw(14) << "width"
         << std::setw(14) << "skill" << '\n';
    std::ostringstream csv;
    csv << "method,reliability_pct,sharpness,skill,best_reliability,best_sharpness,best_skill\n";
    for (const auto& r : result.rows) {
        auto cell = [](double v, bool best) {
            std::ostringstream s;
            s << std::fixed << std::setprecision(4) << v << (best ? "*" : " ");
            return s.str();
        };
        text << std::left << std::setw(static_cast<int>(width) + 2) << r.label << std::right
             << std::setw(14) << cell(r.reliability_pct, r.best_reliability) << std::setw(14)
             << cell(r.sharpness, r.best_sharpness) << std::setw(14)
             << cell(r.skill, r.best_skill) << '\n';
        csv << r.label << ',' << fmt(r.reliability_pct) << ',' << fmt(r.sharpness) << ','
            << fmt(r.skill) << ',' << (r.best_reliability ? 1 : 0) << ','
            << (r.best_sharpness ? 1 : 0) << ',' << (r.best_skill ? 1 : 0) << '\n';
    }
    result.text = text.str();
    result.csv = csv.str();
    return result;
}

}  // namespace qf
