// qforecast: probabilistic forecasting experiments on gappy series.
//
// Subcommands: simulate (synthetic data), train (end-to-end or two-phase),
// evaluate (metrics + fan table), compare (side-by-side report table).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qf/cli.hpp"

namespace {

struct TrainCli {
    std::string config;
    std::string data;
    std::string out_dir;
    std::string method;
    std::optional<std::uint64_t> seed;
    std::optional<double> missing_rate;
};

int do_train(const TrainCli& cli) {
    qf::RunConfig cfg;
    if (!cli.config.empty()) cfg = qf::RunConfig::load(cli.config);
    if (!cli.data.empty()) cfg.data = cli.data;
    if (!cli.out_dir.empty()) cfg.out_dir = cli.out_dir;
    if (!cli.method.empty()) cfg.method = cli.method;
    if (cli.seed) cfg.seed = *cli.seed;
    if (cli.missing_rate) cfg.missing_rate = *cli.missing_rate;

    const auto outputs = qf::run_train(cfg);
    std::cout << "checkpoint: " << outputs.checkpoint.string() << '\n'
              << "report:     " << outputs.report.string() << '\n'
              << "snapshot:   " << outputs.snapshot.string() << '\n'
              << "stopped:    epoch " << outputs.train_report.stop_epoch << " ("
              << outputs.train_report.stop_reason << "), best validation loss "
              << outputs.train_report.best_val_loss << " at epoch "
              << outputs.train_report.best_epoch << '\n';
    return 0;
}

struct EvaluateCli {
    std::string config;
    std::string checkpoint;
    std::string data;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> missing_rate;
};

int do_evaluate(const EvaluateCli& cli) {
    qf::EvaluateArgs args;
    if (!cli.config.empty()) {
        const auto cfg = qf::RunConfig::load(cli.config);
        args.data = cfg.data;
        args.seed = cfg.seed;
        args.missing_rate = cfg.missing_rate;
        args.split = cfg.split;
        args.out_dir = cfg.out_dir;
        args.checkpoint = std::filesystem::path(cfg.out_dir) / "checkpoint.json";
    }
    if (!cli.checkpoint.empty()) args.checkpoint = cli.checkpoint;
    if (!cli.data.empty()) args.data = cli.data;
    if (!cli.out_dir.empty()) args.out_dir = cli.out_dir;
    if (cli.seed) args.seed = *cli.seed;
    if (cli.missing_rate) args.missing_rate = *cli.missing_rate;
    if (args.checkpoint.empty() || args.data.empty())
        throw std::invalid_argument("evaluate: --checkpoint and --data (or --config) are required");

    const auto outputs = qf::run_evaluate(args);
    std::cout << "report:    " << outputs.report_json.string() << '\n'
              << "forecasts: " << outputs.forecasts_csv.string() << '\n'
              << "reliability " << outputs.report.reliability_pct << "%, width "
              << outputs.report.sharpness << ", skill " << outputs.report.skill << " over "
              << outputs.report.n_samples << " targets\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probabilistic forecasting with integrated gap handling"};
    app.require_subcommand(1);

    qf::SimulateArgs sim;
    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "write a synthetic series CSV");
    simulate->add_option("--out", sim_out, "output CSV path")->required();
    simulate->add_option("--length", sim.length, "number of samples")->required();
    simulate->add_option("--seed", sim.seed, "generator seed");
    simulate->add_option("--capacity", sim.capacity, "upper clamp of the series");
    simulate->add_option("--resolution", sim.resolution_sec, "seconds between samples");

    TrainCli train_cli;
    auto* train = app.add_subcommand("train", "train a forecaster on a series CSV");
    train->add_option("--config", train_cli.config, "run config JSON (flags override it)");
    train->add_option("--data", train_cli.data, "input CSV");
    train->add_option("--out", train_cli.out_dir, "output directory");
    train->add_option("--method", train_cli.method, "pipeline")
        ->check(CLI::IsMember({"endtoend", "li", "knn"}));
    train->add_option("--seed", train_cli.seed, "master seed");
    train->add_option("--missing-rate", train_cli.missing_rate, "simulated gap fraction");

    EvaluateCli eval_cli;
    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test segment");
    evaluate->add_option("--config", eval_cli.config, "run config JSON (flags override it)");
    evaluate->add_option("--checkpoint", eval_cli.checkpoint, "checkpoint file");
    evaluate->add_option("--data", eval_cli.data, "input CSV");
    evaluate->add_option("--out", eval_cli.out_dir, "output directory");
    evaluate->add_option("--seed", eval_cli.seed, "master seed (must match training)");
    evaluate->add_option("--missing-rate", eval_cli.missing_rate, "simulated gap fraction");

    std::vector<std::string> report_paths;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "tabulate two or more evaluation reports");
    compare->add_option("reports", report_paths, "evaluation_report.json files")
        ->expected(-2);
    compare->add_option("--out", compare_out, "directory for comparison.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simulate->parsed()) {
            sim.out = sim_out;
            qf::run_simulate(sim);
            std::cout << "wrote " << sim.out.string() << '\n';
            return 0;
        }
        if (train->parsed()) return do_train(train_cli);
        if (evaluate->parsed()) return do_evaluate(eval_cli);
        if (compare->parsed()) {
            std::vector<std::filesystem::path> paths(report_paths.begin(), report_paths.end());
            const auto result = qf::run_compare(paths);
            std::cout << result.text;
            if (!compare_out.empty()) {
                std::filesystem::create_directories(compare_out);
                const auto csv_path = std::filesystem::path(compare_out) / "comparison.csv";
                std::ofstream out(csv_path, std::ios::binary);
                out << result.csv;
                if (!out) throw std::runtime_error("write failed for " + csv_path.string());
                std::cout << "wrote " << csv_path.string() << '\n';
            }
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
