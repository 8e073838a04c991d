// msmixer: train single forecasters, run the benchmark/ablation/sensitivity grids, and build report tables.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msmixer/experiment.hpp"
#include "msmixer/report.hpp"

namespace fs = std::filesystem;
using namespace msmixer;

namespace {

constexpr int kExitRunFailed = 1;
constexpr int kExitUsage = 2;

struct Options {
    std::string dataset = "ETTh1";
    std::string data_dir;
    std::string model = "msmixer";
    std::size_t horizon = 96;
    std::size_t lookback = 336;
    std::string scales = "1,4,16";
    std::size_t hidden = 64;
    std::size_t kernel = 25;
    double dropout = 0.1;
    std::uint64_t seed = 42;
    long long train_cap = -1;
    bool no_shortcut = false;
    bool no_revin = false;
    bool no_cross_border = false;
    std::string out = "runs";
    std::size_t workers = 1;
    std::size_t epochs = 15;
    std::size_t patience = 4;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::string datasets = "ETTh1,ETTh2,ETTm1,ETTm2";
    std::string horizons = "96,192,336,720";
    std::string models = "msmixer,dlinear,nlinear";
    std::string report_dir;
    bool quiet = false;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    if (out.empty()) throw ConfigError("empty list: '" + s + "'");
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& flag) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) {
        try {
            std::size_t pos = 0;
            const auto v = std::stoull(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError(flag + ": not a positive integer: '" + item + "'");
        }
    }
    return out;
}

GridOptions grid_options(const Options& o) {
    GridOptions g;
    g.data_dir = o.data_dir;
    ModelConfig& m = g.base;
    m.kind = parse_model_kind(o.model);
    m.lookback = o.lookback;
    m.horizon = o.horizon;
    m.hidden = o.hidden;
    m.kernel = o.kernel;
    m.dropout = o.dropout;
    m.scales = parse_sizes(o.scales, "--scales");
    m.use_shortcut = !o.no_shortcut;
    m.use_revin = !o.no_revin;
    TrainConfig& t = g.train;
    t.lr = o.lr;
    t.weight_decay = o.weight_decay;
    t.batch_size = o.batch_size;
    t.max_epochs = o.epochs;
    t.patience = o.patience;
    t.seed = o.seed;
    if (o.train_cap >= 0) g.train_cap_override = static_cast<std::size_t>(o.train_cap);
    g.cross_border = !o.no_cross_border;
    m.validate();
    t.validate();
    return g;
}

/// A dataset argument is either a benchmark name looked up in --data-dir or a path to a CSV.
RunSpec single_spec(const Options& o) {
    const GridOptions g = grid_options(o);
    const fs::path p(o.dataset);
    const bool is_path = p.has_extension() || p.has_parent_path();
    const std::string name = is_path ? p.stem().string() : o.dataset;
    RunSpec s = make_spec(g, "train", name, g.base);
    if (is_path) s.data_path = p.string();
    return s;
}

LogFn logger(const Options& o) {
    if (o.quiet) return {};
    return [](const std::string& line) { std::cerr << line << "\n"; };
}

int finish_grid(const std::vector<RunReport>& reports, const Options& o) {
    std::size_t failed = 0;
    for (const auto& r : reports) failed += r.ok ? 0 : 1;
    const auto summary = generate_report(o.out);
    std::cout << reports.size() - failed << " runs succeeded, " << failed << " failed\n";
    std::cout << "tables written to " << o.out << " (" << summary.succeeded << " results, " << summary.failed
              << " failures across all stored runs)\n";
    return failed == 0 ? 0 : kExitRunFailed;
}

int cmd_train(const Options& o) {
    const RunSpec spec = single_spec(o);
    const auto report = execute_run(spec, o.out, logger(o));
    const fs::path dir = fs::path(o.out) / spec.dir_name();
    if (!report.ok) {
        std::cerr << "error: " << report.error << "\n";
        return kExitRunFailed;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: test mse %.4f mae %.4f | params %zu | epochs %zu (best %zu)",
                  spec.dir_name().c_str(), report.test.mse, report.test.mae, report.diagnostics.param_total,
                  report.diagnostics.epochs_run, report.best_epoch);
    std::cout << buf << "\n";
    if (const auto& w = report.diagnostics.gate_weights) {
        std::cout << "gate weights:";
        for (std::size_t i = 0; i < w->size(); ++i)
            std::cout << " s=" << report.diagnostics.scales[i] << ":" << fixed((*w)[i], 3);
        std::cout << "\n";
    }
    if (report.diagnostics.fusion_alpha) std::cout << "fusion alpha: " << fixed(report.diagnostics.fusion_alpha, 3) << "\n";
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "artifacts in " << dir.string() << "\n";
    return 0;
}

int cmd_benchmark(const Options& o) {
    const GridOptions g = grid_options(o);
    std::vector<ModelKind> kinds;
    for (const auto& m : split_list(o.models)) kinds.push_back(parse_model_kind(m));
    const auto specs = benchmark_specs(g, split_list(o.datasets), parse_sizes(o.horizons, "--horizons"), kinds);
    return finish_grid(run_grid(specs, o.workers, o.out, logger(o)), o);
}

int cmd_ablate(const Options& o) {
    const auto specs = ablation_specs(grid_options(o), o.dataset, o.horizon);
    return finish_grid(run_grid(specs, o.workers, o.out, logger(o)), o);
}

int cmd_sensitivity(const Options& o) {
    const auto specs = sensitivity_specs(grid_options(o), o.dataset, o.horizon);
    return finish_grid(run_grid(specs, o.workers, o.out, logger(o)), o);
}

int cmd_report(const Options& o) {
    const std::string dir = o.report_dir.empty() ? o.out : o.report_dir;
    const auto summary = generate_report(dir);
    std::cout << summary.succeeded << " results, " << summary.failed << " failures\n";
    for (const auto& f : summary.files) std::cout << "wrote " << f.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    if (const char* env = std::getenv("MSMIXER_DATA_DIR")) o.data_dir = env;
    if (o.data_dir.empty()) o.data_dir = "data";

    CLI::App app{"Multi-scale MLP forecaster with linear baselines and a benchmark harness"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value file; keys are flag names without dashes");

    app.add_option("--dataset", o.dataset, "Benchmark name (resolved in --data-dir) or path to a CSV")
        ->capture_default_str();
    app.add_option("--data-dir", o.data_dir, "Directory holding <dataset>.csv (env MSMIXER_DATA_DIR)")
        ->capture_default_str();
    app.add_option("--model", o.model, "msmixer | dlinear | nlinear")->capture_default_str();
    app.add_option("--horizon", o.horizon, "Forecast horizon H")->capture_default_str();
    app.add_option("--lookback", o.lookback, "Look-back length T")->capture_default_str();
    app.add_option("--scales", o.scales, "Comma-separated pooling factors")->capture_default_str();
    app.add_option("--hidden", o.hidden, "Branch hidden width d")->capture_default_str();
    app.add_option("--kernel", o.kernel, "Moving-average kernel (odd)")->capture_default_str();
    app.add_option("--dropout", o.dropout, "Branch dropout rate")->capture_default_str();
    app.add_option("--seed", o.seed, "Seed for initialization, shuffling and dropout")->capture_default_str();
    app.add_option("--train-cap", o.train_cap, "Cap on train steps; 0 = none, default 17420 for ETTm*")
        ->default_str("dataset default");
    app.add_flag("--no-shortcut", o.no_shortcut, "Fix fusion to the multi-scale pathway");
    app.add_flag("--no-revin", o.no_revin, "Replace RevIN with identity");
    app.add_flag("--no-cross-border", o.no_cross_border, "Val/test windows start inside their split");
    app.add_option("--out", o.out, "Output root; one directory per run")->capture_default_str();
    app.add_option("--workers", o.workers, "Concurrent runs in a grid")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--epochs", o.epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--patience", o.patience, "Early-stopping patience")->capture_default_str();
    app.add_option("--batch-size", o.batch_size, "Windows per batch")->capture_default_str();
    app.add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
    app.add_option("--weight-decay", o.weight_decay, "Decoupled weight decay")->capture_default_str();
    app.add_option("--datasets", o.datasets, "Benchmark datasets")->capture_default_str();
    app.add_option("--horizons", o.horizons, "Benchmark horizons")->capture_default_str();
    app.add_option("--models", o.models, "Benchmark models")->capture_default_str();
    app.add_flag("--quiet", o.quiet, "No per-epoch progress on stderr");

    auto* train = app.add_subcommand("train", "Train and evaluate one model");
    auto* bench = app.add_subcommand("benchmark", "Datasets x horizons x models grid, then report");
    auto* ablate = app.add_subcommand("ablate", "Component ablation variants on one dataset/horizon, then report");
    auto* sens = app.add_subcommand("sensitivity", "Look-back and scale-set sweeps, then report");
    auto* report = app.add_subcommand("report", "Rebuild CSV and markdown tables from stored runs");
    report->add_option("dir", o.report_dir, "Run directory (defaults to --out)");
    for (auto* sub : {train, bench, ablate, sens, report}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*train) return cmd_train(o);
        if (*bench) return cmd_benchmark(o);
        if (*ablate) return cmd_ablate(o);
        if (*sens) return cmd_sensitivity(o);
        return cmd_report(o);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailed;
    }
}
