#pragma once

// Single runs and run grids: data -> train -> evaluate -> diagnostics, with one
// output directory per run holding report.json, checkpoint.txt and trace.jsonl.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "msmixer/checkpoint.hpp"
#include "msmixer/data.hpp"
#include "msmixer/models.hpp"
#include "msmixer/trainer.hpp"

namespace msmixer {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::size_t kEttmTrainCap = 17420;

inline bool is_fifteen_minute(const std::string& dataset) { return dataset.rfind("ETTm", 0) == 0; }

/// ETTm series are capped to their first 17,420 train steps unless overridden.
inline std::optional<std::size_t> default_train_cap(const std::string& dataset) {
    if (is_fifteen_minute(dataset)) return kEttmTrainCap;
    return std::nullopt;
}

/// Short, filesystem-safe name: the model kind plus every departure from the default MSMixer shape.
inline std::string model_label(const ModelConfig& c) {
    std::string s = to_string(c.kind);
    if (c.kind != ModelKind::MSMixer) return s;
    const ModelConfig d;
    if (c.lookback != d.lookback) s += "-T" + std::to_string(c.lookback);
    if (c.scales != d.scales) {
        s += "-s";
        for (std::size_t i = 0; i < c.scales.size(); ++i) s += (i ? "-" : "") + std::to_string(c.scales[i]);
    }
    if (c.hidden != d.hidden) s += "-d" + std::to_string(c.hidden);
    if (c.kernel != d.kernel) s += "-k" + std::to_string(c.kernel);
    if (!c.use_shortcut) s += "-no-shortcut";
    if (!c.use_revin) s += "-no-revin";
    return s;
}

struct RunSpec {
    std::string suite = "train";
    std::string dataset;
    std::string data_path;
    ModelConfig model;
    TrainConfig train;
    std::optional<std::size_t> train_cap;
    bool cross_border = true;

    std::string label() const { return model_label(model); }
    std::string dir_name() const {
        return dataset + "_" + label() + "_" + std::to_string(model.horizon) + "_" + std::to_string(train.seed);
    }
};

struct RunReport {
    RunSpec spec;
    bool ok = false;
    std::string error;
    Metrics test;
    Metrics val;
    Diagnostics diagnostics;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    bool stopped_early = false;
    double wall_seconds = 0.0;
    std::size_t train_windows = 0;
    std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline void to_json(json& j, const ModelConfig& c) {
    j = json{{"kind", to_string(c.kind)},  {"lookback", c.lookback}, {"horizon", c.horizon},
             {"hidden", c.hidden},         {"n_vars", c.n_vars},     {"kernel", c.kernel},
             {"scales", c.scales},         {"dropout", c.dropout},   {"use_shortcut", c.use_shortcut},
             {"use_revin", c.use_revin},   {"revin_eps", c.revin_eps}, {"init_std", c.init_std}};
}

inline void from_json(const json& j, ModelConfig& c) {
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    j.at("lookback").get_to(c.lookback);
    j.at("horizon").get_to(c.horizon);
    j.at("hidden").get_to(c.hidden);
    j.at("n_vars").get_to(c.n_vars);
    j.at("kernel").get_to(c.kernel);
    j.at("scales").get_to(c.scales);
    j.at("dropout").get_to(c.dropout);
    j.at("use_shortcut").get_to(c.use_shortcut);
    j.at("use_revin").get_to(c.use_revin);
    j.at("revin_eps").get_to(c.revin_eps);
    j.at("init_std").get_to(c.init_std);
}

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"lr", c.lr},         {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
             {"max_epochs", c.max_epochs}, {"patience", c.patience}, {"seed", c.seed},
             {"clip", c.clip},     {"lr_factor", c.lr_factor},       {"lr_patience", c.lr_patience}};
}

inline void from_json(const json& j, TrainConfig& c) {
    j.at("lr").get_to(c.lr);
    j.at("weight_decay").get_to(c.weight_decay);
    j.at("batch_size").get_to(c.batch_size);
    j.at("max_epochs").get_to(c.max_epochs);
    j.at("patience").get_to(c.patience);
    j.at("seed").get_to(c.seed);
    j.at("clip").get_to(c.clip);
    j.at("lr_factor").get_to(c.lr_factor);
    j.at("lr_patience").get_to(c.lr_patience);
}

inline void to_json(json& j, const RunSpec& s) {
    j = json{{"suite", s.suite},   {"dataset", s.dataset}, {"data_path", s.data_path},
             {"model", s.model},   {"train", s.train},     {"cross_border", s.cross_border},
             {"train_cap", s.train_cap ? json(*s.train_cap) : json(nullptr)}};
}

inline void from_json(const json& j, RunSpec& s) {
    j.at("suite").get_to(s.suite);
    j.at("dataset").get_to(s.dataset);
    j.at("data_path").get_to(s.data_path);
    j.at("model").get_to(s.model);
    j.at("train").get_to(s.train);
    j.at("cross_border").get_to(s.cross_border);
    const auto& cap = j.at("train_cap");
    s.train_cap = cap.is_null() ? std::nullopt : std::optional<std::size_t>(cap.get<std::size_t>());
}

inline void to_json(json& j, const Metrics& m) { j = json{{"mse", m.mse}, {"mae", m.mae}, {"n_cells", m.n_cells}}; }

inline void from_json(const json& j, Metrics& m) {
    j.at("mse").get_to(m.mse);
    j.at("mae").get_to(m.mae);
    j.at("n_cells").get_to(m.n_cells);
}

namespace detail {
template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}
template <class T>
std::optional<T> optional_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}
}  // namespace detail

inline void to_json(json& j, const Diagnostics& d) {
    j = json{{"gate_weights", detail::optional_json(d.gate_weights)},
             {"scales", d.scales},
             {"fusion_alpha", detail::optional_json(d.fusion_alpha)},
             {"trend_blend", detail::optional_json(d.trend_blend)},
             {"param_total", d.param_total},
             {"epochs_run", d.epochs_run}};
}

inline void from_json(const json& j, Diagnostics& d) {
    d.gate_weights = detail::optional_from<std::vector<double>>(j, "gate_weights");
    j.at("scales").get_to(d.scales);
    d.fusion_alpha = detail::optional_from<double>(j, "fusion_alpha");
    d.trend_blend = detail::optional_from<double>(j, "trend_blend");
    j.at("param_total").get_to(d.param_total);
    j.at("epochs_run").get_to(d.epochs_run);
}

inline void to_json(json& j, const RunReport& r) {
    j = json{{"spec", r.spec},
             {"ok", r.ok},
             {"error", r.error},
             {"test", r.test},
             {"val", r.val},
             {"diagnostics", r.diagnostics},
             {"best_epoch", r.best_epoch},
             {"best_val", r.best_val},
             {"stopped_early", r.stopped_early},
             {"wall_seconds", r.wall_seconds},
             {"train_windows", r.train_windows},
             {"warnings", r.warnings}};
}

inline void from_json(const json& j, RunReport& r) {
    j.at("spec").get_to(r.spec);
    j.at("ok").get_to(r.ok);
    j.at("error").get_to(r.error);
    j.at("test").get_to(r.test);
    j.at("val").get_to(r.val);
    j.at("diagnostics").get_to(r.diagnostics);
    j.at("best_epoch").get_to(r.best_epoch);
    j.at("best_val").get_to(r.best_val);
    j.at("stopped_early").get_to(r.stopped_early);
    j.at("wall_seconds").get_to(r.wall_seconds);
    j.at("train_windows").get_to(r.train_windows);
    j.at("warnings").get_to(r.warnings);
}

inline void write_report(const fs::path& path, const RunReport& r) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write report: " + path.string());
    out << json(r).dump(2) << "\n";
}

inline RunReport read_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open report: " + path.string());
    try {
        return json::parse(in).get<RunReport>();
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ": malformed report (" + e.what() + ")");
    }
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

using LogFn = std::function<void(const std::string&)>;

/// Runs one spec end to end. Failures are captured in the report, never thrown.
/// With a non-empty `out_root`, artifacts go to out_root / spec.dir_name().
inline RunReport execute_run(const RunSpec& spec, const fs::path& out_root = {}, const LogFn& log = {}) {
    RunReport report;
    report.spec = spec;
    fs::path dir;
    try {
        if (!out_root.empty()) {
            dir = out_root / spec.dir_name();
            fs::create_directories(dir);
        }
        const RawSeries raw = load_csv(spec.data_path);
        RunSpec& s = report.spec;
        s.model.n_vars = raw.n_vars();
        s.model.validate();
        s.train.validate();
        const auto split = make_splits(raw.length(), s.model.lookback, s.model.horizon, s.train_cap, s.cross_border);
        const WindowedDataset ds = fit_apply_zscore(raw, split);
        report.warnings = ds.warnings;
        report.train_windows = window_starts(ds.split, Split::Train).size();

        Rng rng(s.train.seed);
        auto model = make_model<float>(s.model, rng);
        std::ofstream trace;
        if (!dir.empty()) trace.open(dir / "trace.jsonl");
        const auto result = train(*model, ds, s.train, rng, [&](const TraceRecord& rec) {
            if (trace) trace << to_json_line(rec) << "\n" << std::flush;
            if (log) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s epoch %zu train %.4f val %.4f lr %.2g (%.1f s)",
                              s.dir_name().c_str(), rec.epoch, rec.train_loss, rec.val_loss, rec.lr, rec.wall_seconds);
                log(buf);
            }
        });
        report.best_epoch = result.best_epoch;
        report.best_val = result.best_val;
        report.stopped_early = result.stopped_early;
        report.wall_seconds = result.wall_seconds;
        report.val = evaluate(*model, ds, Split::Val);
        report.test = evaluate(*model, ds, Split::Test);
        report.diagnostics = extract_diagnostics(*model, result.epochs_run);
        if (!dir.empty()) save_checkpoint((dir / "checkpoint.txt").string(), *model);
        report.ok = true;
    } catch (const std::exception& e) {
        report.ok = false;
        report.error = e.what();
    }
    if (!dir.empty()) {
        try {
            write_report(dir / "report.json", report);
        } catch (const std::exception& e) {
            if (report.ok) {
                report.ok = false;
                report.error = e.what();
            }
        }
    }
    return report;
}

/// Runs specs on `workers` threads; results keep the order of `specs`.
inline std::vector<RunReport> run_grid(const std::vector<RunSpec>& specs, std::size_t workers,
                                       const fs::path& out_root, const LogFn& log = {}) {
    std::vector<RunReport> reports(specs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex log_mutex;
    const LogFn safe_log = [&](const std::string& line) {
        if (!log) return;
        std::lock_guard lock(log_mutex);
        log(line);
    };
    auto worker = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            reports[i] = execute_run(specs[i], out_root, workers == 1 ? safe_log : LogFn{});
            const auto& r = reports[i];
            char buf[256];
            if (r.ok)
                std::snprintf(buf, sizeof buf, "[%zu/%zu] %s ok  test mse %.4f mae %.4f  epochs %zu  %.1f s", ++done,
                              specs.size(), specs[i].dir_name().c_str(), r.test.mse, r.test.mae,
                              r.diagnostics.epochs_run, r.wall_seconds);
            else
                std::snprintf(buf, sizeof buf, "[%zu/%zu] %s FAILED: %s", ++done, specs.size(),
                              specs[i].dir_name().c_str(), r.error.c_str());
            safe_log(buf);
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(workers, specs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return reports;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Shared settings for every run of a grid; `base.kind` and horizon are overwritten per run.
struct GridOptions {
    fs::path data_dir = "data";
    ModelConfig base;
    TrainConfig train;
    std::optional<std::size_t> train_cap_override;  // 0 disables the cap
    bool cross_border = true;
};

inline const std::vector<std::string>& ett_datasets() {
    static const std::vector<std::string> d{"ETTh1", "ETTh2", "ETTm1", "ETTm2"};
    return d;
}

inline const std::vector<std::size_t>& ett_horizons() {
    static const std::vector<std::size_t> h{96, 192, 336, 720};
    return h;
}

inline RunSpec make_spec(const GridOptions& o, const std::string& suite, const std::string& dataset,
                         const ModelConfig& model) {
    RunSpec s;
    s.suite = suite;
    s.dataset = dataset;
    s.data_path = (o.data_dir / (dataset + ".csv")).string();
    s.model = model;
    s.train = o.train;
    s.cross_border = o.cross_border;
    if (o.train_cap_override)
        s.train_cap = *o.train_cap_override ? o.train_cap_override : std::nullopt;
    else
        s.train_cap = default_train_cap(dataset);
    return s;
}

inline std::vector<RunSpec> benchmark_specs(const GridOptions& o, const std::vector<std::string>& datasets,
                                            const std::vector<std::size_t>& horizons,
                                            const std::vector<ModelKind>& kinds) {
    std::vector<RunSpec> out;
    for (const auto& d : datasets)
        for (auto h : horizons)
            for (auto k : kinds) {
                ModelConfig m = o.base;
                m.kind = k;
                m.horizon = h;
                out.push_back(make_spec(o, "benchmark", d, m));
            }
    return out;
}

/// Full model, no shortcut, scales {1}, scales {1,4}, shortcut alone (the DLinear baseline), no RevIN.
inline std::vector<RunSpec> ablation_specs(const GridOptions& o, const std::string& dataset, std::size_t horizon) {
    ModelConfig full = o.base;
    full.kind = ModelKind::MSMixer;
    full.horizon = horizon;
    std::vector<ModelConfig> variants(6, full);
    variants[1].use_shortcut = false;
    variants[2].scales = {1};
    variants[3].scales = {1, 4};
    variants[4].kind = ModelKind::DLinear;
    variants[5].use_revin = false;
    std::vector<RunSpec> out;
    for (const auto& v : variants) out.push_back(make_spec(o, "ablate", dataset, v));
    return out;
}

/// Look-back lengths {96,192,336,512} and scale sets {1},{1,4},{1,4,16},{1,2,4,16}; the shared default run appears once.
inline std::vector<RunSpec> sensitivity_specs(const GridOptions& o, const std::string& dataset, std::size_t horizon) {
    ModelConfig base = o.base;
    base.kind = ModelKind::MSMixer;
    base.horizon = horizon;
    std::vector<RunSpec> out;
    std::set<std::string> seen;
    auto add = [&](const ModelConfig& m) {
        auto s = make_spec(o, "sensitivity", dataset, m);
        if (seen.insert(s.dir_name()).second) out.push_back(std::move(s));
    };
    for (std::size_t T : {96, 192, 336, 512}) {
        ModelConfig m = base;
        m.lookback = T;
        add(m);
    }
    for (const auto& scales : std::vector<std::vector<std::size_t>>{{1}, {1, 4}, {1, 4, 16}, {1, 2, 4, 16}}) {
        ModelConfig m = base;
        m.scales = scales;
        add(m);
    }
    return out;
}

}  // namespace msmixer
