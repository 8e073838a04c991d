#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "msmixer/report.hpp"

using namespace msmixer;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ResultRow row(const std::string& ds, const std::string& model, std::size_t h, double mse, double mae) {
    ResultRow r;
    r.dataset = ds;
    r.model = model;
    r.horizon = h;
    r.mse = mse;
    r.mae = mae;
    r.params = 1000;
    r.epochs = 3;
    return r;
}

std::size_t params_of(const RunSpec& s) {
    Rng rng(0);
    return make_model<float>(s.model, rng)->param_count();
}

/// Small but complete run: 1,200 hourly steps, T=48, one epoch.
RunSpec quick_spec(const std::string& data_path, ModelKind kind = ModelKind::MSMixer) {
    RunSpec s;
    s.dataset = "ETTh1";
    s.data_path = data_path;
    s.model.kind = kind;
    s.model.lookback = 48;
    s.model.horizon = 12;
    s.model.hidden = 8;
    s.model.kernel = 5;
    s.train.max_epochs = 1;
    return s;
}

}  // namespace

TEST(ModelLabel, DefaultsAndVariants) {
    ModelConfig c;
    EXPECT_EQ(model_label(c), "msmixer");
    c.scales = {1, 4};
    c.use_revin = false;
    EXPECT_EQ(model_label(c), "msmixer-s1-4-no-revin");
    c = ModelConfig{};
    c.lookback = 512;
    c.use_shortcut = false;
    EXPECT_EQ(model_label(c), "msmixer-T512-no-shortcut");
    c.kind = ModelKind::DLinear;
    EXPECT_EQ(model_label(c), "dlinear");
}

TEST(RunSpecTest, DirectoryNameLayout) {
    RunSpec s;
    s.dataset = "ETTm1";
    s.model.horizon = 720;
    s.train.seed = 7;
    EXPECT_EQ(s.dir_name(), "ETTm1_msmixer_720_7");
}

TEST(GridSpecs, BenchmarkIsFullCrossProduct) {
    GridOptions g;
    const auto specs = benchmark_specs(g, ett_datasets(), ett_horizons(),
                                       {ModelKind::MSMixer, ModelKind::DLinear, ModelKind::NLinear});
    ASSERT_EQ(specs.size(), 48u);
    std::set<std::string> names;
    for (const auto& s : specs) {
        names.insert(s.dir_name());
        EXPECT_EQ(s.train_cap, is_fifteen_minute(s.dataset) ? std::optional<std::size_t>(17420) : std::nullopt);
        EXPECT_EQ(s.data_path, (fs::path("data") / (s.dataset + ".csv")).string());
    }
    EXPECT_EQ(names.size(), 48u);
}

TEST(GridSpecs, TrainCapOverride) {
    GridOptions g;
    g.train_cap_override = 0;
    EXPECT_FALSE(make_spec(g, "x", "ETTm1", g.base).train_cap);
    g.train_cap_override = 5000;
    EXPECT_EQ(make_spec(g, "x", "ETTh1", g.base).train_cap, 5000u);
}

TEST(GridSpecs, AblationVariantsAndParameterCounts) {
    const auto specs = ablation_specs(GridOptions{}, "ETTh1", 96);
    ASSERT_EQ(specs.size(), 6u);
    const std::vector<std::string> labels{"msmixer",     "msmixer-no-shortcut", "msmixer-s1",
                                          "msmixer-s1-4", "dlinear",            "msmixer-no-revin"};
    const std::vector<std::size_t> params{111859, 111858, 92529, 104210, 64704, 111845};
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(specs[i].label(), labels[i]);
        EXPECT_EQ(params_of(specs[i]), params[i]) << labels[i];
    }
}

TEST(GridSpecs, SensitivitySweepsShareTheDefaultRun) {
    const auto specs = sensitivity_specs(GridOptions{}, "ETTh1", 96);
    std::vector<std::string> labels;
    std::vector<std::size_t> params;
    for (const auto& s : specs) {
        labels.push_back(s.label());
        params.push_back(params_of(s));
    }
    EXPECT_EQ(labels, (std::vector<std::string>{"msmixer-T96", "msmixer-T192", "msmixer", "msmixer-T512",
                                                "msmixer-s1", "msmixer-s1-4", "msmixer-s1-2-4-16"}));
    EXPECT_EQ(params, (std::vector<std::size_t>{45619, 72115, 111859, 160435, 92529, 104210, 128916}));
}

TEST(ResultsCsv, RoundTripIsExact) {
    std::vector<ResultRow> rows{row("ETTh1", "msmixer", 96, 0.41712345678901234, 1.0 / 3.0),
                                row("my,data", "nlinear", 720, 1e-300, 12345.678)};
    rows[0].w1 = 0.1 + 0.2;
    rows[0].w4 = 0.25;
    rows[0].w16 = 0.45;
    rows[0].alpha = 0.5;
    rows[0].trend_blend = 0.49999999999999994;
    rows[1].params.reset();
    std::stringstream ss;
    write_results_csv(ss, rows);
    EXPECT_EQ(ss.str().substr(0, kResultsHeader.size()), kResultsHeader);
    EXPECT_EQ(parse_results_csv(ss), rows);
}

TEST(ResultsCsv, MissingCellsUseDash) {
    std::stringstream ss;
    write_results_csv(ss, {row("ETTh1", "nlinear", 96, 0.5, 0.5)});
    const std::string text = ss.str();
    EXPECT_NE(text.find("nlinear,96,0.5,0.5,1000,3," + kMissingCell + "," + kMissingCell), std::string::npos) << text;
}

TEST(ResultsCsv, MalformedInputNamesLine) {
    std::stringstream bad_header("dataset,model\n");
    EXPECT_THROW(parse_results_csv(bad_header), LoadError);
    std::stringstream bad_value(kResultsHeader + "\nETTh1,msmixer,96,zero,0,1,1,,,,,\n");
    try {
        parse_results_csv(bad_value);
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    std::stringstream short_row(kResultsHeader + "\nETTh1,msmixer,96\n");
    EXPECT_THROW(parse_results_csv(short_row), LoadError);
}

TEST(Markdown, ForecastTableBoldsBestAndAverages) {
    const std::vector<ResultRow> rows{row("ETTh1", "msmixer", 96, 0.40, 0.44), row("ETTh1", "dlinear", 96, 0.42, 0.43),
                                      row("ETTh1", "nlinear", 96, 0.43, 0.42), row("ETTh2", "msmixer", 96, 0.30, 0.35),
                                      row("ETTh2", "dlinear", 96, 0.29, 0.36)};
    const auto md = render_forecasting_table(rows);
    EXPECT_NE(md.find("| ETTh1 | 96 | **0.400** | 0.440 | 0.420 | 0.430 | 0.430 | 0.420 |"), std::string::npos) << md;
    EXPECT_NE(md.find("| ETTh2 | 96 | 0.300 | 0.350 | **0.290** | 0.360 | " + kMissingCell + " | " + kMissingCell + " |"),
              std::string::npos)
        << md;
    EXPECT_NE(md.find("| Average |  | 0.350 | 0.395 | 0.355 | 0.395 | 0.430 | 0.420 |"), std::string::npos) << md;
}

TEST(Markdown, MissingDiagnosticsRenderAsDash) {
    auto r = row("ETTm2", "msmixer", 96, 0.2, 0.3);
    r.w1 = 0.4;
    const auto md = render_gate_table({r});
    EXPECT_NE(md.find("| ETTm2 | 0.40 | " + kMissingCell + " | " + kMissingCell + " |"), std::string::npos) << md;
    EXPECT_NE(render_fusion_table({r}).find("| ETTm2 | " + kMissingCell + " |"), std::string::npos);
}

TEST(Markdown, DatasetOrderFollowsBenchmark) {
    const auto md = render_fusion_table(
        {row("ETTm2", "msmixer", 96, 1, 1), row("ETTh1", "msmixer", 96, 1, 1), row("Other", "msmixer", 96, 1, 1)});
    EXPECT_LT(md.find("ETTh1"), md.find("ETTm2"));
    EXPECT_LT(md.find("ETTm2"), md.find("Other"));
}

TEST(Markdown, EmptyTablesSaySo) {
    EXPECT_NE(render_ablation_table({}).find("No matching runs"), std::string::npos);
    EXPECT_NE(render_sensitivity_tables({row("ETTh1", "msmixer", 96, 1, 1)}).find("No matching runs"),
              std::string::npos);
}

TEST(ReportJson, RoundTripPreservesEverything) {
    RunReport r;
    r.spec = quick_spec("x.csv");
    r.spec.train_cap = 17420;
    r.ok = true;
    r.test = {0.125, 0.25, 42};
    r.val = {1.0 / 3.0, 0.5, 7};
    r.diagnostics.gate_weights = std::vector<double>{0.3, 0.7};
    r.diagnostics.scales = {1, 4};
    r.diagnostics.fusion_alpha = 0.55;
    r.diagnostics.param_total = 999;
    r.diagnostics.epochs_run = 5;
    r.best_epoch = 3;
    r.best_val = 0.3;
    r.warnings = {"w"};
    const auto back = json(r).get<RunReport>();
    EXPECT_EQ(json(back).dump(), json(r).dump());
    EXPECT_EQ(back.spec.train_cap, 17420u);
    EXPECT_FALSE(back.diagnostics.trend_blend);
    EXPECT_EQ(back.val.mse, 1.0 / 3.0);
}

TEST(ExecuteRun, MissingFileIsRecordedFailure) {
    fixtures::ScratchDir dir("exec");
    const auto spec = quick_spec(dir.file("absent.csv"));
    const auto r = execute_run(spec, dir.path());
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.error.find("absent.csv"), std::string::npos) << r.error;
    const auto stored = read_report(dir.path() / spec.dir_name() / "report.json");
    EXPECT_FALSE(stored.ok);
    EXPECT_EQ(stored.error, r.error);
}

TEST(ExecuteRun, WritesArtifactsAndReloadsCheckpoint) {
    fixtures::ScratchDir dir("exec");
    fixtures::write_ett_csv(dir.file("ETTh1.csv"), 1200);
    const auto spec = quick_spec(dir.file("ETTh1.csv"));
    const auto r = execute_run(spec, dir.path() / "runs");
    ASSERT_TRUE(r.ok) << r.error;
    const auto run_dir = dir.path() / "runs" / spec.dir_name();
    for (const char* f : {"report.json", "checkpoint.txt", "trace.jsonl"}) EXPECT_TRUE(fs::exists(run_dir / f)) << f;
    EXPECT_EQ(r.spec.model.n_vars, 7u);
    EXPECT_EQ(r.diagnostics.epochs_run, 1u);
    EXPECT_EQ(r.train_windows, 840u - 48 - 12 + 1);
    const auto model = load_checkpoint<float>((run_dir / "checkpoint.txt").string());
    EXPECT_EQ(model->param_count(), r.diagnostics.param_total);
    EXPECT_EQ(read_report(run_dir / "report.json").test.mse, r.test.mse);
}

TEST(RunGrid, WorkerCountDoesNotChangeResults) {
    fixtures::ScratchDir dir("grid");
    fixtures::write_ett_csv(dir.file("ETTh1.csv"), 1200);
    std::vector<RunSpec> specs;
    for (auto k : {ModelKind::MSMixer, ModelKind::DLinear, ModelKind::NLinear})
        specs.push_back(quick_spec(dir.file("ETTh1.csv"), k));
    const auto serial = run_grid(specs, 1, dir.path() / "a");
    const auto parallel = run_grid(specs, 3, dir.path() / "b");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        ASSERT_TRUE(serial[i].ok && parallel[i].ok);
        EXPECT_EQ(serial[i].test.mse, parallel[i].test.mse);
        EXPECT_EQ(serial[i].test.mae, parallel[i].test.mae);
    }
    generate_report(dir.path() / "a");
    generate_report(dir.path() / "b");
    for (const auto& name : report_file_names())
        EXPECT_EQ(slurp(dir.path() / "a" / name), slurp(dir.path() / "b" / name)) << name;
}

TEST(GenerateReport, RerunIsByteIdentical) {
    fixtures::ScratchDir dir("report");
    fixtures::write_ett_csv(dir.file("ETTh1.csv"), 1200);
    auto spec = quick_spec(dir.file("ETTh1.csv"));
    execute_run(spec, dir.path() / "runs");
    spec.data_path = dir.file("gone.csv");
    spec.model.kind = ModelKind::DLinear;
    execute_run(spec, dir.path() / "runs");

    const auto s1 = generate_report(dir.path() / "runs");
    EXPECT_EQ(s1.succeeded, 1u);
    EXPECT_EQ(s1.failed, 1u);
    std::vector<std::string> first;
    for (const auto& name : report_file_names()) first.push_back(slurp(dir.path() / "runs" / name));
    generate_report(dir.path() / "runs");
    for (std::size_t i = 0; i < first.size(); ++i)
        EXPECT_EQ(slurp(dir.path() / "runs" / report_file_names()[i]), first[i]) << report_file_names()[i];

    std::ifstream csv(dir.path() / "runs" / "results.csv");
    const auto rows = parse_results_csv(csv);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].model, "msmixer-T48-d8-k5");
    EXPECT_NE(first[1].find("gone.csv"), std::string::npos);
}

TEST(GenerateReport, EmptyDirectoryIsUsageError) {
    fixtures::ScratchDir dir("report");
    EXPECT_THROW(generate_report(dir.path()), UsageError);
    EXPECT_THROW(generate_report(dir.path() / "missing"), UsageError);
}
