#pragma once

// Aggregation of stored run reports into results.csv, failures.csv and markdown tables.
// Tables are rendered from rows re-read from results.csv, so the CSV is the single source.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "msmixer/experiment.hpp"

namespace msmixer {

/// Placeholder for a value a run did not produce (UTF-8 en dash).
inline const std::string kMissingCell = "\xE2\x80\x93";

inline const std::string kResultsHeader = "dataset,model,horizon,mse,mae,params,epochs,w1,w4,w16,alpha,trend_blend";
inline const std::string kFailuresHeader = "dataset,model,horizon,seed,error";

struct ResultRow {
    std::string dataset;
    std::string model;
    std::size_t horizon = 0;
    std::optional<double> mse, mae;
    std::optional<std::size_t> params, epochs;
    std::optional<double> w1, w4, w16;
    std::optional<double> alpha, trend_blend;

    bool operator==(const ResultRow&) const = default;
};

struct FailureRow {
    std::string dataset;
    std::string model;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    std::string error;
};

inline ResultRow row_from_report(const RunReport& r) {
    ResultRow row;
    row.dataset = r.spec.dataset;
    row.model = r.spec.label();
    row.horizon = r.spec.model.horizon;
    row.mse = r.test.mse;
    row.mae = r.test.mae;
    row.params = r.diagnostics.param_total;
    row.epochs = r.diagnostics.epochs_run;
    const auto& d = r.diagnostics;
    if (d.gate_weights) {
        for (std::size_t i = 0; i < d.scales.size() && i < d.gate_weights->size(); ++i) {
            const double w = (*d.gate_weights)[i];
            if (d.scales[i] == 1) row.w1 = w;
            if (d.scales[i] == 4) row.w4 = w;
            if (d.scales[i] == 16) row.w16 = w;
        }
    }
    row.alpha = d.fusion_alpha;
    row.trend_blend = d.trend_blend;
    return row;
}

/// Known benchmark datasets first in their usual order, anything else alphabetically after.
inline std::pair<std::size_t, std::string> dataset_order(const std::string& name) {
    const auto& known = ett_datasets();
    const auto it = std::find(known.begin(), known.end(), name);
    return {static_cast<std::size_t>(it - known.begin()), name};
}

inline bool row_less(const ResultRow& a, const ResultRow& b) {
    return std::tuple(dataset_order(a.dataset), a.horizon, a.model) <
           std::tuple(dataset_order(b.dataset), b.horizon, b.model);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += (c == '\n' || c == '\r') ? ' ' : c;
    }
    return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

namespace detail {
template <class T>
std::string cell(const std::optional<T>& v) {
    if (!v) return kMissingCell;
    if constexpr (std::is_floating_point_v<T>)
        return format_shortest(*v);
    else
        return std::to_string(*v);
}

template <class T>
std::optional<T> parse_cell(const std::string& s, std::size_t line_no, const char* column) {
    if (s.empty() || s == kMissingCell) return std::nullopt;
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw LoadError("results.csv line " + std::to_string(line_no) + ": bad " + column + " value '" + s + "'");
    return v;
}
}  // namespace detail

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kResultsHeader << "\n";
    for (const auto& r : rows) {
        out << csv_quote(r.dataset) << ',' << csv_quote(r.model) << ',' << r.horizon << ',' << detail::cell(r.mse)
            << ',' << detail::cell(r.mae) << ',' << detail::cell(r.params) << ',' << detail::cell(r.epochs) << ','
            << detail::cell(r.w1) << ',' << detail::cell(r.w4) << ',' << detail::cell(r.w16) << ','
            << detail::cell(r.alpha) << ',' << detail::cell(r.trend_blend) << "\n";
    }
}

inline std::vector<ResultRow> parse_results_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) throw LoadError("results.csv: missing or unexpected header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv_split(line);
        if (f.size() != 12)
            throw LoadError("results.csv line " + std::to_string(line_no) + ": expected 12 fields, got " +
                            std::to_string(f.size()));
        ResultRow r;
        r.dataset = f[0];
        r.model = f[1];
        const auto h = detail::parse_cell<std::size_t>(f[2], line_no, "horizon");
        if (!h) throw LoadError("results.csv line " + std::to_string(line_no) + ": missing horizon");
        r.horizon = *h;
        r.mse = detail::parse_cell<double>(f[3], line_no, "mse");
        r.mae = detail::parse_cell<double>(f[4], line_no, "mae");
        r.params = detail::parse_cell<std::size_t>(f[5], line_no, "params");
        r.epochs = detail::parse_cell<std::size_t>(f[6], line_no, "epochs");
        r.w1 = detail::parse_cell<double>(f[7], line_no, "w1");
        r.w4 = detail::parse_cell<double>(f[8], line_no, "w4");
        r.w16 = detail::parse_cell<double>(f[9], line_no, "w16");
        r.alpha = detail::parse_cell<double>(f[10], line_no, "alpha");
        r.trend_blend = detail::parse_cell<double>(f[11], line_no, "trend_blend");
        rows.push_back(std::move(r));
    }
    return rows;
}

inline void write_failures_csv(std::ostream& out, const std::vector<FailureRow>& rows) {
    out << kFailuresHeader << "\n";
    for (const auto& r : rows)
        out << csv_quote(r.dataset) << ',' << csv_quote(r.model) << ',' << r.horizon << ',' << r.seed << ','
            << csv_quote(r.error) << "\n";
}

// ---------------------------------------------------------------------------
// Markdown
// ---------------------------------------------------------------------------

inline std::string fixed(const std::optional<double>& v, int digits) {
    if (!v || !std::isfinite(*v)) return kMissingCell;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
    return buf;
}

inline std::string with_thousands(const std::optional<std::size_t>& v) {
    if (!v) return kMissingCell;
    std::string s = std::to_string(*v);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
}

namespace detail {

using RowKey = std::tuple<std::string, std::size_t, std::string>;

inline std::map<RowKey, const ResultRow*> index_rows(const std::vector<ResultRow>& rows) {
    std::map<RowKey, const ResultRow*> idx;
    for (const auto& r : rows) idx[{r.dataset, r.horizon, r.model}] = &r;
    return idx;
}

inline std::vector<std::string> datasets_of(const std::vector<ResultRow>& rows) {
    std::vector<std::string> out;
    for (const auto& r : rows)
        if (std::find(out.begin(), out.end(), r.dataset) == out.end()) out.push_back(r.dataset);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return dataset_order(a) < dataset_order(b); });
    return out;
}

inline std::string table_row(const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) s += " " + c + " |";
    return s + "\n";
}

inline std::string table_head(const std::vector<std::string>& cells, const std::string& align) {
    std::string s = table_row(cells) + "|";
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i < align.size() && align[i] == 'l') ? " :-- |" : " --: |";
    return s + "\n";
}

inline std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline const std::string kNoRuns = "_No matching runs._\n";

}  // namespace detail

/// Dataset x horizon rows with MSE/MAE per model, best MSE in bold, and an average row per model.
inline std::string render_forecasting_table(const std::vector<ResultRow>& rows) {
    const std::vector<std::pair<std::string, std::string>> models{
        {"msmixer", "MSMixer"}, {"dlinear", "DLinear"}, {"nlinear", "NLinear"}};
    const auto idx = detail::index_rows(rows);
    std::vector<std::pair<std::string, std::size_t>> keys;
    for (const auto& r : rows) {
        const bool relevant = std::any_of(models.begin(), models.end(), [&](auto& m) { return m.first == r.model; });
        const std::pair key{r.dataset, r.horizon};
        if (relevant && std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
        return std::pair(dataset_order(a.first), a.second) < std::pair(dataset_order(b.first), b.second);
    });

    std::string out = "## Forecasting results (test MSE / MAE, z-scored)\n\n";
    if (keys.empty()) return out + detail::kNoRuns;
    std::vector<std::string> head{"Dataset", "H"};
    for (const auto& m : models) {
        head.push_back(m.second + " MSE");
        head.push_back(m.second + " MAE");
    }
    out += detail::table_head(head, "ll");
    std::vector<std::vector<double>> mse_acc(models.size()), mae_acc(models.size());
    for (const auto& [ds, h] : keys) {
        std::optional<double> best;
        for (const auto& m : models) {
            const auto it = idx.find({ds, h, m.first});
            if (it != idx.end() && it->second->mse && (!best || *it->second->mse < *best)) best = it->second->mse;
        }
        std::vector<std::string> cells{ds, std::to_string(h)};
        for (std::size_t k = 0; k < models.size(); ++k) {
            const auto it = idx.find({ds, h, models[k].first});
            const ResultRow* r = it == idx.end() ? nullptr : it->second;
            std::string mse = fixed(r ? r->mse : std::nullopt, 3);
            if (r && r->mse && best && fixed(r->mse, 3) == fixed(best, 3)) mse = "**" + mse + "**";
            cells.push_back(mse);
            cells.push_back(fixed(r ? r->mae : std::nullopt, 3));
            if (r && r->mse) mse_acc[k].push_back(*r->mse);
            if (r && r->mae) mae_acc[k].push_back(*r->mae);
        }
        out += detail::table_row(cells);
    }
    std::vector<std::string> avg{"Average", ""};
    for (std::size_t k = 0; k < models.size(); ++k) {
        avg.push_back(fixed(detail::mean_of(mse_acc[k]), 3));
        avg.push_back(fixed(detail::mean_of(mae_acc[k]), 3));
    }
    out += detail::table_row(avg);
    return out;
}

/// Converged gate weights of the default MSMixer at H=96, one row per dataset plus the average.
inline std::string render_gate_table(const std::vector<ResultRow>& rows, std::size_t horizon = 96) {
    std::string out = "## Converged scale weights (MSMixer, H=" + std::to_string(horizon) + ")\n\n";
    std::vector<const ResultRow*> sel;
    for (const auto& r : rows)
        if (r.model == "msmixer" && r.horizon == horizon) sel.push_back(&r);
    if (sel.empty()) return out + detail::kNoRuns;
    std::sort(sel.begin(), sel.end(), [](auto* a, auto* b) { return row_less(*a, *b); });
    out += detail::table_head({"Dataset", "w1 (1x)", "w4 (4x)", "w16 (16x)"}, "l");
    std::vector<double> a1, a4, a16;
    for (const auto* r : sel) {
        out += detail::table_row({r->dataset, fixed(r->w1, 2), fixed(r->w4, 2), fixed(r->w16, 2)});
        if (r->w1) a1.push_back(*r->w1);
        if (r->w4) a4.push_back(*r->w4);
        if (r->w16) a16.push_back(*r->w16);
    }
    out += detail::table_row({"Average", fixed(detail::mean_of(a1), 2), fixed(detail::mean_of(a4), 2),
                              fixed(detail::mean_of(a16), 2)});
    return out;
}

/// Converged fusion weight alpha of the default MSMixer, dataset x horizon.
inline std::string render_fusion_table(const std::vector<ResultRow>& rows) {
    std::string out = "## Converged fusion weight alpha (MSMixer)\n\n";
    std::vector<std::size_t> horizons;
    for (const auto& r : rows)
        if (r.model == "msmixer" && std::find(horizons.begin(), horizons.end(), r.horizon) == horizons.end())
            horizons.push_back(r.horizon);
    if (horizons.empty()) return out + detail::kNoRuns;
    std::sort(horizons.begin(), horizons.end());
    std::vector<std::string> head{"Dataset"};
    for (auto h : horizons) head.push_back("H=" + std::to_string(h));
    out += detail::table_head(head, "l");
    const auto idx = detail::index_rows(rows);
    std::vector<ResultRow> msm;
    for (const auto& r : rows)
        if (r.model == "msmixer") msm.push_back(r);
    for (const auto& ds : detail::datasets_of(msm)) {
        std::vector<std::string> cells{ds};
        for (auto h : horizons) {
            const auto it = idx.find({ds, h, "msmixer"});
            cells.push_back(fixed(it == idx.end() ? std::nullopt : it->second->alpha, 2));
        }
        out += detail::table_row(cells);
    }
    return out;
}

/// The six component-removal variants for every (dataset, H) that has at least one removal run.
inline std::string render_ablation_table(const std::vector<ResultRow>& rows) {
    const std::vector<std::pair<std::string, std::string>> variants{
        {"msmixer", "Full MSMixer"},
        {"msmixer-no-shortcut", "w/o shortcut (fusion fixed to multi-scale)"},
        {"msmixer-s1", "Scale 1x only"},
        {"msmixer-s1-4", "Scales {1,4} only"},
        {"dlinear", "Shortcut only (DLinear)"},
        {"msmixer-no-revin", "w/o RevIN"}};
    std::string out = "## Ablation\n\n";
    const auto idx = detail::index_rows(rows);
    std::vector<std::pair<std::string, std::size_t>> keys;
    for (const auto& r : rows)
        if ((r.model == "msmixer-no-shortcut" || r.model == "msmixer-no-revin") &&
            std::find(keys.begin(), keys.end(), std::pair{r.dataset, r.horizon}) == keys.end())
            keys.emplace_back(r.dataset, r.horizon);
    if (keys.empty()) return out + detail::kNoRuns;
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
        return std::pair(dataset_order(a.first), a.second) < std::pair(dataset_order(b.first), b.second);
    });
    for (const auto& [ds, h] : keys) {
        out += "### " + ds + ", H=" + std::to_string(h) + "\n\n";
        out += detail::table_head({"Variant", "MSE", "MAE", "Params"}, "l");
        for (const auto& [label, title] : variants) {
            const auto it = idx.find({ds, h, label});
            const ResultRow* r = it == idx.end() ? nullptr : it->second;
            out += detail::table_row({title, fixed(r ? r->mse : std::nullopt, 3), fixed(r ? r->mae : std::nullopt, 3),
                                      with_thousands(r ? r->params : std::nullopt)});
        }
        out += "\n";
    }
    return out;
}

/// Look-back and scale-set sweeps of MSMixer, for every (dataset, H) that has a sweep run.
inline std::string render_sensitivity_tables(const std::vector<ResultRow>& rows) {
    static const std::regex lookback_re("msmixer-T([0-9]+)");
    static const std::regex scales_re("msmixer-s([0-9]+(-[0-9]+)*)");
    const ModelConfig defaults;
    std::string out = "## Sensitivity\n\n";

    // (dataset, H) -> sort key -> (leading cells, row)
    using Entries = std::map<std::size_t, std::pair<std::vector<std::string>, const ResultRow*>>;
    std::map<std::pair<std::pair<std::size_t, std::string>, std::size_t>, std::pair<Entries, Entries>> groups;
    for (const auto& r : rows) {
        const auto key = std::pair(dataset_order(r.dataset), r.horizon);
        std::smatch m;
        if (std::regex_match(r.model, m, lookback_re)) {
            const auto T = std::stoul(m[1].str());
            groups[key].first[T] = {{std::to_string(T)}, &r};
        } else if (std::regex_match(r.model, m, scales_re)) {
            std::string set = m[1].str();
            std::replace(set.begin(), set.end(), '-', ',');
            const auto n = static_cast<std::size_t>(std::count(set.begin(), set.end(), ',')) + 1;
            const auto largest = std::stoul(set.substr(set.rfind(',') + 1));
            groups[key].second[n * 1000 + largest] = {{std::to_string(n), "{" + set + "}"}, &r};
        }
    }
    if (groups.empty()) return out + detail::kNoRuns;
    const auto idx = detail::index_rows(rows);
    auto cells = [](const std::pair<std::vector<std::string>, const ResultRow*>& e) {
        auto c = e.first;
        const ResultRow* r = e.second;
        c.push_back(fixed(r ? r->mse : std::nullopt, 3));
        c.push_back(fixed(r ? r->mae : std::nullopt, 3));
        c.push_back(with_thousands(r ? r->params : std::nullopt));
        return c;
    };
    for (auto& [key, entries] : groups) {
        const auto& ds = key.first.second;
        const auto h = key.second;
        const auto base = idx.find({ds, h, "msmixer"});
        const ResultRow* full = base == idx.end() ? nullptr : base->second;
        auto& [lookbacks, scale_sets] = entries;
        if (!lookbacks.empty()) {
            lookbacks[defaults.lookback] = {{std::to_string(defaults.lookback) + " (default)"}, full};
            out += "### Look-back, " + ds + ", H=" + std::to_string(h) + "\n\n";
            out += detail::table_head({"T", "MSE", "MAE", "Params"}, "l");
            for (const auto& [T, e] : lookbacks) out += detail::table_row(cells(e));
            out += "\n";
        }
        if (!scale_sets.empty()) {
            scale_sets[defaults.scales.size() * 1000 + defaults.scales.back()] = {
                {std::to_string(defaults.scales.size()), "{" + join_scales(defaults.scales) + "} (default)"}, full};
            out += "### Number of scales, " + ds + ", H=" + std::to_string(h) + "\n\n";
            out += detail::table_head({"Count", "Scales", "MSE", "MAE", "Params"}, "ll");
            for (const auto& [k, e] : scale_sets) out += detail::table_row(cells(e));
            out += "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Directory-level report
// ---------------------------------------------------------------------------

/// Every <run>/report.json directly below `dir`, in path order.
inline std::vector<RunReport> load_reports(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("report directory does not exist: " + dir.string());
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory() && fs::exists(entry.path() / "report.json"))
            paths.push_back(entry.path() / "report.json");
    std::sort(paths.begin(), paths.end());
    std::vector<RunReport> out;
    for (const auto& p : paths) out.push_back(read_report(p));
    return out;
}

struct ReportSummary {
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::vector<fs::path> files;
};

inline const std::vector<std::string>& report_file_names() {
    static const std::vector<std::string> names{"results.csv",  "failures.csv", "forecasting.md", "gate_weights.md",
                                                "fusion.md",    "ablation.md",  "sensitivity.md"};
    return names;
}

/// Writes the report files for all runs below `runs_dir` into `out_dir` (defaults to `runs_dir`).
inline ReportSummary generate_report(const fs::path& runs_dir, fs::path out_dir = {}) {
    if (out_dir.empty()) out_dir = runs_dir;
    const auto reports = load_reports(runs_dir);
    if (reports.empty()) throw UsageError("no run reports found in " + runs_dir.string());
    fs::create_directories(out_dir);

    std::vector<ResultRow> rows;
    std::vector<FailureRow> failures;
    for (const auto& r : reports) {
        if (r.ok)
            rows.push_back(row_from_report(r));
        else
            failures.push_back({r.spec.dataset, r.spec.label(), r.spec.model.horizon, r.spec.train.seed, r.error});
    }
    std::sort(rows.begin(), rows.end(), row_less);

    ReportSummary summary{rows.size(), failures.size(), {}};
    auto write = [&](const std::string& name, const std::string& text) {
        const auto path = out_dir / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw LoadError("cannot write " + path.string());
        out << text;
        summary.files.push_back(path);
    };
    std::ostringstream csv, fail;
    write_results_csv(csv, rows);
    write_failures_csv(fail, failures);
    write("results.csv", csv.str());
    write("failures.csv", fail.str());

    std::istringstream reread(csv.str());
    const auto loaded = parse_results_csv(reread);
    write("forecasting.md", render_forecasting_table(loaded));
    write("gate_weights.md", render_gate_table(loaded));
    write("fusion.md", render_fusion_table(loaded));
    write("ablation.md", render_ablation_table(loaded));
    write("sensitivity.md", render_sensitivity_tables(loaded));
    return summary;
}

}  // namespace msmixer
