#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "msmixer/rng.hpp"
#include "msmixer/tensor.hpp"

namespace msmixer {

class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A multivariate series as read from disk: one row per timestamp.
struct RawSeries {
    std::vector<std::string> timestamps;
    Tensor2D<double> values;  // [length x n_vars]
    std::vector<std::string> variate_names;
    std::vector<std::string> warnings;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t n_vars() const noexcept { return values.cols(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(',', pos);
        out.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Howard Hinnant's days_from_civil.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Seconds since epoch for "YYYY-MM-DD[ HH:MM[:SS]]" (also 'T' separator, '/' dates).
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    auto num = [&](std::size_t& pos, std::size_t width, int& out) {
        if (pos + width > s.size()) return false;
        auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + width, out);
        if (ec != std::errc{} || p != s.data() + pos + width) return false;
        pos += width;
        return true;
    };
    auto sep = [&](std::size_t& pos, std::string_view allowed) {
        if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos) return false;
        ++pos;
        return true;
    };
    std::size_t pos = 0;
    if (!num(pos, 4, y) || !sep(pos, "-/") || !num(pos, 2, mo) || !sep(pos, "-/") || !num(pos, 2, d)) return std::nullopt;
    if (pos < s.size()) {
        if (!sep(pos, " T") || !num(pos, 2, h) || !sep(pos, ":") || !num(pos, 2, mi)) return std::nullopt;
        if (pos < s.size() && (!sep(pos, ":") || !num(pos, 2, sec))) return std::nullopt;
        if (pos != s.size()) return std::nullopt;
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 + mi * 60 + sec;
}

}  // namespace detail

/// Reads `date,<name1>,...,<nameN>`. Any malformed data row aborts with its row index;
/// irregular timestamps only add a warning.
inline RawSeries load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open dataset file: " + path);

    RawSeries out;
    std::string line;
    if (!std::getline(in, line)) throw LoadError(path + ": empty file");
    const auto header = detail::split_commas(line);
    if (header.size() < 2) throw LoadError(path + ": header needs a date column and at least one variate");
    for (std::size_t c = 1; c < header.size(); ++c) out.variate_names.emplace_back(header[c]);
    const std::size_t n_vars = out.variate_names.size();

    std::vector<double> values;
    std::size_t line_no = 1;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_commas(line);
        if (fields.size() != header.size())
            throw LoadError(path + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ") has " +
                            std::to_string(fields.size()) + " fields, expected " + std::to_string(header.size()));
        out.timestamps.emplace_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            auto v = detail::parse_double(fields[c]);
            if (!v)
                throw LoadError(path + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                                ") has non-numeric value '" + std::string(fields[c]) + "' in column '" +
                                out.variate_names[c - 1] + "'");
            values.push_back(*v);
        }
        ++row;
    }
    if (row == 0) throw LoadError(path + ": no data rows");
    out.values = Tensor2D<double>(row, n_vars, std::move(values));

    std::vector<std::int64_t> secs;
    secs.reserve(row);
    for (const auto& ts : out.timestamps) {
        auto t = detail::parse_timestamp(ts);
        if (!t) {
            out.warnings.push_back("timestamp '" + ts + "' not parseable; spacing not checked");
            return out;
        }
        secs.push_back(*t);
    }
    for (std::size_t i = 1; i < secs.size(); ++i) {
        if (secs[i] <= secs[i - 1]) {
            out.warnings.push_back("timestamps not strictly increasing at row " + std::to_string(i));
            break;
        }
        if (secs[i] - secs[i - 1] != secs[1] - secs[0]) {
            out.warnings.push_back("non-uniform timestamp spacing at row " + std::to_string(i));
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const noexcept { return end - begin; }
};

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

struct SplitSpec {
    IndexRange train;
    IndexRange val;
    IndexRange test;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::optional<std::size_t> train_cap;
    /// Val/test windows may take look-back context from before their range start.
    bool cross_border_lookback = true;

    const IndexRange& range(Split s) const {
        switch (s) {
            case Split::Train: return train;
            case Split::Val: return val;
            case Split::Test: return test;
        }
        return train;
    }
};

/// 70/10/20 by floor arithmetic, remainder to test. A train cap keeps the first
/// `train_cap` steps of the train range; val/test do not move.
inline SplitSpec make_splits(std::size_t total_length, std::size_t lookback, std::size_t horizon,
                             std::optional<std::size_t> train_cap = std::nullopt,
                             bool cross_border_lookback = true) {
    if (lookback == 0 || horizon == 0) throw ConfigError("make_splits: lookback and horizon must be positive");
    if (total_length < lookback + horizon)
        throw ConfigError("make_splits: series of length " + std::to_string(total_length) +
                          " is shorter than lookback + horizon = " + std::to_string(lookback + horizon));
    const std::size_t n_train = total_length * 7 / 10;
    const std::size_t n_val = total_length / 10;
    SplitSpec s;
    s.train = {0, n_train};
    s.val = {n_train, n_train + n_val};
    s.test = {n_train + n_val, total_length};
    s.lookback = lookback;
    s.horizon = horizon;
    s.train_cap = train_cap;
    s.cross_border_lookback = cross_border_lookback;
    if (train_cap && *train_cap < n_train) s.train.end = *train_cap;
    return s;
}

// ---------------------------------------------------------------------------
// Normalized dataset
// ---------------------------------------------------------------------------

struct WindowedDataset {
    Tensor2D<double> values;  // z-scored, [length x n_vars]
    std::vector<double> mean;
    std::vector<double> stdev;
    SplitSpec split;
    std::vector<std::string> variate_names;
    std::vector<std::string> warnings;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t n_vars() const noexcept { return values.cols(); }

    double normalize(double raw, std::size_t var) const { return (raw - mean[var]) / stdev[var]; }
    double denormalize(double z, std::size_t var) const { return z * stdev[var] + mean[var]; }
};

inline constexpr double kMinStd = 1e-8;

/// Per-variate population mean/std from the train range only, applied to every row.
inline WindowedDataset fit_apply_zscore(const RawSeries& series, const SplitSpec& split) {
    const auto& tr = split.train;
    if (tr.length() == 0) throw ConfigError("fit_apply_zscore: empty train range");
    if (tr.end > series.length()) throw ConfigError("fit_apply_zscore: train range exceeds series");
    WindowedDataset ds;
    ds.split = split;
    ds.variate_names = series.variate_names;
    ds.warnings = series.warnings;
    const std::size_t n = series.n_vars();
    ds.mean.assign(n, 0.0);
    ds.stdev.assign(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
        double sum = 0.0;
        for (std::size_t t = tr.begin; t < tr.end; ++t) sum += series.values(t, v);
        const double mu = sum / static_cast<double>(tr.length());
        double sq = 0.0;
        for (std::size_t t = tr.begin; t < tr.end; ++t) {
            const double d = series.values(t, v) - mu;
            sq += d * d;
        }
        double sd = std::sqrt(sq / static_cast<double>(tr.length()));
        if (sd < kMinStd) {
            const std::string name = v < series.variate_names.size() ? series.variate_names[v] : std::to_string(v);
            ds.warnings.push_back("variate '" + name + "' is constant on the train split; std floored");
            sd = kMinStd;
        }
        ds.mean[v] = mu;
        ds.stdev[v] = sd;
    }
    ds.values = Tensor2D<double>(series.length(), n);
    for (std::size_t t = 0; t < series.length(); ++t)
        for (std::size_t v = 0; v < n; ++v) ds.values(t, v) = (series.values(t, v) - ds.mean[v]) / ds.stdev[v];
    return ds;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

/// Start index (first look-back step) of every stride-1 window whose targets fall inside `which`.
inline std::vector<std::size_t> window_starts(const SplitSpec& split, Split which) {
    const auto& r = split.range(which);
    const std::size_t T = split.lookback, H = split.horizon;
    std::size_t first = r.begin;
    if (split.cross_border_lookback && which != Split::Train) first = r.begin >= T ? r.begin - T : 0;
    std::vector<std::size_t> starts;
    for (std::size_t s = first; s + T + H <= r.end; ++s) starts.push_back(s);
    if (starts.empty())
        throw ConfigError(std::string("split '") + split_name(which) + "' (length " + std::to_string(r.length()) +
                          ") cannot hold a lookback " + std::to_string(T) + " / horizon " + std::to_string(H) +
                          " window");
    return starts;
}

/// Channel-independent batch: row b*N + n holds variate n of window b.
template <class T>
struct WindowBatch {
    Tensor2D<T> inputs;   // [B*N x lookback]
    Tensor2D<T> targets;  // [B*N x horizon]
    std::size_t batch = 0;
    std::size_t n_vars = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
};

template <class T>
WindowBatch<T> gather_windows(const WindowedDataset& ds, std::span<const std::size_t> starts) {
    const std::size_t N = ds.n_vars(), L = ds.split.lookback, H = ds.split.horizon;
    WindowBatch<T> b{Tensor2D<T>(starts.size() * N, L), Tensor2D<T>(starts.size() * N, H), starts.size(), N, L, H};
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const std::size_t s = starts[w];
        if (s + L + H > ds.length()) throw ConfigError("gather_windows: window exceeds series");
        for (std::size_t n = 0; n < N; ++n) {
            auto in = b.inputs.row(w * N + n);
            auto out = b.targets.row(w * N + n);
            for (std::size_t t = 0; t < L; ++t) in[t] = static_cast<T>(ds.values(s + t, n));
            for (std::size_t h = 0; h < H; ++h) out[h] = static_cast<T>(ds.values(s + L + h, n));
        }
    }
    return b;
}

/// Fixed-size batches over one split; the final partial batch is kept.
class WindowSampler {
public:
    WindowSampler(const WindowedDataset& ds, Split which, std::size_t batch_size = 64)
        : ds_(&ds), starts_(window_starts(ds.split, which)), batch_size_(batch_size) {
        if (batch_size == 0) throw ConfigError("WindowSampler: batch size must be positive");
    }

    std::size_t num_windows() const noexcept { return starts_.size(); }
    std::size_t num_batches() const noexcept { return (starts_.size() + batch_size_ - 1) / batch_size_; }
    const std::vector<std::size_t>& starts() const noexcept { return starts_; }

    /// Window visiting order for one epoch; shuffled when an rng is given.
    std::vector<std::size_t> epoch_order(Rng* shuffle_rng = nullptr) const {
        std::vector<std::size_t> order = starts_;
        if (shuffle_rng) shuffle_rng->shuffle(std::span<std::size_t>(order));
        return order;
    }

    template <class T>
    WindowBatch<T> batch(const std::vector<std::size_t>& order, std::size_t index) const {
        const std::size_t lo = index * batch_size_;
        const std::size_t hi = std::min(lo + batch_size_, order.size());
        return gather_windows<T>(*ds_, std::span<const std::size_t>(order.data() + lo, hi - lo));
    }

private:
    const WindowedDataset* ds_;
    std::vector<std::size_t> starts_;
    std::size_t batch_size_;
};

// (B, T, N) <-> (B*N, T) reshapes.

template <class T>
Tensor2D<T> to_channel_independent(std::span<const T> btn, std::size_t B, std::size_t L, std::size_t N) {
    if (btn.size() != B * L * N) throw ConfigError("to_channel_independent: size mismatch");
    Tensor2D<T> out(B * N, L);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t n = 0; n < N; ++n) out(b * N + n, t) = btn[(b * L + t) * N + n];
    return out;
}

template <class T>
std::vector<T> from_channel_independent(const Tensor2D<T>& ci, std::size_t N) {
    if (N == 0 || ci.rows() % N != 0) throw ConfigError("from_channel_independent: rows not divisible by N");
    const std::size_t B = ci.rows() / N, L = ci.cols();
    std::vector<T> out(B * L * N);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < L; ++t) out[(b * L + t) * N + n] = ci(b * N + n, t);
    return out;
}

}  // namespace msmixer
