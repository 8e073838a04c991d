#pragma once

// Shared helpers for tests: scratch directories and synthetic ETT-shaped series.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "msmixer/data.hpp"
#include "msmixer/rng.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Removed (recursively) on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("msmixer_" + tag + "_" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const fs::path& path() const noexcept { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

inline const std::vector<std::string>& ett_columns() {
    static const std::vector<std::string> cols{"HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"};
    return cols;
}

/// ETT-like values: daily and weekly cycles, slow drift and AR(1) noise per variate.
inline msmixer::Tensor2D<double> ett_like_values(std::size_t length, std::size_t n_vars, std::uint64_t seed,
                                                 double period = 24.0) {
    msmixer::Rng rng(seed);
    msmixer::Tensor2D<double> v(length, n_vars);
    for (std::size_t n = 0; n < n_vars; ++n) {
        const double amp_d = 1.0 + 0.3 * static_cast<double>(n);
        const double amp_w = 0.5 + 0.1 * static_cast<double>(n);
        const double phase = 0.7 * static_cast<double>(n);
        const double drift = 0.5 * (static_cast<double>(n % 3) - 1.0);
        double ar = 0.0;
        for (std::size_t t = 0; t < length; ++t) {
            const double tt = static_cast<double>(t);
            ar = 0.8 * ar + rng.normal(0.0, 0.3);
            v(t, n) = 10.0 + amp_d * std::sin(2 * std::numbers::pi * tt / period + phase) +
                      amp_w * std::sin(2 * std::numbers::pi * tt / (7 * period)) +
                      drift * tt / static_cast<double>(length) + ar;
        }
    }
    return v;
}

/// Writes an hourly `date,HUFL,...,OT` CSV (or generic names when n_vars != 7).
inline void write_ett_csv(const std::string& path, std::size_t length, std::size_t n_vars = 7,
                          std::uint64_t seed = 1, std::size_t step_minutes = 60) {
    const auto values = ett_like_values(length, n_vars, seed, step_minutes == 15 ? 96.0 : 24.0);
    std::ofstream out(path);
    out << "date";
    for (std::size_t n = 0; n < n_vars; ++n)
        out << "," << (n_vars == 7 ? ett_columns()[n] : "v" + std::to_string(n));
    out << "\n";
    char buf[32];
    for (std::size_t t = 0; t < length; ++t) {
        const std::size_t minutes = t * step_minutes;
        const std::size_t day = minutes / 1440;
        const std::int64_t base = msmixer::detail::days_from_civil(2016, 7, 1) + static_cast<std::int64_t>(day);
        // civil_from_days
        std::int64_t z = base + 719468;
        const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
        const auto doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp < 10 ? mp + 3 : mp - 9;
        y += m <= 2;
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u %02zu:%02zu:00", static_cast<long long>(y), m, d,
                      (minutes % 1440) / 60, minutes % 60);
        out << buf;
        for (std::size_t n = 0; n < n_vars; ++n) out << "," << values(t, n);
        out << "\n";
    }
}

}  // namespace fixtures
