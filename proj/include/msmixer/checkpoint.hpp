#pragma once

// Versioned text checkpoint:
//
//   msmixer-checkpoint 1
//   config <key>=<value> ...
//   params <count>
//   <name> <rows> <cols>
//   <rows*cols values, row-major, one line>
//   ...
//   end

#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "msmixer/data.hpp"
#include "msmixer/models.hpp"

namespace msmixer {

inline constexpr int kCheckpointVersion = 1;

inline std::string join_scales(const std::vector<std::size_t>& scales) {
    std::string out;
    for (std::size_t i = 0; i < scales.size(); ++i) out += (i ? "," : "") + std::to_string(scales[i]);
    return out;
}

inline std::vector<std::size_t> parse_scales(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size() || v == 0) throw ConfigError("invalid scale list '" + s + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty scale list");
    return out;
}

inline std::string serialize_config(const ModelConfig& c) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "kind=" << to_string(c.kind) << " lookback=" << c.lookback << " horizon=" << c.horizon
       << " hidden=" << c.hidden << " n_vars=" << c.n_vars << " kernel=" << c.kernel
       << " scales=" << join_scales(c.scales) << " dropout=" << c.dropout << " shortcut=" << c.use_shortcut
       << " revin=" << c.use_revin << " revin_eps=" << c.revin_eps << " init_std=" << c.init_std;
    return os.str();
}

inline ModelConfig parse_config(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw LoadError("checkpoint: malformed config token '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto get = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw LoadError("checkpoint: config is missing '" + k + "'");
        return it->second;
    };
    ModelConfig c;
    c.kind = parse_model_kind(get("kind"));
    c.lookback = std::stoul(get("lookback"));
    c.horizon = std::stoul(get("horizon"));
    c.hidden = std::stoul(get("hidden"));
    c.n_vars = std::stoul(get("n_vars"));
    c.kernel = std::stoul(get("kernel"));
    c.scales = parse_scales(get("scales"));
    c.dropout = std::stod(get("dropout"));
    c.use_shortcut = get("shortcut") == "1";
    c.use_revin = get("revin") == "1";
    c.revin_eps = std::stod(get("revin_eps"));
    c.init_std = std::stod(get("init_std"));
    return c;
}

template <class T>
void save_checkpoint(const std::string& path, const Forecaster<T>& model) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write checkpoint: " + path);
    out << "msmixer-checkpoint " << kCheckpointVersion << "\n";
    out << "config " << serialize_config(model.config()) << "\n";
    const auto& entries = model.params().entries();
    out << "params " << entries.size() << "\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : entries) {
        out << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
        for (std::size_t i = 0; i < p.value.size(); ++i)
            out << (i ? " " : "") << static_cast<double>(p.value[i]);
        out << "\n";
    }
    out << "end\n";
    if (!out) throw LoadError("failed writing checkpoint: " + path);
}

/// Rebuilds the model from the stored config and overwrites its parameters.
template <class T>
std::unique_ptr<Forecaster<T>> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "msmixer-checkpoint") throw LoadError(path + ": not a checkpoint file");
    if (version != kCheckpointVersion)
        throw LoadError(path + ": unsupported checkpoint version " + std::to_string(version));
    std::string word, config_line;
    in >> word;
    if (word != "config") throw LoadError(path + ": expected config line");
    std::getline(in, config_line);
    const ModelConfig cfg = parse_config(config_line);
    Rng rng(0);
    auto model = make_model<T>(cfg, rng);

    std::size_t count = 0;
    in >> word >> count;
    if (word != "params" || count != model->params().size())
        throw LoadError(path + ": parameter count does not match the stored config");
    for (std::size_t k = 0; k < count; ++k) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        in >> name >> rows >> cols;
        auto& p = model->params().at(name);
        if (p.value.rows() != rows || p.value.cols() != cols)
            throw LoadError(path + ": shape mismatch for parameter '" + name + "'");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            double v = 0.0;
            if (!(in >> v)) throw LoadError(path + ": truncated values for '" + name + "'");
            p.value[i] = static_cast<T>(v);
        }
    }
    in >> word;
    if (word != "end") throw LoadError(path + ": missing end marker");
    return model;
}

}  // namespace msmixer
