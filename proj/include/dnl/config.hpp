#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/data.hpp"
#include "dnl/nn.hpp"
#include "dnl/trainers.hpp"

namespace dnl {

// ---------------------------------------------------------------------------
// Flat sectioned key=value files. '#' and ';' start comments; keys must be
// unique within their section; unknown sections/keys are rejected up front.

struct RawSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
};

struct RawConfig {
    std::vector<RawSection> sections;

    const RawSection* find(const std::string& name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline RawConfig parse_sectioned(const std::string& text, const std::string& origin) {
    RawConfig out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    RawSection* cur = nullptr;
    auto fail = [&origin](int n, const std::string& why) -> void {
        throw ConfigError(origin + ":" + std::to_string(n) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            const std::string name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty()) fail(line_no, "empty section name");
            for (const auto& s : out.sections)
                if (s.name == name) fail(line_no, "duplicate section [" + name + "]");
            out.sections.push_back(RawSection{name, {}});
            cur = &out.sections.back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        if (cur == nullptr) fail(line_no, "key outside any [section]");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        for (const auto& [k, v] : cur->entries)
            if (k == key) fail(line_no, "duplicate key '" + key + "' in [" + cur->name + "]");
        cur->entries.emplace_back(key, value);
    }
    return out;
}

inline RawConfig parse_sectioned_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_sectioned(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Experiment configuration: sections [data], [model], [train], [eval].

struct ExperimentConfig {
    // [data]
    int size = 64;
    int n_ellipses = 12;
    int train_slices = 64;
    int test_slices = 16;
    NoiseModel noise = NoiseModel::gaussian(2.5e-3);

    // [model]
    GeneratorVariant arch = GeneratorVariant::standard_unet;
    int ngf = 16;
    int ndf = 16;
    int depth = 4;
    int disc_layers = 4;
    int disc_kernel = 4;

    // [train]
    std::string method = "cyclegan";  // cyclegan | n2s
    double lambda_cycle = 30.0;
    double lambda_iden = 2.0;
    double lr_g = 1e-4;
    double lr_d = 2e-4;
    double lr_n2s = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int epochs = 100;
    int decay_start = 100;
    int batch_size = 4;
    int patch = 64;
    double delta = 0.1;
    int checkpoint_every = 0;
    std::string manifest;  // train manifest path

    // [eval]
    double data_range = 1.0;
    std::string eval_manifest;  // test manifest path

    static ExperimentConfig from_raw(const RawConfig& raw, const std::string& origin);

    static ExperimentConfig from_file(const std::string& path) {
        return from_raw(parse_sectioned_file(path), path);
    }

    static ExperimentConfig from_text(const std::string& text, const std::string& origin = "<config>") {
        return from_raw(parse_sectioned(text, origin), origin);
    }

    /// Fixed-order serialization of every knob; the basis for config hashing
    /// and run-directory snapshots.
    std::string canonical_text() const {
        auto g17 = [](double v) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf);
        };
        std::ostringstream os;
        os << "[data]\n";
        os << "size = " << size << "\n";
        os << "n_ellipses = " << n_ellipses << "\n";
        os << "train_slices = " << train_slices << "\n";
        os << "test_slices = " << test_slices << "\n";
        os << "noise = " << noise.descriptor() << "\n";
        os << "[model]\n";
        os << "arch = " << variant_name(arch) << "\n";
        os << "ngf = " << ngf << "\n";
        os << "ndf = " << ndf << "\n";
        os << "depth = " << depth << "\n";
        os << "disc_layers = " << disc_layers << "\n";
        os << "disc_kernel = " << disc_kernel << "\n";
        os << "[train]\n";
        os << "method = " << method << "\n";
        os << "lambda_cycle = " << g17(lambda_cycle) << "\n";
        os << "lambda_iden = " << g17(lambda_iden) << "\n";
        os << "lr_g = " << g17(lr_g) << "\n";
        os << "lr_d = " << g17(lr_d) << "\n";
        os << "lr_n2s = " << g17(lr_n2s) << "\n";
        os << "beta1 = " << g17(beta1) << "\n";
        os << "beta2 = " << g17(beta2) << "\n";
        os << "epochs = " << epochs << "\n";
        os << "decay_start = " << decay_start << "\n";
        os << "batch_size = " << batch_size << "\n";
        os << "patch = " << patch << "\n";
        os << "delta = " << g17(delta) << "\n";
        os << "checkpoint_every = " << checkpoint_every << "\n";
        os << "manifest = " << manifest << "\n";
        os << "[eval]\n";
        os << "data_range = " << g17(data_range) << "\n";
        os << "manifest = " << eval_manifest << "\n";
        return os.str();
    }

    TrainConfig train_config(std::uint64_t seed) const {
        TrainConfig t;
        t.arch = arch;
        t.lambda_cycle = lambda_cycle;
        t.lambda_iden = lambda_iden;
        t.ngf = ngf;
        t.ndf = ndf;
        t.depth = depth;
        t.disc_layers = disc_layers;
        t.disc_kernel = disc_kernel;
        t.lr_g = lr_g;
        t.lr_d = lr_d;
        t.lr_n2s = lr_n2s;
        t.beta1 = beta1;
        t.beta2 = beta2;
        t.epochs = epochs;
        t.decay_start = decay_start;
        t.batch_size = batch_size;
        t.patch = patch;
        t.delta = delta;
        t.noise = noise;
        t.seed = seed;
        t.checkpoint_every = checkpoint_every;
        return t;
    }
};

namespace detail {

inline int parse_int(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const long out = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(out);
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected an integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected a finite number, got '" + v + "'");
    }
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_raw(const RawConfig& raw, const std::string& origin) {
    ExperimentConfig cfg;
    for (const auto& section : raw.sections) {
        if (section.name != "data" && section.name != "model" && section.name != "train" && section.name != "eval")
            throw ConfigError(origin + ": unknown section [" + section.name + "]");
        for (const auto& [key, value] : section.entries) {
            const std::string where = origin + ": [" + section.name + "] " + key;
            if (section.name == "data") {
                if (key == "size") cfg.size = detail::parse_int(value, where);
                else if (key == "n_ellipses") cfg.n_ellipses = detail::parse_int(value, where);
                else if (key == "train_slices") cfg.train_slices = detail::parse_int(value, where);
                else if (key == "test_slices") cfg.test_slices = detail::parse_int(value, where);
                else if (key == "noise") cfg.noise = NoiseModel::parse(value);
                else throw ConfigError(where + ": unknown key");
            } else if (section.name == "model") {
                if (key == "arch") cfg.arch = parse_variant(value);
                else if (key == "ngf") cfg.ngf = detail::parse_int(value, where);
                else if (key == "ndf") cfg.ndf = detail::parse_int(value, where);
                else if (key == "depth") cfg.depth = detail::parse_int(value, where);
                else if (key == "disc_layers") cfg.disc_layers = detail::parse_int(value, where);
                else if (key == "disc_kernel") cfg.disc_kernel = detail::parse_int(value, where);
                else throw ConfigError(where + ": unknown key");
            } else if (section.name == "train") {
                if (key == "method") {
                    if (value != "cyclegan" && value != "n2s")
                        throw ConfigError(where + ": method must be cyclegan or n2s, got '" + value + "'");
                    cfg.method = value;
                } else if (key == "lambda_cycle") cfg.lambda_cycle = detail::parse_double(value, where);
                else if (key == "lambda_iden") cfg.lambda_iden = detail::parse_double(value, where);
                else if (key == "lr_g") cfg.lr_g = detail::parse_double(value, where);
                else if (key == "lr_d") cfg.lr_d = detail::parse_double(value, where);
                else if (key == "lr_n2s") cfg.lr_n2s = detail::parse_double(value, where);
                else if (key == "beta1") cfg.beta1 = detail::parse_double(value, where);
                else if (key == "beta2") cfg.beta2 = detail::parse_double(value, where);
                else if (key == "epochs") cfg.epochs = detail::parse_int(value, where);
                else if (key == "decay_start") cfg.decay_start = detail::parse_int(value, where);
                else if (key == "batch_size") cfg.batch_size = detail::parse_int(value, where);
                else if (key == "patch") cfg.patch = detail::parse_int(value, where);
                else if (key == "delta") cfg.delta = detail::parse_double(value, where);
                else if (key == "checkpoint_every") cfg.checkpoint_every = detail::parse_int(value, where);
                else if (key == "manifest") cfg.manifest = value;
                else throw ConfigError(where + ": unknown key");
            } else {  // eval
                if (key == "data_range") cfg.data_range = detail::parse_double(value, where);
                else if (key == "manifest") cfg.eval_manifest = value;
                else throw ConfigError(where + ": unknown key");
            }
        }
    }
    // surface bad combinations now, before any work starts
    try {
        cfg.train_config(1).validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (cfg.size < 1 || cfg.n_ellipses < 0 || cfg.train_slices < 1 || cfg.test_slices < 1)
        throw ConfigError(origin + ": [data] extents and slice counts must be positive");
    if (!(cfg.data_range > 0.0)) throw ConfigError(origin + ": [eval] data_range must be > 0");
    return cfg;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg, std::uint64_t seed) {
    const std::string canon = cfg.canonical_text() + "seed = " + std::to_string(seed) + "\n";
    return fnv1a64(canon);
}

// ---------------------------------------------------------------------------
// Sweep specifications: an optional [sweep] section naming the base config,
// then one section per named configuration.

struct SweepRow {
    std::string name;
    bool has_arch = false;
    GeneratorVariant arch = GeneratorVariant::standard_unet;
    bool has_lambda_cycle = false;
    double lambda_cycle = 0.0;
    bool has_lambda_iden = false;
    double lambda_iden = 0.0;
    bool has_ngf = false;
    int ngf = 0;
    bool has_ndf = false;
    int ndf = 0;

    ExperimentConfig apply(ExperimentConfig base) const {
        if (has_arch) base.arch = arch;
        if (has_lambda_cycle) base.lambda_cycle = lambda_cycle;
        if (has_lambda_iden) base.lambda_iden = lambda_iden;
        if (has_ngf) base.ngf = ngf;
        if (has_ndf) base.ndf = ndf;
        return base;
    }
};

struct SweepSpec {
    std::string base_config_path;  // may be empty: defaults apply
    std::vector<SweepRow> rows;

    static SweepSpec from_file(const std::string& path) {
        const RawConfig raw = parse_sectioned_file(path);
        SweepSpec spec;
        for (const auto& section : raw.sections) {
            if (section.name == "sweep") {
                for (const auto& [key, value] : section.entries) {
                    if (key == "base") spec.base_config_path = value;
                    else throw ConfigError(path + ": [sweep] unknown key '" + key + "'");
                }
                continue;
            }
            SweepRow row;
            row.name = section.name;
            for (const auto& [key, value] : section.entries) {
                const std::string where = path + ": [" + section.name + "] " + key;
                if (key == "architecture") {
                    row.arch = parse_variant(value);
                    row.has_arch = true;
                } else if (key == "lambda_cycle") {
                    row.lambda_cycle = detail::parse_double(value, where);
                    row.has_lambda_cycle = true;
                } else if (key == "lambda_iden") {
                    row.lambda_iden = detail::parse_double(value, where);
                    row.has_lambda_iden = true;
                } else if (key == "ngf") {
                    row.ngf = detail::parse_int(value, where);
                    row.has_ngf = true;
                } else if (key == "ndf") {
                    row.ndf = detail::parse_int(value, where);
                    row.has_ndf = true;
                } else {
                    throw ConfigError(where + ": unknown key");
                }
            }
            spec.rows.push_back(row);
        }
        if (spec.rows.empty()) throw ConfigError(path + ": sweep spec has no configurations");
        return spec;
    }
};

}  // namespace dnl
