#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

/// Exponential-family observation model. `rho` and `phi` are the power and
/// dispersion parameters indexing the Tweedie special cases:
/// Gaussian (rho 0, phi sigma^2), Poisson (rho 1, phi zeta),
/// Gamma(alpha, alpha) (rho 2, phi 1/alpha).
class NoiseModel {
public:
    enum class Kind { gaussian, poisson, gamma };

    static NoiseModel gaussian(double sigma2) {
        if (!(sigma2 > 0.0) && sigma2 != 0.0)
            throw ContractViolation("NoiseModel: gaussian sigma2 must be >= 0");
        return NoiseModel(Kind::gaussian, sigma2);
    }

    static NoiseModel poisson(double zeta) {
        if (!(zeta > 0.0)) throw ContractViolation("NoiseModel: poisson zeta must be > 0");
        return NoiseModel(Kind::poisson, zeta);
    }

    static NoiseModel gamma(double alpha) {
        // Tweedie's Gamma denominator is (alpha-1) - y*score; alpha must exceed 1
        // for the zero-score case to be well defined.
        if (!(alpha > 1.0)) throw ContractViolation("NoiseModel: gamma alpha must be > 1");
        return NoiseModel(Kind::gamma, alpha);
    }

    Kind kind() const { return kind_; }
    double param() const { return param_; }

    double sigma2() const { return require(Kind::gaussian, "sigma2"); }
    double zeta() const { return require(Kind::poisson, "zeta"); }
    double alpha() const { return require(Kind::gamma, "alpha"); }

    int rho() const {
        switch (kind_) {
            case Kind::gaussian: return 0;
            case Kind::poisson: return 1;
            case Kind::gamma: return 2;
        }
        throw ContractViolation("NoiseModel: bad kind");
    }

    double phi() const {
        switch (kind_) {
            case Kind::gaussian: return param_;
            case Kind::poisson: return param_;
            case Kind::gamma: return 1.0 / param_;
        }
        throw ContractViolation("NoiseModel: bad kind");
    }

    /// Descriptor grammar: gaussian:<sigma2> | poisson:<zeta> | gamma:<alpha>.
    static NoiseModel parse(const std::string& descriptor) {
        const auto colon = descriptor.find(':');
        if (colon == std::string::npos)
            throw ConfigError("noise descriptor '" + descriptor + "' missing ':'");
        const std::string name = descriptor.substr(0, colon);
        const std::string arg = descriptor.substr(colon + 1);
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(arg, &used);
            if (used != arg.size()) throw std::invalid_argument(arg);
        } catch (const std::exception&) {
            throw ConfigError("noise descriptor '" + descriptor + "' has a malformed parameter");
        }
        try {
            if (name == "gaussian") return gaussian(v);
            if (name == "poisson") return poisson(v);
            if (name == "gamma") return gamma(v);
        } catch (const ContractViolation& e) {
            throw ConfigError(std::string("noise descriptor out of range: ") + e.what());
        }
        throw ConfigError("unknown noise kind '" + name + "' (expected gaussian|poisson|gamma)");
    }

    std::string descriptor() const {
        std::ostringstream os;
        switch (kind_) {
            case Kind::gaussian: os << "gaussian:"; break;
            case Kind::poisson: os << "poisson:"; break;
            case Kind::gamma: os << "gamma:"; break;
        }
        os.precision(17);
        os << param_;
        return os.str();
    }

    std::string kind_name() const {
        switch (kind_) {
            case Kind::gaussian: return "gaussian";
            case Kind::poisson: return "poisson";
            case Kind::gamma: return "gamma";
        }
        return "?";
    }

private:
    NoiseModel(Kind k, double p) : kind_(k), param_(p) {}
    double require(Kind k, const char* what) const {
        if (kind_ != k) throw ContractViolation(std::string("NoiseModel: ") + what + " requested from " + kind_name());
        return param_;
    }

    Kind kind_;
    double param_;
};

// ---------------------------------------------------------------------------
// Synthetic phantoms

/// Recipe for one synthetic slice: overlapping random ellipses with sharp
/// boundaries on a uniform background, clamped to [lo, hi].
struct PhantomSpec {
    int size = 64;
    int n_ellipses = 12;
    double lo = 0.0;
    double hi = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (size < 1) throw ContractViolation("PhantomSpec: size must be >= 1");
        if (n_ellipses < 0) throw ContractViolation("PhantomSpec: n_ellipses must be >= 0");
        if (!(lo < hi)) throw ContractViolation("PhantomSpec: intensity range empty");
    }
};

/// Deterministic 1x1xSxS clean slice.
template <typename T>
TensorPtr<T> synth_phantom(const PhantomSpec& spec) {
    spec.validate();
    const int S = spec.size;
    std::vector<double> img(static_cast<std::size_t>(S) * S, spec.lo + 0.15 * (spec.hi - spec.lo));
    std::mt19937_64 eng(mix_seed(spec.seed, fnv1a64("phantom")));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int e = 0; e < spec.n_ellipses; ++e) {
        const double cx = (0.15 + 0.7 * unit(eng)) * S;
        const double cy = (0.15 + 0.7 * unit(eng)) * S;
        const double a = (0.05 + 0.30 * unit(eng)) * S;
        const double b = (0.05 + 0.30 * unit(eng)) * S;
        const double theta = unit(eng) * 3.14159265358979323846;
        const double delta = (unit(eng) - 0.5) * 0.7 * (spec.hi - spec.lo);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double u = (dx * ct + dy * st) / a;
                const double v = (-dx * st + dy * ct) / b;
                if (u * u + v * v <= 1.0) img[static_cast<std::size_t>(y) * S + x] += delta;
            }
    }
    std::vector<T> data(img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
        data[i] = static_cast<T>(std::min(spec.hi, std::max(spec.lo, img[i])));
    return Tensor<T>::from_data({1, 1, S, S}, std::move(data));
}

// ---------------------------------------------------------------------------
// Noise injection

/// Draw one noisy realization of a clean slice.
/// Gaussian: x + N(0, sigma2). Poisson: zeta * Poisson(x / zeta), so the
/// variance is roughly zeta * x. Gamma: x * Gamma(alpha, rate alpha)
/// (multiplicative, unit mean). Poisson/Gamma require non-negative input.
template <typename T>
TensorPtr<T> inject_noise(const TensorPtr<T>& clean, const NoiseModel& model, std::uint64_t seed) {
    std::mt19937_64 eng(mix_seed(seed, fnv1a64("noise")));
    auto out = clean->detach();
    auto& d = out->data();
    switch (model.kind()) {
        case NoiseModel::Kind::gaussian: {
            const double sigma = std::sqrt(model.sigma2());
            if (sigma == 0.0) return out;
            std::normal_distribution<double> dist(0.0, sigma);
            for (auto& v : d) v = static_cast<T>(static_cast<double>(v) + dist(eng));
            break;
        }
        case NoiseModel::Kind::poisson: {
            const double zeta = model.zeta();
            for (auto& v : d) {
                const double x = static_cast<double>(v);
                if (x < 0.0)
                    throw ContractViolation("inject_noise: poisson requires non-negative input, got " +
                                            std::to_string(x));
                if (x == 0.0) {
                    v = T(0);
                    continue;
                }
                std::poisson_distribution<long> dist(x / zeta);
                v = static_cast<T>(zeta * static_cast<double>(dist(eng)));
            }
            break;
        }
        case NoiseModel::Kind::gamma: {
            const double alpha = model.alpha();
            std::gamma_distribution<double> dist(alpha, 1.0 / alpha);
            for (auto& v : d) {
                const double x = static_cast<double>(v);
                if (x < 0.0)
                    throw ContractViolation("inject_noise: gamma requires non-negative input, got " +
                                            std::to_string(x));
                v = static_cast<T>(x * dist(eng));
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patch sampling

/// Uniformly random axis-aligned crop of an NCHW slice, deterministic in seed.
template <typename T>
TensorPtr<T> sample_patch(const TensorPtr<T>& slice, int patch, std::uint64_t seed) {
    if (slice->rank() != 4)
        throw ContractViolation("sample_patch: expected NCHW slice, got " + shape_str(slice->shape()));
    const int N = slice->dim(0), C = slice->dim(1), H = slice->dim(2), W = slice->dim(3);
    if (patch < 1 || patch > H || patch > W)
        throw ContractViolation("sample_patch: patch " + std::to_string(patch) + " does not fit in " +
                                std::to_string(H) + "x" + std::to_string(W));
    std::mt19937_64 eng(mix_seed(seed, fnv1a64("patch")));
    std::uniform_int_distribution<int> dh(0, H - patch), dw(0, W - patch);
    const int oy = dh(eng), ox = dw(eng);
    auto out = Tensor<T>::zeros({N, C, patch, patch});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < patch; ++y) {
                const T* src = slice->data().data() +
                               ((static_cast<std::size_t>(n) * C + c) * H + (oy + y)) * W + ox;
                T* dst = out->data().data() + ((static_cast<std::size_t>(n) * C + c) * patch + y) * patch;
                std::copy_n(src, patch, dst);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset manifests
//
// Line-oriented text, one record per line: <role>\t<path>\t<noise-descriptor>.
// Reserved roles `split` and `unpaired` carry manifest metadata in the path
// column (descriptor "-"); data roles are `clean` and `noisy`, in alternating
// order, one entry per clean/noisy line pair. Paths are stored relative to
// the manifest file.

enum class Split { train, test };

struct ManifestEntry {
    std::string clean_path;
    std::string noisy_path;
    NoiseModel model = NoiseModel::gaussian(0.0);
};

class DatasetManifest {
public:
    DatasetManifest(Split split, bool unpaired) : split_(split), unpaired_(unpaired) {}

    Split split() const { return split_; }
    bool unpaired() const { return unpaired_; }
    std::size_t size() const { return entries_.size(); }

    void add(ManifestEntry e) { entries_.push_back(std::move(e)); }

    /// Pairings of an unpaired manifest are off limits to consumers; trainers
    /// must go through clean_paths()/noisy_paths() instead.
    const std::vector<ManifestEntry>& pairs() const {
        if (unpaired_)
            throw ContractViolation("DatasetManifest: pairings are inaccessible on an unpaired manifest");
        return entries_;
    }

    std::vector<std::string> clean_paths() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.clean_path);
        return out;
    }

    std::vector<std::string> noisy_paths() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.noisy_path);
        return out;
    }

    NoiseModel noise_model() const {
        if (entries_.empty()) throw ContractViolation("DatasetManifest: empty manifest has no noise model");
        return entries_.front().model;
    }

    /// Every referenced file must exist.
    void validate_files() const {
        for (const auto& e : entries_) {
            for (const auto& p : {e.clean_path, e.noisy_path})
                if (!std::filesystem::exists(p))
                    throw IoError(IoErrorKind::missing_file, "manifest references absent file: " + p);
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError(IoErrorKind::write_failed, "cannot write manifest: " + path);
        const auto dir = std::filesystem::path(path).parent_path();
        out << "split\t" << (split_ == Split::train ? "train" : "test") << "\t-\n";
        out << "unpaired\t" << (unpaired_ ? 1 : 0) << "\t-\n";
        for (const auto& e : entries_) {
            out << "clean\t" << std::filesystem::relative(e.clean_path, dir.empty() ? "." : dir).generic_string()
                << "\t" << e.model.descriptor() << "\n";
            out << "noisy\t" << std::filesystem::relative(e.noisy_path, dir.empty() ? "." : dir).generic_string()
                << "\t" << e.model.descriptor() << "\n";
        }
        if (!out) throw IoError(IoErrorKind::write_failed, "write failed: " + path);
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError(IoErrorKind::missing_file, "cannot open manifest: " + path);
        const auto dir = std::filesystem::path(path).parent_path();
        auto fail = [&path](int line_no, const std::string& why) -> void {
            throw IoError(IoErrorKind::malformed_manifest,
                          path + ":" + std::to_string(line_no) + ": " + why);
        };
        bool have_split = false, have_unpaired = false;
        Split split = Split::train;
        bool unpaired = false;
        std::vector<ManifestEntry> entries;
        std::string pending_clean;
        bool have_pending = false;
        NoiseModel pending_model = NoiseModel::gaussian(0.0);

        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            const auto t1 = line.find('\t');
            const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
            if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
                fail(line_no, "expected exactly three tab-separated fields");
            const std::string role = line.substr(0, t1);
            const std::string value = line.substr(t1 + 1, t2 - t1 - 1);
            const std::string desc = line.substr(t2 + 1);
            if (role == "split") {
                if (value == "train") split = Split::train;
                else if (value == "test") split = Split::test;
                else fail(line_no, "split must be train or test, got '" + value + "'");
                have_split = true;
            } else if (role == "unpaired") {
                if (value == "0") unpaired = false;
                else if (value == "1") unpaired = true;
                else fail(line_no, "unpaired must be 0 or 1, got '" + value + "'");
                have_unpaired = true;
            } else if (role == "clean") {
                if (have_pending) fail(line_no, "clean line without a matching noisy line before it");
                try {
                    pending_model = NoiseModel::parse(desc);
                } catch (const ConfigError& e) {
                    fail(line_no, e.what());
                }
                pending_clean = (dir / value).generic_string();
                have_pending = true;
            } else if (role == "noisy") {
                if (!have_pending) fail(line_no, "noisy line without a preceding clean line");
                NoiseModel m = NoiseModel::gaussian(0.0);
                try {
                    m = NoiseModel::parse(desc);
                } catch (const ConfigError& e) {
                    fail(line_no, e.what());
                }
                if (m.descriptor() != pending_model.descriptor())
                    fail(line_no, "noisy descriptor differs from its clean line");
                entries.push_back(ManifestEntry{pending_clean, (dir / value).generic_string(), m});
                have_pending = false;
            } else {
                fail(line_no, "unknown role '" + role + "'");
            }
        }
        if (have_pending) fail(line_no, "dangling clean line at end of manifest");
        if (!have_split) fail(line_no, "missing split record");
        if (!have_unpaired) fail(line_no, "missing unpaired record");
        DatasetManifest m(split, unpaired);
        m.entries_ = std::move(entries);
        return m;
    }

private:
    Split split_;
    bool unpaired_;
    std::vector<ManifestEntry> entries_;
};

}  // namespace dnl
