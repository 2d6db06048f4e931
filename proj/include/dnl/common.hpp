#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dnl {

/// Precondition or shape-contract failure. Indicates a caller bug, not bad data.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

/// Non-finite value or other numeric failure detected at runtime.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class IoErrorKind {
    missing_file,
    malformed_header,
    extent_mismatch,
    malformed_manifest,
    write_failed,
};

/// File/format failure with a machine-checkable kind.
class IoError : public std::runtime_error {
public:
    IoError(IoErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    IoErrorKind kind() const { return kind_; }

private:
    IoErrorKind kind_;
};

/// Configuration file problem (unknown key, bad value, missing section).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Checkpoint incompatible with the requested evaluation (wrong method or noise model).
class MismatchError : public std::runtime_error {
public:
    explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Seeding

/// splitmix64 step; the fixed seed-mixing function used everywhere a derived
/// seed is needed (per-item noise seeds, per-epoch shuffles, weight init).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive a child seed from a parent seed and a stream tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
    return mix_seed(mix_seed(seed, tag_a), tag_b);
}

// ---------------------------------------------------------------------------
// Hashing (run-directory addressing, determinism tests)

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Worker threads

/// Worker-thread cap: DNL_THREADS env var, else hardware concurrency.
inline int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("DNL_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<int>(v);
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }();
    return cached;
}

/// Run fn(begin, end) over disjoint index ranges covering [0, total).
/// Each index is processed by exactly one worker, so results never depend on
/// the thread count. `grain` is the minimum work per thread.
inline void parallel_for(std::size_t total, const std::function<void(std::size_t, std::size_t)>& fn,
                         std::size_t grain = 1) {
    if (total == 0) return;
    const std::size_t want = (total + grain - 1) / grain;
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(max_threads()), want);
    if (nthreads <= 1) {
        fn(0, total);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads - 1);
    const std::size_t chunk = (total + nthreads - 1) / nthreads;
    for (std::size_t t = 1; t < nthreads; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(total, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(0, std::min(total, chunk));
    for (auto& th : pool) th.join();
}

}  // namespace dnl
