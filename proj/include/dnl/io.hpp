#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

// ---------------------------------------------------------------------------
// RTF1 tensor files: "RTF1" magic, u32 little-endian rank, rank u32 extents,
// then raw little-endian 32-bit floats. Round trips are bit-exact.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string origin)
        : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint32_t u32() {
        if (pos_ + 4 > bytes_.size()) fail("truncated");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    std::string raw(std::size_t n) {
        if (pos_ + n > bytes_.size()) fail("truncated");
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t pos() const { return pos_; }
    std::size_t size() const { return bytes_.size(); }

    [[noreturn]] void fail(const std::string& why) const {
        throw IoError(IoErrorKind::malformed_header, origin_ + ": " + why);
    }

private:
    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorKind::missing_file, "cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrorKind::write_failed, "cannot open file for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(IoErrorKind::write_failed, "write failed: " + path);
}

inline std::uint32_t f32_bits(float v) {
    std::uint32_t b;
    std::memcpy(&b, &v, 4);
    return b;
}

inline float bits_f32(std::uint32_t b) {
    float v;
    std::memcpy(&v, &b, 4);
    return v;
}

template <typename T>
std::string rtf1_bytes(const Tensor<T>& t) {
    std::string out;
    out.reserve(8 + 4 * t.rank() + 4 * t.numel());
    out += "RTF1";
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (T v : t.data()) put_u32(out, f32_bits(static_cast<float>(v)));
    return out;
}

template <typename T>
TensorPtr<T> rtf1_parse(ByteReader& r) {
    if (r.raw(4) != "RTF1") r.fail("bad magic, expected RTF1");
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("unreasonable rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (auto& e : shape) {
        const std::uint32_t v = r.u32();
        if (v == 0 || v > (1u << 24)) r.fail("bad extent " + std::to_string(v));
        e = static_cast<int>(v);
        numel *= v;
    }
    std::vector<T> data(numel);
    for (auto& v : data) v = static_cast<T>(bits_f32(r.u32()));
    return Tensor<T>::from_data(std::move(shape), std::move(data));
}

}  // namespace detail

template <typename T>
void save_rtf1(const std::string& path, const Tensor<T>& t) {
    detail::write_file_bytes(path, detail::rtf1_bytes(t));
}

template <typename T>
void save_rtf1(const std::string& path, const TensorPtr<T>& t) {
    save_rtf1(path, *t);
}

template <typename T>
TensorPtr<T> load_rtf1(const std::string& path) {
    const std::string bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes, path);
    auto t = detail::rtf1_parse<T>(r);
    if (r.pos() != r.size())
        throw IoError(IoErrorKind::extent_mismatch,
                      path + ": " + std::to_string(r.size() - r.pos()) + " trailing bytes after tensor payload");
    return t;
}

// ---------------------------------------------------------------------------
// Checkpoints: "DNLC" magic + version, a manifest of (name, shape, offset)
// entries, then concatenated RTF1 payloads. Entry order is preserved.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, TensorPtr<T>>>;

template <typename T>
void save_checkpoint(const std::string& path, const NamedTensors<T>& entries) {
    std::string payload;
    std::vector<std::uint64_t> offsets;
    offsets.reserve(entries.size());
    for (const auto& [name, tensor] : entries) {
        offsets.push_back(payload.size());
        payload += detail::rtf1_bytes(*tensor);
    }
    std::string out;
    out += "DNLC";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, tensor] = entries[i];
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<std::uint32_t>(tensor->rank()));
        for (int e : tensor->shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
        detail::put_u64(out, offsets[i]);
    }
    out += payload;
    detail::write_file_bytes(path, out);
}

template <typename T>
NamedTensors<T> load_checkpoint(const std::string& path) {
    const std::string bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes, path);
    if (r.raw(4) != "DNLC") r.fail("bad magic, expected DNLC");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t n = r.u32();
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::uint64_t offset;
    };
    std::vector<Entry> manifest(n);
    for (auto& e : manifest) {
        const std::uint32_t name_len = r.u32();
        e.name = r.raw(name_len);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) r.fail("bad rank for entry " + e.name);
        e.shape.resize(rank);
        for (auto& ext : e.shape) ext = static_cast<int>(r.u32());
        e.offset = r.u64();
    }
    const std::size_t payload_start = r.pos();
    NamedTensors<T> out;
    out.reserve(n);
    for (const auto& e : manifest) {
        const std::size_t at = payload_start + e.offset;
        if (at > bytes.size()) r.fail("entry " + e.name + " offset past end of file");
        std::string sub = bytes.substr(at);
        detail::ByteReader pr(sub, path + " entry " + e.name);
        auto t = detail::rtf1_parse<T>(pr);
        if (t->shape() != e.shape)
            throw IoError(IoErrorKind::extent_mismatch,
                          path + ": entry " + e.name + " payload shape " + shape_str(t->shape()) +
                              " does not match manifest " + shape_str(e.shape));
        out.emplace_back(e.name, std::move(t));
    }
    return out;
}

}  // namespace dnl
