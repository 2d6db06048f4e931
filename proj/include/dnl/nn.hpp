#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/ops.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

enum class GeneratorVariant { standard_unet, resunet_plus, attention_unet };

inline std::string variant_name(GeneratorVariant v) {
    switch (v) {
        case GeneratorVariant::standard_unet: return "standard_unet";
        case GeneratorVariant::resunet_plus: return "resunet_plus";
        case GeneratorVariant::attention_unet: return "attention_unet";
    }
    throw ContractViolation("variant_name: unknown generator variant");
}

inline GeneratorVariant parse_variant(const std::string& s) {
    if (s == "standard_unet") return GeneratorVariant::standard_unet;
    if (s == "resunet_plus") return GeneratorVariant::resunet_plus;
    if (s == "attention_unet") return GeneratorVariant::attention_unet;
    throw ConfigError("unknown generator architecture '" + s +
                      "' (expected standard_unet|resunet_plus|attention_unet)");
}

/// Architecture knobs for the U-Net generator family. All variants share the
/// encoder/decoder skeleton; in residual mode the network output is
/// x + branch(x), in score mode it is the branch output alone.
struct GeneratorConfig {
    GeneratorVariant variant = GeneratorVariant::standard_unet;
    int ngf = 64;
    int depth = 4;
    int in_channels = 1;
    int out_channels = 1;
    bool score_mode = false;

    void validate() const {
        if (ngf < 1) throw ContractViolation("GeneratorConfig: ngf must be >= 1");
        if (depth < 1) throw ContractViolation("GeneratorConfig: depth must be >= 1");
        if (in_channels < 1 || out_channels < 1)
            throw ContractViolation("GeneratorConfig: channel counts must be >= 1");
        if (in_channels != out_channels)
            throw ContractViolation("GeneratorConfig: in_channels must equal out_channels for the residual skip");
    }
};

/// PatchGAN discriminator knobs: n_layers convolutions with `kernel` x `kernel`
/// taps, widths ndf, 2*ndf, 4*ndf, 8*ndf (capped at 8*ndf), strides 2 except
/// for the last layer, then a stride-1 single-channel output conv.
struct DiscriminatorConfig {
    int ndf = 64;
    int n_layers = 4;
    int kernel = 4;
    int in_channels = 1;

    void validate() const {
        if (ndf < 1) throw ContractViolation("DiscriminatorConfig: ndf must be >= 1");
        if (n_layers < 1) throw ContractViolation("DiscriminatorConfig: n_layers must be >= 1");
        if (kernel < 1) throw ContractViolation("DiscriminatorConfig: kernel must be >= 1");
    }
};

/// Named parameter set for one model, iterated in insertion order.
template <typename T>
class ModelParams {
public:
    void add(const std::string& name, TensorPtr<T> t) {
        if (index_.count(name)) throw ContractViolation("ModelParams: duplicate parameter name " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        tensors_.push_back(std::move(t));
    }

    const TensorPtr<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractViolation("ModelParams: no parameter named " + name);
        return tensors_[it->second];
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<TensorPtr<T>>& tensors() const { return tensors_; }
    std::size_t size() const { return names_.size(); }

    std::size_t count_values() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t->numel();
        return n;
    }

    void zero_grad() const {
        for (const auto& t : tensors_) t->zero_grad();
    }

    void fill(T value) const {
        for (const auto& t : tensors_)
            std::fill(t->data().begin(), t->data().end(), value);
    }

    ModelParams clone() const {
        ModelParams out;
        for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], tensors_[i]->clone_leaf());
        return out;
    }

    bool values_equal(const ModelParams& other) const {
        if (names_ != other.names_) return false;
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            if (tensors_[i]->data() != other.tensors_[i]->data()) return false;
        return true;
    }

private:
    std::vector<std::string> names_;
    std::vector<TensorPtr<T>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Parameter construction

namespace detail {

inline constexpr double kWeightInitStd = 0.02;
inline constexpr double kLeakySlope = 0.2;

template <typename T>
void add_conv(ModelParams<T>& p, std::mt19937_64& eng, const std::string& prefix, int out_c, int in_c, int k,
              bool bias = true) {
    p.add(prefix + ".w", Tensor<T>::randn({out_c, in_c, k, k}, eng, kWeightInitStd, true));
    if (bias) p.add(prefix + ".b", Tensor<T>::zeros({out_c}, true));
}

template <typename T>
void add_norm(ModelParams<T>& p, const std::string& prefix, int c) {
    p.add(prefix + ".g", Tensor<T>::full({c}, T(1), true));
    p.add(prefix + ".bt", Tensor<T>::zeros({c}, true));
}

inline int level_width(int ngf, int level) { return ngf << level; }

// conv block: conv -> instance norm -> leaky relu; resunet_plus adds a 1x1
// projection of the block input (stride-matched, bias-free).
template <typename T>
void add_block(ModelParams<T>& p, std::mt19937_64& eng, const std::string& prefix, int in_c, int out_c, int k,
               bool local_residual) {
    add_conv(p, eng, prefix + ".conv", out_c, in_c, k);
    add_norm(p, prefix + ".norm", out_c);
    if (local_residual) p.add(prefix + ".proj.w", Tensor<T>::randn({out_c, in_c, 1, 1}, eng, kWeightInitStd, true));
}

template <typename T>
TensorPtr<T> run_block(const ModelParams<T>& p, const std::string& prefix, const TensorPtr<T>& x, int stride,
                       int pad) {
    auto y = conv2d(x, p.at(prefix + ".conv.w"), stride, pad);
    y = add_channel_bias(y, p.at(prefix + ".conv.b"));
    y = instance_norm(y, p.at(prefix + ".norm.g"), p.at(prefix + ".norm.bt"));
    y = leaky_relu(y, kLeakySlope);
    if (p.has(prefix + ".proj.w")) y = add(y, conv2d(x, p.at(prefix + ".proj.w"), stride, 0));
    return y;
}

}  // namespace detail

/// Deterministic parameter set for the configured generator variant.
/// Conv weights ~ N(0, 0.02^2), biases 0, norm gains 1, norm shifts 0.
template <typename T>
ModelParams<T> build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 eng(mix_seed(seed, fnv1a64("generator")));
    const bool res = cfg.variant == GeneratorVariant::resunet_plus;
    const bool attn = cfg.variant == GeneratorVariant::attention_unet;
    ModelParams<T> p;
    detail::add_block(p, eng, "stem", cfg.in_channels, cfg.ngf, 3, res);
    for (int i = 1; i <= cfg.depth; ++i)
        detail::add_block(p, eng, "enc" + std::to_string(i), detail::level_width(cfg.ngf, i - 1),
                          detail::level_width(cfg.ngf, i), 3, res);
    const int wd = detail::level_width(cfg.ngf, cfg.depth);
    detail::add_block(p, eng, "mid", wd, wd, 3, res);
    for (int i = cfg.depth; i >= 1; --i) {
        const int wi = detail::level_width(cfg.ngf, i);
        const int wo = detail::level_width(cfg.ngf, i - 1);
        detail::add_block(p, eng, "dec" + std::to_string(i) + ".up", wi, wo, 3, res);
        if (attn) {
            const int fi = std::max(1, wo / 2);
            const std::string ag = "dec" + std::to_string(i) + ".ag";
            p.add(ag + ".tx.w", Tensor<T>::randn({fi, wo, 1, 1}, eng, detail::kWeightInitStd, true));
            p.add(ag + ".tg.w", Tensor<T>::randn({fi, wo, 1, 1}, eng, detail::kWeightInitStd, true));
            p.add(ag + ".tg.b", Tensor<T>::zeros({fi}, true));
            p.add(ag + ".psi.w", Tensor<T>::randn({1, fi, 1, 1}, eng, detail::kWeightInitStd, true));
            p.add(ag + ".psi.b", Tensor<T>::zeros({1}, true));
        }
        detail::add_block(p, eng, "dec" + std::to_string(i) + ".fuse", 2 * wo, wo, 3, res);
    }
    detail::add_conv(p, eng, "out", cfg.out_channels, cfg.ngf, 3);
    return p;
}

/// Attention gate: sigmoid-bounded coefficients from the gate signal and the
/// skip features (both at the same resolution and width), applied to the skip.
template <typename T>
TensorPtr<T> attention_gate(const TensorPtr<T>& gate_signal, const TensorPtr<T>& skip_features,
                            const ModelParams<T>& p, const std::string& prefix) {
    detail::require_nchw(gate_signal, "attention_gate");
    detail::require_nchw(skip_features, "attention_gate");
    if (gate_signal->shape() != skip_features->shape())
        throw ContractViolation("attention_gate: gate " + shape_str(gate_signal->shape()) + " vs skip " +
                                shape_str(skip_features->shape()));
    auto mixed = add(conv2d(skip_features, p.at(prefix + ".tx.w"), 1, 0),
                     add_channel_bias(conv2d(gate_signal, p.at(prefix + ".tg.w"), 1, 0), p.at(prefix + ".tg.b")));
    auto pre = add_channel_bias(conv2d(leaky_relu(mixed, detail::kLeakySlope), p.at(prefix + ".psi.w"), 1, 0),
                                p.at(prefix + ".psi.b"));
    return mul_channel_broadcast(skip_features, sigmoid(pre));
}

/// Forward pass of the generator. Residual mode returns x + branch(x); score
/// mode returns the branch output alone.
template <typename T>
TensorPtr<T> generator_forward(const ModelParams<T>& p, const GeneratorConfig& cfg, const TensorPtr<T>& x) {
    cfg.validate();
    detail::require_nchw(x, "generator_forward");
    if (x->dim(1) != cfg.in_channels)
        throw ContractViolation("generator_forward: input has " + std::to_string(x->dim(1)) +
                                " channels, config expects " + std::to_string(cfg.in_channels));
    const int div = 1 << cfg.depth;
    if (x->dim(2) % div != 0 || x->dim(3) % div != 0)
        throw ContractViolation("generator_forward: spatial extents " + std::to_string(x->dim(2)) + "x" +
                                std::to_string(x->dim(3)) + " must be divisible by 2^depth = " +
                                std::to_string(div));
    const bool attn = cfg.variant == GeneratorVariant::attention_unet;

    std::vector<TensorPtr<T>> skips;
    skips.reserve(static_cast<std::size_t>(cfg.depth));
    auto cur = detail::run_block(p, "stem", x, 1, 1);
    skips.push_back(cur);
    for (int i = 1; i <= cfg.depth; ++i) {
        cur = detail::run_block(p, "enc" + std::to_string(i), cur, 2, 1);
        if (i < cfg.depth) skips.push_back(cur);
    }
    cur = detail::run_block(p, "mid", cur, 1, 1);
    for (int i = cfg.depth; i >= 1; --i) {
        cur = detail::run_block(p, "dec" + std::to_string(i) + ".up", upsample2x_nearest(cur), 1, 1);
        auto skip = skips[static_cast<std::size_t>(i - 1)];
        if (attn) skip = attention_gate(cur, skip, p, "dec" + std::to_string(i) + ".ag");
        cur = detail::run_block(p, "dec" + std::to_string(i) + ".fuse", concat_channels(cur, skip), 1, 1);
    }
    auto branch = add_channel_bias(conv2d(cur, p.at("out.w"), 1, 1), p.at("out.b"));
    return cfg.score_mode ? branch : add(x, branch);
}

/// Deterministic parameter set for the PatchGAN discriminator.
template <typename T>
ModelParams<T> build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 eng(mix_seed(seed, fnv1a64("discriminator")));
    ModelParams<T> p;
    int in_c = cfg.in_channels;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const int out_c = cfg.ndf * std::min(1 << l, 8);
        detail::add_conv(p, eng, "l" + std::to_string(l) + ".conv", out_c, in_c, cfg.kernel);
        if (l > 0) detail::add_norm(p, "l" + std::to_string(l) + ".norm", out_c);
        in_c = out_c;
    }
    detail::add_conv(p, eng, "out", 1, in_c, cfg.kernel);
    return p;
}

/// Patch score map: unbounded 1-channel output whose spatial extent shrinks
/// with the stride-2 layers (LSGAN consumes the raw values).
template <typename T>
TensorPtr<T> discriminator_forward(const ModelParams<T>& p, const DiscriminatorConfig& cfg, const TensorPtr<T>& x) {
    cfg.validate();
    detail::require_nchw(x, "discriminator_forward");
    const int pad = std::max(0, (cfg.kernel - 1) / 2);
    auto cur = x;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const int stride = l < cfg.n_layers - 1 ? 2 : 1;
        const std::string name = "l" + std::to_string(l);
        const int h = cur->dim(2), w = cur->dim(3);
        if (h + 2 * pad < cfg.kernel || w + 2 * pad < cfg.kernel)
            throw ContractViolation("discriminator_forward: input too small, " + std::to_string(h) + "x" +
                                    std::to_string(w) + " at layer " + std::to_string(l));
        cur = add_channel_bias(conv2d(cur, p.at(name + ".conv.w"), stride, pad), p.at(name + ".conv.b"));
        if (l > 0) cur = instance_norm(cur, p.at(name + ".norm.g"), p.at(name + ".norm.bt"));
        cur = leaky_relu(cur, detail::kLeakySlope);
    }
    if (cur->dim(2) + 2 * pad < cfg.kernel || cur->dim(3) + 2 * pad < cfg.kernel)
        throw ContractViolation("discriminator_forward: input too small for output layer");
    return add_channel_bias(conv2d(cur, p.at("out.w"), 1, pad), p.at("out.b"));
}

}  // namespace dnl
