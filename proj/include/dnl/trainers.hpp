#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/data.hpp"
#include "dnl/io.hpp"
#include "dnl/losses.hpp"
#include "dnl/nn.hpp"
#include "dnl/optim.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

/// Everything both trainers need: loss weights, architecture widths, optimizer
/// settings, schedule, batch geometry, the sigma_a law scale for score
/// learning, and the observation model assumed at inference.
struct TrainConfig {
    GeneratorVariant arch = GeneratorVariant::standard_unet;
    double lambda_cycle = 30.0;
    double lambda_iden = 2.0;
    int ngf = 16;
    int ndf = 16;
    int depth = 4;
    int disc_layers = 4;
    int disc_kernel = 4;
    double lr_g = 1e-4;
    double lr_d = 2e-4;
    double lr_n2s = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int epochs = 100;
    int decay_start = 100;
    int batch_size = 4;
    int patch = 64;
    double delta = 0.1;  // std of the sigma_a ~ N(0, delta^2) law
    NoiseModel noise = NoiseModel::gaussian(2.5e-3);
    std::uint64_t seed = 1;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only

    void validate() const {
        if (lr_g <= 0.0 || lr_d <= 0.0 || lr_n2s <= 0.0)
            throw ContractViolation("TrainConfig: learning rates must be > 0");
        if (epochs < 1) throw ContractViolation("TrainConfig: epochs must be >= 1");
        if (decay_start < 0 || decay_start > epochs)
            throw ContractViolation("TrainConfig: decay_start must lie in [0, epochs]");
        if (batch_size < 1) throw ContractViolation("TrainConfig: batch_size must be >= 1");
        if (patch < 1) throw ContractViolation("TrainConfig: patch must be >= 1");
        if (!(delta >= 0.0)) throw ContractViolation("TrainConfig: delta must be >= 0");
        if (checkpoint_every < 0) throw ContractViolation("TrainConfig: checkpoint_every must be >= 0");
        if (ngf < 1 || ndf < 1 || depth < 1) throw ContractViolation("TrainConfig: ngf/ndf/depth must be >= 1");
        if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
            throw ContractViolation("TrainConfig: beta1/beta2 must lie in (0,1)");
    }

    GeneratorConfig generator_config(bool score_mode = false) const {
        GeneratorConfig g;
        g.variant = arch;
        g.ngf = ngf;
        g.depth = depth;
        g.in_channels = 1;
        g.out_channels = 1;
        g.score_mode = score_mode;
        return g;
    }

    DiscriminatorConfig discriminator_config() const {
        DiscriminatorConfig d;
        d.ndf = ndf;
        d.n_layers = disc_layers;
        d.kernel = disc_kernel;
        d.in_channels = 1;
        return d;
    }
};

/// One epoch of averaged loss components plus the learning rate in effect.
struct EpochRow {
    int epoch = 0;  // 1-based in reports
    double lr = 0.0;
    std::vector<double> values;
};

inline const std::vector<std::string>& cyclegan_loss_columns() {
    static const std::vector<std::string> cols = {"adv_f", "adv_q", "cyc_f", "cyc_q",
                                                  "idn_f", "idn_q", "d_f",   "d_q"};
    return cols;
}

inline const std::vector<std::string>& n2s_loss_columns() {
    static const std::vector<std::string> cols = {"loss"};
    return cols;
}

struct CycleStepLosses {
    double adv_f = 0, adv_q = 0, cyc_f = 0, cyc_q = 0, idn_f = 0, idn_q = 0, d_f = 0, d_q = 0;
};

template <typename T>
struct CycleGanState {
    ModelParams<T> g_f2q, g_q2f, d_f, d_q;
    AdamState<T> opt_g_f2q, opt_g_q2f, opt_d_f, opt_d_q;
    int epochs_done = 0;
    std::vector<EpochRow> history;
};

template <typename T>
struct N2sState {
    ModelParams<T> rtheta;
    AdamState<T> opt;
    int epochs_done = 0;
    std::vector<EpochRow> history;
};

// ---------------------------------------------------------------------------
// State construction

template <typename T>
CycleGanState<T> init_cyclegan_state(const TrainConfig& cfg) {
    cfg.validate();
    CycleGanState<T> s;
    s.g_f2q = build_generator<T>(cfg.generator_config(), mix_seed(cfg.seed, fnv1a64("g_f2q")));
    s.g_q2f = build_generator<T>(cfg.generator_config(), mix_seed(cfg.seed, fnv1a64("g_q2f")));
    s.d_f = build_discriminator<T>(cfg.discriminator_config(), mix_seed(cfg.seed, fnv1a64("d_f")));
    s.d_q = build_discriminator<T>(cfg.discriminator_config(), mix_seed(cfg.seed, fnv1a64("d_q")));
    for (AdamState<T>* o : {&s.opt_g_f2q, &s.opt_g_q2f, &s.opt_d_f, &s.opt_d_q}) {
        o->beta1 = cfg.beta1;
        o->beta2 = cfg.beta2;
    }
    return s;
}

template <typename T>
N2sState<T> init_n2s_state(const TrainConfig& cfg) {
    cfg.validate();
    N2sState<T> s;
    s.rtheta = build_generator<T>(cfg.generator_config(true), mix_seed(cfg.seed, fnv1a64("rtheta")));
    s.opt.beta1 = cfg.beta1;
    s.opt.beta2 = cfg.beta2;
    return s;
}

// ---------------------------------------------------------------------------
// Steps

namespace detail {

inline void check_component(double v, const char* component) {
    if (!std::isfinite(v)) throw NumericError(std::string("training aborted: loss component '") + component +
                                              "' is non-finite");
}

}  // namespace detail

/// One optimization step of the translation trainers: the generator pair is
/// updated first on the full objective, then both discriminators on detached
/// fakes. Reported d_f/d_q are the raw least-squares discriminator losses;
/// the halving enters the update objective only.
template <typename T>
CycleStepLosses cyclegan_step(CycleGanState<T>& state, const TensorPtr<T>& batch_f, const TensorPtr<T>& batch_q,
                              const TrainConfig& cfg, double lr_g, double lr_d) {
    if (batch_f->shape() != batch_q->shape())
        throw ContractViolation("cyclegan_step: domain batches must share one patch shape, got " +
                                shape_str(batch_f->shape()) + " vs " + shape_str(batch_q->shape()));
    const auto gcfg = cfg.generator_config();
    const auto dcfg = cfg.discriminator_config();
    const LossWeights w{cfg.lambda_cycle, cfg.lambda_iden};

    // generator pass
    auto fake_q = generator_forward(state.g_f2q, gcfg, batch_f);
    auto fake_f = generator_forward(state.g_q2f, gcfg, batch_q);
    auto adv_f = lsgan_g_loss(discriminator_forward(state.d_f, dcfg, fake_f));
    auto adv_q = lsgan_g_loss(discriminator_forward(state.d_q, dcfg, fake_q));
    auto cyc_f = l1_loss(generator_forward(state.g_q2f, gcfg, fake_q), batch_f);
    auto cyc_q = l1_loss(generator_forward(state.g_f2q, gcfg, fake_f), batch_q);
    auto idn_f = l1_loss(generator_forward(state.g_q2f, gcfg, batch_f), batch_f);
    auto idn_q = l1_loss(generator_forward(state.g_f2q, gcfg, batch_q), batch_q);

    CycleStepLosses out;
    out.adv_f = static_cast<double>(adv_f->value());
    out.adv_q = static_cast<double>(adv_q->value());
    out.cyc_f = static_cast<double>(cyc_f->value());
    out.cyc_q = static_cast<double>(cyc_q->value());
    out.idn_f = static_cast<double>(idn_f->value());
    out.idn_q = static_cast<double>(idn_q->value());
    detail::check_component(out.adv_f, "adv_f");
    detail::check_component(out.adv_q, "adv_q");
    detail::check_component(out.cyc_f, "cyc_f");
    detail::check_component(out.cyc_q, "cyc_q");
    detail::check_component(out.idn_f, "idn_f");
    detail::check_component(out.idn_q, "idn_q");

    auto total_g = generator_total(adv_f, adv_q, cyc_f, cyc_q, idn_f, idn_q, w);
    state.g_f2q.zero_grad();
    state.g_q2f.zero_grad();
    state.d_f.zero_grad();
    state.d_q.zero_grad();
    backward(total_g);
    adam_step(state.g_f2q.tensors(), state.opt_g_f2q, lr_g);
    adam_step(state.g_q2f.tensors(), state.opt_g_q2f, lr_g);

    // discriminator pass on detached fakes
    auto d_f_loss = lsgan_d_loss(discriminator_forward(state.d_f, dcfg, batch_f),
                                 discriminator_forward(state.d_f, dcfg, fake_f->detach()));
    auto d_q_loss = lsgan_d_loss(discriminator_forward(state.d_q, dcfg, batch_q),
                                 discriminator_forward(state.d_q, dcfg, fake_q->detach()));
    out.d_f = static_cast<double>(d_f_loss->value());
    out.d_q = static_cast<double>(d_q_loss->value());
    detail::check_component(out.d_f, "d_f");
    detail::check_component(out.d_q, "d_q");

    auto total_d = add(discriminator_total(d_f_loss), discriminator_total(d_q_loss));
    state.d_f.zero_grad();
    state.d_q.zero_grad();
    backward(total_d);
    adam_step(state.d_f.tensors(), state.opt_d_f, lr_d);
    adam_step(state.d_q.tensors(), state.opt_d_q, lr_d);
    return out;
}

/// One score-learning step: perturb the batch with u ~ N(0,I) scaled by a
/// per-batch sigma_a ~ N(0, delta^2), run the score network, take one Adam
/// step on the AR-DAE objective. Returns the loss value.
template <typename T>
double n2s_step(N2sState<T>& state, const TensorPtr<T>& batch_y, const TrainConfig& cfg, std::mt19937_64& eng,
                double lr) {
    const auto gcfg = cfg.generator_config(true);
    auto u = Tensor<T>::randn(batch_y->shape(), eng);
    double sigma_a = 0.0;
    if (cfg.delta > 0.0) {
        std::normal_distribution<double> dist(0.0, cfg.delta);
        sigma_a = dist(eng);
    }
    auto y_tilde = add(batch_y, scale(u, sigma_a));
    auto r = generator_forward(state.rtheta, gcfg, y_tilde);
    auto loss = ardae_loss(u, sigma_a, r);
    const double v = static_cast<double>(loss->value());
    detail::check_component(v, "ardae");
    state.rtheta.zero_grad();
    backward(loss);
    adam_step(state.rtheta.tensors(), state.opt, lr);
    return v;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

template <typename T>
TensorPtr<T> meta_scalar(double v) {
    return Tensor<T>::from_data({1}, {static_cast<T>(v)});
}

template <typename T>
void push_model(NamedTensors<T>& out, const std::string& prefix, const ModelParams<T>& m) {
    for (std::size_t i = 0; i < m.names().size(); ++i)
        out.emplace_back(prefix + "/" + m.names()[i], m.tensors()[i]);
}

template <typename T>
void push_opt(NamedTensors<T>& out, const std::string& prefix, const AdamState<T>& o, const ModelParams<T>& m) {
    out.emplace_back(prefix + "/t", meta_scalar<T>(static_cast<double>(o.step_count)));
    if (o.first_moment.empty()) return;
    for (std::size_t i = 0; i < m.names().size(); ++i) {
        out.emplace_back(prefix + "/m/" + m.names()[i],
                         Tensor<T>::from_data(m.tensors()[i]->shape(), o.first_moment[i]));
        out.emplace_back(prefix + "/v/" + m.names()[i],
                         Tensor<T>::from_data(m.tensors()[i]->shape(), o.second_moment[i]));
    }
}

template <typename T>
class CheckpointMap {
public:
    explicit CheckpointMap(NamedTensors<T> entries) : entries_(std::move(entries)) {}

    const TensorPtr<T>& at(const std::string& name) const {
        for (const auto& [n, t] : entries_)
            if (n == name) return t;
        throw IoError(IoErrorKind::malformed_header, "checkpoint is missing entry " + name);
    }

    bool has(const std::string& name) const {
        for (const auto& [n, t] : entries_)
            if (n == name) return true;
        return false;
    }

    double scalar(const std::string& name) const { return static_cast<double>(at(name)->value()); }

    void restore_model(const std::string& prefix, ModelParams<T>& m) const {
        for (std::size_t i = 0; i < m.names().size(); ++i) {
            const auto& src = at(prefix + "/" + m.names()[i]);
            if (src->shape() != m.tensors()[i]->shape())
                throw IoError(IoErrorKind::extent_mismatch,
                              "checkpoint entry " + prefix + "/" + m.names()[i] + " has shape " +
                                  shape_str(src->shape()) + ", model expects " +
                                  shape_str(m.tensors()[i]->shape()));
            m.tensors()[i]->data() = src->data();
        }
    }

    void restore_opt(const std::string& prefix, AdamState<T>& o, const ModelParams<T>& m) const {
        o.step_count = static_cast<long>(scalar(prefix + "/t"));
        o.first_moment.clear();
        o.second_moment.clear();
        if (o.step_count == 0) return;
        for (std::size_t i = 0; i < m.names().size(); ++i) {
            o.first_moment.push_back(at(prefix + "/m/" + m.names()[i])->data());
            o.second_moment.push_back(at(prefix + "/v/" + m.names()[i])->data());
        }
    }

private:
    NamedTensors<T> entries_;
};

}  // namespace detail

inline constexpr double kMethodCyclegan = 0.0;
inline constexpr double kMethodN2s = 1.0;

/// Architecture and noise facts a checkpoint carries so evaluation can rebuild
/// the right network and guard against a mismatched Tweedie model.
struct CheckpointInfo {
    int method = 0;  // 0 cyclegan, 1 n2s
    GeneratorVariant arch = GeneratorVariant::standard_unet;
    int ngf = 0, ndf = 0, depth = 0, disc_layers = 0, disc_kernel = 0;
    int epochs_done = 0;
    NoiseModel noise = NoiseModel::gaussian(1.0);
};

namespace detail {

template <typename T>
void push_meta(NamedTensors<T>& out, const TrainConfig& cfg, double method, int epochs_done) {
    out.emplace_back("meta/method", meta_scalar<T>(method));
    out.emplace_back("meta/epoch", meta_scalar<T>(epochs_done));
    out.emplace_back("meta/arch", meta_scalar<T>(static_cast<double>(static_cast<int>(cfg.arch))));
    out.emplace_back("meta/ngf", meta_scalar<T>(cfg.ngf));
    out.emplace_back("meta/ndf", meta_scalar<T>(cfg.ndf));
    out.emplace_back("meta/depth", meta_scalar<T>(cfg.depth));
    out.emplace_back("meta/disc_layers", meta_scalar<T>(cfg.disc_layers));
    out.emplace_back("meta/disc_kernel", meta_scalar<T>(cfg.disc_kernel));
    out.emplace_back("meta/noise_kind", meta_scalar<T>(cfg.noise.rho()));
    out.emplace_back("meta/noise_param", meta_scalar<T>(cfg.noise.param()));
}

template <typename T>
CheckpointInfo read_meta(const CheckpointMap<T>& map) {
    CheckpointInfo info;
    info.method = static_cast<int>(map.scalar("meta/method"));
    info.epochs_done = static_cast<int>(map.scalar("meta/epoch"));
    const int arch = static_cast<int>(map.scalar("meta/arch"));
    if (arch < 0 || arch > 2)
        throw IoError(IoErrorKind::malformed_header, "checkpoint has unknown arch code " + std::to_string(arch));
    info.arch = static_cast<GeneratorVariant>(arch);
    info.ngf = static_cast<int>(map.scalar("meta/ngf"));
    info.ndf = static_cast<int>(map.scalar("meta/ndf"));
    info.depth = static_cast<int>(map.scalar("meta/depth"));
    info.disc_layers = static_cast<int>(map.scalar("meta/disc_layers"));
    info.disc_kernel = static_cast<int>(map.scalar("meta/disc_kernel"));
    const int kind = static_cast<int>(map.scalar("meta/noise_kind"));
    const double param = map.scalar("meta/noise_param");
    switch (kind) {
        case 0: info.noise = NoiseModel::gaussian(param); break;
        case 1: info.noise = NoiseModel::poisson(param); break;
        case 2: info.noise = NoiseModel::gamma(param); break;
        default:
            throw IoError(IoErrorKind::malformed_header,
                          "checkpoint has unknown noise kind " + std::to_string(kind));
    }
    return info;
}

}  // namespace detail

template <typename T>
void save_cyclegan_checkpoint(const std::string& path, const CycleGanState<T>& s, const TrainConfig& cfg) {
    NamedTensors<T> out;
    detail::push_meta(out, cfg, kMethodCyclegan, s.epochs_done);
    detail::push_model(out, "g_f2q", s.g_f2q);
    detail::push_model(out, "g_q2f", s.g_q2f);
    detail::push_model(out, "d_f", s.d_f);
    detail::push_model(out, "d_q", s.d_q);
    detail::push_opt(out, "opt/g_f2q", s.opt_g_f2q, s.g_f2q);
    detail::push_opt(out, "opt/g_q2f", s.opt_g_q2f, s.g_q2f);
    detail::push_opt(out, "opt/d_f", s.opt_d_f, s.d_f);
    detail::push_opt(out, "opt/d_q", s.opt_d_q, s.d_q);
    save_checkpoint(path, out);
}

template <typename T>
void save_n2s_checkpoint(const std::string& path, const N2sState<T>& s, const TrainConfig& cfg) {
    NamedTensors<T> out;
    detail::push_meta(out, cfg, kMethodN2s, s.epochs_done);
    detail::push_model(out, "rtheta", s.rtheta);
    detail::push_opt(out, "opt/rtheta", s.opt, s.rtheta);
    save_checkpoint(path, out);
}

template <typename T>
CheckpointInfo read_checkpoint_info(const std::string& path) {
    detail::CheckpointMap<T> map(load_checkpoint<T>(path));
    return detail::read_meta(map);
}

template <typename T>
void restore_cyclegan_state(const std::string& path, CycleGanState<T>& s, const TrainConfig& cfg) {
    detail::CheckpointMap<T> map(load_checkpoint<T>(path));
    const auto info = detail::read_meta(map);
    if (info.method != 0)
        throw MismatchError("checkpoint " + path + " is not a cyclegan checkpoint");
    if (info.arch != cfg.arch || info.ngf != cfg.ngf || info.ndf != cfg.ndf || info.depth != cfg.depth)
        throw ConfigError("checkpoint " + path + " architecture does not match the configuration");
    map.restore_model("g_f2q", s.g_f2q);
    map.restore_model("g_q2f", s.g_q2f);
    map.restore_model("d_f", s.d_f);
    map.restore_model("d_q", s.d_q);
    map.restore_opt("opt/g_f2q", s.opt_g_f2q, s.g_f2q);
    map.restore_opt("opt/g_q2f", s.opt_g_q2f, s.g_q2f);
    map.restore_opt("opt/d_f", s.opt_d_f, s.d_f);
    map.restore_opt("opt/d_q", s.opt_d_q, s.d_q);
    s.epochs_done = info.epochs_done;
}

template <typename T>
void restore_n2s_state(const std::string& path, N2sState<T>& s, const TrainConfig& cfg) {
    detail::CheckpointMap<T> map(load_checkpoint<T>(path));
    const auto info = detail::read_meta(map);
    if (info.method != 1)
        throw MismatchError("checkpoint " + path + " is not an n2s checkpoint");
    if (info.arch != cfg.arch || info.ngf != cfg.ngf || info.depth != cfg.depth)
        throw ConfigError("checkpoint " + path + " architecture does not match the configuration");
    map.restore_model("rtheta", s.rtheta);
    map.restore_opt("opt/rtheta", s.opt, s.rtheta);
    s.epochs_done = info.epochs_done;
}

// ---------------------------------------------------------------------------
// Epoch loops

namespace detail {

template <typename T>
std::vector<TensorPtr<T>> load_slices(const std::vector<std::string>& paths) {
    std::vector<TensorPtr<T>> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(load_rtf1<T>(p));
    return out;
}

/// Stack B single-image tensors (1,C,H,W) into one (B,C,H,W) batch.
template <typename T>
TensorPtr<T> stack_batch(const std::vector<TensorPtr<T>>& items) {
    const auto& s = items.front()->shape();
    auto out = Tensor<T>::zeros({static_cast<int>(items.size()), s[1], s[2], s[3]});
    const std::size_t stride = items.front()->numel();
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i]->shape() != s)
            throw ContractViolation("stack_batch: mismatched item shapes");
        std::copy_n(items[i]->data().begin(), stride, out->data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

template <typename T>
TensorPtr<T> draw_batch(const std::vector<TensorPtr<T>>& slices, const std::vector<std::size_t>& order,
                        std::size_t step, int batch_size, int patch, std::mt19937_64& eng) {
    std::vector<TensorPtr<T>> items;
    items.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const auto& slice = slices[order[step * static_cast<std::size_t>(batch_size) + static_cast<std::size_t>(i)]];
        items.push_back(sample_patch(slice, patch, eng()));
    }
    return stack_batch(items);
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& eng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), eng);
    return order;
}

/// %.17g prints doubles losslessly, so CSVs are bit-stable across reruns.
inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class EpochCsv {
public:
    EpochCsv(const std::string& path, const std::vector<std::string>& columns) : out_(path, std::ios::trunc) {
        if (!out_) throw IoError(IoErrorKind::write_failed, "cannot write loss log: " + path);
        out_ << "epoch,lr";
        for (const auto& c : columns) out_ << "," << c;
        out_ << "\n";
        out_.flush();
    }

    void append(const EpochRow& row) {
        out_ << row.epoch << "," << fmt_g17(row.lr);
        for (double v : row.values) out_ << "," << fmt_g17(v);
        out_ << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

}  // namespace detail

struct TrainResult {
    std::string final_checkpoint;
    std::vector<EpochRow> reports;
};

/// Unpaired translation training. One pass over min(|F|,|Q|) slices per epoch,
/// with per-epoch shuffles and patch draws derived from (seed, epoch) so a run
/// resumed from an epoch checkpoint continues bit-identically.
template <typename T>
TrainResult train_cyclegan(const TrainConfig& cfg, const DatasetManifest& data, const std::string& run_dir,
                           const std::string& resume_checkpoint = "", bool quiet = false) {
    cfg.validate();
    if (!data.unpaired())
        throw ContractViolation("train_cyclegan: training manifest must be unpaired");
    data.validate_files();
    auto slices_f = detail::load_slices<T>(data.clean_paths());
    auto slices_q = detail::load_slices<T>(data.noisy_paths());
    const std::size_t per_epoch = std::min(slices_f.size(), slices_q.size());
    const std::size_t steps = per_epoch / static_cast<std::size_t>(cfg.batch_size);
    if (steps == 0)
        throw ContractViolation("train_cyclegan: fewer slices than one batch");

    std::filesystem::create_directories(run_dir);
    auto state = init_cyclegan_state<T>(cfg);
    if (!resume_checkpoint.empty()) restore_cyclegan_state(resume_checkpoint, state, cfg);

    detail::EpochCsv csv(run_dir + "/losses.csv", cyclegan_loss_columns());
    const LrSchedule sched_g{cfg.lr_g, cfg.decay_start, cfg.epochs};
    const LrSchedule sched_d{cfg.lr_d, cfg.decay_start, cfg.epochs};

    for (int e = state.epochs_done; e < cfg.epochs; ++e) {
        const double lrg = lr_at(e, sched_g);
        const double lrd = lr_at(e, sched_d);
        std::mt19937_64 eng(mix_seed(cfg.seed, fnv1a64("epoch"), static_cast<std::uint64_t>(e)));
        const auto order_f = detail::shuffled_indices(slices_f.size(), eng);
        const auto order_q = detail::shuffled_indices(slices_q.size(), eng);
        std::vector<double> sums(8, 0.0);
        for (std::size_t s = 0; s < steps; ++s) {
            auto batch_f = detail::draw_batch(slices_f, order_f, s, cfg.batch_size, cfg.patch, eng);
            auto batch_q = detail::draw_batch(slices_q, order_q, s, cfg.batch_size, cfg.patch, eng);
            const auto l = cyclegan_step(state, batch_f, batch_q, cfg, lrg, lrd);
            const double vals[8] = {l.adv_f, l.adv_q, l.cyc_f, l.cyc_q, l.idn_f, l.idn_q, l.d_f, l.d_q};
            for (int i = 0; i < 8; ++i) sums[static_cast<std::size_t>(i)] += vals[i];
        }
        EpochRow row;
        row.epoch = e + 1;
        row.lr = lrg;
        for (double v : sums) row.values.push_back(v / static_cast<double>(steps));
        state.history.push_back(row);
        csv.append(row);
        state.epochs_done = e + 1;
        if (!quiet) {
            std::printf("epoch %d/%d  lr %.3g  cyc %.4f/%.4f  adv %.4f/%.4f  d %.4f/%.4f\n", row.epoch, cfg.epochs,
                        lrg, row.values[2], row.values[3], row.values[0], row.values[1], row.values[6],
                        row.values[7]);
            std::fflush(stdout);
        }
        if (cfg.checkpoint_every > 0 && row.epoch % cfg.checkpoint_every == 0 && row.epoch != cfg.epochs) {
            char name[64];
            std::snprintf(name, sizeof name, "/ckpt_epoch_%04d.dnlc", row.epoch);
            save_cyclegan_checkpoint(run_dir + name, state, cfg);
        }
    }
    const std::string final_path = run_dir + "/final.dnlc";
    save_cyclegan_checkpoint(final_path, state, cfg);
    return TrainResult{final_path, state.history};
}

/// Score-network training on the noisy side of the manifest only.
template <typename T>
TrainResult train_n2s(const TrainConfig& cfg, const DatasetManifest& data, const std::string& run_dir,
                      const std::string& resume_checkpoint = "", bool quiet = false) {
    cfg.validate();
    data.validate_files();
    auto slices = detail::load_slices<T>(data.noisy_paths());
    const std::size_t steps = slices.size() / static_cast<std::size_t>(cfg.batch_size);
    if (steps == 0) throw ContractViolation("train_n2s: fewer slices than one batch");

    std::filesystem::create_directories(run_dir);
    auto state = init_n2s_state<T>(cfg);
    if (!resume_checkpoint.empty()) restore_n2s_state(resume_checkpoint, state, cfg);

    detail::EpochCsv csv(run_dir + "/losses.csv", n2s_loss_columns());
    const LrSchedule sched{cfg.lr_n2s, cfg.decay_start, cfg.epochs};

    for (int e = state.epochs_done; e < cfg.epochs; ++e) {
        const double lr = lr_at(e, sched);
        std::mt19937_64 eng(mix_seed(cfg.seed, fnv1a64("epoch"), static_cast<std::uint64_t>(e)));
        const auto order = detail::shuffled_indices(slices.size(), eng);
        double sum = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            auto batch = detail::draw_batch(slices, order, s, cfg.batch_size, cfg.patch, eng);
            sum += n2s_step(state, batch, cfg, eng, lr);
        }
        EpochRow row;
        row.epoch = e + 1;
        row.lr = lr;
        row.values.push_back(sum / static_cast<double>(steps));
        state.history.push_back(row);
        csv.append(row);
        state.epochs_done = e + 1;
        if (!quiet) {
            std::printf("epoch %d/%d  lr %.3g  loss %.5f\n", row.epoch, cfg.epochs, lr, row.values[0]);
            std::fflush(stdout);
        }
        if (cfg.checkpoint_every > 0 && row.epoch % cfg.checkpoint_every == 0 && row.epoch != cfg.epochs) {
            char name[64];
            std::snprintf(name, sizeof name, "/ckpt_epoch_%04d.dnlc", row.epoch);
            save_n2s_checkpoint(run_dir + name, state, cfg);
        }
    }
    const std::string final_path = run_dir + "/final.dnlc";
    save_n2s_checkpoint(final_path, state, cfg);
    return TrainResult{final_path, state.history};
}

}  // namespace dnl
