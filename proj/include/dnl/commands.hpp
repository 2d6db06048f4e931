#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnl/config.hpp"
#include "dnl/data.hpp"
#include "dnl/io.hpp"
#include "dnl/metrics.hpp"
#include "dnl/trainers.hpp"

namespace dnl {

// CLI exit codes, a stable contract for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;   // configuration / IO problem
inline constexpr int kExitNumeric = 3;  // numeric failure (non-finite loss)
inline constexpr int kExitMismatch = 4; // checkpoint vs requested model/noise mismatch

namespace detail {

inline int guarded(const std::function<void()>& fn) {
    try {
        fn();
        return kExitOk;
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

inline std::string join_path(const std::string& a, const std::string& b) {
    return (std::filesystem::path(a) / b).generic_string();
}

inline double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

using TensorF = Tensor<float>;
using TensorPtrF = TensorPtr<float>;

namespace detail {

inline NoiseModel noise_with_level(const NoiseModel& like, double level) {
    switch (like.kind()) {
        case NoiseModel::Kind::gaussian: return NoiseModel::gaussian(level);
        case NoiseModel::Kind::poisson: return NoiseModel::poisson(level);
        // larger alpha means less noise; keep "level up = noisier" by inverting
        case NoiseModel::Kind::gamma: return NoiseModel::gamma(1.0 + 1.0 / level);
    }
    throw ContractViolation("noise_with_level: bad kind");
}

inline double noise_level_of(const NoiseModel& m) {
    if (m.kind() == NoiseModel::Kind::gamma) return 1.0 / (m.alpha() - 1.0);
    return m.param();
}

/// Mean PSNR of a probe corpus at the given noise level (clamped realizations,
/// matching what synth writes to disk).
inline double probe_psnr(const std::vector<TensorPtrF>& probes, const NoiseModel& model, std::uint64_t seed) {
    std::vector<double> vals;
    vals.reserve(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
        auto noisy = clamp01(inject_noise(probes[i], model, mix_seed(seed, fnv1a64("calibrate"), i)));
        vals.push_back(psnr(probes[i], noisy));
    }
    return mean_of(vals);
}

/// Bisection on the log noise level until the probe PSNR hits the target.
inline NoiseModel calibrate_noise(const NoiseModel& like, double target_db, const std::vector<TensorPtrF>& probes,
                                  std::uint64_t seed) {
    double lo = 1e-9, hi = 10.0;  // noisier as level grows
    for (int it = 0; it < 60; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double got = probe_psnr(probes, noise_with_level(like, mid), seed);
        if (got > target_db) lo = mid;  // too clean, raise the level
        else hi = mid;
        if (std::abs(got - target_db) < 0.02) return noise_with_level(like, mid);
    }
    return noise_with_level(like, std::sqrt(lo * hi));
}

}  // namespace detail

/// Generate the synthetic corpus: an unpaired training manifest whose clean
/// and noisy domains come from disjoint phantom populations, plus a paired
/// test manifest for evaluation. Noisy slices are clamped to [0,1] on disk.
inline int cmd_synth(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
                     std::optional<double> calibrate_db = std::nullopt) {
    return detail::guarded([&] {
        auto cfg = ExperimentConfig::from_file(config_path);
        std::filesystem::create_directories(detail::join_path(out_dir, "slices"));

        NoiseModel model = cfg.noise;
        if (calibrate_db) {
            std::vector<TensorPtrF> probes;
            for (int i = 0; i < cfg.test_slices; ++i) {
                PhantomSpec spec{cfg.size, cfg.n_ellipses, 0.0, 1.0, mix_seed(seed, fnv1a64("probe"), static_cast<std::uint64_t>(i))};
                probes.push_back(synth_phantom<float>(spec));
            }
            model = detail::calibrate_noise(model, *calibrate_db, probes, seed);
            std::printf("calibrated noise: %s (target %.2f dB)\n", model.descriptor().c_str(), *calibrate_db);
        }

        auto make_phantom = [&](const char* tag, int i) {
            PhantomSpec spec{cfg.size, cfg.n_ellipses, 0.0, 1.0,
                             mix_seed(seed, fnv1a64(tag), static_cast<std::uint64_t>(i))};
            return synth_phantom<float>(spec);
        };

        // training domains: clean phantoms (F) and independently drawn noisy
        // phantoms (Q) so no pixel-aligned pairing exists even positionally
        DatasetManifest train(Split::train, /*unpaired=*/true);
        for (int i = 0; i < cfg.train_slices; ++i) {
            auto clean_f = make_phantom("train_f", i);
            auto phantom_q = make_phantom("train_q", i);
            auto noisy_q = clamp01(inject_noise(phantom_q, model, mix_seed(seed, fnv1a64("train_q_noise"),
                                                                           static_cast<std::uint64_t>(i))));
            char fn[64];
            std::snprintf(fn, sizeof fn, "slices/train_f_%04d.rtf1", i);
            const std::string f_path = detail::join_path(out_dir, fn);
            std::snprintf(fn, sizeof fn, "slices/train_q_%04d.rtf1", i);
            const std::string q_path = detail::join_path(out_dir, fn);
            save_rtf1(f_path, clean_f);
            save_rtf1(q_path, noisy_q);
            train.add(ManifestEntry{f_path, q_path, model});
        }
        train.save(detail::join_path(out_dir, "train.tsv"));

        DatasetManifest test(Split::test, /*unpaired=*/false);
        std::vector<double> psnrs, ssims;
        for (int i = 0; i < cfg.test_slices; ++i) {
            auto clean = make_phantom("test", i);
            auto noisy = clamp01(inject_noise(clean, model, mix_seed(seed, fnv1a64("test_noise"),
                                                                     static_cast<std::uint64_t>(i))));
            char fn[64];
            std::snprintf(fn, sizeof fn, "slices/test_clean_%04d.rtf1", i);
            const std::string c_path = detail::join_path(out_dir, fn);
            std::snprintf(fn, sizeof fn, "slices/test_noisy_%04d.rtf1", i);
            const std::string n_path = detail::join_path(out_dir, fn);
            save_rtf1(c_path, clean);
            save_rtf1(n_path, noisy);
            test.add(ManifestEntry{c_path, n_path, model});
            psnrs.push_back(psnr(clean, noisy, cfg.data_range));
            ssims.push_back(ssim(clean, noisy));
        }
        test.save(detail::join_path(out_dir, "test.tsv"));

        std::printf("corpus: %d train slices per domain, %d test pairs, noise %s\n", cfg.train_slices,
                    cfg.test_slices, model.descriptor().c_str());
        std::printf("test input: mean PSNR %.4f dB, mean SSIM %.5f\n", detail::mean_of(psnrs),
                    detail::mean_of(ssims));
    });
}

// ---------------------------------------------------------------------------
// train

/// Content-addressed run directory for a (config, seed) pair.
inline std::string run_dir_for(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_base) {
    const std::string name =
        cfg.method + "-" + hex64(config_hash(cfg, seed)).substr(8) + "-s" + std::to_string(seed);
    return detail::join_path(out_base, name);
}

inline int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out_base,
                     const std::string& method_override = "", const std::string& manifest_override = "",
                     const std::string& resume = "", bool quiet = false) {
    return detail::guarded([&] {
        auto cfg = ExperimentConfig::from_file(config_path);
        if (!method_override.empty()) {
            if (method_override != "cyclegan" && method_override != "n2s")
                throw ConfigError("--method must be cyclegan or n2s, got '" + method_override + "'");
            cfg.method = method_override;
        }
        if (!manifest_override.empty()) cfg.manifest = manifest_override;
        if (cfg.manifest.empty())
            throw ConfigError("no training manifest: set [train] manifest or pass --manifest");
        if (!std::filesystem::exists(cfg.manifest))
            throw IoError(IoErrorKind::missing_file, "training manifest not found: " + cfg.manifest);
        auto manifest = DatasetManifest::load(cfg.manifest);

        const std::string run_dir = run_dir_for(cfg, seed, out_base);
        if (std::filesystem::exists(run_dir) && resume.empty())
            throw ConfigError("run directory already exists (content-addressed; refusing to overwrite): " +
                              run_dir);
        std::filesystem::create_directories(run_dir);
        {
            std::ofstream snap(detail::join_path(run_dir, "config.snapshot"));
            snap << cfg.canonical_text() << "seed = " << seed << "\n";
        }

        const TrainConfig tcfg = cfg.train_config(seed);
        TrainResult result;
        if (cfg.method == "cyclegan") {
            result = train_cyclegan<float>(tcfg, manifest, run_dir, resume, quiet);
        } else {
            result = train_n2s<float>(tcfg, manifest, run_dir, resume, quiet);
        }
        std::printf("run dir: %s\nfinal checkpoint: %s\n", run_dir.c_str(), result.final_checkpoint.c_str());
    });
}

// ---------------------------------------------------------------------------
// eval

struct EvalAggregate {
    int n_images = 0;
    int excluded_infinite = 0;
    double input_psnr = 0.0, input_ssim = 0.0;
    double result_psnr = 0.0, result_ssim = 0.0;
    double est_score = 0.0;
};

namespace detail {

inline std::string fmt_metric(double v) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

template <typename T>
ModelParams<T> load_eval_model(const std::string& checkpoint, const CheckpointInfo& info, GeneratorConfig& gcfg) {
    gcfg.variant = info.arch;
    gcfg.ngf = info.ngf;
    gcfg.depth = info.depth;
    gcfg.in_channels = 1;
    gcfg.out_channels = 1;
    gcfg.score_mode = info.method == 1;
    auto params = build_generator<T>(gcfg, 0);
    CheckpointMap<T> map(load_checkpoint<T>(checkpoint));
    map.restore_model(info.method == 1 ? "rtheta" : "g_q2f", params);
    return params;
}

}  // namespace detail

/// Evaluate a checkpoint on a paired test manifest. Writes per-image metrics
/// (metrics.csv) and a JSON aggregate (aggregate.json) under out_dir.
/// Infinite PSNR values are reported but excluded from averages with a
/// warning. The requested noise model must match the checkpoint's kind.
inline int cmd_eval(const std::string& checkpoint, const std::string& manifest_path, const std::string& method,
                    const std::string& noise_descriptor, const std::string& out_dir, double data_range = 1.0) {
    return detail::guarded([&] {
        if (!std::filesystem::exists(checkpoint))
            throw IoError(IoErrorKind::missing_file, "checkpoint not found: " + checkpoint);
        const auto info = read_checkpoint_info<float>(checkpoint);
        const std::string ckpt_method = info.method == 1 ? "n2s" : "cyclegan";
        if (!method.empty() && method != ckpt_method)
            throw MismatchError("checkpoint was trained with method '" + ckpt_method + "', requested '" + method +
                                "'");
        NoiseModel model = info.noise;
        if (!noise_descriptor.empty()) {
            const NoiseModel requested = NoiseModel::parse(noise_descriptor);
            if (requested.kind() != info.noise.kind())
                throw MismatchError("checkpoint assumes " + info.noise.kind_name() + " noise but '" +
                                    noise_descriptor + "' was requested; the Tweedie case must match the injected noise");
            model = requested;
        }

        auto manifest = DatasetManifest::load(manifest_path);
        manifest.validate_files();
        const auto& pairs = manifest.pairs();  // paired manifest required
        if (pairs.empty()) throw ContractViolation("cmd_eval: empty test manifest");

        GeneratorConfig gcfg;
        auto params = detail::load_eval_model<float>(checkpoint, info, gcfg);

        std::filesystem::create_directories(out_dir);
        std::ofstream csv(detail::join_path(out_dir, "metrics.csv"), std::ios::trunc);
        if (!csv) throw IoError(IoErrorKind::write_failed, "cannot write metrics.csv under " + out_dir);
        csv << "image_id,psnr_noisy,ssim_noisy,psnr_denoised,ssim_denoised,est_score\n";

        EvalAggregate agg;
        std::vector<double> in_psnr, in_ssim, out_psnr, out_ssim;
        for (const auto& e : pairs) {
            auto clean = load_rtf1<float>(e.clean_path);
            auto noisy = load_rtf1<float>(e.noisy_path);
            TensorPtrF denoised;
            if (info.method == 1) denoised = denoise_n2s(params, gcfg, noisy, model);
            else denoised = denoise_cyclegan(params, gcfg, noisy);
            const double pn = psnr(clean, noisy, data_range);
            const double sn = ssim(clean, noisy);
            const double pd = psnr(clean, denoised, data_range);
            const double sd = ssim(clean, denoised);
            const std::string id = std::filesystem::path(e.noisy_path).stem().string();
            csv << id << "," << detail::fmt_metric(pn) << "," << detail::fmt_metric(sn) << ","
                << detail::fmt_metric(pd) << "," << detail::fmt_metric(sd) << ","
                << detail::fmt_metric(composite_score(pd, sd)) << "\n";
            if (std::isinf(pn) || std::isinf(pd)) {
                ++agg.excluded_infinite;
                std::fprintf(stderr, "warning: image %s has infinite PSNR; excluded from averages\n", id.c_str());
                continue;
            }
            in_psnr.push_back(pn);
            in_ssim.push_back(sn);
            out_psnr.push_back(pd);
            out_ssim.push_back(sd);
        }
        agg.n_images = static_cast<int>(pairs.size());
        agg.input_psnr = detail::mean_of(in_psnr);
        agg.input_ssim = detail::mean_of(in_ssim);
        agg.result_psnr = detail::mean_of(out_psnr);
        agg.result_ssim = detail::mean_of(out_ssim);
        agg.est_score = composite_score(agg.result_psnr, agg.result_ssim);

        nlohmann::json j;
        j["n_images"] = agg.n_images;
        j["excluded_infinite_psnr"] = agg.excluded_infinite;
        j["method"] = ckpt_method;
        j["noise"] = model.descriptor();
        j["input"] = {{"avg_psnr_db", agg.input_psnr}, {"avg_ssim", agg.input_ssim}};
        j["result"] = {{"avg_psnr_db", agg.result_psnr},
                       {"avg_ssim", agg.result_ssim},
                       {"psnr_gain_db", agg.result_psnr - agg.input_psnr},
                       {"ssim_gain", agg.result_ssim - agg.input_ssim},
                       {"est_score", agg.est_score}};
        std::ofstream jf(detail::join_path(out_dir, "aggregate.json"), std::ios::trunc);
        jf << j.dump(2) << "\n";

        std::printf("input : avg PSNR %.5f dB, avg SSIM %.5f\n", agg.input_psnr, agg.input_ssim);
        std::printf("result: avg PSNR %.5f dB (%+.3f dB), avg SSIM %.5f (%+.5f), est. Score %.5f\n",
                    agg.result_psnr, agg.result_psnr - agg.input_psnr, agg.result_ssim,
                    agg.result_ssim - agg.input_ssim, agg.est_score);
    });
}

// ---------------------------------------------------------------------------
// sweep

namespace detail {

struct SweepResult {
    std::string name;
    ExperimentConfig cfg;
    bool failed = false;
    double psnr_db = 0.0, ssim_v = 0.0;
};

inline SweepResult run_sweep_row(const SweepRow& row, const ExperimentConfig& base, std::uint64_t seed,
                                 const std::string& out_base) {
    SweepResult r;
    r.name = row.name;
    r.cfg = row.apply(base);
    try {
        const std::string run_dir = run_dir_for(r.cfg, seed, out_base);
        if (std::filesystem::exists(run_dir))
            throw ConfigError("run directory already exists: " + run_dir);
        auto manifest = DatasetManifest::load(r.cfg.manifest);
        const TrainConfig tcfg = r.cfg.train_config(seed);
        TrainResult tr;
        if (r.cfg.method == "cyclegan") tr = train_cyclegan<float>(tcfg, manifest, run_dir, "", /*quiet=*/true);
        else tr = train_n2s<float>(tcfg, manifest, run_dir, "", /*quiet=*/true);

        // evaluate on the paired test manifest
        auto test = DatasetManifest::load(r.cfg.eval_manifest);
        test.validate_files();
        const auto info = read_checkpoint_info<float>(tr.final_checkpoint);
        GeneratorConfig gcfg;
        auto params = load_eval_model<float>(tr.final_checkpoint, info, gcfg);
        std::vector<double> psnrs, ssims;
        for (const auto& e : test.pairs()) {
            auto clean = load_rtf1<float>(e.clean_path);
            auto noisy = load_rtf1<float>(e.noisy_path);
            auto denoised = info.method == 1 ? denoise_n2s(params, gcfg, noisy, info.noise)
                                             : denoise_cyclegan(params, gcfg, noisy);
            const double p = psnr(clean, denoised, r.cfg.data_range);
            if (std::isinf(p)) continue;
            psnrs.push_back(p);
            ssims.push_back(ssim(clean, denoised));
        }
        if (psnrs.empty()) throw NumericError("sweep row produced no finite PSNR values");
        r.psnr_db = mean_of(psnrs);
        r.ssim_v = mean_of(ssims);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sweep row '%s' FAILED: %s\n", row.name.c_str(), e.what());
        r.failed = true;
    }
    return r;
}

}  // namespace detail

/// Run every named configuration, evaluate each, and emit a consolidated
/// table (sweep.csv + sweep.txt). The best row maximizes est. Score with ties
/// broken by SSIM then PSNR. Failed rows are marked and the sweep continues.
/// With parallel > 1 the rows run concurrently; outputs are byte-identical to
/// a sequential sweep because each run is deterministic and rows are written
/// in spec order.
inline int cmd_sweep(const std::string& sweep_path, std::uint64_t seed, const std::string& out_base,
                     int parallel = 1) {
    return detail::guarded([&] {
        const SweepSpec spec = SweepSpec::from_file(sweep_path);
        ExperimentConfig base;
        if (!spec.base_config_path.empty()) {
            // base path is relative to the sweep file
            const auto dir = std::filesystem::path(sweep_path).parent_path();
            base = ExperimentConfig::from_file((dir / spec.base_config_path).generic_string());
        }
        if (base.manifest.empty() || base.eval_manifest.empty())
            throw ConfigError("sweep base config must set [train] manifest and [eval] manifest");

        std::vector<detail::SweepResult> results(spec.rows.size());
        if (parallel <= 1) {
            for (std::size_t i = 0; i < spec.rows.size(); ++i)
                results[i] = detail::run_sweep_row(spec.rows[i], base, seed, out_base);
        } else {
            std::vector<std::future<detail::SweepResult>> futs;
            futs.reserve(spec.rows.size());
            std::size_t next = 0;
            while (next < spec.rows.size()) {
                const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(parallel),
                                                                spec.rows.size() - next);
                for (std::size_t i = 0; i < batch; ++i)
                    futs.push_back(std::async(std::launch::async, detail::run_sweep_row, spec.rows[next + i], base,
                                              seed, out_base));
                for (std::size_t i = 0; i < batch; ++i) results[next + i] = futs[next + i].get();
                next += batch;
            }
        }

        // best row: est. Score, then SSIM, then PSNR
        int best = -1;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].failed) continue;
            if (best < 0) {
                best = static_cast<int>(i);
                continue;
            }
            const auto& a = results[i];
            const auto& b = results[static_cast<std::size_t>(best)];
            const double ea = composite_score(a.psnr_db, a.ssim_v), eb = composite_score(b.psnr_db, b.ssim_v);
            if (ea > eb || (ea == eb && (a.ssim_v > b.ssim_v || (a.ssim_v == b.ssim_v && a.psnr_db > b.psnr_db))))
                best = static_cast<int>(i);
        }

        std::filesystem::create_directories(out_base);
        std::ofstream csv(detail::join_path(out_base, "sweep.csv"), std::ios::trunc);
        csv << "name,architecture,lambda_cycle,lambda_iden,ngf,ndf,psnr_db,ssim,est_score,status,best\n";
        std::ofstream txt(detail::join_path(out_base, "sweep.txt"), std::ios::trunc);
        char line[256];
        std::snprintf(line, sizeof line, "%-3s %-20s %-15s %7s %7s %5s %5s %9s %8s %10s\n", "#", "name",
                      "architecture", "l_cyc", "l_idn", "ngf", "ndf", "PSNR", "SSIM", "est.Score");
        txt << line;
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            const double est = composite_score(r.psnr_db, r.ssim_v);
            csv << r.name << "," << variant_name(r.cfg.arch) << "," << detail::fmt_metric(r.cfg.lambda_cycle) << ","
                << detail::fmt_metric(r.cfg.lambda_iden) << "," << r.cfg.ngf << "," << r.cfg.ndf << ",";
            if (r.failed) csv << ",,,FAILED,0\n";
            else
                csv << detail::fmt_metric(r.psnr_db) << "," << detail::fmt_metric(r.ssim_v) << ","
                    << detail::fmt_metric(est) << ",ok," << (static_cast<int>(i) == best ? 1 : 0) << "\n";
            if (r.failed) {
                std::snprintf(line, sizeof line, "%-3zu %-20s %-15s %7.4g %7.4g %5d %5d %9s %8s %10s\n", i + 1,
                              r.name.c_str(), variant_name(r.cfg.arch).c_str(), r.cfg.lambda_cycle,
                              r.cfg.lambda_iden, r.cfg.ngf, r.cfg.ndf, "FAILED", "-", "-");
            } else {
                std::snprintf(line, sizeof line, "%-3zu %-20s %-15s %7.4g %7.4g %5d %5d %9.3f %8.4f %10.4f%s\n",
                              i + 1, r.name.c_str(), variant_name(r.cfg.arch).c_str(), r.cfg.lambda_cycle,
                              r.cfg.lambda_iden, r.cfg.ngf, r.cfg.ndf, r.psnr_db, r.ssim_v, est,
                              static_cast<int>(i) == best ? "  <- best" : "");
            }
            txt << line;
            std::fputs(line, stdout);
        }
    });
}

// ---------------------------------------------------------------------------
// export-curves

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoErrorKind::missing_file, "cannot open loss log: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw IoError(IoErrorKind::malformed_manifest, path + ": empty loss log");
    return rows;
}

inline void write_panel(const std::string& path, const std::vector<std::vector<std::string>>& rows,
                        const std::vector<std::string>& columns) {
    std::vector<std::size_t> idx;
    for (const auto& c : columns) {
        const auto it = std::find(rows[0].begin(), rows[0].end(), c);
        if (it == rows[0].end())
            throw IoError(IoErrorKind::malformed_manifest, path + ": loss log lacks column " + c);
        idx.push_back(static_cast<std::size_t>(it - rows[0].begin()));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(IoErrorKind::write_failed, "cannot write " + path);
    out << "epoch";
    for (const auto& c : columns) out << "," << c;
    out << "\n";
    for (std::size_t r = 1; r < rows.size(); ++r) {
        out << rows[r][0];
        for (std::size_t i : idx) out << "," << rows[r][i];
        out << "\n";
    }
}

}  // namespace detail

/// Re-cut a run's loss log into per-panel CSVs ready for plotting: the
/// adversarial panel and the cycle/identity panel for translation runs, or a
/// single loss column for score-learning runs.
inline int cmd_export_curves(const std::string& run_dir, const std::string& out_dir_in = "") {
    return detail::guarded([&] {
        const std::string out_dir = out_dir_in.empty() ? run_dir : out_dir_in;
        const auto rows = detail::read_csv(detail::join_path(run_dir, "losses.csv"));
        std::filesystem::create_directories(out_dir);
        const auto& header = rows[0];
        const bool is_cyclegan = std::find(header.begin(), header.end(), "adv_f") != header.end();
        if (is_cyclegan) {
            detail::write_panel(detail::join_path(out_dir, "adversarial.csv"), rows,
                                {"adv_f", "adv_q", "d_f", "d_q"});
            detail::write_panel(detail::join_path(out_dir, "cycle_identity.csv"), rows,
                                {"cyc_f", "cyc_q", "idn_f", "idn_q"});
            std::printf("wrote adversarial.csv and cycle_identity.csv (%zu epochs)\n", rows.size() - 1);
        } else {
            detail::write_panel(detail::join_path(out_dir, "n2s_loss.csv"), rows, {"loss"});
            std::printf("wrote n2s_loss.csv (%zu epochs)\n", rows.size() - 1);
        }
    });
}

}  // namespace dnl
