// dnl: synthesize phantom corpora, train the two denoisers, evaluate
// checkpoints, run configuration sweeps, and export loss curves.

#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dnl/dnl.hpp"

int main(int argc, char** argv) {
    CLI::App app{"pair-free CT denoising laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, method, noise, manifest, checkpoint, resume, run_dir;
    std::uint64_t seed = 1;
    double data_range = 1.0;
    double calibrate_db = 0.0;
    bool do_calibrate = false;
    int parallel = 1;

    auto* synth = app.add_subcommand("synth", "generate clean/noisy phantom corpora and manifests");
    synth->add_option("--config", config_path, "experiment config file")->required();
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--seed", seed, "corpus seed");
    synth->add_option("--calibrate", calibrate_db, "tune the noise level to this mean input PSNR (dB)")
        ->check(CLI::Range(1.0, 80.0));

    auto* train = app.add_subcommand("train", "train a denoiser (cyclegan or n2s)");
    train->add_option("--config", config_path, "experiment config file")->required();
    train->add_option("--seed", seed, "training seed");
    train->add_option("--out", out_dir, "base directory for run directories")->required();
    train->add_option("--method", method, "override [train] method: cyclegan|n2s");
    train->add_option("--manifest", manifest, "override the training manifest path");
    train->add_option("--resume", resume, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a paired test manifest");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--manifest", manifest, "paired test manifest")->required();
    eval->add_option("--out", out_dir, "output directory for metrics.csv / aggregate.json")->required();
    eval->add_option("--method", method, "expected method (guards against the wrong checkpoint)");
    eval->add_option("--noise", noise, "noise descriptor for Tweedie inference (kind must match training)");
    eval->add_option("--data-range", data_range, "metric data range");

    auto* sweep = app.add_subcommand("sweep", "train and evaluate every configuration in a sweep spec");
    sweep->add_option("--config", config_path, "sweep spec file")->required();
    sweep->add_option("--seed", seed, "seed shared by all rows");
    sweep->add_option("--out", out_dir, "output directory")->required();
    sweep->add_option("--parallel", parallel, "rows to run concurrently")->check(CLI::Range(1, 64));

    auto* curves = app.add_subcommand("export-curves", "export per-panel loss CSVs from a run directory");
    curves->add_option("--run", run_dir, "run directory containing losses.csv")->required();
    curves->add_option("--out", out_dir, "output directory (defaults to the run directory)");

    CLI11_PARSE(app, argc, argv);
    do_calibrate = synth->count("--calibrate") > 0;

    if (app.got_subcommand(synth))
        return dnl::cmd_synth(config_path, out_dir, seed,
                              do_calibrate ? std::optional<double>(calibrate_db) : std::nullopt);
    if (app.got_subcommand(train))
        return dnl::cmd_train(config_path, seed, out_dir, method, manifest, resume);
    if (app.got_subcommand(eval))
        return dnl::cmd_eval(checkpoint, manifest, method, noise, out_dir, data_range);
    if (app.got_subcommand(sweep)) return dnl::cmd_sweep(config_path, seed, out_dir, parallel);
    if (app.got_subcommand(curves)) return dnl::cmd_export_curves(run_dir, out_dir);
    return dnl::kExitConfig;
}
