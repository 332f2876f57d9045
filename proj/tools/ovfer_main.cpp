// Command-line front end: split / synth / train / eval / protocol / plot /
// gradcheck. Exit codes: 0 success, 1 validation error, 2 runtime or
// divergence error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "ovfer/config.hpp"
#include "ovfer/errors.hpp"
#include "ovfer/evaluate.hpp"
#include "ovfer/gradcheck.hpp"
#include "ovfer/plot.hpp"
#include "ovfer/protocol.hpp"
#include "ovfer/train.hpp"

namespace {

using namespace ovfer;
namespace fs = std::filesystem;

// Pre-scan for --config so file values load before flag overrides apply.
RunConfig preload_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") return load_config(argv[i + 1]);
    }
    return RunConfig{};
}

void add_config_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--config", "config JSON file (loaded before other flags)")->check(CLI::ExistingFile);
    cmd->add_option("--encoder", cfg.encoder, "mock | external");
    cmd->add_option("--encoder-weights", cfg.encoder_weights);
    cmd->add_option("--embed-dim", cfg.embed_dim);
    cmd->add_option("--token-dim", cfg.token_dim);
    cmd->add_option("--frame-channels", cfg.frame_shape.channels);
    cmd->add_option("--frame-height", cfg.frame_shape.height);
    cmd->add_option("--frame-width", cfg.frame_shape.width);
    cmd->add_option("--logit-scale", cfg.logit_scale);
    cmd->add_option("--encoder-seed", cfg.encoder_seed);
    cmd->add_option("--encoder-pool", cfg.encoder_pool);
    cmd->add_option("--encoder-positions", cfg.encoder_positions);
    cmd->add_option("--manifest", cfg.manifest);
    cmd->add_option("--synth-classes", cfg.synth_classes);
    cmd->add_option("--synth-videos-per-class", cfg.synth_videos_per_class);
    cmd->add_option("--synth-frames", cfg.synth_frames);
    cmd->add_option("--synth-noise", cfg.synth_noise);
    cmd->add_option("--data-seed", cfg.data_seed);
    cmd->add_option("--task", cfg.task, "0 = custom K/U, 1..4 = predefined tasks");
    cmd->add_option("--known-count", cfg.known_count);
    cmd->add_option("--repeats", cfg.repeats, "0 = task default");
    cmd->add_option("--split-seed", cfg.split_seed);
    cmd->add_option("--calib-fraction", cfg.calib_fraction);
    cmd->add_option("--target-tpr", cfg.target_tpr);
    cmd->add_option("--lr", cfg.lr);
    cmd->add_option("--momentum", cfg.momentum);
    cmd->add_option("--lr-decay", cfg.lr_decay);
    cmd->add_option("--lr-step-epochs", cfg.lr_step_epochs);
    cmd->add_option("--epochs", cfg.epochs);
    cmd->add_option("--batch-size", cfg.batch_size);
    cmd->add_option("--save-every", cfg.save_every);
    cmd->add_option("--train-seed", cfg.train_seed);
    cmd->add_option("--context-len", cfg.context_len);
    cmd->add_option("--ctx-init-std", cfg.ctx_init_std);
    cmd->add_option("--patch-side", cfg.patch_side);
    cmd->add_option("--frames-per-video", cfg.frames_per_video);
    cmd->add_option("--ne-scale", cfg.ne_scale);
    cmd->add_option("--ne-logit-sign", cfg.ne_logit_sign);
    cmd->add_option("--supcon-tau", cfg.supcon_tau);
    cmd->add_option("--loss-weights", cfg.loss_weights, "kn_ce kn_cl ne_ce ne_clip h")->expected(5);
    cmd->add_option("--ne-supcon", cfg.ne_supcon);
    cmd->add_option("--modules", cfg.modules, "tp | tp+vp");
    cmd->add_option("--patch-mode", cfg.patch_mode, "additive | replace");
    cmd->add_option("--visual-prompt-style", cfg.visual_prompt_style,
                    "masked_patch | padding | random_patch");
    cmd->add_option("--patch-per-frame", cfg.patch_per_frame);
    cmd->add_option("--negative-text", cfg.negative_text, "fixed | learnable");
    cmd->add_option("--learn-align-scale", cfg.learn_align_scale);
    cmd->add_option("--prompt-seed", cfg.prompt_seed);
}

OpennessSplit resolve_split(const RunConfig& cfg, const Dataset& dataset, const std::string& split_file) {
    if (!split_file.empty()) return load_split(split_file);
    if (cfg.task == 3 || cfg.task == 4) return fixed_basic_emotion_split(dataset, cfg.split_seed);
    return generate_splits(dataset.num_classes(), cfg.known_count, 1, cfg.split_seed).front();
}

int cmd_split(const RunConfig& cfg, int classes, const std::string& out_dir) {
    const int repeats = cfg.repeats > 0 ? cfg.repeats : 5;
    const auto splits = generate_splits(classes, cfg.known_count, repeats, cfg.split_seed);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < splits.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "split_%02zu.json", i);
        save_split(splits[i], fs::path(out_dir) / name);
        std::cout << name << ": known=[";
        for (std::size_t k = 0; k < splits[i].known_classes.size(); ++k)
            std::cout << (k ? "," : "") << splits[i].known_classes[k];
        std::cout << "] openness=" << splits[i].openness << "\n";
    }
    return 0;
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
    const Dataset ds = synthesize_dataset(synthetic_spec(cfg));
    const auto manifest = write_dataset(ds, out_dir);
    std::cout << "wrote " << ds.samples.size() << " videos, " << ds.num_classes() << " classes\n"
              << "manifest: " << manifest.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& split_file, const std::string& out_dir) {
    cfg.validate();
    const auto encoder = make_encoder(cfg);
    const Dataset dataset = make_dataset(cfg);
    const OpennessSplit split = resolve_split(cfg, dataset, split_file);

    SplitDatasets parts = apply_split(dataset, split);
    auto [core, calib] = calibration_slice(parts.train, cfg.calib_fraction, calibration_seed(split));
    (void)calib;  // evaluation re-derives the same slice from the seeds

    fs::create_directories(out_dir);
    save_config(cfg, fs::path(out_dir) / "config.json");
    save_split(split, fs::path(out_dir) / "split.json");
    const TrainResult result = train(cfg, *encoder, core, split, out_dir);
    std::cout << "trained " << cfg.epochs << " epochs, " << result.steps << " steps\n"
              << "first-step loss " << result.first_step_loss << ", final-epoch mean loss "
              << result.final_epoch_mean_loss << "\n"
              << "checkpoint: " << (fs::path(out_dir) / "checkpoint_final.json").string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& split_file,
             const std::string& out_dir) {
    cfg.validate();
    const auto encoder = make_encoder(cfg);
    const Dataset dataset = make_dataset(cfg);
    const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    const OpennessSplit split =
        split_file.empty() ? checkpoint.split : load_split(split_file);

    SplitDatasets parts = apply_split(dataset, split);
    auto [core, calib] = calibration_slice(parts.train, cfg.calib_fraction, calibration_seed(split));
    (void)core;
    const EvalOutput out = evaluate_run(cfg, *encoder, checkpoint, parts.test, calib, out_dir);
    render_histogram_svg(score_histograms(out.rows), fs::path(out_dir) / "score_hist.svg");
    std::cout << "AUROC " << out.report.auroc << "  OSCR " << out.report.oscr << "  threshold "
              << out.report.threshold << "\n"
              << "scores: " << (fs::path(out_dir) / "scores.tsv").string() << "\n";
    return 0;
}

int cmd_protocol(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const auto encoder = make_encoder(cfg);
    const Dataset dataset = make_dataset(cfg);
    const ProtocolResult result = run_protocol(cfg, *encoder, dataset, out_dir);
    std::cout << protocol_table(result);
    if (!out_dir.empty())
        std::cout << "report: " << (fs::path(out_dir) / "protocol_report.json").string() << "\n";
    return 0;
}

int cmd_plot(const std::string& scores, const std::string& out_svg, int bins) {
    plot_score_distributions(scores, out_svg, bins);
    std::cout << "wrote " << out_svg << "\n";
    return 0;
}

int cmd_gradcheck(int directions, std::uint64_t seed) {
    bool all_pass = true;
    for (const auto& r : gradcheck::run_all(directions, seed)) {
        std::cout << (r.pass() ? "[PASS] " : "[FAIL] ") << r.name << ": max rel err " << r.max_rel_err
                  << " (tolerance " << r.tolerance << ", " << r.directions << " directions)\n";
        all_pass = all_pass && r.pass();
    }
    return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set video facial expression recognition via prompt learning"};
    app.require_subcommand(1);

    RunConfig cfg;
    try {
        cfg = preload_config(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    std::string out_dir = "runs/latest";
    std::string split_file;
    std::string checkpoint_path;
    std::string scores_path;
    std::string out_svg = "score_hist.svg";
    int classes = 7;
    int bins = 20;
    int directions = 20;
    std::uint64_t gradcheck_seed = 20240101;

    auto* split_cmd = app.add_subcommand("split", "generate known/unknown class partitions");
    add_config_flags(split_cmd, cfg);
    split_cmd->add_option("--classes", classes, "total class count");
    split_cmd->add_option("--out", out_dir);

    auto* synth_cmd = app.add_subcommand("synth", "emit a synthetic dataset (frames + manifest)");
    add_config_flags(synth_cmd, cfg);
    synth_cmd->add_option("--out", out_dir);

    auto* train_cmd = app.add_subcommand("train", "train prompt parameters on the known classes");
    add_config_flags(train_cmd, cfg);
    train_cmd->add_option("--split", split_file, "split JSON (default: generated from config)");
    train_cmd->add_option("--out", out_dir);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (AUROC/OSCR, scores file)");
    add_config_flags(eval_cmd, cfg);
    eval_cmd->add_option("--checkpoint", checkpoint_path)->required();
    eval_cmd->add_option("--split", split_file, "split JSON (default: from the checkpoint)");
    eval_cmd->add_option("--out", out_dir);

    auto* protocol_cmd = app.add_subcommand("protocol", "run a full task protocol and aggregate");
    add_config_flags(protocol_cmd, cfg);
    protocol_cmd->add_option("--out", out_dir);

    auto* plot_cmd = app.add_subcommand("plot", "known/unknown score distribution plot (SVG)");
    plot_cmd->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
    plot_cmd->add_option("--out", out_svg);
    plot_cmd->add_option("--bins", bins);

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    gradcheck_cmd->add_option("--directions", directions);
    gradcheck_cmd->add_option("--seed", gradcheck_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (split_cmd->parsed()) return cmd_split(cfg, classes, out_dir);
        if (synth_cmd->parsed()) return cmd_synth(cfg, out_dir);
        if (train_cmd->parsed()) return cmd_train(cfg, split_file, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint_path, split_file, out_dir);
        if (protocol_cmd->parsed()) return cmd_protocol(cfg, out_dir);
        if (plot_cmd->parsed()) return cmd_plot(scores_path, out_svg, bins);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(directions, gradcheck_seed);
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
