#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ovfer/data.hpp"
#include "ovfer/encoder.hpp"
#include "ovfer/pipeline.hpp"

namespace ovfer {

// Full run configuration. Serialized as a flat JSON object; every field is
// also exposed as a CLI flag of the same name.
struct RunConfig {
    // encoder
    std::string encoder = "mock";  // mock | external
    std::string encoder_weights;   // weights path for the external adapter
    int embed_dim = 32;
    int token_dim = 32;
    FrameShape frame_shape{3, 224, 224};  // pairs with the 56-pixel patch default
    double logit_scale = 100.0;
    std::uint64_t encoder_seed = 1234;
    int encoder_pool = 4;
    bool encoder_positions = true;

    // data: a manifest path wins over the synthetic spec
    std::string manifest;
    int synth_classes = 7;
    int synth_videos_per_class = 20;
    int synth_frames = 8;
    double synth_noise = 0.05;
    std::uint64_t data_seed = 7;

    // protocol
    int task = 0;  // 0 = custom K/U, 1..4 = the predefined tasks
    int known_count = 5;
    int repeats = 0;  // 0 = task default: 5 random divisions, 1 for fixed partitions
    std::uint64_t split_seed = 42;
    double calib_fraction = 0.1;
    double target_tpr = 0.95;

    // optimizer
    double lr = 0.01;
    double momentum = 0.9;
    double lr_decay = 0.1;
    int lr_step_epochs = 30;
    int epochs = 200;
    int batch_size = 16;
    int save_every = 0;  // checkpoints every N epochs; 0 = final only
    std::uint64_t train_seed = 11;

    // prompts and objective
    int context_len = 16;
    double ctx_init_std = 0.02;
    int patch_side = 56;
    int frames_per_video = 16;
    double ne_scale = 10.0;
    int ne_logit_sign = 1;
    double supcon_tau = 0.07;
    std::vector<double> loss_weights{1.0, 1.0, 1.0, 1.0, 1.0};  // kn_ce, kn_cl, ne_ce, ne_clip, h
    bool ne_supcon = false;
    std::string modules = "tp+vp";                   // tp | tp+vp
    std::string patch_mode = "additive";             // additive | replace
    std::string visual_prompt_style = "masked_patch";  // masked_patch | padding | random_patch
    bool patch_per_frame = false;
    std::string negative_text = "fixed";  // fixed | learnable
    bool learn_align_scale = false;
    std::uint64_t prompt_seed = 3;

    void validate() const;
};

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);
std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);

// FNV digest of the canonical JSON dump; stored in checkpoints.
std::string config_digest(const RunConfig& config);

PromptSettings prompt_settings(const RunConfig& config);
std::unique_ptr<DualEncoder> make_encoder(const RunConfig& config);
SyntheticSpec synthetic_spec(const RunConfig& config);
// Loads the manifest when one is configured, else synthesizes.
Dataset make_dataset(const RunConfig& config);

}  // namespace ovfer
