#include "ovfer/config.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

namespace {

using nlohmann::json;

PatchMode parse_patch_mode(const std::string& s) {
    if (s == "additive") return PatchMode::additive;
    if (s == "replace") return PatchMode::replace;
    throw ContractError("patch_mode must be 'additive' or 'replace', got '" + s + "'");
}

VisualPromptStyle parse_style(const std::string& s) {
    if (s == "masked_patch") return VisualPromptStyle::masked_patch;
    if (s == "padding") return VisualPromptStyle::padding;
    if (s == "random_patch") return VisualPromptStyle::random_patch;
    throw ContractError("visual_prompt_style must be masked_patch|padding|random_patch, got '" + s + "'");
}

PromptModules parse_modules(const std::string& s) {
    if (s == "tp") return PromptModules::tp;
    if (s == "tp+vp") return PromptModules::tp_vp;
    throw ContractError("modules must be 'tp' or 'tp+vp', got '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
    if (encoder != "mock" && encoder != "external")
        throw ContractError("encoder must be 'mock' or 'external', got '" + encoder + "'");
    if (encoder == "external" && encoder_weights.empty())
        throw ContractError("external encoder requires encoder_weights");
    if (!(lr > 0.0)) throw ContractError("lr must be positive");
    if (epochs < 1) throw ContractError("epochs must be >= 1");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (lr_step_epochs < 1) throw ContractError("lr_step_epochs must be >= 1");
    if (!(lr_decay > 0.0)) throw ContractError("lr_decay must be positive");
    if (loss_weights.size() != 5) throw ContractError("loss_weights must list exactly 5 values");
    if (task < 0 || task > 4) throw ContractError("task must be 0 (custom) or 1..4");
    if (repeats < 0) throw ContractError("repeats must be >= 0 (0 = task default)");
    if (!(calib_fraction > 0.0 && calib_fraction < 1.0))
        throw ContractError("calib_fraction must lie in (0,1)");
    if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw ContractError("target_tpr must lie in (0,1)");
    parse_patch_mode(patch_mode);
    parse_style(visual_prompt_style);
    if (parse_modules(modules) == PromptModules::tp_vp &&
        patch_side > std::min(frame_shape.height, frame_shape.width))
        throw ContractError("patch_side must fit inside frame_shape");
    if (negative_text != "fixed" && negative_text != "learnable")
        throw ContractError("negative_text must be 'fixed' or 'learnable'");
    if (!manifest.empty() && !std::filesystem::exists(manifest))
        throw ContractError("manifest path does not exist: " + manifest);
    if (encoder == "external" && !std::filesystem::exists(encoder_weights))
        throw ContractError("encoder_weights path does not exist: " + encoder_weights);
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["encoder"] = c.encoder;
    j["encoder_weights"] = c.encoder_weights;
    j["embed_dim"] = c.embed_dim;
    j["token_dim"] = c.token_dim;
    j["frame_shape"] = {c.frame_shape.channels, c.frame_shape.height, c.frame_shape.width};
    j["logit_scale"] = c.logit_scale;
    j["encoder_seed"] = c.encoder_seed;
    j["encoder_pool"] = c.encoder_pool;
    j["encoder_positions"] = c.encoder_positions;
    j["manifest"] = c.manifest;
    j["synth_classes"] = c.synth_classes;
    j["synth_videos_per_class"] = c.synth_videos_per_class;
    j["synth_frames"] = c.synth_frames;
    j["synth_noise"] = c.synth_noise;
    j["data_seed"] = c.data_seed;
    j["task"] = c.task;
    j["known_count"] = c.known_count;
    j["repeats"] = c.repeats;
    j["split_seed"] = c.split_seed;
    j["calib_fraction"] = c.calib_fraction;
    j["target_tpr"] = c.target_tpr;
    j["lr"] = c.lr;
    j["momentum"] = c.momentum;
    j["lr_decay"] = c.lr_decay;
    j["lr_step_epochs"] = c.lr_step_epochs;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["save_every"] = c.save_every;
    j["train_seed"] = c.train_seed;
    j["context_len"] = c.context_len;
    j["ctx_init_std"] = c.ctx_init_std;
    j["patch_side"] = c.patch_side;
    j["frames_per_video"] = c.frames_per_video;
    j["ne_scale"] = c.ne_scale;
    j["ne_logit_sign"] = c.ne_logit_sign;
    j["supcon_tau"] = c.supcon_tau;
    j["loss_weights"] = c.loss_weights;
    j["ne_supcon"] = c.ne_supcon;
    j["modules"] = c.modules;
    j["patch_mode"] = c.patch_mode;
    j["visual_prompt_style"] = c.visual_prompt_style;
    j["patch_per_frame"] = c.patch_per_frame;
    j["negative_text"] = c.negative_text;
    j["learn_align_scale"] = c.learn_align_scale;
    j["prompt_seed"] = c.prompt_seed;
    return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed config JSON: ") + e.what());
    }
    RunConfig c;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("encoder", c.encoder);
        get("encoder_weights", c.encoder_weights);
        get("embed_dim", c.embed_dim);
        get("token_dim", c.token_dim);
        if (j.contains("frame_shape")) {
            const auto v = j.at("frame_shape").get<std::vector<int>>();
            if (v.size() != 3) throw SchemaError("frame_shape must be [channels, height, width]");
            c.frame_shape = {v[0], v[1], v[2]};
        }
        get("logit_scale", c.logit_scale);
        get("encoder_seed", c.encoder_seed);
        get("encoder_pool", c.encoder_pool);
        get("encoder_positions", c.encoder_positions);
        get("manifest", c.manifest);
        get("synth_classes", c.synth_classes);
        get("synth_videos_per_class", c.synth_videos_per_class);
        get("synth_frames", c.synth_frames);
        get("synth_noise", c.synth_noise);
        get("data_seed", c.data_seed);
        get("task", c.task);
        get("known_count", c.known_count);
        get("repeats", c.repeats);
        get("split_seed", c.split_seed);
        get("calib_fraction", c.calib_fraction);
        get("target_tpr", c.target_tpr);
        get("lr", c.lr);
        get("momentum", c.momentum);
        get("lr_decay", c.lr_decay);
        get("lr_step_epochs", c.lr_step_epochs);
        get("epochs", c.epochs);
        get("batch_size", c.batch_size);
        get("save_every", c.save_every);
        get("train_seed", c.train_seed);
        get("context_len", c.context_len);
        get("ctx_init_std", c.ctx_init_std);
        get("patch_side", c.patch_side);
        get("frames_per_video", c.frames_per_video);
        get("ne_scale", c.ne_scale);
        get("ne_logit_sign", c.ne_logit_sign);
        get("supcon_tau", c.supcon_tau);
        get("loss_weights", c.loss_weights);
        get("ne_supcon", c.ne_supcon);
        get("modules", c.modules);
        get("patch_mode", c.patch_mode);
        get("visual_prompt_style", c.visual_prompt_style);
        get("patch_per_frame", c.patch_per_frame);
        get("negative_text", c.negative_text);
        get("learn_align_scale", c.learn_align_scale);
        get("prompt_seed", c.prompt_seed);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config field has the wrong type: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write config: " + path.string());
    out << config_to_json(config) << "\n";
}

std::string config_digest(const RunConfig& config) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(config_to_json(config))));
    return buf;
}

PromptSettings prompt_settings(const RunConfig& c) {
    PromptSettings s;
    s.context_len = c.context_len;
    s.ctx_init_std = c.ctx_init_std;
    s.patch_side = c.patch_side;
    s.frames_per_video = c.frames_per_video;
    s.ne_scale = c.ne_scale;
    s.ne_logit_sign = c.ne_logit_sign;
    s.supcon_tau = c.supcon_tau;
    s.loss_weights = {c.loss_weights[0], c.loss_weights[1], c.loss_weights[2], c.loss_weights[3],
                      c.loss_weights[4]};
    s.ne_supcon = c.ne_supcon;
    s.modules = parse_modules(c.modules);
    s.patch_mode = parse_patch_mode(c.patch_mode);
    s.style = parse_style(c.visual_prompt_style);
    s.patch_per_frame = c.patch_per_frame;
    s.negative_text_learnable = c.negative_text == "learnable";
    s.learn_align_scale = c.learn_align_scale;
    s.prompt_seed = c.prompt_seed;
    return s;
}

std::unique_ptr<DualEncoder> make_encoder(const RunConfig& c) {
    if (c.encoder == "external") return load_external_encoder(c.encoder_weights);
    MockEncoderConfig mc;
    mc.embed_dim = c.embed_dim;
    mc.token_dim = c.token_dim;
    mc.frame_shape = c.frame_shape;
    mc.logit_scale = c.logit_scale;
    mc.seed = c.encoder_seed;
    mc.pool = c.encoder_pool;
    mc.positions = c.encoder_positions;
    return std::make_unique<MockEncoder>(mc);
}

SyntheticSpec synthetic_spec(const RunConfig& c) {
    SyntheticSpec spec;
    spec.num_classes = c.synth_classes;
    spec.videos_per_class = c.synth_videos_per_class;
    spec.frames_per_video = c.synth_frames;
    spec.frame_shape = c.frame_shape;
    spec.noise_level = c.synth_noise;
    spec.seed = c.data_seed;
    return spec;
}

Dataset make_dataset(const RunConfig& c) {
    if (!c.manifest.empty()) return load_manifest(c.manifest);
    return synthesize_dataset(synthetic_spec(c));
}

}  // namespace ovfer
