#include "ovfer/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor3& t) {
    return json{{"channels", t.channels}, {"height", t.height}, {"width", t.width}, {"data", t.data}};
}

Tensor3 tensor_from_json(const json& j) {
    Tensor3 t(j.at("channels").get<int>(), j.at("height").get<int>(), j.at("width").get<int>());
    t.data = j.at("data").get<std::vector<double>>();
    if (t.data.size() != static_cast<std::size_t>(t.channels) * t.height * t.width)
        throw SchemaError("checkpoint tensor element count mismatch");
    return t;
}

json context_to_json(const TextContext& ctx) {
    json per_class = json::array();
    for (const auto& m : ctx.per_class) per_class.push_back(m.data);
    return json{{"context_len", ctx.context_len}, {"token_dim", ctx.token_dim}, {"per_class", per_class}};
}

TextContext context_from_json(const json& j) {
    TextContext ctx;
    ctx.context_len = j.at("context_len").get<int>();
    ctx.token_dim = j.at("token_dim").get<int>();
    for (const auto& rows : j.at("per_class")) {
        Matrix m(ctx.context_len, ctx.token_dim);
        m.data = rows.get<std::vector<double>>();
        if (m.data.size() != static_cast<std::size_t>(ctx.context_len) * ctx.token_dim)
            throw SchemaError("checkpoint context element count mismatch");
        ctx.per_class.push_back(std::move(m));
    }
    return ctx;
}

json split_to_json(const OpennessSplit& s) {
    return json{{"known_classes", s.known_classes},
                {"unknown_classes", s.unknown_classes},
                {"seed", s.seed},
                {"openness", s.openness}};
}

OpennessSplit split_from_json(const json& j) {
    OpennessSplit s;
    s.known_classes = j.at("known_classes").get<std::vector<int>>();
    s.unknown_classes = j.at("unknown_classes").get<std::vector<int>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.openness = j.at("openness").get<double>();
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    json j;
    j["format"] = 1;
    j["epoch"] = checkpoint.epoch;
    j["config_digest"] = checkpoint.config_digest;
    j["class_names"] = checkpoint.class_names;
    j["split"] = split_to_json(checkpoint.split);
    j["text_context"] = context_to_json(checkpoint.state.ctx);
    if (checkpoint.state.neg_ctx) j["negative_text_context"] = context_to_json(*checkpoint.state.neg_ctx);
    json patches = json::array();
    for (const auto& p : checkpoint.state.patches) patches.push_back(tensor_to_json(p));
    j["patches"] = patches;
    json bank = json::array();
    for (const auto& t : checkpoint.state.bank.tensors) bank.push_back(tensor_to_json(t));
    j["bank"] = bank;
    if (checkpoint.state.align_scale) j["align_scale"] = *checkpoint.state.align_scale;
    j["optimizer"] = json{{"velocity", checkpoint.optimizer.velocity}};
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write checkpoint: " + path.string());
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open checkpoint: " + path.string());
    json j;
    try {
        in >> j;
        Checkpoint c;
        c.epoch = j.at("epoch").get<int>();
        c.config_digest = j.at("config_digest").get<std::string>();
        c.class_names = j.at("class_names").get<std::vector<std::string>>();
        c.split = split_from_json(j.at("split"));
        c.state.ctx = context_from_json(j.at("text_context"));
        if (j.contains("negative_text_context") && !j.at("negative_text_context").is_null())
            c.state.neg_ctx = context_from_json(j.at("negative_text_context"));
        for (const auto& p : j.at("patches")) c.state.patches.push_back(tensor_from_json(p));
        for (const auto& t : j.at("bank")) c.state.bank.tensors.push_back(tensor_from_json(t));
        if (j.contains("align_scale") && !j.at("align_scale").is_null())
            c.state.align_scale = j.at("align_scale").get<double>();
        if (j.contains("optimizer"))
            c.optimizer.velocity = j.at("optimizer").at("velocity").get<std::vector<Vec>>();
        return c;
    } catch (const json::exception& e) {
        throw SchemaError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

double lr_at_epoch(double lr, double decay, int step_epochs, int epoch) {
    return lr * std::pow(decay, static_cast<double>(epoch / step_epochs));
}

TrainResult train(const RunConfig& config, const DualEncoder& encoder, const Dataset& train_data,
                  const OpennessSplit& split, const std::filesystem::path& run_dir) {
    config.validate();
    train_data.validate();
    const int k_count = train_data.num_classes();
    if (k_count != split.known_count())
        throw CompatibilityError("training data class count does not match the split");
    if (train_data.samples.empty()) throw ProtocolError("training data is empty");
    // Guard: the training set must never contain unknown-class samples.
    for (const auto& s : train_data.samples)
        if (s.label < 0 || s.label >= k_count)
            throw ProtocolError("training data contains a label outside the known classes: sample '" + s.id +
                                "'");

    PromptPipeline pipeline(encoder, prompt_settings(config), train_data.class_names);
    PromptState state = pipeline.init_state(config.prompt_seed);
    PromptState grads = PromptState::zeros_like(state);

    OptimizerState opt;
    {
        auto blocks = state.param_blocks();
        opt.velocity.reserve(blocks.size());
        for (const auto& b : blocks) opt.velocity.emplace_back(b.size(), 0.0);
    }

    std::ofstream log;
    if (!run_dir.empty()) {
        std::filesystem::create_directories(run_dir);
        log.open(run_dir / "loss_log.tsv");
        log << "step\tepoch\tlr\tl_kn_ce\tl_kn_cl\tl_ne_ce\tl_ne_clip\tl_h\ttotal\n";
    }

    std::vector<std::size_t> order(train_data.samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    long step = 0;
    double last_epoch_sum = 0.0;
    long last_epoch_steps = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config.lr, config.lr_decay, config.lr_step_epochs, epoch);
        auto rng = make_rng(mix_seed(config.train_seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        last_epoch_sum = 0.0;
        last_epoch_steps = 0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                                     order.size() - pos);
            // A trailing singleton merges into this batch so the contrastive
            // term always sees at least two samples.
            if (order.size() - pos - take == 1) take += 1;
            std::vector<const VideoSample*> batch;
            std::vector<int> labels;
            batch.reserve(take);
            labels.reserve(take);
            for (std::size_t t = 0; t < take; ++t) {
                const VideoSample& s = train_data.samples[order[pos + t]];
                batch.push_back(&s);
                labels.push_back(s.label);
            }
            pos += take;

            BatchForward fwd = pipeline.forward(batch, labels, state);
            check_loss_finite(fwd.loss);
            if (step == 0) result.first_step_loss = fwd.loss.total;
            last_epoch_sum += fwd.loss.total;
            ++last_epoch_steps;

            grads = PromptState::zeros_like(state);
            pipeline.backward(fwd, batch, labels, state, grads);

            auto state_blocks = state.param_blocks();
            auto grad_blocks = grads.param_blocks();
            // No legitimate prompt parameter approaches this magnitude;
            // values beyond it overflow the encoder on the next forward.
            constexpr double kParamCap = 1e100;
            bool params_sane = true;
            for (std::size_t bi = 0; bi < state_blocks.size(); ++bi) {
                Vec& v = opt.velocity[bi];
                for (std::size_t i = 0; i < v.size(); ++i) {
                    v[i] = config.momentum * v[i] + grad_blocks[bi][i];
                    state_blocks[bi][i] -= lr * v[i];
                    params_sane = params_sane && std::isfinite(state_blocks[bi][i]) &&
                                  std::abs(state_blocks[bi][i]) < kParamCap;
                }
            }
            if (!params_sane)
                throw DivergenceError("prompt parameters diverged at step " + std::to_string(step) +
                                      " (non-finite or astronomically large; learning rate too large?)");

            if (log.is_open()) {
                log << step << "\t" << epoch << "\t" << lr << "\t" << fwd.loss.l_kn_ce << "\t"
                    << fwd.loss.l_kn_cl << "\t" << fwd.loss.l_ne_ce << "\t" << fwd.loss.l_ne_clip << "\t"
                    << fwd.loss.l_h << "\t" << fwd.loss.total << "\n";
            }
            ++step;
        }

        if (!run_dir.empty() && config.save_every > 0 && (epoch + 1) % config.save_every == 0 &&
            epoch + 1 < config.epochs) {
            Checkpoint ck{state, opt, epoch + 1, config_digest(config), train_data.class_names, split};
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.json", epoch + 1);
            save_checkpoint(ck, run_dir / name);
        }
    }

    result.checkpoint = Checkpoint{std::move(state), std::move(opt), config.epochs, config_digest(config),
                                   train_data.class_names, split};
    result.final_epoch_mean_loss = last_epoch_steps > 0 ? last_epoch_sum / last_epoch_steps : 0.0;
    result.steps = step;
    if (!run_dir.empty()) save_checkpoint(result.checkpoint, run_dir / "checkpoint_final.json");
    return result;
}

}  // namespace ovfer
