#pragma once

#include <filesystem>
#include <vector>

#include "ovfer/config.hpp"
#include "ovfer/pipeline.hpp"
#include "ovfer/splits.hpp"

namespace ovfer {

// SGD-with-momentum buffers, one per parameter block.
struct OptimizerState {
    std::vector<Vec> velocity;
};

struct Checkpoint {
    PromptState state;
    OptimizerState optimizer;
    int epoch = 0;
    std::string config_digest;
    std::vector<std::string> class_names;
    OpennessSplit split;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// lr(epoch) = lr * decay^floor(epoch / step).
double lr_at_epoch(double lr, double decay, int step_epochs, int epoch);

struct TrainResult {
    Checkpoint checkpoint;
    double first_step_loss = 0.0;       // total loss observed at step 0
    double final_epoch_mean_loss = 0.0;  // mean total over the last epoch
    long steps = 0;
};

// Mini-batch SGD with momentum over prompt parameters only; the encoder is
// frozen. Training refuses datasets carrying labels outside the known range.
// When run_dir is non-empty the step-level loss log and checkpoints land
// there.
TrainResult train(const RunConfig& config, const DualEncoder& encoder, const Dataset& train_data,
                  const OpennessSplit& split, const std::filesystem::path& run_dir = {});

}  // namespace ovfer
