#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psm/model.hpp"

namespace psm {

// Line-oriented key=value training configuration. '#' starts a comment,
// blank lines are skipped, unknown keys are rejected (ConfigError names the
// line). Every key is optional; defaults below.
struct TrainConfig {
    // model
    std::string split_level = "octants";
    int n_blocks = 2;
    int c0 = 48;
    int state_n = 8;
    double alpha_init = 0.1;
    int reduction_r = 4;

    // task parameters
    double sigma = 25.0;    // denoise noise std on the [0,255] scale
    int scale = 2;          // SR factor
    std::string loss = "auto";    // auto | l1 | charbonnier (auto: l1 for SR, charbonnier for denoise)
    double charbonnier_eps = 1e-3;

    // optimization
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch = 8;
    int crop = 128;
    int steps = 2000;
    std::vector<int> milestones;    // lr halving steps; empty -> {steps/2, steps*4/5}
    uint64_t seed = 0;
    std::string precision = "f32";    // f32 | f64
    int val_every = 100;

    std::vector<int> effective_milestones() const;
    ModelConfig model_config(TaskKind task) const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);
std::string serialize_config(const TrainConfig& cfg);

}  // namespace psm
