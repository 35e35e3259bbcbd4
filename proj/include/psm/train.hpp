#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "psm/config.hpp"
#include "psm/model.hpp"

namespace psm {

struct TrainResult {
    double final_loss = 0.0;
    double val_psnr = 0.0;        // restored validation crops vs clean
    double val_ssim = 0.0;
    double degraded_psnr = 0.0;   // degraded validation inputs vs clean
    int steps_run = 0;
};

// Crop -> augment -> degrade -> forward -> loss -> backward -> Adam. Logs
// tab-separated "step lr loss [val_psnr val_ssim]" lines to log. The data
// stream is derived statelessly from (seed, step), so a resumed run replays
// the exact steps the uninterrupted run would have taken. Writes the
// checkpoint to out_ckpt at each lr milestone and at the end.
// resume_ckpt empty -> fresh start. Throws DataError when no image loads.
TrainResult train_loop(const std::string& data_dir, const TrainConfig& cfg, TaskKind task,
                       const std::string& out_ckpt, std::ostream& log,
                       const std::string& resume_ckpt = "");

// deterministic 10% validation holdout (at least one file) by name hash
bool is_validation_file(const std::string& filename);

}  // namespace psm
