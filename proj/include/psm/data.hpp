#pragma once

#include <string>
#include <vector>

#include "psm/model.hpp"
#include "psm/rng.hpp"
#include "psm/tensor.hpp"

namespace psm {

// clean in [0,1] -> clean + N(0, (sigma/255)^2) clamped to [0,1]
Tensor degrade_denoise(const Tensor& clean, double sigma, Rng& rng);
// s x s area-average downsample; H, W must be divisible by s
Tensor degrade_sr(const Tensor& clean, int s);

// Deterministic procedural texture: mixed sinusoid gratings plus hard edges,
// (1, 3, h, w) in [0,1]. Same (h, w, seed) always yields the same image.
Tensor synth_texture(int h, int w, uint64_t seed);

// Writes count PNGs named synth_000.png.. into dir (created if missing).
std::vector<std::string> write_synth_corpus(const std::string& dir, int count, int h, int w,
                                            uint64_t seed);

// PNG I/O: 8-bit RGB (grayscale replicated, alpha dropped), values /255.
// Throws DataError on unreadable files.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& img);    // clamps to [0,1]

}  // namespace psm
