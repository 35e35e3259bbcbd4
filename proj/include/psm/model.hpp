#pragma once

#include <string>
#include <vector>

#include "psm/ops.hpp"
#include "psm/param_store.hpp"
#include "psm/partition.hpp"
#include "psm/rng.hpp"
#include "psm/ssm.hpp"
#include "psm/tensor.hpp"

namespace psm {

enum class TaskKind { denoise, super_resolve };
TaskKind task_from_string(const std::string& name);
std::string to_string(TaskKind t);

// --- parameter bundles -----------------------------------------------------

struct ConvParams {
    Tensor w, b;    // (out, in, kh, kw), (out)
    Tensor gw, gb;
    // gain scales the init variance: 2 before a relu, 1 on linear/sigmoid paths
    static ConvParams init(int out_ch, int in_ch, int k, Rng& rng, double gain = 2.0);
    void collect(const std::string& prefix, ParamStore& ps);
};

struct LinearParams {
    Tensor w, b;    // (out, in), (out)
    Tensor gw, gb;
    static LinearParams init(int out_ch, int in_ch, Rng& rng, double gain = 2.0);
    void collect(const std::string& prefix, ParamStore& ps);
};

struct NormParams {
    Tensor gamma, beta;    // (C)
    Tensor ggamma, gbeta;
    static NormParams init(int channels);
    void collect(const std::string& prefix, ParamStore& ps);
};

constexpr double kLayerNormEps = 1e-6;

// One restoration block: conv preprocessing, patch-level scan core, gated
// fusion of the two branches, channel+spatial attention, scaled residual.
struct BlockParams {
    int channels = 0;
    int reduction = 4;
    ConvParams conv1, conv2;     // 3x3
    NormParams ln_in, ln_out;
    SsmParams ssm;
    SsmGrads ssm_g;
    LinearParams gate_w1, gate_w2;  // C -> C/r -> C
    LinearParams ca_w1, ca_w2;      // same bottleneck family
    ConvParams sa;                  // 7x7, 2 -> 1
    Tensor alpha, galpha;           // scalar kept as a (1) tensor

    static BlockParams init(int channels, int state_n, int reduction, double alpha_init, Rng& rng);
    void collect(const std::string& prefix, ParamStore& ps);
};

// Saved activations of one block forward, enough to replay the chain rule.
struct BlockCtx {
    Tensor x;
    Tensor c1, a1;               // conv1 out, relu out
    Tensor f_conv;

    PadRecord pad;
    int pad_h = 0, pad_w = 0;    // padded extent fed to split
    std::vector<Tensor> seq_in;  // unfolded patch sequences (LN_in inputs)
    std::vector<SsmCtx> ssm_ctx;
    std::vector<Tensor> ssm_out;  // LN_out inputs
    Tensor f_m;

    Tensor gate_gap;             // (B, C)
    Tensor gate_z1, gate_h;      // pre/post ReLU bottleneck
    Tensor gate_g;               // sigmoid out (B, C)
    Tensor f_mix;

    Tensor ca_gap, ca_z1, ca_h, ca_g;
    Tensor f_ca;
    Tensor stat_cat;             // [channel mean; channel max]
    std::vector<int> max_arg;
    Tensor sa_g;
    Tensor f_sa;
};

Tensor conv_preprocess(const Tensor& x, BlockParams& p, BlockCtx* ctx);
Tensor patch_mamba_core(const Tensor& x, BlockParams& p, PartitionLevel lv, BlockCtx* ctx);
Tensor gated_fusion(const Tensor& f_conv, const Tensor& f_m, BlockParams& p, BlockCtx* ctx);
Tensor dual_attention(const Tensor& x_in, const Tensor& f_mix, BlockParams& p, BlockCtx* ctx);

Tensor block_forward(const Tensor& x, BlockParams& p, PartitionLevel lv, BlockCtx* ctx);
// returns gx; accumulates into the parameter grad buffers
Tensor block_backward(const Tensor& gy, BlockParams& p, PartitionLevel lv, const BlockCtx& ctx);

// --- hierarchy ---------------------------------------------------------------

struct ModelConfig {
    TaskKind task = TaskKind::denoise;
    int scale = 2;                 // SR factor, ignored for denoise
    int in_channels = 3;
    int out_channels = 3;
    int c0 = 48;                   // base width; stages step by +c0 down, -c0 up
    int n_blocks = 2;
    int state_n = 8;
    PartitionLevel deepest = PartitionLevel::octants;
    int reduction_r = 4;
    double alpha_init = 0.1;

    // split level of descending stage i (0..2); ascending mirrors in reverse
    PartitionLevel stage_level(int i) const;
    int stage_width(int i) const { return c0 + (i + 1) * c0; }
};

struct StageParams {
    PartitionLevel level = PartitionLevel::full;
    ConvParams resize;    // 1x1 lift (descending) or drop (ascending)
    std::vector<BlockParams> blocks;
};

struct Model {
    ModelConfig cfg;
    ConvParams shallow;                 // 3x3, in -> c0
    std::vector<StageParams> down, up;  // 3 each
    ConvParams tail;                    // 3x3, c0 -> out (denoise) or out*s^2 (SR)

    static Model init(const ModelConfig& cfg, uint64_t seed);
    void collect(ParamStore& ps);
    long param_count() const;
};

struct StageCtx {
    Tensor in;                    // resize input (descending) or block-chain input
    std::vector<BlockCtx> blocks;
};

struct ModelCtx {
    Tensor img;
    std::vector<StageCtx> down, up;
    std::vector<Tensor> skips;    // descending stage outputs
    Tensor tail_in;
};

// img: (B, in_channels, H, W) in [0,1]-ish; output same size (denoise) or
// scaled by cfg.scale (SR).
Tensor model_forward(const Tensor& img, Model& m, ModelCtx* ctx);
// returns d(loss)/d(img); accumulates parameter grads
Tensor model_backward(const Tensor& gy, Model& m, const ModelCtx& ctx);

}  // namespace psm
