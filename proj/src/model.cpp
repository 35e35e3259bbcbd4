#include "psm/model.hpp"

#include <algorithm>
#include <cmath>

namespace psm {

TaskKind task_from_string(const std::string& name) {
    if (name == "denoise") return TaskKind::denoise;
    if (name == "sr") return TaskKind::super_resolve;
    throw ConfigError("unknown task '" + name + "' (expected denoise or sr)");
}

std::string to_string(TaskKind t) {
    return t == TaskKind::denoise ? "denoise" : "sr";
}

ConvParams ConvParams::init(int out_ch, int in_ch, int k, Rng& rng, double gain) {
    ConvParams p;
    const double std = std::sqrt(gain / (static_cast<double>(in_ch) * k * k));
    p.w = Tensor::rand_normal(Shape{out_ch, in_ch, k, k}, rng, 0.0, std);
    p.b = Tensor(Shape{out_ch});
    p.gw = Tensor(p.w.shape());
    p.gb = Tensor(p.b.shape());
    return p;
}

void ConvParams::collect(const std::string& prefix, ParamStore& ps) {
    ps.add(prefix + ".w", &w, &gw);
    ps.add(prefix + ".b", &b, &gb);
}

LinearParams LinearParams::init(int out_ch, int in_ch, Rng& rng, double gain) {
    LinearParams p;
    const double std = std::sqrt(gain / static_cast<double>(in_ch));
    p.w = Tensor::rand_normal(Shape{out_ch, in_ch}, rng, 0.0, std);
    p.b = Tensor(Shape{out_ch});
    p.gw = Tensor(p.w.shape());
    p.gb = Tensor(p.b.shape());
    return p;
}

void LinearParams::collect(const std::string& prefix, ParamStore& ps) {
    ps.add(prefix + ".w", &w, &gw);
    ps.add(prefix + ".b", &b, &gb);
}

NormParams NormParams::init(int channels) {
    NormParams p;
    p.gamma = Tensor::full(Shape{channels}, 1.0);
    p.beta = Tensor(Shape{channels});
    p.ggamma = Tensor(p.gamma.shape());
    p.gbeta = Tensor(p.beta.shape());
    return p;
}

void NormParams::collect(const std::string& prefix, ParamStore& ps) {
    ps.add(prefix + ".gamma", &gamma, &ggamma);
    ps.add(prefix + ".beta", &beta, &gbeta);
}

BlockParams BlockParams::init(int channels, int state_n, int reduction, double alpha_init,
                              Rng& rng) {
    if (channels % reduction != 0)
        fail_shape("block: reduction " + std::to_string(reduction) + " must divide width " +
                   std::to_string(channels));
    BlockParams p;
    p.channels = channels;
    p.reduction = reduction;
    p.conv1 = ConvParams::init(channels, channels, 3, rng);
    p.conv2 = ConvParams::init(channels, channels, 3, rng, 1.0);
    p.ln_in = NormParams::init(channels);
    p.ln_out = NormParams::init(channels);
    p.ssm = SsmParams::init(channels, state_n, rng);
    p.ssm_g = SsmGrads::zeros_like(p.ssm);
    const int mid = channels / reduction;
    p.gate_w1 = LinearParams::init(mid, channels, rng);
    p.gate_w2 = LinearParams::init(channels, mid, rng, 1.0);
    p.ca_w1 = LinearParams::init(mid, channels, rng);
    p.ca_w2 = LinearParams::init(channels, mid, rng, 1.0);
    p.sa = ConvParams::init(1, 2, 7, rng, 1.0);
    p.alpha = Tensor::full(Shape{1}, alpha_init);
    p.galpha = Tensor(Shape{1});
    return p;
}

void BlockParams::collect(const std::string& prefix, ParamStore& ps) {
    conv1.collect(prefix + ".conv1", ps);
    conv2.collect(prefix + ".conv2", ps);
    ln_in.collect(prefix + ".ln_in", ps);
    ln_out.collect(prefix + ".ln_out", ps);
    ps.add(prefix + ".ssm.a_raw", &ssm.a_raw, &ssm_g.a_raw);
    ps.add(prefix + ".ssm.b", &ssm.b, &ssm_g.b);
    ps.add(prefix + ".ssm.cw", &ssm.cw, &ssm_g.cw);
    ps.add(prefix + ".ssm.d", &ssm.d, &ssm_g.d);
    gate_w1.collect(prefix + ".gate_w1", ps);
    gate_w2.collect(prefix + ".gate_w2", ps);
    ca_w1.collect(prefix + ".ca_w1", ps);
    ca_w2.collect(prefix + ".ca_w2", ps);
    sa.collect(prefix + ".sa", ps);
    ps.add(prefix + ".alpha", &alpha, &galpha);
}

Tensor conv_preprocess(const Tensor& x, BlockParams& p, BlockCtx* ctx) {
    Tensor c1 = conv2d(x, p.conv1.w, p.conv1.b);
    Tensor a1 = relu(c1);
    Tensor f_conv = conv2d(a1, p.conv2.w, p.conv2.b);
    if (ctx) {
        ctx->c1 = std::move(c1);
        ctx->a1 = std::move(a1);
        ctx->f_conv = f_conv;
    }
    return f_conv;
}

Tensor patch_mamba_core(const Tensor& x, BlockParams& p, PartitionLevel lv, BlockCtx* ctx) {
    int mh = 1, mw = 1;
    partition_multiples(lv, &mh, &mw);
    auto [x_pad, rec] = pad_to_multiple(x, mh, mw);
    const int hp = x_pad.dim(2), wp = x_pad.dim(3);
    const PartitionSpec spec = partition_spec(lv, hp, wp);
    std::vector<Tensor> patches = split(x_pad, lv);
    std::vector<Tensor> out;
    out.reserve(patches.size());
    for (Tensor& patch : patches) {
        Tensor seq = unfold(patch);
        Tensor normed = layer_norm(seq, p.ln_in.gamma, p.ln_in.beta, kLayerNormEps);
        SsmCtx sctx;
        Tensor scanned = ssm_scan(normed, p.ssm, ctx ? &sctx : nullptr);
        Tensor ln2 = layer_norm(scanned, p.ln_out.gamma, p.ln_out.beta, kLayerNormEps);
        out.push_back(fold(ln2, spec.patch_h, spec.patch_w));
        if (ctx) {
            ctx->seq_in.push_back(std::move(seq));
            ctx->ssm_ctx.push_back(std::move(sctx));
            ctx->ssm_out.push_back(std::move(scanned));
        }
    }
    Tensor merged = merge(out, lv, hp, wp);
    Tensor f_m = crop(merged, rec);
    if (ctx) {
        ctx->pad = rec;
        ctx->pad_h = hp;
        ctx->pad_w = wp;
        ctx->f_m = f_m;
    }
    return f_m;
}

Tensor gated_fusion(const Tensor& f_conv, const Tensor& f_m, BlockParams& p, BlockCtx* ctx) {
    require_same_shape(f_conv, f_m, "gated_fusion");
    Tensor sum = add(f_conv, f_m);
    Tensor gap = global_avg_pool(sum);
    Tensor z1 = linear(gap, p.gate_w1.w, p.gate_w1.b);
    Tensor h = relu(z1);
    Tensor g = sigmoid(linear(h, p.gate_w2.w, p.gate_w2.b));
    Tensor f_mix = gated_mix(f_conv, f_m, g);
    if (ctx) {
        ctx->gate_gap = std::move(gap);
        ctx->gate_z1 = std::move(z1);
        ctx->gate_h = std::move(h);
        ctx->gate_g = std::move(g);
        ctx->f_mix = f_mix;
    }
    return f_mix;
}

Tensor dual_attention(const Tensor& x_in, const Tensor& f_mix, BlockParams& p, BlockCtx* ctx) {
    require_same_shape(x_in, f_mix, "dual_attention");
    Tensor gap = global_avg_pool(f_mix);
    Tensor z1 = linear(gap, p.ca_w1.w, p.ca_w1.b);
    Tensor h = relu(z1);
    Tensor ca_g = sigmoid(linear(h, p.ca_w2.w, p.ca_w2.b));
    Tensor f_ca = mul_channels(f_mix, ca_g);

    Tensor mean = channel_mean(f_ca);
    auto [mx, arg] = channel_max(f_ca);
    Tensor cat = concat_channels(mean, mx);
    Tensor sa_g = sigmoid(conv2d(cat, p.sa.w, p.sa.b));
    Tensor f_sa = mul_spatial(f_ca, sa_g);
    Tensor y = add_scaled(x_in, f_sa, p.alpha.at(0));
    if (ctx) {
        ctx->ca_gap = std::move(gap);
        ctx->ca_z1 = std::move(z1);
        ctx->ca_h = std::move(h);
        ctx->ca_g = std::move(ca_g);
        ctx->f_ca = std::move(f_ca);
        ctx->stat_cat = std::move(cat);
        ctx->max_arg = std::move(arg);
        ctx->sa_g = std::move(sa_g);
        ctx->f_sa = std::move(f_sa);
    }
    return y;
}

Tensor block_forward(const Tensor& x, BlockParams& p, PartitionLevel lv, BlockCtx* ctx) {
    if (ctx) ctx->x = x;
    Tensor f_conv = conv_preprocess(x, p, ctx);
    Tensor f_m = patch_mamba_core(x, p, lv, ctx);
    Tensor f_mix = gated_fusion(f_conv, f_m, p, ctx);
    return dual_attention(x, f_mix, p, ctx);
}

Tensor block_backward(const Tensor& gy, BlockParams& p, PartitionLevel lv, const BlockCtx& ctx) {
    const int C = p.channels;
    const int H = ctx.x.dim(2), W = ctx.x.dim(3);

    // residual tail: y = x + alpha * f_sa
    double galpha = 0.0;
    Tensor g_fsa = add_scaled_backward(ctx.f_sa, gy, p.alpha.at(0), &galpha);
    p.galpha.add_at(0, galpha);

    // spatial attention
    Tensor g_fca(ctx.f_ca.shape(), ctx.f_ca.prec());
    Tensor g_sag(ctx.sa_g.shape(), ctx.sa_g.prec());
    mul_spatial_backward(ctx.f_ca, ctx.sa_g, g_fsa, &g_fca, &g_sag);
    Tensor g_saz = sigmoid_backward(ctx.sa_g, g_sag);
    Tensor g_cat(ctx.stat_cat.shape(), ctx.stat_cat.prec());
    conv2d_backward(ctx.stat_cat, p.sa.w, g_saz, &g_cat, &p.sa.gw, &p.sa.gb);
    Tensor g_mean(Shape{gy.dim(0), 1, H, W}, gy.prec());
    Tensor g_max(g_mean.shape(), g_mean.prec());
    concat_channels_backward(g_cat, 1, &g_mean, &g_max);
    g_fca = add(g_fca, channel_mean_backward(g_mean, C));
    g_fca = add(g_fca, channel_max_backward(g_max, ctx.max_arg, C));

    // channel attention
    Tensor g_fmix(ctx.f_mix.shape(), ctx.f_mix.prec());
    Tensor g_cag(ctx.ca_g.shape(), ctx.ca_g.prec());
    mul_channels_backward(ctx.f_mix, ctx.ca_g, g_fca, &g_fmix, &g_cag);
    Tensor g_caz2 = sigmoid_backward(ctx.ca_g, g_cag);
    Tensor g_cah(ctx.ca_h.shape(), ctx.ca_h.prec());
    linear_backward(ctx.ca_h, p.ca_w2.w, g_caz2, &g_cah, &p.ca_w2.gw, &p.ca_w2.gb);
    Tensor g_caz1 = relu_backward(ctx.ca_z1, g_cah);
    Tensor g_cagap(ctx.ca_gap.shape(), ctx.ca_gap.prec());
    linear_backward(ctx.ca_gap, p.ca_w1.w, g_caz1, &g_cagap, &p.ca_w1.gw, &p.ca_w1.gb);
    g_fmix = add(g_fmix, global_avg_pool_backward(g_cagap, H, W));

    // gated fusion
    Tensor g_fc(ctx.f_conv.shape(), ctx.f_conv.prec());
    Tensor g_fm(ctx.f_m.shape(), ctx.f_m.prec());
    Tensor g_g(ctx.gate_g.shape(), ctx.gate_g.prec());
    gated_mix_backward(ctx.f_conv, ctx.f_m, ctx.gate_g, g_fmix, &g_fc, &g_fm, &g_g);
    Tensor g_z2 = sigmoid_backward(ctx.gate_g, g_g);
    Tensor g_h(ctx.gate_h.shape(), ctx.gate_h.prec());
    linear_backward(ctx.gate_h, p.gate_w2.w, g_z2, &g_h, &p.gate_w2.gw, &p.gate_w2.gb);
    Tensor g_z1 = relu_backward(ctx.gate_z1, g_h);
    Tensor g_gap(ctx.gate_gap.shape(), ctx.gate_gap.prec());
    linear_backward(ctx.gate_gap, p.gate_w1.w, g_z1, &g_gap, &p.gate_w1.gw, &p.gate_w1.gb);
    Tensor g_sum = global_avg_pool_backward(g_gap, H, W);
    g_fc = add(g_fc, g_sum);
    g_fm = add(g_fm, g_sum);

    // patch core
    Tensor g_merged = crop_backward(g_fm, ctx.pad_h, ctx.pad_w);
    const PartitionSpec spec = partition_spec(lv, ctx.pad_h, ctx.pad_w);
    std::vector<Tensor> g_patches = split(g_merged, lv);
    std::vector<Tensor> g_patch_in;
    g_patch_in.reserve(g_patches.size());
    for (std::size_t j = 0; j < g_patches.size(); ++j) {
        Tensor g_seq2 = unfold(g_patches[j]);
        Tensor g_scanned = layer_norm_backward(ctx.ssm_out[j], p.ln_out.gamma, kLayerNormEps,
                                               g_seq2, &p.ln_out.ggamma, &p.ln_out.gbeta);
        Tensor g_normed = ssm_scan_backward(ctx.ssm_ctx[j], p.ssm, g_scanned, p.ssm_g);
        Tensor g_seq = layer_norm_backward(ctx.seq_in[j], p.ln_in.gamma, kLayerNormEps, g_normed,
                                           &p.ln_in.ggamma, &p.ln_in.gbeta);
        g_patch_in.push_back(fold(g_seq, spec.patch_h, spec.patch_w));
    }
    Tensor g_xpad = merge(g_patch_in, lv, ctx.pad_h, ctx.pad_w);
    Tensor gx = pad_to_multiple_backward(g_xpad, ctx.pad);

    // conv preprocessing
    Tensor g_a1(ctx.a1.shape(), ctx.a1.prec());
    conv2d_backward(ctx.a1, p.conv2.w, g_fc, &g_a1, &p.conv2.gw, &p.conv2.gb);
    Tensor g_c1 = relu_backward(ctx.c1, g_a1);
    Tensor g_xc(ctx.x.shape(), ctx.x.prec());
    conv2d_backward(ctx.x, p.conv1.w, g_c1, &g_xc, &p.conv1.gw, &p.conv1.gb);

    gx = add(gx, g_xc);
    gx = add(gx, gy);    // residual path
    return gx;
}

PartitionLevel ModelConfig::stage_level(int i) const {
    int idx = static_cast<int>(deepest) - 2 + i;
    idx = std::max(0, std::min(idx, 4));
    return static_cast<PartitionLevel>(idx);
}

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
    Model m;
    m.cfg = cfg;
    Rng rng(mix_seed(seed, "model-init"));
    m.shallow = ConvParams::init(cfg.c0, cfg.in_channels, 3, rng, 1.0);
    int width = cfg.c0;
    for (int i = 0; i < 3; ++i) {
        StageParams st;
        st.level = cfg.stage_level(i);
        st.resize = ConvParams::init(width + cfg.c0, width, 1, rng, 1.0);
        width += cfg.c0;
        for (int j = 0; j < cfg.n_blocks; ++j)
            st.blocks.push_back(BlockParams::init(width, cfg.state_n, cfg.reduction_r,
                                                  cfg.alpha_init, rng));
        m.down.push_back(std::move(st));
    }
    for (int i = 0; i < 3; ++i) {
        StageParams st;
        st.level = cfg.stage_level(2 - i);
        for (int j = 0; j < cfg.n_blocks; ++j)
            st.blocks.push_back(BlockParams::init(width, cfg.state_n, cfg.reduction_r,
                                                  cfg.alpha_init, rng));
        st.resize = ConvParams::init(width - cfg.c0, width, 1, rng, 1.0);
        width -= cfg.c0;
        m.up.push_back(std::move(st));
    }
    const int out_ch = cfg.task == TaskKind::super_resolve ? cfg.out_channels * cfg.scale * cfg.scale
                                                           : cfg.out_channels;
    // tail starts near zero so the untrained net is close to its global skip
    // (identity for denoise, bilinear for sr); kept nonzero to leave gradients alive
    m.tail = ConvParams::init(out_ch, width, 3, rng, 1e-4);
    return m;
}

void Model::collect(ParamStore& ps) {
    shallow.collect("shallow", ps);
    for (std::size_t i = 0; i < down.size(); ++i) {
        const std::string prefix = "down." + std::to_string(i);
        down[i].resize.collect(prefix + ".lift", ps);
        for (std::size_t j = 0; j < down[i].blocks.size(); ++j)
            down[i].blocks[j].collect(prefix + ".block." + std::to_string(j), ps);
    }
    for (std::size_t i = 0; i < up.size(); ++i) {
        const std::string prefix = "up." + std::to_string(i);
        for (std::size_t j = 0; j < up[i].blocks.size(); ++j)
            up[i].blocks[j].collect(prefix + ".block." + std::to_string(j), ps);
        up[i].resize.collect(prefix + ".drop", ps);
    }
    tail.collect("tail", ps);
}

long Model::param_count() const {
    ParamStore ps;
    const_cast<Model*>(this)->collect(ps);
    return ps.total_elements();
}

Tensor model_forward(const Tensor& img_in, Model& m, ModelCtx* ctx) {
    require_rank(img_in, 4, "model_forward");
    if (img_in.dim(1) != m.cfg.in_channels)
        fail_shape("model_forward: expected " + std::to_string(m.cfg.in_channels) +
                   " input channels, got " + shape_str(img_in.shape()));
    // a loaded checkpoint fixes the parameter precision; run the pass in it
    const Tensor img =
        img_in.prec() == m.shallow.w.prec() ? img_in : img_in.cast(m.shallow.w.prec());
    if (ctx) {
        ctx->img = img;
        ctx->down.resize(3);
        ctx->up.resize(3);
    }
    Tensor x = conv2d(img, m.shallow.w, m.shallow.b);
    std::vector<Tensor> skips;
    for (int i = 0; i < 3; ++i) {
        StageParams& st = m.down[static_cast<std::size_t>(i)];
        StageCtx* sc = ctx ? &ctx->down[static_cast<std::size_t>(i)] : nullptr;
        if (sc) sc->in = x;
        x = conv2d(x, st.resize.w, st.resize.b);
        for (std::size_t j = 0; j < st.blocks.size(); ++j) {
            if (sc) sc->blocks.emplace_back();
            x = block_forward(x, st.blocks[j], st.level, sc ? &sc->blocks.back() : nullptr);
        }
        skips.push_back(x);
    }
    if (ctx) ctx->skips = skips;
    for (int i = 0; i < 3; ++i) {
        StageParams& st = m.up[static_cast<std::size_t>(i)];
        StageCtx* sc = ctx ? &ctx->up[static_cast<std::size_t>(i)] : nullptr;
        // mirrored skip: descending stage 2-i feeds ascending stage i
        x = add(x, skips[static_cast<std::size_t>(2 - i)]);
        for (std::size_t j = 0; j < st.blocks.size(); ++j) {
            if (sc) sc->blocks.emplace_back();
            x = block_forward(x, st.blocks[j], st.level, sc ? &sc->blocks.back() : nullptr);
        }
        if (sc) sc->in = x;
        x = conv2d(x, st.resize.w, st.resize.b);
    }
    if (ctx) ctx->tail_in = x;
    Tensor t = conv2d(x, m.tail.w, m.tail.b);
    if (m.cfg.task == TaskKind::super_resolve) {
        Tensor up = depth_to_space(t, m.cfg.scale);
        return add(up, bilinear_upsample(img, m.cfg.scale));
    }
    return add(img, t);
}

Tensor model_backward(const Tensor& gy, Model& m, const ModelCtx& ctx) {
    const int H = ctx.img.dim(2), W = ctx.img.dim(3);
    Tensor g_img;
    Tensor g_t;
    if (m.cfg.task == TaskKind::super_resolve) {
        g_t = depth_to_space_backward(gy, m.cfg.scale);
        g_img = bilinear_upsample_backward(gy, m.cfg.scale, H, W);
    } else {
        g_t = gy;
        g_img = gy;
    }
    Tensor gx(ctx.tail_in.shape(), ctx.tail_in.prec());
    conv2d_backward(ctx.tail_in, m.tail.w, g_t, &gx, &m.tail.gw, &m.tail.gb);

    std::vector<Tensor> g_skips(3);
    for (int i = 2; i >= 0; --i) {
        StageParams& st = m.up[static_cast<std::size_t>(i)];
        const StageCtx& sc = ctx.up[static_cast<std::size_t>(i)];
        Tensor g_blocks(sc.in.shape(), sc.in.prec());
        conv2d_backward(sc.in, st.resize.w, gx, &g_blocks, &st.resize.gw, &st.resize.gb);
        for (int j = static_cast<int>(st.blocks.size()) - 1; j >= 0; --j)
            g_blocks = block_backward(g_blocks, st.blocks[static_cast<std::size_t>(j)], st.level,
                                      sc.blocks[static_cast<std::size_t>(j)]);
        // add-skip junction: gradient continues down both branches
        g_skips[static_cast<std::size_t>(2 - i)] = g_blocks;
        gx = g_blocks;
    }
    for (int i = 2; i >= 0; --i) {
        StageParams& st = m.down[static_cast<std::size_t>(i)];
        const StageCtx& sc = ctx.down[static_cast<std::size_t>(i)];
        // stage output feeds the mirrored skip plus the next stage in line
        Tensor g_out = add(g_skips[static_cast<std::size_t>(i)], gx);
        for (int j = static_cast<int>(st.blocks.size()) - 1; j >= 0; --j)
            g_out = block_backward(g_out, st.blocks[static_cast<std::size_t>(j)], st.level,
                                   sc.blocks[static_cast<std::size_t>(j)]);
        Tensor g_in(sc.in.shape(), sc.in.prec());
        conv2d_backward(sc.in, st.resize.w, g_out, &g_in, &st.resize.gw, &st.resize.gb);
        gx = g_in;
    }
    Tensor g_shallow_in(ctx.img.shape(), ctx.img.prec());
    conv2d_backward(ctx.img, m.shallow.w, gx, &g_shallow_in, &m.shallow.gw, &m.shallow.gb);
    return add(g_img, g_shallow_in);
}

}  // namespace psm
