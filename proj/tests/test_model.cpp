#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "psm/checkpoint.hpp"
#include "psm/gradcheck.hpp"
#include "psm/macs.hpp"
#include "psm/model.hpp"
#include "psm/optim.hpp"
#include "test_util.hpp"

using namespace psm;

namespace {

BlockParams small_block(int channels = 4, int state = 2, uint64_t seed = 5) {
    Rng rng(seed);
    return BlockParams::init(channels, state, 4, 0.1, rng);
}

ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.task = TaskKind::denoise;
    cfg.c0 = 4;
    cfg.n_blocks = 1;
    cfg.state_n = 2;
    cfg.deepest = PartitionLevel::octants;
    cfg.reduction_r = 4;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("task names") {
    CHECK(task_from_string("denoise") == TaskKind::denoise);
    CHECK(task_from_string("sr") == TaskKind::super_resolve);
    CHECK(to_string(TaskKind::super_resolve) == "sr");
    CHECK_THROWS_AS((void)task_from_string("sharpen"), ConfigError);
}

TEST_CASE("conv preprocessing matches the composed ops") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    Tensor x = tu::randu({1, 4, 6, 6}, 1);
    Tensor expect = conv2d(relu(conv2d(x, p.conv1.w, p.conv1.b)), p.conv2.w, p.conv2.b);
    CHECK(bit_equal(conv_preprocess(x, p, nullptr), expect));
}

TEST_CASE("memoryless scan core is partition invariant") {
    // with b = cw = 0 the scan is the pointwise map d*x, so the patch layout
    // cannot matter; exact split/merge then makes all levels bit-identical
    set_precision(Precision::f64);
    BlockParams p = small_block();
    p.ssm.b.fill(0.0);
    p.ssm.cw.fill(0.0);
    Tensor x = tu::randu({2, 4, 8, 8}, 2);
    Tensor ref = patch_mamba_core(x, p, PartitionLevel::full, nullptr);
    for (PartitionLevel lv : {PartitionLevel::halves, PartitionLevel::quadrants,
                              PartitionLevel::octants, PartitionLevel::sixteenths})
        CHECK(bit_equal(patch_mamba_core(x, p, lv, nullptr), ref));
}

TEST_CASE("scan core pads odd extents and restores them") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    Tensor x = tu::randu({1, 4, 5, 7}, 3);
    Tensor y = patch_mamba_core(x, p, PartitionLevel::octants, nullptr);
    CHECK(y.shape() == x.shape());
    CHECK(y.all_finite());
}

TEST_CASE("patches are processed independently") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    Tensor x = tu::randu({1, 4, 8, 8}, 4);
    Tensor y0 = patch_mamba_core(x, p, PartitionLevel::quadrants, nullptr);
    // poke one pixel inside the top-left quadrant
    Tensor x2 = x.clone();
    x2.set(x2.idx4(0, 1, 1, 1), 9.0);
    Tensor y1 = patch_mamba_core(x2, p, PartitionLevel::quadrants, nullptr);
    bool other_quadrants_untouched = true;
    for (int c = 0; c < 4; ++c)
        for (int h = 0; h < 8; ++h)
            for (int w = 0; w < 8; ++w) {
                const bool same_patch = h < 4 && w < 4;
                if (!same_patch && y0.at4(0, c, h, w) != y1.at4(0, c, h, w))
                    other_quadrants_untouched = false;
            }
    CHECK(other_quadrants_untouched);
    CHECK(!bit_equal(y0, y1));
}

TEST_CASE("scan core is causal along the patch raster") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    Tensor x = tu::randu({1, 4, 4, 4}, 5);
    Tensor y0 = patch_mamba_core(x, p, PartitionLevel::full, nullptr);
    Tensor x2 = x.clone();
    x2.set(x2.idx4(0, 2, 2, 1), -3.0);    // raster position 9
    Tensor y1 = patch_mamba_core(x2, p, PartitionLevel::full, nullptr);
    for (int c = 0; c < 4; ++c)
        for (int pos = 0; pos < 9; ++pos)
            CHECK(y0.at4(0, c, pos / 4, pos % 4) == y1.at4(0, c, pos / 4, pos % 4));
    CHECK(y0.at4(0, 0, 2, 1) != y1.at4(0, 0, 2, 1));
}

TEST_CASE("gated fusion with a neutral gate averages the branches") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    p.gate_w1.w.fill(0.0);
    p.gate_w1.b.fill(0.0);
    p.gate_w2.w.fill(0.0);
    p.gate_w2.b.fill(0.0);    // gate = sigmoid(0) = 1/2
    Tensor fc = tu::randu({1, 4, 3, 3}, 6);
    Tensor fm = tu::randu({1, 4, 3, 3}, 7);
    Tensor y = gated_fusion(fc, fm, p, nullptr);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(y.at(i) == doctest::Approx(0.5 * fc.at(i) + 0.5 * fm.at(i)).epsilon(1e-14));
}

TEST_CASE("gate saturation selects one branch") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    p.gate_w1.w.fill(0.0);
    p.gate_w1.b.fill(0.0);
    p.gate_w2.w.fill(0.0);
    p.gate_w2.b.fill(40.0);    // gate ~ 1: conv branch wins
    Tensor fc = tu::randu({1, 4, 3, 3}, 8);
    Tensor fm = tu::randu({1, 4, 3, 3}, 9);
    Tensor y = gated_fusion(fc, fm, p, nullptr);
    CHECK(max_abs_diff(y, fc) < 1e-12);
}

TEST_CASE("attention with zeroed gates has a closed form") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    // both attention MLP/conv outputs become sigmoid(0) = 1/2
    p.ca_w1.w.fill(0.0);
    p.ca_w1.b.fill(0.0);
    p.ca_w2.w.fill(0.0);
    p.ca_w2.b.fill(0.0);
    p.sa.w.fill(0.0);
    p.sa.b.fill(0.0);
    p.alpha.fill(0.2);
    Tensor x = tu::randu({1, 4, 3, 3}, 10);
    Tensor f_mix = tu::randu({1, 4, 3, 3}, 11);
    Tensor y = dual_attention(x, f_mix, p, nullptr);
    // y = x + alpha * (1/2) * (1/2) * f_mix
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(y.at(i) == doctest::Approx(x.at(i) + 0.05 * f_mix.at(i)).epsilon(1e-13));
}

TEST_CASE("zero residual weight passes the input through untouched") {
    set_precision(Precision::f64);
    BlockParams p = small_block();
    p.alpha.fill(0.0);
    Tensor x = tu::randu({1, 4, 8, 8}, 12, 0.0, 1.0);
    Tensor y = block_forward(x, p, PartitionLevel::octants, nullptr);
    CHECK(bit_equal(y, x));
}

TEST_CASE("block gradients") {
    set_precision(Precision::f64);
    BlockParams p = small_block(4, 2, 13);
    Tensor x = tu::randu({1, 4, 8, 8}, 14);
    Tensor gy = tu::randu({1, 4, 8, 8}, 15);
    const PartitionLevel lv = PartitionLevel::octants;

    ParamStore ps;
    p.collect("blk", ps);
    ps.zero_grads();
    BlockCtx ctx;
    (void)block_forward(x, p, lv, &ctx);
    Tensor gx = block_backward(gy, p, lv, ctx);

    auto obj = [&] { return tu::dot(block_forward(x, p, lv, nullptr), gy); };
    const std::vector<double> steps = {1e-3, 1e-4, 1e-5};
    GradReport rp = check_param_grads(ps, obj, steps, 10, 30);
    INFO(rp.worst);
    CHECK(rp.max_rel < 1e-4);
    GradReport rx = check_tensor_grad(x, gx, obj, steps, 30, 31);
    INFO(rx.worst);
    CHECK(rx.max_rel < 1e-4);
}

TEST_CASE("block gradients accumulate across calls") {
    set_precision(Precision::f64);
    BlockParams p = small_block(4, 2, 16);
    Tensor x = tu::randu({1, 4, 4, 4}, 17);
    Tensor gy = tu::randu({1, 4, 4, 4}, 18);
    ParamStore ps;
    p.collect("blk", ps);
    ps.zero_grads();
    BlockCtx c1;
    (void)block_forward(x, p, PartitionLevel::full, &c1);
    (void)block_backward(gy, p, PartitionLevel::full, c1);
    const double once = p.conv1.gw.at(0);
    BlockCtx c2;
    (void)block_forward(x, p, PartitionLevel::full, &c2);
    (void)block_backward(gy, p, PartitionLevel::full, c2);
    CHECK(p.conv1.gw.at(0) == doctest::Approx(2 * once).epsilon(1e-12));
}

TEST_CASE("stage levels descend toward the configured deepest split") {
    ModelConfig cfg = small_cfg();
    cfg.deepest = PartitionLevel::octants;
    CHECK(cfg.stage_level(0) == PartitionLevel::halves);
    CHECK(cfg.stage_level(1) == PartitionLevel::quadrants);
    CHECK(cfg.stage_level(2) == PartitionLevel::octants);

    cfg.deepest = PartitionLevel::full;
    for (int i = 0; i < 3; ++i) CHECK(cfg.stage_level(i) == PartitionLevel::full);

    cfg.deepest = PartitionLevel::sixteenths;
    CHECK(cfg.stage_level(0) == PartitionLevel::quadrants);
    CHECK(cfg.stage_level(2) == PartitionLevel::sixteenths);

    cfg.deepest = PartitionLevel::halves;
    CHECK(cfg.stage_level(0) == PartitionLevel::full);
    CHECK(cfg.stage_level(1) == PartitionLevel::full);
    CHECK(cfg.stage_level(2) == PartitionLevel::halves);
}

TEST_CASE("hierarchy widths step by the base width") {
    set_precision(Precision::f32);
    ModelConfig cfg;
    cfg.c0 = 48;
    cfg.n_blocks = 1;
    cfg.state_n = 4;
    Model m = Model::init(cfg, 1);
    ParamStore ps;
    m.collect(ps);
    CHECK(ps.find("shallow.w")->value->shape() == Shape{48, 3, 3, 3});
    CHECK(ps.find("down.0.lift.w")->value->shape() == Shape{96, 48, 1, 1});
    CHECK(ps.find("down.1.lift.w")->value->shape() == Shape{144, 96, 1, 1});
    CHECK(ps.find("down.2.lift.w")->value->shape() == Shape{192, 144, 1, 1});
    CHECK(ps.find("down.2.block.0.conv1.w")->value->shape() == Shape{192, 192, 3, 3});
    CHECK(ps.find("up.0.drop.w")->value->shape() == Shape{144, 192, 1, 1});
    CHECK(ps.find("up.2.drop.w")->value->shape() == Shape{48, 96, 1, 1});
    CHECK(ps.find("tail.w")->value->shape() == Shape{3, 48, 3, 3});
    set_precision(Precision::f64);
}

TEST_CASE("partition level does not change the parameter count") {
    set_precision(Precision::f32);
    ModelConfig a = small_cfg();
    a.c0 = 16;
    ModelConfig b = a;
    b.deepest = PartitionLevel::full;
    CHECK(Model::init(a, 3).param_count() == Model::init(b, 3).param_count());
    set_precision(Precision::f64);
}

TEST_CASE("model init is seed deterministic") {
    set_precision(Precision::f64);
    ModelConfig cfg = small_cfg();
    Model a = Model::init(cfg, 9);
    Model b = Model::init(cfg, 9);
    Model c = Model::init(cfg, 10);
    ParamStore pa, pb, pc;
    a.collect(pa);
    b.collect(pb);
    c.collect(pc);
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!bit_equal(*pa.refs()[i].value, *pb.refs()[i].value)) all_same = false;
        if (!bit_equal(*pa.refs()[i].value, *pc.refs()[i].value)) any_diff = true;
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("denoise model with a zero tail is the identity") {
    set_precision(Precision::f64);
    Model m = Model::init(small_cfg(), 20);
    m.tail.w.fill(0.0);
    m.tail.b.fill(0.0);
    Tensor img = tu::randu({1, 3, 8, 8}, 21, 0.0, 1.0);
    CHECK(bit_equal(model_forward(img, m, nullptr), img));
}

TEST_CASE("upscale model with a zero tail reduces to plain interpolation") {
    set_precision(Precision::f64);
    ModelConfig cfg = small_cfg();
    cfg.task = TaskKind::super_resolve;
    cfg.scale = 2;
    Model m = Model::init(cfg, 22);
    m.tail.w.fill(0.0);
    m.tail.b.fill(0.0);
    CHECK(m.tail.w.dim(0) == 3 * 2 * 2);
    Tensor img = tu::randu({1, 3, 6, 6}, 23, 0.0, 1.0);
    Tensor y = model_forward(img, m, nullptr);
    CHECK(y.shape() == Shape{1, 3, 12, 12});
    CHECK(bit_equal(y, bilinear_upsample(img, 2)));
}

TEST_CASE("model gradients") {
    set_precision(Precision::f64);
    Model m = Model::init(small_cfg(), 24);
    Tensor img = tu::randu({1, 3, 8, 8}, 25, 0.0, 1.0);
    Tensor gy = tu::randu({1, 3, 8, 8}, 26);

    ParamStore ps;
    m.collect(ps);
    ps.zero_grads();
    ModelCtx ctx;
    (void)model_forward(img, m, &ctx);
    Tensor gimg = model_backward(gy, m, ctx);

    // multi-step check: the objective sums 192 outputs, so small steps drown
    // tiny coordinates in cancellation noise while large steps straddle ReLU
    // kinks; a correct gradient agrees at some scale, a wrong one at none
    const std::vector<double> steps = {1e-3, 1e-4, 1e-5};
    auto obj = [&] { return tu::dot(model_forward(img, m, nullptr), gy); };
    GradReport rp = check_param_grads(ps, obj, steps, 3, 40);
    INFO(rp.worst);
    CHECK(rp.max_rel < 1e-4);
    GradReport rx = check_tensor_grad(img, gimg, obj, steps, 20, 41);
    INFO(rx.worst);
    CHECK(rx.max_rel < 1e-4);
}

TEST_CASE("upscale model gradients") {
    set_precision(Precision::f64);
    ModelConfig cfg = small_cfg();
    cfg.task = TaskKind::super_resolve;
    cfg.scale = 2;
    Model m = Model::init(cfg, 27);
    Tensor img = tu::randu({1, 3, 8, 8}, 28, 0.0, 1.0);
    Tensor gy = tu::randu({1, 3, 16, 16}, 29);
    ParamStore ps;
    m.collect(ps);
    ps.zero_grads();
    ModelCtx ctx;
    (void)model_forward(img, m, &ctx);
    Tensor gimg = model_backward(gy, m, ctx);
    const std::vector<double> steps = {1e-3, 1e-4, 1e-5};
    auto obj = [&] { return tu::dot(model_forward(img, m, nullptr), gy); };
    GradReport rp = check_param_grads(ps, obj, steps, 2, 42);
    INFO(rp.worst);
    CHECK(rp.max_rel < 1e-4);
    GradReport rx = check_tensor_grad(img, gimg, obj, steps, 12, 43);
    INFO(rx.worst);
    CHECK(rx.max_rel < 1e-4);
}

TEST_CASE("compute grows linearly with pixel count") {
    set_precision(Precision::f64);
    ModelConfig cfg = small_cfg();
    cfg.c0 = 8;
    Model m = Model::init(cfg, 30);
    Tensor a = tu::randu({1, 3, 16, 16}, 31, 0.0, 1.0);
    Tensor b = tu::randu({1, 3, 32, 32}, 32, 0.0, 1.0);
    macs::reset();
    (void)model_forward(a, m, nullptr);
    const uint64_t small = macs::count();
    macs::reset();
    (void)model_forward(b, m, nullptr);
    const uint64_t large = macs::count();
    const double ratio = static_cast<double>(large) / static_cast<double>(small);
    CHECK(ratio > 4.0 * 0.95);
    CHECK(ratio < 4.0 * 1.05);
}

TEST_CASE("checkpoint round-trip preserves parameters and outputs") {
    set_precision(Precision::f32);
    Model m = Model::init(small_cfg(), 33);
    Tensor img = tu::randu({1, 3, 8, 8}, 34, 0.0, 1.0);
    Tensor before = model_forward(img, m, nullptr);

    const std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(path, m, nullptr);
    Model back = load_checkpoint(path, nullptr);

    ParamStore pa, pb;
    m.collect(pa);
    back.collect(pb);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa.refs()[i].name == pb.refs()[i].name);
        CHECK(bit_equal(*pa.refs()[i].value, *pb.refs()[i].value));
    }
    Tensor img32 = img.cast(Precision::f32);
    CHECK(bit_equal(model_forward(img32, back, nullptr), before));
    std::remove(path.c_str());
    set_precision(Precision::f64);
}

TEST_CASE("checkpoint keeps its stored precision under a different mode") {
    set_precision(Precision::f32);
    Model m = Model::init(small_cfg(), 35);
    const std::string path = "ckpt_prec.bin";
    save_checkpoint(path, m, nullptr);
    set_precision(Precision::f64);    // ambient mode differs at load time
    Model back = load_checkpoint(path, nullptr);
    ParamStore ps;
    back.collect(ps);
    CHECK(!ps.refs()[0].value->is_f64());
    std::remove(path.c_str());
}

TEST_CASE("optimizer state rides along in the checkpoint") {
    set_precision(Precision::f64);
    Model m = Model::init(small_cfg(), 36);
    ParamStore ps;
    m.collect(ps);
    AdamState st;
    st.init(ps);
    st.step = 17;
    Rng rng(37);
    for (Tensor& t : st.m)
        for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform());
    for (Tensor& t : st.v)
        for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform());

    const std::string path = "ckpt_opt.bin";
    save_checkpoint(path, m, &st);
    AdamState st2;
    Model back = load_checkpoint(path, &st2);
    (void)back;
    CHECK(st2.step == 17);
    REQUIRE(st2.m.size() == st.m.size());
    for (std::size_t i = 0; i < st.m.size(); ++i) {
        CHECK(bit_equal(st.m[i], st2.m[i]));
        CHECK(bit_equal(st.v[i], st2.v[i]));
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects tampered files") {
    set_precision(Precision::f64);
    Model m = Model::init(small_cfg(), 38);
    const std::string path = "ckpt_tamper.bin";
    save_checkpoint(path, m, nullptr);
    const std::string good = slurp(path);

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        spit(path, bad);
        CHECK_THROWS_AS((void)load_checkpoint(path, nullptr), CheckpointError);
    }
    SUBCASE("unknown version") {
        std::string bad = good;
        bad[4] = 99;
        spit(path, bad);
        CHECK_THROWS_AS((void)load_checkpoint(path, nullptr), CheckpointError);
    }
    SUBCASE("unknown record name") {
        std::string bad = good;
        const std::size_t pos = bad.find("shallow.w");
        REQUIRE(pos != std::string::npos);
        bad[pos] = 'z';
        spit(path, bad);
        CHECK_THROWS_AS((void)load_checkpoint(path, nullptr), CheckpointError);
    }
    SUBCASE("shape mismatch") {
        std::string bad = good;
        const std::size_t pos = bad.find("shallow.w");
        REQUIRE(pos != std::string::npos);
        // swap the first two dims of the (4,3,3,3) weight: numel unchanged,
        // payload still parses, shape no longer matches the model
        const std::size_t dims = pos + 9 + 2;
        for (int i = 0; i < 4; ++i) std::swap(bad[dims + i], bad[dims + 4 + i]);
        spit(path, bad);
        CHECK_THROWS_WITH_AS((void)load_checkpoint(path, nullptr),
                             doctest::Contains("shape mismatch"), CheckpointError);
    }
    SUBCASE("truncated file") {
        spit(path, good.substr(0, good.size() / 2));
        CHECK_THROWS_AS((void)load_checkpoint(path, nullptr), CheckpointError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS((void)load_checkpoint("no_such_file.bin", nullptr), CheckpointError);
    }
    std::remove(path.c_str());
}
