#include "psm/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "psm/checkpoint.hpp"
#include "psm/data.hpp"
#include "psm/loss.hpp"
#include "psm/metrics.hpp"
#include "psm/optim.hpp"

namespace psm {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Tensor crop4(const Tensor& img, int y0, int x0, int h, int w) {
    Tensor out(Shape{img.dim(0), img.dim(1), h, w}, img.prec());
    for (int b = 0; b < img.dim(0); ++b)
        for (int c = 0; c < img.dim(1); ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    out.set(out.idx4(b, c, y, x), img.at4(b, c, y0 + y, x0 + x));
    return out;
}

Tensor flip_w(const Tensor& img) {
    Tensor out(img.shape(), img.prec());
    const int w = img.dim(3);
    for (int b = 0; b < img.dim(0); ++b)
        for (int c = 0; c < img.dim(1); ++c)
            for (int y = 0; y < img.dim(2); ++y)
                for (int x = 0; x < w; ++x)
                    out.set(out.idx4(b, c, y, x), img.at4(b, c, y, w - 1 - x));
    return out;
}

// quarter turns counterclockwise; square inputs only
Tensor rot90(const Tensor& img, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return img;
    Tensor cur = img;
    for (int i = 0; i < k; ++i) {
        const int h = cur.dim(2), w = cur.dim(3);
        Tensor out(Shape{cur.dim(0), cur.dim(1), w, h}, cur.prec());
        for (int b = 0; b < cur.dim(0); ++b)
            for (int c = 0; c < cur.dim(1); ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        out.set(out.idx4(b, c, w - 1 - x, y), cur.at4(b, c, y, x));
        cur = std::move(out);
    }
    return cur;
}

struct Dataset {
    std::vector<Tensor> train, val;
    std::vector<std::string> train_names, val_names;
};

Dataset load_dataset(const std::string& dir, int min_side, std::ostream& log) {
    if (!std::filesystem::is_directory(dir)) throw DataError("data directory '" + dir + "' not found");
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError("no PNG images in '" + dir + "'");
    Dataset ds;
    for (const std::string& p : paths) {
        Tensor img;
        try {
            img = read_png(p);
        } catch (const DataError& e) {
            log << "warning: skipping " << p << " (" << e.what() << ")\n";
            continue;
        }
        if (img.dim(2) < min_side || img.dim(3) < min_side) {
            log << "warning: skipping " << p << " (smaller than crop " << min_side << ")\n";
            continue;
        }
        const std::string name = std::filesystem::path(p).filename().string();
        if (is_validation_file(name)) {
            ds.val.push_back(std::move(img));
            ds.val_names.push_back(name);
        } else {
            ds.train.push_back(std::move(img));
            ds.train_names.push_back(name);
        }
    }
    if (ds.train.empty() && ds.val.empty()) throw DataError("no usable images in '" + dir + "'");
    if (ds.val.empty()) {
        ds.val.push_back(ds.train.back());
        ds.val_names.push_back(ds.train_names.back());
        ds.train.pop_back();
        ds.train_names.pop_back();
    }
    if (ds.train.empty()) {
        ds.train = ds.val;
        ds.train_names = ds.val_names;
    }
    return ds;
}

struct ValScore {
    double psnr_restored = 0, ssim_restored = 0, psnr_degraded = 0;
};

ValScore validate(Model& model, const Dataset& ds, const TrainConfig& cfg, TaskKind task) {
    ValScore sc;
    for (std::size_t i = 0; i < ds.val.size(); ++i) {
        const Tensor& img = ds.val[i];
        const int y0 = (img.dim(2) - cfg.crop) / 2;
        const int x0 = (img.dim(3) - cfg.crop) / 2;
        Tensor clean = crop4(img, y0, x0, cfg.crop, cfg.crop);
        Tensor input, baseline;
        if (task == TaskKind::denoise) {
            Rng noise_rng(mix_seed(mix_seed(cfg.seed, "val-noise"), i));
            input = degrade_denoise(clean, cfg.sigma, noise_rng);
            baseline = input;
        } else {
            input = degrade_sr(clean, cfg.scale);
            baseline = bilinear_upsample(input, cfg.scale);
        }
        Tensor restored = model_forward(input, model, nullptr);
        sc.psnr_restored += psnr(restored, clean);
        sc.ssim_restored += ssim(restored, clean);
        sc.psnr_degraded += psnr(baseline, clean);
    }
    const double n = static_cast<double>(ds.val.size());
    sc.psnr_restored /= n;
    sc.ssim_restored /= n;
    sc.psnr_degraded /= n;
    return sc;
}

}  // namespace

bool is_validation_file(const std::string& filename) { return fnv1a(filename) % 10 == 0; }

TrainResult train_loop(const std::string& data_dir, const TrainConfig& cfg, TaskKind task,
                       const std::string& out_ckpt, std::ostream& log,
                       const std::string& resume_ckpt) {
    set_precision(cfg.precision == "f64" ? Precision::f64 : Precision::f32);
    if (task == TaskKind::super_resolve && cfg.crop % cfg.scale != 0)
        throw ConfigError("crop " + std::to_string(cfg.crop) + " must be divisible by scale " +
                          std::to_string(cfg.scale));

    Dataset ds = load_dataset(data_dir, cfg.crop, log);

    Model model;
    AdamState adam;
    long start_step = 1;
    if (!resume_ckpt.empty()) {
        model = load_checkpoint(resume_ckpt, &adam);
        start_step = adam.step + 1;
    } else {
        model = Model::init(cfg.model_config(task), cfg.seed);
    }
    ParamStore ps;
    model.collect(ps);

    const std::vector<int> milestones = cfg.effective_milestones();
    const bool use_l1 = cfg.loss == "l1" || (cfg.loss == "auto" && task == TaskKind::super_resolve);

    TrainResult res;
    for (long t = start_step; t <= cfg.steps; ++t) {
        Rng rng(mix_seed(mix_seed(cfg.seed, "train-step"), static_cast<uint64_t>(t)));
        Tensor input, target;
        for (int b = 0; b < cfg.batch; ++b) {
            const Tensor& img = ds.train[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ds.train.size())))];
            const int y0 = rng.uniform_int(img.dim(2) - cfg.crop + 1);
            const int x0 = rng.uniform_int(img.dim(3) - cfg.crop + 1);
            const int rot = rng.uniform_int(4);
            const bool flip = rng.uniform_int(2) == 1;
            Tensor clean = rot90(crop4(img, y0, x0, cfg.crop, cfg.crop), rot);
            if (flip) clean = flip_w(clean);
            Tensor in = task == TaskKind::denoise ? degrade_denoise(clean, cfg.sigma, rng)
                                                  : degrade_sr(clean, cfg.scale);
            if (b == 0) {
                input = Tensor(Shape{cfg.batch, in.dim(1), in.dim(2), in.dim(3)}, in.prec());
                target = Tensor(Shape{cfg.batch, clean.dim(1), clean.dim(2), clean.dim(3)}, clean.prec());
            }
            const std::size_t in_plane = in.numel(), tg_plane = clean.numel();
            for (std::size_t i = 0; i < in_plane; ++i) input.set(static_cast<std::size_t>(b) * in_plane + i, in.at(i));
            for (std::size_t i = 0; i < tg_plane; ++i) target.set(static_cast<std::size_t>(b) * tg_plane + i, clean.at(i));
        }

        ModelCtx ctx;
        Tensor pred = model_forward(input, model, &ctx);
        LossResult loss = use_l1 ? l1_loss(pred, target)
                                 : charbonnier_loss(pred, target, cfg.charbonnier_eps);
        model_backward(loss.grad, model, ctx);

        AdamConfig ac;
        ac.lr = cfg.lr;
        ac.beta1 = cfg.beta1;
        ac.beta2 = cfg.beta2;
        for (int m : milestones)
            if (t >= m) ac.lr *= 0.5;
        adam_step(ps, adam, ac);

        res.final_loss = loss.value;
        res.steps_run = static_cast<int>(t);

        const bool at_milestone = std::find(milestones.begin(), milestones.end(), static_cast<int>(t)) != milestones.end();
        const bool do_val = t % cfg.val_every == 0 || t == cfg.steps;
        log << t << '\t' << ac.lr << '\t' << loss.value;
        if (do_val) {
            ValScore sc = validate(model, ds, cfg, task);
            res.val_psnr = sc.psnr_restored;
            res.val_ssim = sc.ssim_restored;
            res.degraded_psnr = sc.psnr_degraded;
            log << '\t' << sc.psnr_restored << '\t' << sc.ssim_restored;
        }
        log << '\n';
        if (at_milestone && !out_ckpt.empty()) save_checkpoint(out_ckpt, model, &adam);
    }
    if (!out_ckpt.empty()) save_checkpoint(out_ckpt, model, &adam);
    if (res.steps_run == 0) {
        // resume target already reached; report current state
        ValScore sc = validate(model, ds, cfg, task);
        res.val_psnr = sc.psnr_restored;
        res.val_ssim = sc.ssim_restored;
        res.degraded_psnr = sc.psnr_degraded;
        res.steps_run = static_cast<int>(start_step - 1);
    }
    return res;
}

}  // namespace psm
