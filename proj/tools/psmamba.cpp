#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "psm/checkpoint.hpp"
#include "psm/config.hpp"
#include "psm/data.hpp"
#include "psm/metrics.hpp"
#include "psm/partition.hpp"
#include "psm/ssm.hpp"
#include "psm/train.hpp"

namespace {

// mirrors every byte written to the console into the run's log file
class TeeBuf : public std::streambuf {
  public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

  protected:
    int overflow(int c) override {
        if (c == EOF) return !EOF;
        const int r1 = a_->sputc(static_cast<char>(c));
        const int r2 = b_->sputc(static_cast<char>(c));
        return (r1 == EOF || r2 == EOF) ? EOF : c;
    }
    int sync() override {
        const int r1 = a_->pubsync();
        const int r2 = b_->pubsync();
        return (r1 == 0 && r2 == 0) ? 0 : -1;
    }

  private:
    std::streambuf* a_;
    std::streambuf* b_;
};

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& task,
              const std::string& out, const std::string& resume, long seed_override) {
    psm::TrainConfig cfg;
    if (!config_path.empty()) cfg = psm::parse_config_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    const psm::TaskKind kind = psm::task_from_string(task);
    std::ofstream log_file(out + ".log");
    TeeBuf tee(std::cout.rdbuf(), log_file.rdbuf());
    std::ostream log(&tee);
    psm::TrainResult res = psm::train_loop(data_dir, cfg, kind, out, log, resume);
    log << "done\tsteps=" << res.steps_run << "\tval_psnr=" << res.val_psnr
        << "\tval_ssim=" << res.val_ssim << "\tdegraded_psnr=" << res.degraded_psnr << "\n";
    log.flush();
    return 0;
}

int cmd_restore(const std::string& ckpt, const std::string& in_dir, const std::string& out_dir,
                const std::string& task) {
    psm::Model model = psm::load_checkpoint(ckpt, nullptr);
    if (!task.empty() && psm::task_from_string(task) != model.cfg.task)
        throw psm::ConfigError("--task " + task + " does not match checkpoint task '" +
                               psm::to_string(model.cfg.task) + "'");
    if (!std::filesystem::is_directory(in_dir))
        throw psm::DataError("input directory '" + in_dir + "' not found");
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> paths;
    for (const auto& e : std::filesystem::directory_iterator(in_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw psm::DataError("no PNG images in '" + in_dir + "'");

    int mh = 1, mw = 1;
    psm::partition_multiples(model.cfg.deepest, &mh, &mw);
    for (const std::string& p : paths) {
        const auto t0 = std::chrono::steady_clock::now();
        psm::Tensor img = psm::read_png(p);
        auto [padded, rec] = psm::pad_to_multiple(img, mh, mw);
        psm::Tensor out = psm::model_forward(padded, model, nullptr);
        psm::PadRecord out_rec = rec;
        if (model.cfg.task == psm::TaskKind::super_resolve) {
            out_rec.orig_h = rec.orig_h * model.cfg.scale;
            out_rec.orig_w = rec.orig_w * model.cfg.scale;
        }
        out = psm::crop(out, out_rec);
        const std::string name = std::filesystem::path(p).filename().string();
        psm::write_png((std::filesystem::path(out_dir) / name).string(), out);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        std::cout << name << '\t' << out.dim(3) << 'x' << out.dim(2) << '\t' << ms << "ms\n";
    }
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir) {
    if (!std::filesystem::is_directory(pred_dir))
        throw psm::DataError("prediction directory '" + pred_dir + "' not found");
    if (!std::filesystem::is_directory(gt_dir))
        throw psm::DataError("ground-truth directory '" + gt_dir + "' not found");
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(pred_dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw psm::DataError("no PNG images in '" + pred_dir + "'");

    double sum_psnr = 0, sum_ssim = 0;
    long counted = 0;
    std::cout << "name\tpsnr\tssim\n";
    for (const std::string& name : names) {
        const std::string gt_path = (std::filesystem::path(gt_dir) / name).string();
        if (!std::filesystem::exists(gt_path)) {
            std::cerr << "warning: no ground truth for " << name << ", skipping\n";
            continue;
        }
        psm::Tensor pred, gt;
        try {
            pred = psm::read_png((std::filesystem::path(pred_dir) / name).string());
            gt = psm::read_png(gt_path);
        } catch (const psm::DataError& e) {
            std::cerr << "warning: " << e.what() << ", skipping\n";
            continue;
        }
        if (!pred.same_shape(gt)) {
            std::cerr << "warning: size mismatch for " << name << ", skipping\n";
            continue;
        }
        const double p = psm::psnr(pred, gt);
        const double s = psm::ssim(pred, gt);
        std::cout << name << '\t' << p << '\t' << s << '\n';
        sum_psnr += p;
        sum_ssim += s;
        ++counted;
    }
    if (counted == 0) throw psm::DataError("no evaluable image pairs");
    std::cout << "mean\t" << sum_psnr / counted << '\t' << sum_ssim / counted << '\n';
    return 0;
}

std::vector<psm::PartitionLevel> parse_levels(const std::string& arg) {
    std::vector<psm::PartitionLevel> levels;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) levels.push_back(psm::partition_level_from_string(item));
    if (levels.empty())
        for (int i = 0; i <= 4; ++i) levels.push_back(static_cast<psm::PartitionLevel>(i));
    return levels;
}

int cmd_analyze_adjacency(int h, int w, const std::string& level_arg) {
    std::cout << "level\tk\tmean_dist\tmax_dist\tsevered_fraction\n";
    for (psm::PartitionLevel lv : parse_levels(level_arg)) {
        int mh = 1, mw = 1;
        psm::partition_multiples(lv, &mh, &mw);
        if (h % mh != 0 || w % mw != 0) {
            std::cerr << "warning: " << h << "x" << w << " not divisible at " << psm::to_string(lv)
                      << ", skipping\n";
            continue;
        }
        const psm::AdjacencyReport rep = psm::adjacency_report(lv, h, w);
        const double total = static_cast<double>(rep.in_patch_pairs + rep.severed_pairs);
        std::cout << psm::to_string(lv) << '\t' << psm::partition_count(lv) << '\t'
                  << rep.mean_distance << '\t' << rep.max_distance << '\t'
                  << (total > 0 ? rep.severed_pairs / total : 0.0) << '\n';
    }
    return 0;
}

int cmd_analyze_decay(const std::string& ckpt, double a_scalar, const std::string& lags_arg,
                      long lfull, long lpatch) {
    psm::SsmParams params;
    std::string source;
    if (!ckpt.empty()) {
        psm::Model model = psm::load_checkpoint(ckpt, nullptr);
        params = model.down[0].blocks[0].ssm;
        source = "down.0.block.0.ssm";
    } else {
        if (a_scalar <= 0.0 || a_scalar >= 1.0)
            throw psm::ConfigError("--a must lie strictly between 0 and 1");
        params.channels = 1;
        params.state = 1;
        params.a_raw = psm::Tensor::full(psm::Shape{1, 1}, std::log(a_scalar / (1.0 - a_scalar)));
        params.b = psm::Tensor::full(psm::Shape{1, 1}, 1.0);
        params.cw = psm::Tensor::full(psm::Shape{1, 1}, 1.0);
        params.d = psm::Tensor::full(psm::Shape{1}, 0.0);
        source = "scalar model a=" + std::to_string(a_scalar);
    }
    std::cout << "# ssm: " << source << "\n";
    if (!lags_arg.empty()) {
        std::vector<long> lags;
        std::stringstream ss(lags_arg);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) lags.push_back(std::stol(item));
        std::cout << "lag";
        for (int c = 0; c < params.channels; ++c) std::cout << "\tg[" << c << "]\tlog10|g|[" << c << "]";
        std::cout << '\n';
        for (long t : lags) {
            std::cout << t;
            for (int c = 0; c < params.channels; ++c) {
                const double g = psm::impulse_response(params, c, t);
                std::cout << '\t' << g << '\t' << (g == 0.0 ? -INFINITY : std::log10(std::abs(g)));
            }
            std::cout << '\n';
        }
    }
    if (lfull > 0) {
        if (lpatch <= 0 || lpatch > lfull)
            throw psm::ConfigError("--lpatch must lie in [1, --lfull]");
        std::cout << "channel\tlog10|g_full|\tlog10|g_patch|\tlog10_ratio\td\n";
        for (int c = 0; c < params.channels; ++c) {
            const double gf = std::abs(psm::impulse_response(params, c, lfull));
            const double gp = std::abs(psm::impulse_response(params, c, lpatch));
            const double lf = gf == 0.0 ? -INFINITY : std::log10(gf);
            const double lp = gp == 0.0 ? -INFINITY : std::log10(gp);
            std::cout << c << '\t' << lf << '\t' << lp << '\t' << lp - lf << '\t' << params.d.at(c)
                      << '\n';
        }
    }
    return 0;
}

int cmd_synth(const std::string& out_dir, int count, int size, long seed) {
    psm::write_synth_corpus(out_dir, count, size, size, static_cast<uint64_t>(seed < 0 ? 7 : seed));
    std::cout << "wrote " << count << " images (" << size << "x" << size << ") to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progressive split-scan image restoration"};
    app.require_subcommand(1);

    std::string config_path, data_dir, task, out, resume, ckpt, in_dir, out_dir, pred_dir, gt_dir;
    std::string level_arg, lags_arg;
    long seed = -1, lfull = 0, lpatch = 0;
    int height = 64, width = 64, count = 8, size = 64;
    double a_scalar = 0.0;

    CLI::App* train = app.add_subcommand("train", "train a restoration model");
    train->add_option("--config", config_path, "key=value config file");
    train->add_option("--data", data_dir, "directory of training PNGs")->required();
    train->add_option("--task", task, "denoise or sr")->required();
    train->add_option("--out", out, "output checkpoint path")->required();
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_option("--seed", seed, "override the config seed");

    CLI::App* restore = app.add_subcommand("restore", "run a checkpoint over a folder");
    restore->add_option("--ckpt", ckpt, "checkpoint path")->required();
    restore->add_option("--in", in_dir, "input directory")->required();
    restore->add_option("--out", out_dir, "output directory")->required();
    restore->add_option("--task", task, "must match the checkpoint when given");

    CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM of prediction vs ground-truth folders");
    eval->add_option("--pred", pred_dir, "prediction directory")->required();
    eval->add_option("--gt", gt_dir, "ground truth directory")->required();

    CLI::App* analyze = app.add_subcommand("analyze", "locality and decay diagnostics");
    std::string mode;
    analyze->add_option("--mode", mode, "adjacency or decay")->required();
    analyze->add_option("--height", height, "map height (adjacency)");
    analyze->add_option("--width", width, "map width (adjacency)");
    analyze->add_option("--levels", level_arg, "comma list of partition levels (default all)");
    analyze->add_option("--ckpt", ckpt, "checkpoint whose first-block scan parameters to inspect");
    analyze->add_option("--a", a_scalar, "synthetic scalar transition instead of --ckpt");
    analyze->add_option("--lags", lags_arg, "comma list of impulse-response lags");
    analyze->add_option("--lfull", lfull, "full-sequence length for the sensitivity ratio");
    analyze->add_option("--lpatch", lpatch, "patch-sequence length for the sensitivity ratio");

    CLI::App* synth = app.add_subcommand("synth", "write the bundled procedural texture corpus");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--count", count, "number of images");
    synth->add_option("--size", size, "square image side");
    synth->add_option("--seed", seed, "corpus seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, data_dir, task, out, resume, seed);
        if (restore->parsed()) return cmd_restore(ckpt, in_dir, out_dir, task);
        if (eval->parsed()) return cmd_eval(pred_dir, gt_dir);
        if (analyze->parsed()) {
            if (mode == "adjacency") return cmd_analyze_adjacency(height, width, level_arg);
            if (mode == "decay") return cmd_analyze_decay(ckpt, a_scalar, lags_arg, lfull, lpatch);
            throw psm::ConfigError("unknown analyze mode '" + mode + "'");
        }
        if (synth->parsed()) return cmd_synth(out_dir, count, size, seed);
    } catch (const psm::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const psm::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const psm::CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
