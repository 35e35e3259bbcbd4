#include "psm/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

namespace psm {

Tensor degrade_denoise(const Tensor& clean, double sigma, Rng& rng) {
    Tensor out(clean.shape(), clean.prec());
    const double std = sigma / 255.0;
    for (std::size_t i = 0; i < clean.numel(); ++i) {
        const double v = clean.at(i) + rng.normal(0.0, std);
        out.set(i, std::clamp(v, 0.0, 1.0));
    }
    return out;
}

Tensor degrade_sr(const Tensor& clean, int s) { return area_downsample(clean, s); }

Tensor synth_texture(int h, int w, uint64_t seed) {
    Rng rng(mix_seed(seed, "synth-texture"));
    struct Wave {
        double kx, ky, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 4; ++k) {
        const double lambda = rng.uniform(4.0, 24.0);
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        const double f = 2.0 * 3.14159265358979323846 / lambda;
        waves.push_back({f * std::cos(theta), f * std::sin(theta), rng.uniform(0.0, 6.28318),
                         rng.uniform(0.4, 1.0)});
    }
    struct Edge {
        double nx, ny, c, amp;
    };
    std::vector<Edge> edges;
    for (int k = 0; k < 3; ++k) {
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        edges.push_back({std::cos(theta), std::sin(theta),
                         rng.uniform(0.2, 0.8) * (std::abs(std::cos(theta)) * w + std::abs(std::sin(theta)) * h),
                         rng.uniform(0.3, 0.9) * (rng.uniform() < 0.5 ? -1.0 : 1.0)});
    }
    // per-channel tint waves keep the three planes correlated but distinct
    std::vector<Wave> tint;
    for (int c = 0; c < 3; ++c) {
        const double lambda = rng.uniform(6.0, 32.0);
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        const double f = 2.0 * 3.14159265358979323846 / lambda;
        tint.push_back({f * std::cos(theta), f * std::sin(theta), rng.uniform(0.0, 6.28318), 0.35});
    }
    Tensor img(Shape{1, 3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double base = 0.0;
            for (const Wave& wv : waves) base += wv.amp * std::sin(wv.kx * x + wv.ky * y + wv.phase);
            for (const Edge& e : edges) base += (e.nx * x + e.ny * y > e.c) ? e.amp : -e.amp;
            for (int c = 0; c < 3; ++c) {
                const Wave& t = tint[static_cast<std::size_t>(c)];
                const double v = base + t.amp * std::sin(t.kx * x + t.ky * y + t.phase);
                img.set(img.idx4(0, c, y, x), 0.5 + 0.5 * (v / (1.0 + std::abs(v))));
            }
        }
    return img;
}

std::vector<std::string> write_synth_corpus(const std::string& dir, int count, int h, int w,
                                            uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%03d.png", i);
        const std::string path = (std::filesystem::path(dir) / name).string();
        write_png(path, synth_texture(h, w, mix_seed(seed, static_cast<uint64_t>(i))));
        paths.push_back(path);
    }
    return paths;
}

Tensor read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DataError("cannot open image '" + path + "'");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        std::fclose(fp);
        throw DataError("'" + path + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("png reader allocation failed");
    }
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("failed to decode '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("unexpected row layout in '" + path + "'");
    }
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    Tensor img(Shape{1, 3, static_cast<int>(height), static_cast<int>(width)});
    for (png_uint_32 y = 0; y < height; ++y)
        for (png_uint_32 x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                img.set(img.idx4(0, c, static_cast<int>(y), static_cast<int>(x)),
                        pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0);
    return img;
}

void write_png(const std::string& path, const Tensor& img) {
    require_rank(img, 4, "write_png");
    if (img.dim(0) != 1 || img.dim(1) != 3)
        fail_shape("write_png: expected (1, 3, H, W), got " + shape_str(img.shape()));
    const int h = img.dim(2), w = img.dim(3);
    std::vector<unsigned char> pixels(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at4(0, c, y, x), 0.0, 1.0);
                pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw DataError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError("png writer allocation failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError("failed to encode '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace psm
