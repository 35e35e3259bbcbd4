#include "psm/partition.hpp"

#include <algorithm>
#include <cstring>

namespace psm {

PartitionLevel partition_level_from_string(const std::string& name) {
    if (name == "full") return PartitionLevel::full;
    if (name == "halves") return PartitionLevel::halves;
    if (name == "quadrants") return PartitionLevel::quadrants;
    if (name == "octants") return PartitionLevel::octants;
    if (name == "sixteenths") return PartitionLevel::sixteenths;
    throw ConfigError("unknown partition level '" + name +
                      "' (expected full, halves, quadrants, octants or sixteenths)");
}

std::string to_string(PartitionLevel lv) {
    switch (lv) {
        case PartitionLevel::full: return "full";
        case PartitionLevel::halves: return "halves";
        case PartitionLevel::quadrants: return "quadrants";
        case PartitionLevel::octants: return "octants";
        case PartitionLevel::sixteenths: return "sixteenths";
    }
    return "?";
}

int partition_count(PartitionLevel lv) { return 1 << static_cast<int>(lv); }

namespace {
// width is halved first, then height, alternating: 1x1, 1x2, 2x2, 2x4, 4x4
void grid_of(PartitionLevel lv, int* gh, int* gw) {
    const int s = static_cast<int>(lv);
    *gh = 1 << (s / 2);
    *gw = 1 << (s - s / 2);
}
}  // namespace

PartitionSpec partition_spec(PartitionLevel lv, int h, int w) {
    PartitionSpec spec;
    grid_of(lv, &spec.grid_h, &spec.grid_w);
    if (h % spec.grid_h != 0 || w % spec.grid_w != 0)
        fail_shape("partition " + to_string(lv) + ": " + std::to_string(h) + "x" + std::to_string(w) +
                   " not divisible by " + std::to_string(spec.grid_h) + "x" + std::to_string(spec.grid_w) +
                   " grid; pad_to_multiple first");
    spec.patch_h = h / spec.grid_h;
    spec.patch_w = w / spec.grid_w;
    return spec;
}

void partition_multiples(PartitionLevel lv, int* mh, int* mw) { grid_of(lv, mh, mw); }

std::vector<Tensor> split(const Tensor& x, PartitionLevel lv) {
    require_rank(x, 4, "split");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const PartitionSpec spec = partition_spec(lv, H, W);
    if (lv == PartitionLevel::full) return {x};
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(spec.patches()));
    for (int gy = 0; gy < spec.grid_h; ++gy)
        for (int gx = 0; gx < spec.grid_w; ++gx) {
            Tensor p(Shape{B, C, spec.patch_h, spec.patch_w}, x.prec());
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    for (int h = 0; h < spec.patch_h; ++h)
                        for (int w = 0; w < spec.patch_w; ++w)
                            p.set(p.idx4(b, c, h, w),
                                  x.at4(b, c, gy * spec.patch_h + h, gx * spec.patch_w + w));
            out.push_back(std::move(p));
        }
    return out;
}

Tensor merge(const std::vector<Tensor>& patches, PartitionLevel lv, int h, int w) {
    const PartitionSpec spec = partition_spec(lv, h, w);
    if (static_cast<int>(patches.size()) != spec.patches())
        fail_shape("merge: expected " + std::to_string(spec.patches()) + " patches, got " +
                   std::to_string(patches.size()));
    if (lv == PartitionLevel::full) return patches[0];
    const Tensor& p0 = patches[0];
    for (const Tensor& p : patches) require_same_shape(p, p0, "merge");
    if (p0.dim(2) != spec.patch_h || p0.dim(3) != spec.patch_w)
        fail_shape("merge: patch " + shape_str(p0.shape()) + " does not tile " + std::to_string(h) +
                   "x" + std::to_string(w) + " at level " + to_string(lv));
    const int B = p0.dim(0), C = p0.dim(1);
    Tensor x(Shape{B, C, h, w}, p0.prec());
    int idx = 0;
    for (int gy = 0; gy < spec.grid_h; ++gy)
        for (int gx = 0; gx < spec.grid_w; ++gx, ++idx) {
            const Tensor& p = patches[static_cast<std::size_t>(idx)];
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    for (int hh = 0; hh < spec.patch_h; ++hh)
                        for (int ww = 0; ww < spec.patch_w; ++ww)
                            x.set(x.idx4(b, c, gy * spec.patch_h + hh, gx * spec.patch_w + ww),
                                  p.at4(b, c, hh, ww));
        }
    return x;
}

Tensor unfold(const Tensor& patch) {
    require_rank(patch, 4, "unfold");
    // row-major storage means the raster is a pure reshape
    return patch.reshaped(Shape{patch.dim(0), patch.dim(1), patch.dim(2) * patch.dim(3)});
}

Tensor fold(const Tensor& seq, int ph, int pw) {
    require_rank(seq, 3, "fold");
    if (seq.dim(2) != ph * pw)
        fail_shape("fold: sequence length " + std::to_string(seq.dim(2)) + " vs patch " +
                   std::to_string(ph) + "x" + std::to_string(pw));
    return seq.reshaped(Shape{seq.dim(0), seq.dim(1), ph, pw});
}

AdjacencyReport adjacency_report(PartitionLevel lv, int h, int w) {
    const PartitionSpec spec = partition_spec(lv, h, w);
    AdjacencyReport rep;
    long long total = 0;
    auto visit = [&](int h0, int w0, int h1, int w1) {
        const bool same_patch =
            h0 / spec.patch_h == h1 / spec.patch_h && w0 / spec.patch_w == w1 / spec.patch_w;
        if (!same_patch) {
            rep.severed_pairs++;
            return;
        }
        const long p0 = static_cast<long>(h0 % spec.patch_h) * spec.patch_w + w0 % spec.patch_w;
        const long p1 = static_cast<long>(h1 % spec.patch_h) * spec.patch_w + w1 % spec.patch_w;
        const int d = static_cast<int>(p1 > p0 ? p1 - p0 : p0 - p1);
        rep.in_patch_pairs++;
        rep.max_distance = std::max(rep.max_distance, d);
        total += d;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) visit(y, x, y, x + 1);
            if (y + 1 < h) visit(y, x, y + 1, x);
        }
    rep.mean_distance = rep.in_patch_pairs ? static_cast<double>(total) / rep.in_patch_pairs : 0.0;
    return rep;
}

}  // namespace psm
