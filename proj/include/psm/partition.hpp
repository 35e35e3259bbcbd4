#pragma once

#include <string>
#include <vector>

#include "psm/tensor.hpp"

namespace psm {

// Uniform split/merge of feature maps into 2^s patches. The grid alternates
// splitting along width first, then height: 1x1, 1x2, 2x2, 2x4, 4x4 for
// s = 0..4 (grid is rows x cols).
enum class PartitionLevel { full = 0, halves = 1, quadrants = 2, octants = 3, sixteenths = 4 };

PartitionLevel partition_level_from_string(const std::string& name);
std::string to_string(PartitionLevel lv);
int partition_count(PartitionLevel lv);

struct PartitionSpec {
    int grid_h = 1;
    int grid_w = 1;
    int patch_h = 0;
    int patch_w = 0;
    int patches() const { return grid_h * grid_w; }
};

// Both H and W must be divisible by the grid; throws ShapeError otherwise.
PartitionSpec partition_spec(PartitionLevel lv, int h, int w);
// smallest (mh, mw) such that any multiple of them splits evenly at lv
void partition_multiples(PartitionLevel lv, int* mh, int* mw);

// split: (B, C, H, W) -> list of (B, C, ph, pw), patches ordered row-major
// over the grid. merge is the exact inverse.
std::vector<Tensor> split(const Tensor& x, PartitionLevel lv);
Tensor merge(const std::vector<Tensor>& patches, PartitionLevel lv, int h, int w);

// unfold: (B, C, ph, pw) -> (B, C, ph*pw) row-major scan; fold inverts it.
Tensor unfold(const Tensor& patch);
Tensor fold(const Tensor& seq, int ph, int pw);

// Distance along the scan sequence between 4-neighbors in the image plane.
// Pairs that land in different patches are "severed" (no sequence distance).
struct AdjacencyReport {
    long in_patch_pairs = 0;
    long severed_pairs = 0;
    int max_distance = 0;
    double mean_distance = 0.0;
};

AdjacencyReport adjacency_report(PartitionLevel lv, int h, int w);

}  // namespace psm
