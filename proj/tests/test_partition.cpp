#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "doctest.h"
#include "psm/partition.hpp"
#include "psm/tensor.hpp"
#include "test_util.hpp"

using namespace psm;

namespace {

Tensor iota_image(int h, int w) {
    std::vector<double> v(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    return Tensor::from_values({1, 1, h, w}, v);
}

const PartitionLevel kLevels[] = {PartitionLevel::full, PartitionLevel::halves,
                                  PartitionLevel::quadrants, PartitionLevel::octants,
                                  PartitionLevel::sixteenths};

}  // namespace

TEST_CASE("level names and counts") {
    CHECK(partition_count(PartitionLevel::full) == 1);
    CHECK(partition_count(PartitionLevel::halves) == 2);
    CHECK(partition_count(PartitionLevel::quadrants) == 4);
    CHECK(partition_count(PartitionLevel::octants) == 8);
    CHECK(partition_count(PartitionLevel::sixteenths) == 16);

    for (PartitionLevel lv : kLevels) CHECK(partition_level_from_string(to_string(lv)) == lv);
    CHECK_THROWS_AS((void)partition_level_from_string("nonsense"), ConfigError);
}

TEST_CASE("grid shapes alternate width first") {
    // 1x1, 1x2, 2x2, 2x4, 4x4
    const int gh[] = {1, 1, 2, 2, 4};
    const int gw[] = {1, 2, 2, 4, 4};
    for (int s = 0; s <= 4; ++s) {
        PartitionSpec sp = partition_spec(kLevels[s], 16, 16);
        CHECK(sp.grid_h == gh[s]);
        CHECK(sp.grid_w == gw[s]);
        CHECK(sp.patch_h == 16 / gh[s]);
        CHECK(sp.patch_w == 16 / gw[s]);
        CHECK(sp.patches() == (1 << s));

        int mh = 0, mw = 0;
        partition_multiples(kLevels[s], &mh, &mw);
        CHECK(mh == gh[s]);
        CHECK(mw == gw[s]);
    }
    CHECK_THROWS_AS((void)partition_spec(PartitionLevel::octants, 16, 6), ShapeError);
}

TEST_CASE("quadrant split values on a 4x4 map") {
    set_precision(Precision::f64);
    Tensor x = iota_image(4, 4);
    auto parts = split(x, PartitionLevel::quadrants);
    REQUIRE(parts.size() == 4);
    for (const Tensor& p : parts) CHECK(p.shape() == Shape{1, 1, 2, 2});
    // row-major patch order: top-left, top-right, bottom-left, bottom-right
    CHECK(parts[0].at(0) == 0.0);
    CHECK(parts[0].at(3) == 5.0);
    CHECK(parts[1].at(0) == 2.0);
    CHECK(parts[2].at(0) == 8.0);
    CHECK(parts[3].at(3) == 15.0);
}

TEST_CASE("halves split along width") {
    set_precision(Precision::f64);
    Tensor x = iota_image(2, 4);
    auto parts = split(x, PartitionLevel::halves);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].shape() == Shape{1, 1, 2, 2});
    CHECK(parts[0].at(0) == 0.0);
    CHECK(parts[0].at(1) == 1.0);
    CHECK(parts[0].at(2) == 4.0);
    CHECK(parts[1].at(0) == 2.0);
    CHECK(parts[1].at(3) == 7.0);
}

TEST_CASE("octant patches are half height quarter width") {
    set_precision(Precision::f64);
    Tensor x = tu::randu({1, 3, 8, 8}, 1);
    auto parts = split(x, PartitionLevel::octants);
    REQUIRE(parts.size() == 8);
    for (const Tensor& p : parts) CHECK(p.shape() == Shape{1, 3, 4, 2});
}

TEST_CASE("merge inverts split for every level") {
    set_precision(Precision::f64);
    uint64_t seed = 10;
    for (PartitionLevel lv : kLevels) {
        int mh = 0, mw = 0;
        partition_multiples(lv, &mh, &mw);
        for (int rep = 1; rep <= 3; ++rep) {
            const int h = mh * rep, w = mw * (4 - rep);
            Tensor x = tu::randu({2, 3, h, w}, seed++);
            auto parts = split(x, lv);
            CHECK(bit_equal(merge(parts, lv, h, w), x));
        }
    }
}

TEST_CASE("merge is order sensitive") {
    set_precision(Precision::f64);
    Tensor x = tu::randu({1, 2, 4, 4}, 99);
    auto parts = split(x, PartitionLevel::quadrants);
    std::swap(parts[1], parts[2]);
    Tensor back = merge(parts, PartitionLevel::quadrants, 4, 4);
    CHECK(!bit_equal(back, x));
}

TEST_CASE("unfold is the row-major raster") {
    set_precision(Precision::f64);
    Tensor x = iota_image(2, 3);
    Tensor seq = unfold(x);
    CHECK(seq.shape() == Shape{1, 1, 6});
    for (int i = 0; i < 6; ++i) CHECK(seq.at(i) == static_cast<double>(i));
    CHECK(bit_equal(fold(seq, 2, 3), x));
    CHECK_THROWS_AS((void)fold(seq, 3, 3), ShapeError);
}

TEST_CASE("fold unfold round-trip across shapes") {
    set_precision(Precision::f64);
    uint64_t seed = 200;
    for (int h = 1; h <= 8; ++h)
        for (int w = 1; w <= 8; ++w) {
            Tensor x = tu::randu({2, 2, h, w}, seed++);
            Tensor seq = unfold(x);
            CHECK(seq.shape() == Shape{2, 2, h * w});
            CHECK(bit_equal(fold(seq, h, w), x));
        }
}

TEST_CASE("sequence lengths sum to the pixel count") {
    set_precision(Precision::f64);
    for (PartitionLevel lv : kLevels) {
        int mh = 0, mw = 0;
        partition_multiples(lv, &mh, &mw);
        const int h = mh * 3, w = mw * 2;
        Tensor x = tu::randu({1, 1, h, w}, 7);
        long total = 0;
        for (const Tensor& p : split(x, lv)) total += unfold(p).dim(2);
        CHECK(total == static_cast<long>(h) * w);
    }
}

TEST_CASE("adjacency distances on the full raster") {
    // on an unsplit h x w map, horizontal neighbors sit 1 apart and vertical
    // neighbors w apart; ratio of pair kinds fixes the mean
    AdjacencyReport r = adjacency_report(PartitionLevel::full, 8, 8);
    CHECK(r.max_distance == 8);
    CHECK(r.severed_pairs == 0);
    CHECK(r.in_patch_pairs == 2 * 8 * 7);
    CHECK(r.mean_distance == doctest::Approx((1.0 + 8.0) / 2).epsilon(1e-12));

    AdjacencyReport q = adjacency_report(PartitionLevel::full, 4, 6);
    CHECK(q.max_distance == 6);
    CHECK(q.in_patch_pairs == 4 * 5 + 3 * 6);
}

TEST_CASE("adjacency with splits severs boundaries and shortens rows") {
    // octants on 8x8: patches are 4x2, so in-patch distances are 1 or 2
    AdjacencyReport r = adjacency_report(PartitionLevel::octants, 8, 8);
    CHECK(r.max_distance == 2);
    // vertical cuts: 3 boundaries x 8 rows; horizontal: 1 boundary x 8 cols
    CHECK(r.severed_pairs == 3 * 8 + 8);
    CHECK(r.in_patch_pairs + r.severed_pairs == 2 * 8 * 7);

    AdjacencyReport h = adjacency_report(PartitionLevel::halves, 8, 8);
    CHECK(h.max_distance == 4);    // patch width
    CHECK(h.severed_pairs == 8);
}

TEST_CASE("max adjacency distance never increases with level") {
    for (int h = 4; h <= 32; h += 4)
        for (int w = 4; w <= 32; w += 4) {
            int prev = 1 << 30;
            for (PartitionLevel lv : kLevels) {
                AdjacencyReport r = adjacency_report(lv, h, w);
                CHECK(r.max_distance <= prev);
                prev = r.max_distance;
            }
        }
}

TEST_CASE("locality figures on a 64x64 map") {
    AdjacencyReport full = adjacency_report(PartitionLevel::full, 64, 64);
    CHECK(full.max_distance == 64);
    AdjacencyReport oct = adjacency_report(PartitionLevel::octants, 64, 64);
    CHECK(oct.max_distance == 16);
    AdjacencyReport six = adjacency_report(PartitionLevel::sixteenths, 64, 64);
    CHECK(six.max_distance == 16);
}
