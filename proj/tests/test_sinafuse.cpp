#include "nahid/error.hpp"
#include "nahid/sinafuse.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <set>

using namespace nahid;
using nahid::testgen::Rng;

namespace {

/// Skeleton built by hand so neighbour counts can be arranged freely.
RegionMap hand_skeleton(std::size_t w, std::size_t h, std::vector<RegionId> ids) {
    RegionMap rm;
    rm.width = w;
    rm.height = h;
    rm.region_of = std::move(ids);
    RegionId max_id = 0;
    for (RegionId id : rm.region_of) {
        if (id != kUnassigned) max_id = std::max(max_id, id);
    }
    rm.regions.resize(max_id + 1);
    return rm;
}

ProbMap uniform_one_hot(std::size_t w, std::size_t h, std::size_t classes, ClassId cls) {
    return ProbMap::one_hot(LabelImage(w, h, classes, cls));
}

/// Frame whose intensity is a distinct flat value per label.
GrayImage frame_from_labels(const LabelImage& labels) {
    GrayImage f(labels.width(), labels.height());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        f.pixels()[i] = static_cast<std::uint8_t>(20 + 50 * labels.labels()[i]);
    }
    return f;
}

constexpr RegionId X = kUnassigned;

} // namespace

TEST(PartitionRegions, NoEdgesIsOneRegion) {
    const RegionMap rm = partition_regions(EdgeMap(4, 4));
    ASSERT_EQ(rm.regions.size(), 1u);
    EXPECT_EQ(rm.regions[0].pixel_count, 16u);
}

TEST(PartitionRegions, SeparatingWall) {
    EdgeMap e(4, 4);
    for (std::size_t y = 0; y < 4; ++y) e.set(2, y, true);
    const RegionMap rm = partition_regions(e);
    ASSERT_EQ(rm.regions.size(), 2u);
    EXPECT_EQ(rm.regions[0].pixel_count, 8u);
    EXPECT_EQ(rm.regions[1].pixel_count, 4u);
    EXPECT_EQ(rm.at(0, 3), 0u);
    EXPECT_EQ(rm.at(3, 0), 1u);
    EXPECT_EQ(rm.at(2, 1), kUnassigned);
}

TEST(PartitionRegions, AllEdgeYieldsNoRegions) {
    EXPECT_TRUE(partition_regions(EdgeMap(3, 3, true)).regions.empty());
}

TEST(PartitionRegions, DiagonalEdgeChainSeparates) {
    // 4-connectivity: a diagonal chain of edge pixels is a wall.
    EdgeMap e(4, 4);
    for (std::size_t i = 0; i < 4; ++i) e.set(i, i, true);
    EXPECT_EQ(partition_regions(e).regions.size(), 2u);
}

TEST(PartitionRegions, MatchesFloodFillOracle) {
    Rng rng(1000);
    for (int trial = 0; trial < 1000; ++trial) {
        const EdgeMap e = testgen::random_edges(rng, 16, 16, testgen::uniform01(rng) * 0.6);
        const RegionMap rm = partition_regions(e);
        const std::vector<long> ref = oracle::components_by_propagation(e);
        ASSERT_TRUE(oracle::same_partition(rm.region_of, ref, kUnassigned, -1L)) << "trial " << trial;

        std::set<long> distinct(ref.begin(), ref.end());
        distinct.erase(-1);
        ASSERT_EQ(rm.regions.size(), distinct.size());
        // Ids are dense and appear in row-major first-encounter order.
        RegionId next = 0;
        for (RegionId id : rm.region_of) {
            if (id == kUnassigned) continue;
            ASSERT_LE(id, next);
            if (id == next) ++next;
        }
    }
}

TEST(MajorityLabel, PixelCountWins) {
    // 8 pixels, no edges: 5 vote class 1, 3 vote class 2.
    std::vector<float> v;
    for (int i = 0; i < 8; ++i) {
        if (i < 5) v.insert(v.end(), {0.1f, 0.6f, 0.3f});
        else v.insert(v.end(), {0.0f, 0.1f, 0.9f});
    }
    const ProbMap p(4, 2, 3, v);
    const RegionMap rm = majority_label(partition_regions(EdgeMap(4, 2)), p);
    ASSERT_EQ(rm.regions.size(), 1u);
    EXPECT_EQ(rm.regions[0].label, 1);
    EXPECT_EQ(rm.regions[0].label_histogram, (std::vector<std::size_t>{0, 5, 3}));
    EXPECT_NEAR(rm.regions[0].confidence, (5 * 0.6 + 3 * 0.1) / 8.0, 1e-6);
}

TEST(MajorityLabel, TieBrokenBySummedMass) {
    // 4 pixels vote class 1, 4 vote class 2; summed mass p1 = 3.1, p2 = 3.4.
    std::vector<float> v;
    for (int i = 0; i < 8; ++i) {
        if (i < 4) v.insert(v.end(), {0.0f, 0.6f, 0.4f});
        else v.insert(v.end(), {0.375f, 0.175f, 0.45f});
    }
    const ProbMap p(4, 2, 3, v);
    const RegionMap rm = majority_label(partition_regions(EdgeMap(4, 2)), p);
    EXPECT_EQ(rm.regions[0].label_histogram, (std::vector<std::size_t>{0, 4, 4}));
    EXPECT_NEAR(rm.regions[0].class_mass[1], 3.1, 1e-6);
    EXPECT_NEAR(rm.regions[0].class_mass[2], 3.4, 1e-6);
    EXPECT_EQ(rm.regions[0].label, 2);
}

TEST(MajorityLabel, FullTieGoesToLowerClass) {
    const ProbMap p(2, 1, 2, {0.6f, 0.4f, 0.4f, 0.6f});
    const RegionMap rm = majority_label(partition_regions(EdgeMap(2, 1)), p);
    EXPECT_EQ(rm.regions[0].label, 0);
}

TEST(MajorityLabel, BinaryThresholdSemantics) {
    const ProbMap p(3, 3, 1, std::vector<float>(9, 0.4f));
    const RegionMap rm = majority_label(partition_regions(EdgeMap(3, 3)), p);
    EXPECT_EQ(rm.num_classes, 2u);
    EXPECT_EQ(rm.regions[0].label, 0);
    EXPECT_NEAR(rm.regions[0].confidence, 0.6, 1e-6);

    VoteOptions opts;
    opts.binary_threshold = 0.3f;
    EXPECT_EQ(majority_label(partition_regions(EdgeMap(3, 3)), p, opts).regions[0].label, 1);
}

TEST(MajorityLabel, SizeMismatch) {
    try {
        majority_label(partition_regions(EdgeMap(3, 3)), uniform_one_hot(4, 3, 2, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SizeMismatch);
    }
}

TEST(AssignEdgePixels, PluralityOfNeighbours) {
    // Centre pixel: 5 neighbours in region 0, 3 in region 1.
    RegionMap rm = hand_skeleton(3, 3, {0, 0, 0, 0, X, 1, 0, 1, 1});
    const ProbMap p = uniform_one_hot(3, 3, 2, 0);
    rm = assign_edge_pixels(majority_label(rm, p), p);
    EXPECT_EQ(rm.at(1, 1), 0u);
    EXPECT_EQ(rm.regions[0].pixel_count, 6u);
}

TEST(AssignEdgePixels, TieGoesToLowestRegionId) {
    // Centre pixel: 4 neighbours in region 2, 4 in region 0.
    RegionMap rm = hand_skeleton(3, 4, {2, 2, 2, 2, X, 0, 0, 0, 0, 1, 1, 1});
    const ProbMap p = uniform_one_hot(3, 4, 2, 1);
    rm = assign_edge_pixels(majority_label(rm, p), p);
    EXPECT_EQ(rm.at(1, 1), 0u);
}

TEST(AssignEdgePixels, ThickWallAbsorbedQuickly) {
    // 6x4 frame, columns 2 and 3 are edge pixels.
    EdgeMap e(6, 4);
    for (std::size_t y = 0; y < 4; ++y) {
        e.set(2, y, true);
        e.set(3, y, true);
    }
    const ProbMap p = uniform_one_hot(6, 4, 2, 0);
    std::size_t sweeps = 0;
    const RegionMap rm = assign_edge_pixels(majority_label(partition_regions(e), p), p, {}, &sweeps);
    EXPECT_LE(sweeps, 2u);
    EXPECT_EQ(rm.unassigned_count(), 0u);
    for (std::size_t y = 0; y < 4; ++y) {
        EXPECT_EQ(rm.at(2, y), 0u);  // hand-traced: left wall column joins the left region
        EXPECT_EQ(rm.at(3, y), 1u);
    }
}

TEST(AssignEdgePixels, AllEdgeFrameUsesGlobalPlurality) {
    std::vector<float> v;
    for (int i = 0; i < 9; ++i) v.insert(v.end(), i < 5 ? std::initializer_list<float>{0.2f, 0.8f}
                                                          : std::initializer_list<float>{0.9f, 0.1f});
    const ProbMap p(3, 3, 2, v);
    const RegionMap rm = assign_edge_pixels(majority_label(partition_regions(EdgeMap(3, 3, true)), p), p);
    ASSERT_EQ(rm.regions.size(), 1u);
    EXPECT_EQ(rm.regions[0].label, 1);
    EXPECT_EQ(rm.regions[0].pixel_count, 9u);
}

TEST(AssignEdgePixels, ConservationAndIsolationOnRandomMaps) {
    Rng rng(555);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t w = testgen::uniform(rng, 1, 24);
        const std::size_t h = testgen::uniform(rng, 1, 24);
        const EdgeMap e = testgen::random_edges(rng, w, h, testgen::uniform01(rng) * 0.7);
        const ProbMap p = testgen::random_probs(rng, w, h, 4);
        const RegionMap pre = majority_label(partition_regions(e), p);
        const RegionMap post = assign_edge_pixels(pre, p);

        EXPECT_EQ(post.unassigned_count(), 0u);
        std::size_t total = 0;
        for (const auto& r : post.regions) {
            total += r.pixel_count;
            EXPECT_EQ(std::accumulate(r.label_histogram.begin(), r.label_histogram.end(), std::size_t{0}),
                      r.pixel_count);
            EXPECT_GE(r.confidence, 0.0);
            EXPECT_LE(r.confidence, 1.0);
        }
        EXPECT_EQ(total, w * h);
        // Absorption never moves a pixel that already had a region.
        for (std::size_t i = 0; i < w * h; ++i) {
            if (pre.region_of[i] != kUnassigned) EXPECT_EQ(post.region_of[i], pre.region_of[i]);
        }
    }
}

TEST(Refine, NoiseFreeFixedPoint) {
    // Rectangles of distinct classes; flat intensities so edges sit exactly on
    // the class boundaries.
    LabelImage truth(24, 20, 3);
    for (std::size_t y = 0; y < 20; ++y) {
        for (std::size_t x = 0; x < 24; ++x) {
            truth.at(x, y) = x < 10 ? 0 : (y < 8 ? 1 : 2);
        }
    }
    RefineOptions opts;
    opts.edges = {10.0f, 10.0f, 0};
    const RegionMap rm = refine(frame_from_labels(truth), ProbMap::one_hot(truth), opts);
    EXPECT_EQ(to_label_image(rm), truth);
}

TEST(Refine, SizeMismatchNamesBothDimensions) {
    try {
        refine(GrayImage(8, 8), uniform_one_hot(8, 9, 2, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SizeMismatch);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("8x8"), std::string::npos);
        EXPECT_NE(msg.find("8x9"), std::string::npos);
    }
}

TEST(Refine, EdgeSupremacyBeforeAbsorption) {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const EdgeMap e = testgen::random_edges(rng, 20, 20, 0.35);
        const ProbMap p = testgen::random_probs(rng, 20, 20, 3);
        const RegionMap pre = majority_label(partition_regions(e), p);
        const std::vector<long> comp = oracle::components_by_propagation(e);
        for (std::size_t i = 0; i < comp.size(); ++i) {
            for (std::size_t j = i + 1; j < comp.size(); ++j) {
                if (comp[i] < 0 || comp[j] < 0) continue;
                EXPECT_EQ(comp[i] == comp[j], pre.region_of[i] == pre.region_of[j]);
            }
        }
    }
}

TEST(Refine, IdempotentOnItsOwnOutput) {
    Rng rng(64);
    for (int trial = 0; trial < 20; ++trial) {
        const GrayImage frame = testgen::random_gray(rng, 30, 30);
        const ProbMap p = testgen::random_probs(rng, 30, 30, 4);
        RefineOptions opts;
        opts.edges = {200.0f, 400.0f, 1};
        const EdgeMap edges = detect_edges(frame, opts.edges);
        const LabelImage once = to_label_image(refine_with_edges(edges, p));
        const LabelImage twice = to_label_image(refine_with_edges(edges, ProbMap::one_hot(once)));
        EXPECT_EQ(once, twice);
    }
}

TEST(Refine, WorkerCountIsInvisible) {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const GrayImage frame = testgen::random_gray(rng, 64, 48);
        const ProbMap p = testgen::random_probs(rng, 64, 48, 5);
        RefineOptions opts;
        opts.edges = {150.0f, 300.0f, 1};
        const RegionMap serial = refine(frame, p, opts);
        for (unsigned workers : {2u, 8u}) {
            opts.workers = workers;
            const RegionMap par = refine(frame, p, opts);
            EXPECT_EQ(par, serial);
            EXPECT_EQ(serialize_region_map(par), serialize_region_map(serial));
        }
    }
}

TEST(Refine, RegionTableJson) {
    const ProbMap p = uniform_one_hot(2, 2, 2, 1);
    const RegionMap rm = refine_with_edges(EdgeMap(2, 2), p);
    EXPECT_EQ(region_table_json(rm),
              "{\"regions\":[{\"confidence\":1.0,\"id\":0,\"label\":1,\"label_histogram\":[0,4],"
              "\"pixel_count\":4}]}\n");
}
