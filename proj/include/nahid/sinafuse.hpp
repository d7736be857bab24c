#pragma once

// Edge-guided refinement of a semantic segmentation: detected edges are taken
// as the true region borders, every edge-bounded region gets the label held
// by the largest number of its pixels, and edge pixels are then absorbed into
// neighbouring regions.

#include "nahid/edgedet.hpp"
#include "nahid/raster.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace nahid {

using RegionId = std::uint32_t;
inline constexpr RegionId kUnassigned = std::numeric_limits<RegionId>::max();

struct RegionRecord {
    RegionId region_id = 0;
    ClassId label = 0;
    std::size_t pixel_count = 0;
    /// Member pixels per per-pixel-argmax class.
    std::vector<std::size_t> label_histogram;
    /// Summed probability per class over member pixels (tie-break input).
    std::vector<double> class_mass;
    /// Mean probability of `label` over member pixels.
    double confidence = 0.0;

    bool operator==(const RegionRecord&) const = default;
};

struct RegionMap {
    std::size_t width = 0;
    std::size_t height = 0;
    /// Size of the label space; 0 until labels are voted.
    std::size_t num_classes = 0;
    /// Region of every pixel, kUnassigned for edge pixels not yet absorbed.
    std::vector<RegionId> region_of;
    std::vector<RegionRecord> regions;

    RegionId at(std::size_t x, std::size_t y) const { return region_of[y * width + x]; }
    std::size_t unassigned_count() const;

    bool operator==(const RegionMap&) const = default;
};

struct VoteOptions {
    /// Binary (single-channel) maps: a pixel votes foreground iff p >= threshold.
    float binary_threshold = 0.5f;
    unsigned workers = 1;
};

/// Maximal 4-connected components of the non-edge pixels. Ids follow the
/// row-major order in which each component is first met; edge pixels stay
/// kUnassigned. An all-edge map yields no regions.
RegionMap partition_regions(const EdgeMap& edges);

/// Votes a label for every region: most member pixels by per-pixel argmax,
/// ties to the larger summed probability of the tied classes, then to the
/// lower class id. Throws SizeMismatch.
RegionMap majority_label(RegionMap skeleton, const ProbMap& probs, const VoteOptions& opts = {});

/// Absorbs unassigned pixels by repeated sweeps. Within a sweep every
/// unassigned pixel with an assigned 8-neighbour (as of the start of the
/// sweep) joins the region most represented among those neighbours, ties to
/// the lowest region id. Region statistics are then recomputed over the full
/// membership and labels re-voted. A map with no regions becomes one region.
/// `sweeps`, when given, receives the number of sweeps performed.
RegionMap assign_edge_pixels(RegionMap rm, const ProbMap& probs, const VoteOptions& opts = {},
                             std::size_t* sweeps = nullptr);

struct RefineOptions {
    EdgeDetectorConfig edges;
    float binary_threshold = 0.5f;
    unsigned workers = 1;

    VoteOptions vote() const { return {binary_threshold, workers}; }
};

/// Full pipeline on a frame and its probability map. Throws SizeMismatch when
/// the two disagree in size, plus any edge-detector error.
RegionMap refine(const GrayImage& frame, const ProbMap& probs, const RefineOptions& opts = {});
RegionMap refine(const GrayImage& frame, const ProbMap& probs, const EdgeDetector& detector,
                 const VoteOptions& opts);
/// Pipeline from an already computed edge map.
RegionMap refine_with_edges(const EdgeMap& edges, const ProbMap& probs, const VoteOptions& opts = {});

LabelImage to_label_image(const RegionMap& rm);

/// `{"regions":[{"id":..,"label":..,"pixel_count":..,"confidence":..}]}`
std::string region_table_json(const RegionMap& rm);
/// Label PGM bytes followed by the region table; the byte form used for
/// determinism checks.
Bytes serialize_region_map(const RegionMap& rm);

/// Frame with region boundaries drawn at 255.
GrayImage render_overlay(const GrayImage& frame, const RegionMap& rm);

} // namespace nahid
