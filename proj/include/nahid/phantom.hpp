#pragma once

// Synthetic phantom scenes with known ground truth, the noise models used to
// fake an imperfect segmentation, rotation augmentation and overlap metrics.

#include "nahid/edgedet.hpp"
#include "nahid/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nahid {

struct NoiseSpec {
    enum class Mode { IidFlip, BoundaryBand };

    Mode mode = Mode::IidFlip;
    double p = 0.0;
    unsigned band = 1;

    /// Throws InvalidConfig unless p in [0,1] and band >= 1 in band mode.
    void validate() const;
};

std::string to_string(NoiseSpec::Mode mode);
NoiseSpec::Mode noise_mode_from_string(const std::string& name);

struct PhantomSpec {
    static constexpr std::size_t kMinRegionPixels = 100;

    std::size_t size = 128;        ///< square side, >= 16
    std::size_t num_regions = 4;   ///< organ regions, in [2,6]
    bool lesion = false;
    std::size_t lesion_area = 60;  ///< exact lesion pixel count
    std::size_t host_region = 1;   ///< region that receives the lesion
    unsigned texture_amplitude = 1;
    std::uint64_t seed = 0;
};

struct PhantomScene {
    PhantomSpec spec;
    LabelImage truth;
    GrayImage frame;
    /// Class id of the lesion; always num_regions, present in the label space
    /// even when the scene has no lesion.
    ClassId lesion_class = 0;
    ClassId host_class = 0;
    std::uint64_t seed = 0;
};

/// Seeded Voronoi partition into `num_regions` organ classes of at least 100
/// pixels each, optionally with a compact elliptical lesion inside the host
/// region. Throws InfeasibleSpec when the regions cannot fit.
PhantomScene generate_scene(const PhantomSpec& spec);

/// Flat intensity of a class in rendered frames.
std::uint8_t class_intensity(ClassId cls);
/// Deterministic per-pixel texture offset in [-amplitude, amplitude].
int texture_offset(std::uint64_t seed, std::size_t x, std::size_t y, unsigned amplitude);
/// Renders truth into a frame (class intensity + texture).
GrayImage render_frame(const LabelImage& truth, std::uint64_t seed, unsigned texture_amplitude);

/// Detector settings that reproduce the true class boundaries of a rendered
/// phantom exactly: texture gradients stay below the threshold and any class
/// change in the 3x3 neighbourhood exceeds it.
EdgeDetectorConfig exact_edge_config();

/// Pixels with a different class inside their 8-neighbourhood.
EdgeMap true_boundaries(const LabelImage& truth);

/// Starts from one-hot(truth); each eligible pixel is flipped with
/// probability p to a uniformly drawn other class, encoded as 0.6 on the new
/// class and 0.4/(C-1) on each remaining class.
ProbMap corrupt(const LabelImage& truth, const NoiseSpec& noise, std::uint64_t seed);

/// |a & b| / |a | b|; 1.0 when both are empty. Throws SizeMismatch.
double iou(const BinaryMask& a, const BinaryMask& b);
/// 2|a & b| / (|a| + |b|); 1.0 when both are empty. Throws SizeMismatch.
double dice(const BinaryMask& a, const BinaryMask& b);
/// Mean per-class IoU over the classes present in `truth`.
double macro_iou(const LabelImage& pred, const LabelImage& truth);

using Sample = std::pair<GrayImage, LabelImage>;
/// Each pair expanded to its four quarter turns (0, 1, 2, 3 in that order).
std::vector<Sample> augment_rotations(const std::vector<Sample>& dataset);

/// frame.pgm, truth.pgm and meta.json inside `dir`.
void write_scene_bundle(const PhantomScene& scene, const std::filesystem::path& dir);

} // namespace nahid
