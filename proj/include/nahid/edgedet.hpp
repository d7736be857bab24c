#pragma once

#include "nahid/raster.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nahid {

/// Boolean boundary mask, row-major.
class EdgeMap {
public:
    EdgeMap() = default;
    EdgeMap(std::size_t width, std::size_t height, bool fill = false);
    EdgeMap(std::size_t width, std::size_t height, std::vector<std::uint8_t> flags);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return flags_.size(); }

    bool at(std::size_t x, std::size_t y) const { return flags_[y * width_ + x] != 0; }
    bool operator[](std::size_t i) const { return flags_[i] != 0; }
    void set(std::size_t x, std::size_t y, bool v) { flags_[y * width_ + x] = v ? 1 : 0; }

    std::size_t count() const noexcept;
    /// 0/1 per pixel.
    std::span<const std::uint8_t> flags() const noexcept { return flags_; }

    bool operator==(const EdgeMap&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<std::uint8_t> flags_;
};

EdgeMap rotate_quarter(const EdgeMap& edges, Rotation r);

/// PGM with 0 = non-edge, 255 = edge. Decoding treats any nonzero value as edge.
Bytes encode_edge_pgm(const EdgeMap& edges);
EdgeMap decode_edge_image(std::span<const std::uint8_t> bytes);

struct EdgeDetectorConfig {
    float low_threshold = 40.0f;
    float high_threshold = 100.0f;
    unsigned blur_radius = 1;

    /// Throws InvalidConfig unless high >= low >= 0.
    void validate() const;
};

/// Width x height field of gradient magnitudes.
struct GradientField {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> values;

    float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

/// L1 Sobel magnitude |Gx| + |Gy| with edge-replicated borders. Requires a
/// frame of at least 3x3 (ImageTooSmall).
GradientField gradient_magnitude(const GrayImage& img, unsigned workers = 1);

/// Magnitude of the box-smoothed frame: Sobel applied to the (2r+1)^2 window
/// sums, divided by the window area. Radius 0 equals gradient_magnitude.
GradientField smoothed_gradient_magnitude(const GrayImage& img, unsigned blur_radius,
                                          unsigned workers = 1);

/// Hysteresis: pixels >= high are edges, pixels >= low that reach a >= high
/// pixel through 8-connected >= low pixels are edges.
EdgeMap hysteresis(const GradientField& magnitude, float low, float high);

/// Sobel + hysteresis (Canny without non-maximum suppression).
EdgeMap detect_edges(const GrayImage& img, const EdgeDetectorConfig& cfg, unsigned workers = 1);

/// Pluggable detector seam for the refinement pipeline.
class EdgeDetector {
public:
    virtual ~EdgeDetector() = default;
    virtual EdgeMap detect(const GrayImage& img, unsigned workers) const = 0;
};

class SobelHysteresisDetector final : public EdgeDetector {
public:
    explicit SobelHysteresisDetector(EdgeDetectorConfig cfg) : cfg_(cfg) { cfg_.validate(); }
    EdgeMap detect(const GrayImage& img, unsigned workers) const override {
        return detect_edges(img, cfg_, workers);
    }
    const EdgeDetectorConfig& config() const noexcept { return cfg_; }

private:
    EdgeDetectorConfig cfg_;
};

} // namespace nahid
