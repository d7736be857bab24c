#pragma once

// Core image and tensor types shared by every stage of the pipeline, plus the
// byte codecs (PGM, PNG, .pmap) and quarter-turn rotations.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nahid {

using Bytes = std::vector<std::uint8_t>;
using ClassId = std::uint16_t;

/// 8-bit grayscale frame, row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(std::size_t width, std::size_t height, std::uint8_t fill = 0);
    GrayImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return pixels_.size(); }

    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
    std::uint8_t& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }

    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
    std::span<std::uint8_t> pixels() noexcept { return pixels_; }

    bool operator==(const GrayImage&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Boolean pixel set over a width x height raster.
struct BinaryMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits;  ///< 0/1, row-major

    BinaryMask() = default;
    BinaryMask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

    bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
    void set(std::size_t x, std::size_t y, bool v = true) { bits[y * width + x] = v ? 1 : 0; }
    std::size_t count() const noexcept;

    bool operator==(const BinaryMask&) const = default;
};

/// Per-pixel class ids. Every stored id is below num_classes.
class LabelImage {
public:
    LabelImage() = default;
    LabelImage(std::size_t width, std::size_t height, std::size_t num_classes, ClassId fill = 0);
    LabelImage(std::size_t width, std::size_t height, std::size_t num_classes,
               std::vector<ClassId> labels);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t size() const noexcept { return labels_.size(); }

    ClassId at(std::size_t x, std::size_t y) const { return labels_[y * width_ + x]; }
    /// Unchecked write; callers keep ids below num_classes().
    ClassId& at(std::size_t x, std::size_t y) { return labels_[y * width_ + x]; }

    std::span<const ClassId> labels() const noexcept { return labels_; }
    std::span<ClassId> labels() noexcept { return labels_; }

    /// Pixels holding `cls`.
    BinaryMask mask_of(ClassId cls) const;

    bool operator==(const LabelImage&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<ClassId> labels_;
};

/// Per-pixel class probabilities, class-innermost. A single channel means
/// binary (sigmoid) mode: the value is the foreground probability and the
/// implied label space is {0 = background, 1 = foreground}.
class ProbMap {
public:
    static constexpr float kSumTolerance = 1e-5f;

    ProbMap() = default;
    /// Validates ranges and (multi-class) per-pixel sums; throws InvariantViolation.
    ProbMap(std::size_t width, std::size_t height, std::size_t num_classes,
            std::vector<float> values);

    /// One-hot encoding of a label image (multi-class).
    static ProbMap one_hot(const LabelImage& labels);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    bool binary() const noexcept { return num_classes_ == 1; }
    /// Size of the label space: 2 in binary mode, num_classes otherwise.
    std::size_t label_count() const noexcept { return binary() ? 2 : num_classes_; }

    float at(std::size_t x, std::size_t y, std::size_t c) const {
        return values_[(y * width_ + x) * num_classes_ + c];
    }
    std::span<const float> pixel(std::size_t index) const {
        return std::span<const float>(values_).subspan(index * num_classes_, num_classes_);
    }
    /// Probability of label `label` at pixel `index`, valid in both modes.
    float label_probability(std::size_t index, ClassId label) const;

    std::span<const float> values() const noexcept { return values_; }

    bool operator==(const ProbMap&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<float> values_;
};

/// Builds a valid map from untrusted backend output: values are clamped to
/// [0,1] and, with more than one channel, each pixel is renormalized to sum to
/// one (an all-zero pixel becomes uniform). NaN is rejected as MalformedFile.
ProbMap sanitize_probabilities(std::size_t width, std::size_t height, std::size_t num_classes,
                               std::vector<float> values);

/// Per-pixel argmax. Equal probabilities resolve to the lower class id; in
/// binary mode a pixel is foreground iff p >= binary_threshold.
LabelImage argmax(const ProbMap& probs, float binary_threshold = 0.5f);

struct Rotation {
    int quarter_turns = 0;  ///< clockwise, in {0,1,2,3}

    constexpr Rotation() = default;
    /// Throws InvariantViolation outside {0,1,2,3}.
    explicit Rotation(int turns);
    /// Any integer, reduced modulo 4.
    static Rotation from_turns(int turns) noexcept;
    Rotation inverse() const noexcept { return from_turns(4 - quarter_turns); }

    bool operator==(const Rotation&) const = default;
};

/// Destination coordinate of source pixel (x, y) of a width x height raster
/// after `r` clockwise quarter turns.
struct Coord {
    std::size_t x = 0;
    std::size_t y = 0;
    bool operator==(const Coord&) const = default;
};
Coord rotated_coord(Coord src, std::size_t width, std::size_t height, Rotation r) noexcept;

GrayImage rotate_quarter(const GrayImage& img, Rotation r);
LabelImage rotate_quarter(const LabelImage& img, Rotation r);
ProbMap rotate_quarter(const ProbMap& img, Rotation r);

namespace detail {
/// Rotates a class-innermost buffer; channels are moved as a unit.
template <typename T>
std::vector<T> rotate_buffer(std::span<const T> src, std::size_t width, std::size_t height,
                             std::size_t channels, Rotation r) {
    std::vector<T> out(src.size());
    const std::size_t out_w = (r.quarter_turns % 2) ? height : width;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const Coord d = rotated_coord({x, y}, width, height, r);
            const std::size_t si = (y * width + x) * channels;
            const std::size_t di = (d.y * out_w + d.x) * channels;
            for (std::size_t c = 0; c < channels; ++c) out[di + c] = src[si + c];
        }
    }
    return out;
}
} // namespace detail

// Codecs ---------------------------------------------------------------------

/// Decodes binary PGM (P5, maxval <= 255) or 8-bit grayscale PNG. Pixel values
/// are returned as stored. Throws MalformedFile.
GrayImage decode_image(std::span<const std::uint8_t> bytes);
Bytes encode_pgm(const GrayImage& img);
Bytes encode_png(const GrayImage& img);
/// Default image encoding (PGM).
inline Bytes encode_image(const GrayImage& img) { return encode_pgm(img); }

/// Label images travel as PGM; class ids must fit in a byte.
Bytes encode_label_pgm(const LabelImage& labels);
LabelImage decode_label_image(std::span<const std::uint8_t> bytes, std::size_t num_classes);

/// `PMAP1\n<w> <h> <c>\n` followed by little-endian float32 payload.
Bytes encode_pmap(const ProbMap& probs);
ProbMap decode_pmap(std::span<const std::uint8_t> bytes);

/// Header and payload of a .pmap without probability validation.
struct RawPmap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t num_classes = 0;
    std::vector<float> values;
};
RawPmap decode_pmap_raw(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_file_text(const std::filesystem::path& path);

} // namespace nahid
