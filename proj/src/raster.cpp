#include "nahid/raster.hpp"

#include "nahid/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

namespace nahid {

namespace {

void require_dims(std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) {
        throw Error(ErrorCode::InvariantViolation, "image dimensions must be at least 1x1");
    }
}

} // namespace

// GrayImage ------------------------------------------------------------------

GrayImage::GrayImage(std::size_t width, std::size_t height, std::uint8_t fill)
    : width_(width), height_(height), pixels_(width * height, fill) {
    require_dims(width, height);
}

GrayImage::GrayImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    require_dims(width, height);
    if (pixels_.size() != width * height) {
        throw Error(ErrorCode::InvariantViolation, "pixel buffer length does not match dimensions");
    }
}

// LabelImage -----------------------------------------------------------------

LabelImage::LabelImage(std::size_t width, std::size_t height, std::size_t num_classes,
                       ClassId fill)
    : LabelImage(width, height, num_classes, std::vector<ClassId>(width * height, fill)) {}

LabelImage::LabelImage(std::size_t width, std::size_t height, std::size_t num_classes,
                       std::vector<ClassId> labels)
    : width_(width), height_(height), num_classes_(num_classes), labels_(std::move(labels)) {
    require_dims(width, height);
    if (num_classes_ < 2) {
        throw Error(ErrorCode::InvariantViolation, "label image needs at least 2 classes");
    }
    if (labels_.size() != width * height) {
        throw Error(ErrorCode::InvariantViolation, "label buffer length does not match dimensions");
    }
    for (ClassId id : labels_) {
        if (id >= num_classes_) {
            throw Error(ErrorCode::InvariantViolation,
                        "class id " + std::to_string(id) + " >= num_classes " +
                            std::to_string(num_classes_));
        }
    }
}

BinaryMask LabelImage::mask_of(ClassId cls) const {
    BinaryMask mask(width_, height_);
    for (std::size_t i = 0; i < labels_.size(); ++i) mask.bits[i] = labels_[i] == cls;
    return mask;
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

// ProbMap --------------------------------------------------------------------

ProbMap::ProbMap(std::size_t width, std::size_t height, std::size_t num_classes,
                 std::vector<float> values)
    : width_(width), height_(height), num_classes_(num_classes), values_(std::move(values)) {
    require_dims(width, height);
    if (num_classes_ == 0) {
        throw Error(ErrorCode::InvariantViolation, "probability map needs at least one channel");
    }
    if (values_.size() != width * height * num_classes) {
        throw Error(ErrorCode::InvariantViolation, "probability buffer length does not match dimensions");
    }
    for (float v : values_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw Error(ErrorCode::InvariantViolation, "probability outside [0,1]");
        }
    }
    if (num_classes_ > 1) {
        for (std::size_t i = 0; i < width * height; ++i) {
            double sum = 0.0;
            for (float v : pixel(i)) sum += v;
            if (std::abs(sum - 1.0) > kSumTolerance) {
                throw Error(ErrorCode::InvariantViolation,
                            "class probabilities of pixel " + std::to_string(i) + " sum to " +
                                std::to_string(sum));
            }
        }
    }
}

ProbMap ProbMap::one_hot(const LabelImage& labels) {
    const std::size_t c = labels.num_classes();
    std::vector<float> values(labels.size() * c, 0.0f);
    for (std::size_t i = 0; i < labels.size(); ++i) values[i * c + labels.labels()[i]] = 1.0f;
    return ProbMap(labels.width(), labels.height(), c, std::move(values));
}

float ProbMap::label_probability(std::size_t index, ClassId label) const {
    if (binary()) {
        const float p = values_[index];
        return label == 1 ? p : 1.0f - p;
    }
    return values_[index * num_classes_ + label];
}

ProbMap sanitize_probabilities(std::size_t width, std::size_t height, std::size_t num_classes,
                               std::vector<float> values) {
    for (float& v : values) {
        if (std::isnan(v)) throw Error(ErrorCode::MalformedFile, "NaN probability");
        v = std::clamp(v, 0.0f, 1.0f);
    }
    if (num_classes > 1 && values.size() == width * height * num_classes) {
        for (std::size_t i = 0; i < width * height; ++i) {
            float* px = values.data() + i * num_classes;
            double sum = 0.0;
            for (std::size_t c = 0; c < num_classes; ++c) sum += px[c];
            for (std::size_t c = 0; c < num_classes; ++c) {
                px[c] = sum > 0.0 ? static_cast<float>(px[c] / sum)
                                  : 1.0f / static_cast<float>(num_classes);
            }
        }
    }
    return ProbMap(width, height, num_classes, std::move(values));
}

LabelImage argmax(const ProbMap& probs, float binary_threshold) {
    const std::size_t n = probs.width() * probs.height();
    std::vector<ClassId> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto px = probs.pixel(i);
        if (probs.binary()) {
            out[i] = px[0] >= binary_threshold ? 1 : 0;
        } else {
            out[i] = static_cast<ClassId>(std::max_element(px.begin(), px.end()) - px.begin());
        }
    }
    return LabelImage(probs.width(), probs.height(), probs.label_count(), std::move(out));
}

// Rotation -------------------------------------------------------------------

Rotation::Rotation(int turns) : quarter_turns(turns) {
    if (turns < 0 || turns > 3) {
        throw Error(ErrorCode::InvariantViolation, "quarter_turns must be in {0,1,2,3}");
    }
}

Rotation Rotation::from_turns(int turns) noexcept {
    Rotation r;
    r.quarter_turns = ((turns % 4) + 4) % 4;
    return r;
}

Coord rotated_coord(Coord s, std::size_t width, std::size_t height, Rotation r) noexcept {
    switch (r.quarter_turns) {
    case 1: return {height - 1 - s.y, s.x};
    case 2: return {width - 1 - s.x, height - 1 - s.y};
    case 3: return {s.y, width - 1 - s.x};
    default: return s;
    }
}

GrayImage rotate_quarter(const GrayImage& img, Rotation r) {
    const bool swap = r.quarter_turns % 2;
    return GrayImage(swap ? img.height() : img.width(), swap ? img.width() : img.height(),
                     detail::rotate_buffer(img.pixels(), img.width(), img.height(), 1, r));
}

LabelImage rotate_quarter(const LabelImage& img, Rotation r) {
    const bool swap = r.quarter_turns % 2;
    return LabelImage(swap ? img.height() : img.width(), swap ? img.width() : img.height(),
                      img.num_classes(),
                      detail::rotate_buffer(img.labels(), img.width(), img.height(), 1, r));
}

ProbMap rotate_quarter(const ProbMap& img, Rotation r) {
    const bool swap = r.quarter_turns % 2;
    return ProbMap(swap ? img.height() : img.width(), swap ? img.width() : img.height(),
                   img.num_classes(),
                   detail::rotate_buffer(img.values(), img.width(), img.height(),
                                         img.num_classes(), r));
}

// Codecs ---------------------------------------------------------------------

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedFile, what); }

/// Cursor over a netpbm-style ASCII header.
class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = static_cast<char>(bytes_[pos_]);
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t read_uint(const char* field) {
        skip_space_and_comments();
        const char* first = reinterpret_cast<const char*>(bytes_.data()) + pos_;
        const char* last = reinterpret_cast<const char*>(bytes_.data()) + bytes_.size();
        std::size_t value = 0;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr == first) malformed(std::string("missing or invalid ") + field);
        pos_ += static_cast<std::size_t>(ptr - first);
        return value;
    }

    void expect_single_whitespace() {
        if (pos_ >= bytes_.size()) malformed("truncated header");
        const char c = static_cast<char>(bytes_[pos_]);
        if (c != ' ' && c != '\t' && c != '\n' && c != '\r') malformed("expected whitespace after header");
        ++pos_;
    }

    std::size_t pos() const noexcept { return pos_; }
    void advance(std::size_t n) noexcept { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
    HeaderReader reader(bytes);
    reader.advance(2);  // "P5"
    const std::size_t width = reader.read_uint("width");
    const std::size_t height = reader.read_uint("height");
    const std::size_t maxval = reader.read_uint("maxval");
    reader.expect_single_whitespace();
    if (width == 0 || height == 0) malformed("zero image dimension");
    if (maxval == 0 || maxval > 255) malformed("only 8-bit PGM (maxval <= 255) is supported");
    if (bytes.size() - reader.pos() < width * height) malformed("truncated PGM payload");
    if (bytes.size() - reader.pos() > width * height) malformed("trailing bytes after PGM payload");
    std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()),
                                     bytes.end());
    for (std::uint8_t v : pixels) {
        if (v > maxval) malformed("pixel value exceeds maxval");
    }
    return GrayImage(width, height, std::move(pixels));
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
    // IHDR is required to be the first chunk: length(4) type(4) w(4) h(4) depth(1) color(1).
    if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
        malformed("PNG missing IHDR");
    }
    const std::uint8_t bit_depth = bytes[24];
    const std::uint8_t color_type = bytes[25];
    if (bit_depth != 8 || color_type != 0) malformed("only 8-bit grayscale PNG is supported");
    const std::size_t width = read_be32(bytes, 16);
    const std::size_t height = read_be32(bytes, 20);
    if (width == 0 || height == 0) malformed("zero image dimension");

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        malformed(std::string("PNG header: ") + image.message);
    }
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        malformed("PNG payload: " + msg);
    }
    return GrayImage(image.width, image.height, std::move(pixels));
}

} // namespace

GrayImage decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
    if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin())) {
        return decode_png(bytes);
    }
    malformed(bytes.empty() ? "empty input" : "unrecognized image magic");
}

Bytes encode_pgm(const GrayImage& img) {
    const std::string header =
        "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

Bytes encode_png(const GrayImage& img) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, img.pixels().data(), 0, nullptr)) {
        throw Error(ErrorCode::IoError, std::string("PNG encode: ") + image.message);
    }
    Bytes out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels().data(), 0, nullptr)) {
        throw Error(ErrorCode::IoError, std::string("PNG encode: ") + image.message);
    }
    out.resize(size);
    return out;
}

Bytes encode_label_pgm(const LabelImage& labels) {
    if (labels.num_classes() > 256) {
        throw Error(ErrorCode::InvariantViolation, "label PGM supports at most 256 classes");
    }
    std::vector<std::uint8_t> px(labels.labels().begin(), labels.labels().end());
    return encode_pgm(GrayImage(labels.width(), labels.height(), std::move(px)));
}

LabelImage decode_label_image(std::span<const std::uint8_t> bytes, std::size_t num_classes) {
    const GrayImage img = decode_image(bytes);
    std::vector<ClassId> labels(img.pixels().begin(), img.pixels().end());
    return LabelImage(img.width(), img.height(), num_classes, std::move(labels));
}

namespace {

constexpr std::string_view kPmapMagic = "PMAP1\n";

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
    }
    return v;
}

} // namespace

Bytes encode_pmap(const ProbMap& probs) {
    std::string header(kPmapMagic);
    header += std::to_string(probs.width()) + " " + std::to_string(probs.height()) + " " +
              std::to_string(probs.num_classes()) + "\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + probs.values().size() * 4);
    for (float v : probs.values()) {
        const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(v));
        const auto* b = reinterpret_cast<const std::uint8_t*>(&bits);
        out.insert(out.end(), b, b + 4);
    }
    return out;
}

RawPmap decode_pmap_raw(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPmapMagic.size() ||
        std::memcmp(bytes.data(), kPmapMagic.data(), kPmapMagic.size()) != 0) {
        malformed("missing PMAP1 magic");
    }
    const auto nl = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(kPmapMagic.size()),
                              bytes.end(), std::uint8_t{'\n'});
    if (nl == bytes.end()) malformed("truncated .pmap header");
    const std::string dims_line(bytes.begin() + static_cast<std::ptrdiff_t>(kPmapMagic.size()), nl);

    std::size_t dims[3] = {0, 0, 0};
    const char* p = dims_line.data();
    const char* end = dims_line.data() + dims_line.size();
    for (int i = 0; i < 3; ++i) {
        if (i > 0) {
            if (p == end || *p != ' ') malformed("bad .pmap dimension line");
            ++p;
        }
        auto [next, ec] = std::from_chars(p, end, dims[i]);
        if (ec != std::errc() || next == p) malformed("bad .pmap dimension line");
        p = next;
    }
    if (p != end) malformed("bad .pmap dimension line");
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) malformed("zero .pmap dimension");

    const std::size_t offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
    const std::size_t count = dims[0] * dims[1] * dims[2];
    if (bytes.size() - offset != count * 4) {
        malformed("payload holds " + std::to_string((bytes.size() - offset) / 4) +
                  " floats, header declares " + std::to_string(count));
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + offset + i * 4, 4);
        values[i] = std::bit_cast<float>(to_le(bits));
    }
    return RawPmap{dims[0], dims[1], dims[2], std::move(values)};
}

ProbMap decode_pmap(std::span<const std::uint8_t> bytes) {
    RawPmap raw = decode_pmap_raw(bytes);
    return ProbMap(raw.width, raw.height, raw.num_classes, std::move(raw.values));
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_file_text(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

} // namespace nahid
