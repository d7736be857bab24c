#include "nahid/edgedet.hpp"

#include "nahid/error.hpp"
#include "nahid/parallel.hpp"

#include <algorithm>
#include <cstdlib>

namespace nahid {

EdgeMap::EdgeMap(std::size_t width, std::size_t height, bool fill)
    : width_(width), height_(height), flags_(width * height, fill ? 1 : 0) {}

EdgeMap::EdgeMap(std::size_t width, std::size_t height, std::vector<std::uint8_t> flags)
    : width_(width), height_(height), flags_(std::move(flags)) {
    if (flags_.size() != width * height) {
        throw Error(ErrorCode::InvariantViolation, "edge buffer length does not match dimensions");
    }
    for (auto& f : flags_) f = f ? 1 : 0;
}

std::size_t EdgeMap::count() const noexcept {
    return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), std::uint8_t{1}));
}

EdgeMap rotate_quarter(const EdgeMap& edges, Rotation r) {
    const bool swap = r.quarter_turns % 2;
    return EdgeMap(swap ? edges.height() : edges.width(), swap ? edges.width() : edges.height(),
                   detail::rotate_buffer(edges.flags(), edges.width(), edges.height(), 1, r));
}

Bytes encode_edge_pgm(const EdgeMap& edges) {
    std::vector<std::uint8_t> px(edges.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = edges[i] ? 255 : 0;
    return encode_pgm(GrayImage(edges.width(), edges.height(), std::move(px)));
}

EdgeMap decode_edge_image(std::span<const std::uint8_t> bytes) {
    const GrayImage img = decode_image(bytes);
    return EdgeMap(img.width(), img.height(),
                   std::vector<std::uint8_t>(img.pixels().begin(), img.pixels().end()));
}

void EdgeDetectorConfig::validate() const {
    if (!(low_threshold >= 0.0f) || !(high_threshold >= low_threshold)) {
        throw Error(ErrorCode::InvalidConfig, "edge thresholds must satisfy high >= low >= 0 (low=" +
                                                  std::to_string(low_threshold) + ", high=" +
                                                  std::to_string(high_threshold) + ")");
    }
}

namespace {

void require_min_size(const GrayImage& img) {
    if (img.width() < 3 || img.height() < 3) {
        throw Error(ErrorCode::ImageTooSmall, "edge detection needs at least 3x3, got " +
                                                  std::to_string(img.width()) + "x" +
                                                  std::to_string(img.height()));
    }
}

std::size_t clamp_index(std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

/// Sum over the (2r+1)^2 window around each pixel with replicated borders.
std::vector<std::int64_t> box_sums(const GrayImage& img, unsigned radius) {
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    const auto r = static_cast<std::ptrdiff_t>(radius);
    std::vector<std::int64_t> horiz(w * h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::int64_t s = 0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) {
                s += img.at(clamp_index(static_cast<std::ptrdiff_t>(x) + d, w), y);
            }
            horiz[y * w + x] = s;
        }
    }
    std::vector<std::int64_t> out(w * h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::int64_t s = 0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) {
                s += horiz[clamp_index(static_cast<std::ptrdiff_t>(y) + d, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    return out;
}

GradientField sobel_of(const std::vector<std::int64_t>& field, std::size_t w, std::size_t h,
                       std::int64_t divisor, unsigned workers) {
    GradientField out{w, h, std::vector<float>(w * h)};
    auto px = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
        return field[clamp_index(y, h) * w + clamp_index(x, w)];
    };
    parallel_for(row_blocks(h), workers, [&](std::size_t block) {
        const std::size_t y_end = std::min(h, (block + 1) * kRowBlock);
        for (std::size_t yy = block * kRowBlock; yy < y_end; ++yy) {
            const auto y = static_cast<std::ptrdiff_t>(yy);
            for (std::size_t xx = 0; xx < w; ++xx) {
                const auto x = static_cast<std::ptrdiff_t>(xx);
                const std::int64_t gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
                const std::int64_t gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
                const std::int64_t mag = std::llabs(gx) + std::llabs(gy);
                out.values[yy * w + xx] = static_cast<float>(static_cast<double>(mag) /
                                                             static_cast<double>(divisor));
            }
        }
    });
    return out;
}

} // namespace

GradientField gradient_magnitude(const GrayImage& img, unsigned workers) {
    return smoothed_gradient_magnitude(img, 0, workers);
}

GradientField smoothed_gradient_magnitude(const GrayImage& img, unsigned blur_radius,
                                          unsigned workers) {
    require_min_size(img);
    const std::int64_t side = 2 * static_cast<std::int64_t>(blur_radius) + 1;
    return sobel_of(box_sums(img, blur_radius), img.width(), img.height(), side * side, workers);
}

EdgeMap hysteresis(const GradientField& magnitude, float low, float high) {
    const std::size_t w = magnitude.width;
    const std::size_t h = magnitude.height;
    EdgeMap edges(w, h);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < w * h; ++i) {
        if (magnitude.values[i] >= high) {
            edges.set(i % w, i / w, true);
            stack.push_back(i);
        }
    }
    // Flood from the strong seeds through weak pixels; the reached set does not
    // depend on visit order.
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const std::size_t x = i % w;
        const std::size_t y = i / w;
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
            for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + dx;
                const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + dy;
                if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) ||
                    ny >= static_cast<std::ptrdiff_t>(h)) {
                    continue;
                }
                const auto ux = static_cast<std::size_t>(nx);
                const auto uy = static_cast<std::size_t>(ny);
                if (!edges.at(ux, uy) && magnitude.at(ux, uy) >= low) {
                    edges.set(ux, uy, true);
                    stack.push_back(uy * w + ux);
                }
            }
        }
    }
    return edges;
}

EdgeMap detect_edges(const GrayImage& img, const EdgeDetectorConfig& cfg, unsigned workers) {
    require_min_size(img);
    cfg.validate();
    return hysteresis(smoothed_gradient_magnitude(img, cfg.blur_radius, workers),
                      cfg.low_threshold, cfg.high_threshold);
}

} // namespace nahid
