#include "nahid/phantom.hpp"

#include "nahid/error.hpp"
#include "nahid/seeding.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nahid {

using Rng = boost::random::mt19937_64;

void NoiseSpec::validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "noise p must be in [0,1]");
    if (mode == Mode::BoundaryBand && band < 1) {
        throw Error(ErrorCode::InvalidConfig, "boundary band must be at least 1 pixel");
    }
}

std::string to_string(NoiseSpec::Mode mode) {
    return mode == NoiseSpec::Mode::IidFlip ? "iid_flip" : "boundary_band";
}

NoiseSpec::Mode noise_mode_from_string(const std::string& name) {
    if (name == "iid_flip") return NoiseSpec::Mode::IidFlip;
    if (name == "boundary_band") return NoiseSpec::Mode::BoundaryBand;
    throw Error(ErrorCode::InvalidConfig, "unknown noise mode '" + name + "'");
}

std::uint8_t class_intensity(ClassId cls) {
    return static_cast<std::uint8_t>(std::min(255, 20 + 36 * static_cast<int>(cls)));
}

int texture_offset(std::uint64_t seed, std::size_t x, std::size_t y, unsigned amplitude) {
    if (amplitude == 0) return 0;
    const std::uint64_t h = derive_seed(derive_seed(seed, 0x7e47u), (std::uint64_t{y} << 32) | x);
    return static_cast<int>(h % (2 * amplitude + 1)) - static_cast<int>(amplitude);
}

GrayImage render_frame(const LabelImage& truth, std::uint64_t seed, unsigned texture_amplitude) {
    GrayImage frame(truth.width(), truth.height());
    for (std::size_t y = 0; y < truth.height(); ++y) {
        for (std::size_t x = 0; x < truth.width(); ++x) {
            const int v = class_intensity(truth.at(x, y)) + texture_offset(seed, x, y, texture_amplitude);
            frame.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
    }
    return frame;
}

EdgeDetectorConfig exact_edge_config() { return {36.0f, 36.0f, 0}; }

EdgeMap true_boundaries(const LabelImage& truth) {
    const std::size_t w = truth.width();
    const std::size_t h = truth.height();
    EdgeMap out(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const ClassId c = truth.at(x, y);
            bool boundary = false;
            for (std::size_t ny = y == 0 ? 0 : y - 1; ny <= std::min(h - 1, y + 1) && !boundary; ++ny) {
                for (std::size_t nx = x == 0 ? 0 : x - 1; nx <= std::min(w - 1, x + 1); ++nx) {
                    if (truth.at(nx, ny) != c) {
                        boundary = true;
                        break;
                    }
                }
            }
            out.set(x, y, boundary);
        }
    }
    return out;
}

namespace {

[[noreturn]] void infeasible(const std::string& what) { throw Error(ErrorCode::InfeasibleSpec, what); }

std::vector<ClassId> voronoi(Rng& rng, std::size_t size, std::size_t regions) {
    boost::random::uniform_real_distribution<double> coord(0.0, static_cast<double>(size));
    std::vector<std::pair<double, double>> sites(regions);
    for (auto& s : sites) {
        s.first = coord(rng);
        s.second = coord(rng);
    }
    std::vector<ClassId> labels(size * size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            std::size_t best = 0;
            double best_d = 0.0;
            for (std::size_t k = 0; k < regions; ++k) {
                const double dx = px - sites[k].first;
                const double dy = py - sites[k].second;
                const double d = dx * dx + dy * dy;
                if (k == 0 || d < best_d) {
                    best = k;
                    best_d = d;
                }
            }
            labels[y * size + x] = static_cast<ClassId>(best);
        }
    }
    return labels;
}

/// Chessboard distance from each host pixel to the nearest non-host pixel or
/// to outside the image (two-pass chamfer).
std::vector<std::size_t> host_depth(const std::vector<ClassId>& labels, std::size_t size, ClassId host) {
    const std::size_t inf = size * 4;
    std::vector<std::size_t> d(size * size);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = labels[i] == host ? inf : 0;
    auto get = [&](std::ptrdiff_t x, std::ptrdiff_t y) -> std::size_t {
        if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(size) || y >= static_cast<std::ptrdiff_t>(size)) {
            return 0;
        }
        return d[static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)];
    };
    for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(size); ++y) {
        for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(size); ++x) {
            std::size_t& v = d[static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)];
            if (v == 0) continue;
            v = std::min({v, get(x - 1, y) + 1, get(x - 1, y - 1) + 1, get(x, y - 1) + 1, get(x + 1, y - 1) + 1});
        }
    }
    for (std::ptrdiff_t y = static_cast<std::ptrdiff_t>(size) - 1; y >= 0; --y) {
        for (std::ptrdiff_t x = static_cast<std::ptrdiff_t>(size) - 1; x >= 0; --x) {
            std::size_t& v = d[static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)];
            if (v == 0) continue;
            v = std::min({v, get(x + 1, y) + 1, get(x + 1, y + 1) + 1, get(x, y + 1) + 1, get(x - 1, y + 1) + 1});
        }
    }
    return d;
}

/// Lesion pixels must keep this chessboard distance from any other organ so a
/// band of host tissue always separates them.
constexpr std::size_t kLesionClearance = 4;

void embed_lesion(Rng& rng, std::vector<ClassId>& labels, const PhantomSpec& spec, ClassId lesion) {
    const auto host = static_cast<ClassId>(spec.host_region);
    const std::vector<std::size_t> depth = host_depth(labels, spec.size, host);
    std::size_t center = 0;
    for (std::size_t i = 1; i < depth.size(); ++i) {
        if (depth[i] > depth[center]) center = i;
    }
    boost::random::uniform_real_distribution<double> angle_dist(0.0, std::numbers::pi);
    boost::random::uniform_real_distribution<double> aspect_dist(1.0, 1.8);
    const double angle = angle_dist(rng);
    const double aspect = aspect_dist(rng);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const double cx = static_cast<double>(center % spec.size);
    const double cy = static_cast<double>(center / spec.size);

    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (depth[i] < kLesionClearance) continue;
        const double dx = static_cast<double>(i % spec.size) - cx;
        const double dy = static_cast<double>(i / spec.size) - cy;
        const double u = dx * ca + dy * sa;
        const double v = -dx * sa + dy * ca;
        candidates.emplace_back(u * u / aspect + v * v * aspect, i);
    }
    if (candidates.size() < spec.lesion_area) {
        infeasible("host region cannot hold a lesion of " + std::to_string(spec.lesion_area) + " px");
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(spec.lesion_area),
                      candidates.end());
    for (std::size_t k = 0; k < spec.lesion_area; ++k) labels[candidates[k].second] = lesion;
}

} // namespace

PhantomScene generate_scene(const PhantomSpec& spec) {
    if (spec.size < 16) infeasible("phantom size must be at least 16");
    if (spec.num_regions < 2 || spec.num_regions > 6) infeasible("num_regions must be in [2,6]");
    if (spec.num_regions * PhantomSpec::kMinRegionPixels > spec.size * spec.size) {
        infeasible(std::to_string(spec.num_regions) + " regions of " +
                   std::to_string(PhantomSpec::kMinRegionPixels) + " px do not fit in " +
                   std::to_string(spec.size) + "x" + std::to_string(spec.size));
    }
    if (spec.lesion && (spec.host_region >= spec.num_regions || spec.lesion_area == 0)) {
        infeasible("lesion host region out of range or empty lesion");
    }

    Rng rng(spec.seed);
    const auto lesion_class = static_cast<ClassId>(spec.num_regions);
    std::vector<ClassId> labels;
    bool accepted = false;
    for (int attempt = 0; attempt < 200 && !accepted; ++attempt) {
        labels = voronoi(rng, spec.size, spec.num_regions);
        std::vector<std::size_t> counts(spec.num_regions, 0);
        for (ClassId c : labels) ++counts[c];
        accepted = std::all_of(counts.begin(), counts.end(),
                               [](std::size_t n) { return n >= PhantomSpec::kMinRegionPixels; });
        if (accepted && spec.lesion) {
            const auto depth = host_depth(labels, spec.size, static_cast<ClassId>(spec.host_region));
            const auto roomy = std::count_if(depth.begin(), depth.end(),
                                             [](std::size_t d) { return d >= kLesionClearance; });
            accepted = static_cast<std::size_t>(roomy) >= spec.lesion_area;
        }
    }
    if (!accepted) infeasible("no Voronoi layout with regions of at least 100 px and room for the lesion");
    if (spec.lesion) embed_lesion(rng, labels, spec, lesion_class);

    PhantomScene scene;
    scene.spec = spec;
    scene.truth = LabelImage(spec.size, spec.size, spec.num_regions + 1, std::move(labels));
    scene.frame = render_frame(scene.truth, spec.seed, spec.texture_amplitude);
    scene.lesion_class = lesion_class;
    scene.host_class = static_cast<ClassId>(spec.host_region);
    scene.seed = spec.seed;
    return scene;
}

ProbMap corrupt(const LabelImage& truth, const NoiseSpec& noise, std::uint64_t seed) {
    noise.validate();
    const std::size_t w = truth.width();
    const std::size_t h = truth.height();
    const std::size_t classes = truth.num_classes();
    auto eligible = [&](std::size_t x, std::size_t y) {
        if (noise.mode == NoiseSpec::Mode::IidFlip) return true;
        const ClassId c = truth.at(x, y);
        const std::size_t b = noise.band;
        const std::size_t y0 = y >= b ? y - b : 0;
        const std::size_t x0 = x >= b ? x - b : 0;
        for (std::size_t ny = y0; ny <= std::min(h - 1, y + b); ++ny) {
            for (std::size_t nx = x0; nx <= std::min(w - 1, x + b); ++nx) {
                if (truth.at(nx, ny) != c) return true;
            }
        }
        return false;
    };

    Rng rng(seed);
    boost::random::uniform_real_distribution<double> coin(0.0, 1.0);
    boost::random::uniform_int_distribution<std::size_t> other(0, classes - 2);
    const float spread = 0.4f / static_cast<float>(classes - 1);

    std::vector<float> values(w * h * classes, 0.0f);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            float* px = values.data() + i * classes;
            const ClassId c = truth.at(x, y);
            if (eligible(x, y) && coin(rng) < noise.p) {
                std::size_t flipped = other(rng);
                if (flipped >= c) ++flipped;
                for (std::size_t k = 0; k < classes; ++k) px[k] = spread;
                px[flipped] = 0.6f;
            } else {
                px[c] = 1.0f;
            }
        }
    }
    return ProbMap(w, h, classes, std::move(values));
}

namespace {

void require_same(const BinaryMask& a, const BinaryMask& b) {
    if (a.width != b.width || a.height != b.height) {
        throw Error(ErrorCode::SizeMismatch, "masks are " + std::to_string(a.width) + "x" +
                                                 std::to_string(a.height) + " and " +
                                                 std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

std::pair<std::size_t, std::size_t> overlap(const BinaryMask& a, const BinaryMask& b) {
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    return {inter, uni};
}

} // namespace

double iou(const BinaryMask& a, const BinaryMask& b) {
    require_same(a, b);
    const auto [inter, uni] = overlap(a, b);
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    require_same(a, b);
    const std::size_t inter = overlap(a, b).first;
    const std::size_t total = a.count() + b.count();
    return total == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double macro_iou(const LabelImage& pred, const LabelImage& truth) {
    if (pred.width() != truth.width() || pred.height() != truth.height()) {
        throw Error(ErrorCode::SizeMismatch, "prediction and truth sizes differ");
    }
    std::vector<bool> present(truth.num_classes(), false);
    for (ClassId c : truth.labels()) present[c] = true;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < present.size(); ++c) {
        if (!present[c]) continue;
        sum += iou(pred.mask_of(static_cast<ClassId>(c)), truth.mask_of(static_cast<ClassId>(c)));
        ++n;
    }
    return n == 0 ? 1.0 : sum / static_cast<double>(n);
}

std::vector<Sample> augment_rotations(const std::vector<Sample>& dataset) {
    std::vector<Sample> out;
    out.reserve(dataset.size() * 4);
    for (const auto& [frame, truth] : dataset) {
        for (int t = 0; t < 4; ++t) {
            out.emplace_back(rotate_quarter(frame, Rotation(t)), rotate_quarter(truth, Rotation(t)));
        }
    }
    return out;
}

void write_scene_bundle(const PhantomScene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "frame.pgm", encode_pgm(scene.frame));
    write_file(dir / "truth.pgm", encode_label_pgm(scene.truth));
    const nlohmann::json meta = {
        {"version", 1},
        {"spec",
         {{"size", scene.spec.size},
          {"num_regions", scene.spec.num_regions},
          {"lesion", scene.spec.lesion},
          {"lesion_area", scene.spec.lesion_area},
          {"host_region", scene.spec.host_region},
          {"texture_amplitude", scene.spec.texture_amplitude}}},
        {"seed", scene.seed},
        {"num_classes", scene.truth.num_classes()},
        {"lesion_class", scene.lesion_class},
    };
    write_text(dir / "meta.json", meta.dump(2) + "\n");
}

} // namespace nahid
