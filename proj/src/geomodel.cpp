#include "nahid/geomodel.hpp"

#include "nahid/error.hpp"
#include "nahid/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

namespace nahid {

namespace {

[[noreturn]] void broken(const std::string& what) { throw Error(ErrorCode::InvariantViolation, "geomodel: " + what); }

constexpr double kSumSlack = 1e-5;

float le_float(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<float>(bits);
}

} // namespace

GeometricModel::GeometricModel(Vec3 origin, double voxel_size, std::array<std::size_t, 3> dims,
                               std::vector<std::string> organs, std::vector<float> data,
                               nlohmann::json covariates)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims), organs_(std::move(organs)), data_(std::move(data)),
      covariates_(std::move(covariates)) {
    for (double o : origin_) {
        if (!std::isfinite(o)) broken("origin must be finite");
    }
    if (!(voxel_size_ > 0.0) || !std::isfinite(voxel_size_)) broken("voxel_size must be positive");
    for (std::size_t d : dims_) {
        if (d == 0) broken("dims must be at least 1");
    }
    if (organs_.empty()) broken("at least one organ is required");
    std::set<std::string> seen;
    for (const auto& o : organs_) {
        if (o.empty() || !seen.insert(o).second) broken("organ names must be unique and non-empty");
    }
    const std::size_t k = organs_.size();
    if (data_.size() != dims_[0] * dims_[1] * dims_[2] * k) {
        broken("data holds " + std::to_string(data_.size()) + " values, expected " +
               std::to_string(dims_[0] * dims_[1] * dims_[2] * k));
    }
    for (std::size_t v = 0; v < data_.size() / k; ++v) {
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const float p = data_[v * k + c];
            if (!(p >= 0.0f && p <= 1.0f)) broken("probability outside [0,1] in voxel " + std::to_string(v));
            sum += p;
        }
        if (sum > 1.0 + kSumSlack) broken("organ probabilities of voxel " + std::to_string(v) + " exceed 1");
    }
}

std::span<const float> GeometricModel::voxel(std::size_t ix, std::size_t iy, std::size_t iz) const {
    const std::size_t k = organs_.size();
    return std::span<const float>(data_).subspan(((iz * dims_[1] + iy) * dims_[0] + ix) * k, k);
}

std::array<std::size_t, 3> GeometricModel::voxel_index(const Vec3& p) const {
    std::array<std::size_t, 3> idx{};
    for (int a = 0; a < 3; ++a) {
        const double t = (p[a] - origin_[a]) / voxel_size_;
        const auto n = static_cast<double>(dims_[a]);
        if (!(t >= 0.0 && t <= n)) {
            throw Error(ErrorCode::OutOfBounds, "point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                                                    ", " + std::to_string(p[2]) + ") lies outside the grid");
        }
        idx[a] = std::min(static_cast<std::size_t>(std::floor(t)), dims_[a] - 1);
    }
    return idx;
}

Vec3 GeometricModel::voxel_center(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return {origin_[0] + (static_cast<double>(ix) + 0.5) * voxel_size_,
            origin_[1] + (static_cast<double>(iy) + 0.5) * voxel_size_,
            origin_[2] + (static_cast<double>(iz) + 0.5) * voxel_size_};
}

GeometricModel GeometricModel::load(const std::filesystem::path& header) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file_text(header));
        if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::MalformedFile, "unsupported geomodel version");
        const auto origin = doc.at("origin").get<std::array<double, 3>>();
        const auto voxel_size = doc.at("voxel_size").get<double>();
        const auto dims = doc.at("dims").get<std::array<std::size_t, 3>>();
        auto organs = doc.at("organs").get<std::vector<std::string>>();
        const Bytes raw = read_file(header.parent_path() / doc.at("data").get<std::string>());
        const std::size_t expected = dims[0] * dims[1] * dims[2] * organs.size() * 4;
        if (raw.size() != expected) {
            throw Error(ErrorCode::MalformedFile, "geomodel sidecar holds " + std::to_string(raw.size()) +
                                                      " bytes, expected " + std::to_string(expected));
        }
        std::vector<float> data(raw.size() / 4);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = le_float(raw.data() + 4 * i);
        return GeometricModel(origin, voxel_size, dims, std::move(organs), std::move(data),
                              doc.value("covariates", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedFile, header.string() + ": " + e.what());
    }
}

void GeometricModel::save(const std::filesystem::path& header) const {
    const std::string sidecar = header.stem().string() + ".f32";
    Bytes raw;
    raw.reserve(data_.size() * 4);
    for (float v : data_) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) raw.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    write_file(header.parent_path() / sidecar, raw);
    const nlohmann::json doc = {{"version", 1},   {"origin", origin_},         {"voxel_size", voxel_size_},
                                {"dims", dims_},  {"organs", organs_},         {"covariates", covariates_},
                                {"data", sidecar}};
    write_text(header, doc.dump(2) + "\n");
}

std::vector<float> query_point(const GeometricModel& g, const Vec3& p) {
    const auto [ix, iy, iz] = g.voxel_index(p);
    const auto v = g.voxel(ix, iy, iz);
    return {v.begin(), v.end()};
}

std::vector<VisibleOrgan> expected_visible(const GeometricModel& g, const Vec3& p, double radius) {
    if (!(radius >= 0.0) || !std::isfinite(radius)) {
        throw Error(ErrorCode::InvalidConfig, "visibility radius must be finite and non-negative");
    }
    const auto home = g.voxel_index(p);
    const std::size_t k = g.organs().size();
    const double s = g.voxel_size();
    std::array<std::size_t, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        const double first = std::ceil((p[a] - radius - g.origin()[a]) / s - 0.5) - 1.0;
        const double last = std::floor((p[a] + radius - g.origin()[a]) / s - 0.5) + 1.0;
        lo[a] = static_cast<std::size_t>(std::max(0.0, first));
        hi[a] = static_cast<std::size_t>(std::clamp(last, 0.0, static_cast<double>(g.dims()[a] - 1)));
        lo[a] = std::min(lo[a], home[a]);
        hi[a] = std::max(hi[a], home[a]);
    }

    std::vector<double> sum(k, 0.0);
    std::size_t count = 0;
    const double r2 = radius * radius;
    for (std::size_t iz = lo[2]; iz <= hi[2]; ++iz) {
        for (std::size_t iy = lo[1]; iy <= hi[1]; ++iy) {
            for (std::size_t ix = lo[0]; ix <= hi[0]; ++ix) {
                const Vec3 c = g.voxel_center(ix, iy, iz);
                const double d2 = (c[0] - p[0]) * (c[0] - p[0]) + (c[1] - p[1]) * (c[1] - p[1]) +
                                  (c[2] - p[2]) * (c[2] - p[2]);
                const bool is_home = ix == home[0] && iy == home[1] && iz == home[2];
                if (d2 > r2 && !is_home) continue;
                const auto v = g.voxel(ix, iy, iz);
                for (std::size_t o = 0; o < k; ++o) sum[o] += v[o];
                ++count;
            }
        }
    }

    std::vector<VisibleOrgan> out;
    for (std::size_t o = 0; o < k; ++o) {
        const double mean = sum[o] / static_cast<double>(count);
        if (mean > 0.0) out.push_back({g.organs()[o], std::min(mean, 1.0)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const VisibleOrgan& a, const VisibleOrgan& b) { return a.probability > b.probability; });
    return out;
}

} // namespace nahid
