#pragma once

// Probabilistic voxel atlas: each voxel holds the probability that each organ
// occupies it; the remainder up to 1 is empty space.

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nahid {

using Vec3 = std::array<double, 3>;

struct VisibleOrgan {
    std::string organ;
    double probability = 0.0;
    bool operator==(const VisibleOrgan&) const = default;
};

/// Storage is voxel-major with organs innermost; voxels run x fastest, then
/// y, then z: value(ix, iy, iz, k) = data[((iz * ny + iy) * nx + ix) * K + k].
class GeometricModel {
public:
    GeometricModel() = default;
    /// Throws InvariantViolation on non-positive voxel size, empty dims or
    /// organs, duplicate organ names, a wrong data length, values outside
    /// [0,1] or a voxel whose organs sum above 1.
    GeometricModel(Vec3 origin, double voxel_size, std::array<std::size_t, 3> dims,
                   std::vector<std::string> organs, std::vector<float> data,
                   nlohmann::json covariates = nlohmann::json::object());

    const Vec3& origin() const noexcept { return origin_; }
    double voxel_size() const noexcept { return voxel_size_; }
    const std::array<std::size_t, 3>& dims() const noexcept { return dims_; }
    const std::vector<std::string>& organs() const noexcept { return organs_; }
    const std::vector<float>& data() const noexcept { return data_; }
    /// Reserved patient parameters; carried through I/O, never interpreted.
    const nlohmann::json& covariates() const noexcept { return covariates_; }

    std::span<const float> voxel(std::size_t ix, std::size_t iy, std::size_t iz) const;
    /// Containing voxel of p; the grid box is closed, so the far faces map to
    /// the last voxel. Throws OutOfBounds.
    std::array<std::size_t, 3> voxel_index(const Vec3& p) const;
    Vec3 voxel_center(std::size_t ix, std::size_t iy, std::size_t iz) const;

    /// JSON header {version, origin, voxel_size, dims, organs, covariates,
    /// data: sidecar file name}; the sidecar holds little-endian float32.
    static GeometricModel load(const std::filesystem::path& header);
    /// Writes `header` and a sidecar next to it named <stem>.f32.
    void save(const std::filesystem::path& header) const;

    bool operator==(const GeometricModel&) const = default;

private:
    Vec3 origin_{};
    double voxel_size_ = 1.0;
    std::array<std::size_t, 3> dims_{};
    std::vector<std::string> organs_;
    std::vector<float> data_;
    nlohmann::json covariates_ = nlohmann::json::object();
};

/// Organ probabilities of the voxel containing p. Throws OutOfBounds.
std::vector<float> query_point(const GeometricModel& g, const Vec3& p);

/// Mean organ probability over the voxels whose centres lie within `radius`
/// of p, plus the voxel containing p. Organs with a positive mean, sorted by
/// descending mean, ties in organ order. Throws OutOfBounds, or InvalidConfig
/// for a negative radius.
std::vector<VisibleOrgan> expected_visible(const GeometricModel& g, const Vec3& p, double radius);

} // namespace nahid
