#pragma once

// Situation-keyed registry of segmentation models and the backends that
// produce probability maps for a frame.

#include "nahid/phantom.hpp"
#include "nahid/raster.hpp"

#include <nlohmann/json_fwd.hpp>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nahid {

class SituationId {
public:
    /// Throws InvalidConfig on an empty token.
    explicit SituationId(std::string id);

    const std::string& str() const noexcept { return id_; }
    auto operator<=>(const SituationId&) const = default;

private:
    std::string id_;
};

/// Precomputed .pmap files named by the frame's content hash.
struct FileBacked {
    std::filesystem::path directory;
};

/// One-hot(truth) corrupted by a noise model; stands in for a trained model
/// in simulation.
struct SyntheticOracle {
    NoiseSpec noise;
    std::uint64_t seed = 0;
};

/// `/bin/sh -c command`; frame PGM on stdin, .pmap on stdout. The tokens
/// {input_size} and {channels} are substituted before running.
struct ExternalProcess {
    std::string command;
};

struct BackendDescriptor {
    std::variant<FileBacked, SyntheticOracle, ExternalProcess> params;
    std::size_t input_size = 128;
    /// Ordered label names. A single name means binary mode.
    std::vector<std::string> classes;

    std::string kind() const;
    bool binary() const noexcept { return classes.size() == 1; }
    /// Channels of the produced map.
    std::size_t channels() const noexcept { return classes.size(); }
    /// Size of the label space (2 in binary mode).
    std::size_t label_count() const noexcept { return binary() ? 2 : classes.size(); }

    /// Throws InvalidConfig on empty/duplicate class names, a zero input
    /// size or incomplete params.
    void validate() const;
};

class ModelRegistry {
public:
    /// Throws InvalidConfig if the situation is already registered or the
    /// descriptor is invalid.
    void add(const SituationId& id, BackendDescriptor desc);
    /// Throws ModelNotFound.
    const BackendDescriptor& resolve(const SituationId& id) const;
    bool contains(const SituationId& id) const { return entries_.count(id) != 0; }
    bool erase(const SituationId& id) { return entries_.erase(id) != 0; }
    std::vector<SituationId> situations() const;
    std::size_t size() const noexcept { return entries_.size(); }

    /// Relative file_backed directories are resolved against `base_dir`.
    static ModelRegistry from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;

    static ModelRegistry load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::map<SituationId, BackendDescriptor> entries_;
};

/// FNV-1a of the frame's PGM encoding.
std::uint64_t frame_hash(const GrayImage& frame);
/// `<directory>/<16 hex digits>.pmap` for the frame.
std::filesystem::path precomputed_path(const std::filesystem::path& directory, const GrayImage& frame);

/// Runs the backend on one frame. `truth` is required by synthetic_oracle and
/// ignored otherwise. The result is clamped and, in multi-class mode,
/// renormalized. Throws SizeMismatch, InvalidConfig, MissingPrecomputedMap or
/// BackendProcessFailure.
ProbMap infer(const BackendDescriptor& desc, const GrayImage& frame,
              const LabelImage* truth = nullptr);

} // namespace nahid
