#pragma once

// The executor: walks a surgical plan over the Sina tree, runs detection at
// each state, plans and applies (simulated) treatment, verifies it, and rolls
// back to a safe node on failure. Everything it does lands in an action log.

#include "nahid/geomodel.hpp"
#include "nahid/phantom.hpp"
#include "nahid/segbackend.hpp"
#include "nahid/sinafuse.hpp"
#include "nahid/sinatree.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nahid {

/// Phantom world the executor runs against: one scene per tree node, seeded
/// from (seed, node id). Lesions appear only at `lesion_nodes`.
struct SimulationSpec {
    std::uint64_t seed = 0;
    std::size_t size = 128;
    std::size_t num_regions = 4;
    std::size_t host_region = 1;
    std::size_t lesion_area = 60;
    unsigned texture_amplitude = 1;
    std::vector<std::string> lesion_nodes;
};

struct SurgicalPlan {
    SinaTree tree;
    ModelRegistry registry;
    std::optional<GeometricModel> geomodel;
    std::vector<std::string> state_order;
    /// Rollback target per failing node; unlisted nodes fall back to the root.
    std::map<std::string, std::string> failure_policy;
    /// Reserved for robot arm poses; carried, never interpreted.
    nlohmann::json arms = nlohmann::json::object();
    EdgeDetectorConfig edges;
    double visibility_radius = 30.0;
    SimulationSpec simulation;

    std::string rollback_target(const std::string& node) const;

    /// Tree structure (situations are resolved lazily during execution),
    /// state_order as a walk from the root, and failure_policy targets.
    ValidationReport validate() const;

    /// Plan JSON; tree, registry and geomodel paths are relative to the plan.
    static SurgicalPlan load(const std::filesystem::path& path);
};

class SimulationEnv {
public:
    SimulationEnv(const SinaTree& tree, const SimulationSpec& spec);

    const PhantomScene& scene(const std::string& node) const;
    /// Lesion pixels currently present in the node's ground truth.
    std::size_t lesion_area(const std::string& node) const;
    /// Clears lesion pixels within Euclidean distance `radius` of each
    /// target (turning them into the host class) and re-renders the frame.
    /// Returns the number of pixels cleared.
    std::size_t ablate(const std::string& node, const std::vector<Coord>& targets, double radius);

private:
    std::map<std::string, PhantomScene> scenes_;
};

/// Stride-`spacing` lattice anchored at the mask's bounding-box corner,
/// scanned row-major, keeping points inside the mask. Throws InvalidConfig
/// for spacing 0.
std::vector<Coord> plan_targets(const BinaryMask& mask, std::size_t spacing);

struct DetectionResult {
    RegionMap region_map;
    BinaryMask target_mask;
    ClassId target = 0;
    std::size_t area = 0;
    /// Mean probability of the target class over target pixels (0 if none).
    double confidence = 0.0;
    bool success = false;
};

/// infer + refine at `node`, then the pixels whose region label is the task's
/// target class. Success: area >= min_area (detect, treat) or area <=
/// residual_epsilon (verify); `epsilon_override` replaces the verify bound.
/// Throws ModelNotFound, SizeMismatch, InvalidConfig (navigate node or
/// unknown target class).
DetectionResult detect_at(const SurgicalPlan& plan, const std::string& node, const GrayImage& frame,
                          const LabelImage* truth, std::size_t workers = 1,
                          std::optional<std::size_t> epsilon_override = std::nullopt);

enum class EventKind { Enter, DetectResult, TreatFire, VerifyResult, Rollback, Complete, Abort };
std::string to_string(EventKind kind);

struct LogEvent {
    std::size_t seq = 0;
    std::size_t step = 0;
    std::string node;
    EventKind kind = EventKind::Enter;
    nlohmann::json payload = nlohmann::json::object();
};

struct ActionLog {
    static constexpr int kVersion = 1;
    std::vector<LogEvent> events;

    /// One JSON object per line: {v, seq, step, node, event, payload}.
    std::string to_jsonl() const;
    std::vector<const LogEvent*> of_kind(EventKind kind) const;
};

struct ExecuteOptions {
    std::size_t workers = 1;
};

/// Never throws for plan or backend failures; they become ROLLBACK + ABORT.
ActionLog execute(const SurgicalPlan& plan, SimulationEnv& env, const ExecuteOptions& opts = {});

} // namespace nahid
