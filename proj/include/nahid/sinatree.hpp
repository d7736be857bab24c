#pragma once

// The Sina tree: camera poses joined by movement edges, each node carrying
// the surgical situation (which model to use) and the task to perform there.

#include "nahid/segbackend.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace nahid {

/// Maps degrees into (-180, 180].
double normalize_angle(double degrees);

struct Pose {
    double x = 0, y = 0, z = 0;  ///< millimetres, patient-fixed frame
    double yaw = 0, pitch = 0;   ///< degrees

    /// Angles normalized; throws InvalidConfig on non-finite values.
    static Pose make(double x, double y, double z, double yaw = 0, double pitch = 0);

    bool operator==(const Pose&) const = default;
};

struct NavigateTask {
    bool operator==(const NavigateTask&) const = default;
};
struct DetectTask {
    std::string target_class;
    std::size_t min_area = 1;
    bool operator==(const DetectTask&) const = default;
};
struct TreatTask {
    std::string target_class;
    std::size_t spacing = 1;
    std::size_t max_iters = 1;
    bool operator==(const TreatTask&) const = default;
};
struct VerifyTask {
    std::string target_class;
    std::size_t residual_epsilon = 0;
    bool operator==(const VerifyTask&) const = default;
};

using TaskDescriptor = std::variant<NavigateTask, DetectTask, TreatTask, VerifyTask>;

std::string task_kind(const TaskDescriptor& task);
/// Throws InvalidConfig when a bound is violated or target_class is empty.
void validate_task(const TaskDescriptor& task);

/// {"kind": "navigate"|"detect"|"treat"|"verify", ...task fields}.
nlohmann::json task_to_json(const TaskDescriptor& task);
/// Throws MalformedFile for an unknown kind or missing field.
TaskDescriptor task_from_json(const nlohmann::json& j);

struct TreeNode {
    std::string id;
    Pose pose;
    SituationId situation{"unset"};
    TaskDescriptor task;

    bool operator==(const TreeNode&) const = default;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const noexcept { return violations.empty(); }
};

/// Value type; the node and edge lists keep their insertion order so that
/// serialization is stable. Structural checks live in validate().
class SinaTree {
public:
    using Edge = std::pair<std::string, std::string>;

    SinaTree() = default;
    SinaTree(std::string root, std::vector<TreeNode> nodes, std::vector<Edge> edges);

    const std::string& root() const noexcept { return root_; }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    bool has_node(const std::string& id) const { return index_.count(id) != 0; }
    /// Throws NodeNotFound.
    const TreeNode& node(const std::string& id) const;
    bool has_edge(const std::string& a, const std::string& b) const;
    /// Neighbours in edge-list order.
    std::vector<std::string> neighbours(const std::string& id) const;

    static SinaTree from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    static SinaTree load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    bool operator==(const SinaTree& o) const {
        return root_ == o.root_ && nodes_ == o.nodes_ && edges_ == o.edges_;
    }

private:
    std::string root_;
    std::vector<TreeNode> nodes_;
    std::vector<Edge> edges_;
    std::map<std::string, std::size_t> index_;
};

/// Structure (non-empty, unique ids, known edge endpoints, root present,
/// connected, acyclic), task bounds and, when `registry` is given, that every
/// situation resolves.
ValidationReport validate(const SinaTree& tree, const ModelRegistry* registry = nullptr);

/// The unique simple path from `from` to `to`, both included. Throws
/// NodeNotFound; InvariantViolation if the nodes are disconnected.
std::vector<std::string> find_path(const SinaTree& tree, const std::string& from, const std::string& to);

/// Splits edge (a, b) with a new node whose pose is interpolated at
/// `fraction` from a towards b (angles along the shorter arc). An empty
/// `node_id` picks "<a>~<b>", suffixed with a counter when taken. Throws
/// EdgeNotFound, InvalidFraction, or InvalidConfig for a taken explicit id.
SinaTree insert_intermediate(const SinaTree& tree, const std::string& a, const std::string& b, double fraction,
                             const SituationId& situation, const TaskDescriptor& task,
                             const std::string& node_id = {});

/// Pose interpolation used by insert_intermediate.
Pose interpolate(const Pose& a, const Pose& b, double fraction);

/// Closest node by position; ties go to the lexicographically smallest id.
/// Throws InvariantViolation on an empty tree.
std::string nearest_node(const SinaTree& tree, const Pose& p);

} // namespace nahid
