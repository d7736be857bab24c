#include "nahid/sinatree.hpp"

#include "nahid/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <deque>
#include <limits>
#include <set>

namespace nahid {

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedFile, "tree: " + what); }

double shortest_delta(double from, double to) {
    double d = std::fmod(to - from, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

} // namespace

nlohmann::json task_to_json(const TaskDescriptor& task) {
    nlohmann::json j = {{"kind", task_kind(task)}};
    if (const auto* d = std::get_if<DetectTask>(&task)) {
        j["target_class"] = d->target_class;
        j["min_area"] = d->min_area;
    } else if (const auto* t = std::get_if<TreatTask>(&task)) {
        j["target_class"] = t->target_class;
        j["spacing"] = t->spacing;
        j["max_iters"] = t->max_iters;
    } else if (const auto* v = std::get_if<VerifyTask>(&task)) {
        j["target_class"] = v->target_class;
        j["residual_epsilon"] = v->residual_epsilon;
    }
    return j;
}

TaskDescriptor task_from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "navigate") return NavigateTask{};
        if (kind == "detect") {
            return DetectTask{j.at("target_class").get<std::string>(), j.at("min_area").get<std::size_t>()};
        }
        if (kind == "treat") {
            return TreatTask{j.at("target_class").get<std::string>(), j.at("spacing").get<std::size_t>(),
                             j.at("max_iters").get<std::size_t>()};
        }
        if (kind == "verify") {
            return VerifyTask{j.at("target_class").get<std::string>(), j.at("residual_epsilon").get<std::size_t>()};
        }
        malformed("unknown task kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        malformed(std::string("task: ") + e.what());
    }
}

double normalize_angle(double degrees) {
    double r = std::fmod(degrees, 360.0);
    if (r > 180.0) r -= 360.0;
    if (r <= -180.0) r += 360.0;
    return r;
}

Pose Pose::make(double x, double y, double z, double yaw, double pitch) {
    for (double v : {x, y, z, yaw, pitch}) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, "pose values must be finite");
    }
    return Pose{x, y, z, normalize_angle(yaw), normalize_angle(pitch)};
}

std::string task_kind(const TaskDescriptor& task) {
    switch (task.index()) {
    case 0: return "navigate";
    case 1: return "detect";
    case 2: return "treat";
    default: return "verify";
    }
}

void validate_task(const TaskDescriptor& task) {
    const auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (const auto* d = std::get_if<DetectTask>(&task)) {
        if (d->target_class.empty()) bad("detect task needs a target class");
        if (d->min_area < 1) bad("detect min_area must be at least 1");
    } else if (const auto* t = std::get_if<TreatTask>(&task)) {
        if (t->target_class.empty()) bad("treat task needs a target class");
        if (t->spacing < 1) bad("treat spacing must be at least 1");
        if (t->max_iters < 1) bad("treat max_iters must be at least 1");
    } else if (const auto* v = std::get_if<VerifyTask>(&task)) {
        if (v->target_class.empty()) bad("verify task needs a target class");
    }
}

SinaTree::SinaTree(std::string root, std::vector<TreeNode> nodes, std::vector<Edge> edges)
    : root_(std::move(root)), nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
}

const TreeNode& SinaTree::node(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::NodeNotFound, "no node '" + id + "'");
    return nodes_[it->second];
}

bool SinaTree::has_edge(const std::string& a, const std::string& b) const {
    for (const auto& [u, v] : edges_) {
        if ((u == a && v == b) || (u == b && v == a)) return true;
    }
    return false;
}

std::vector<std::string> SinaTree::neighbours(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [u, v] : edges_) {
        if (u == id) out.push_back(v);
        else if (v == id) out.push_back(u);
    }
    return out;
}

SinaTree SinaTree::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != 1) malformed("unsupported version");
        std::vector<TreeNode> nodes;
        for (const auto& n : doc.at("nodes")) {
            const auto& p = n.at("pose");
            TreeNode node;
            node.id = n.at("id").get<std::string>();
            node.pose = Pose::make(p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(),
                                   p.value("yaw", 0.0), p.value("pitch", 0.0));
            node.situation = SituationId(n.at("situation").get<std::string>());
            node.task = task_from_json(n.value("task", nlohmann::json{{"kind", "navigate"}}));
            nodes.push_back(std::move(node));
        }
        std::vector<Edge> edges;
        for (const auto& e : doc.at("edges")) {
            if (!e.is_array() || e.size() != 2) malformed("edges must be pairs of node ids");
            edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
        }
        return SinaTree(doc.at("root").get<std::string>(), std::move(nodes), std::move(edges));
    } catch (const nlohmann::json::exception& e) {
        malformed(e.what());
    }
}

nlohmann::json SinaTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nodes.push_back({{"id", n.id},
                         {"pose",
                          {{"x", n.pose.x}, {"y", n.pose.y}, {"z", n.pose.z}, {"yaw", n.pose.yaw},
                           {"pitch", n.pose.pitch}}},
                         {"situation", n.situation.str()},
                         {"task", task_to_json(n.task)}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : edges_) edges.push_back({a, b});
    return {{"version", 1}, {"root", root_}, {"nodes", nodes}, {"edges", edges}};
}

SinaTree SinaTree::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        malformed(path.string() + ": " + e.what());
    }
    return from_json(doc);
}

void SinaTree::save(const std::filesystem::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

ValidationReport validate(const SinaTree& tree, const ModelRegistry* registry) {
    ValidationReport r;
    auto& v = r.violations;
    if (tree.nodes().empty()) {
        v.push_back("tree has no nodes");
        return r;
    }
    std::set<std::string> ids;
    for (const auto& n : tree.nodes()) {
        if (n.id.empty()) v.push_back("node with empty id");
        if (!ids.insert(n.id).second) v.push_back("duplicate node id '" + n.id + "'");
        try {
            validate_task(n.task);
        } catch (const Error& e) {
            v.push_back("node '" + n.id + "': " + e.what());
        }
        if (registry && !registry->contains(n.situation)) {
            v.push_back("node '" + n.id + "': situation '" + n.situation.str() + "' is not registered");
        }
    }
    if (!tree.has_node(tree.root())) v.push_back("root '" + tree.root() + "' is not a node");

    bool edges_ok = true;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [a, b] : tree.edges()) {
        for (const auto& end : {a, b}) {
            if (!tree.has_node(end)) {
                v.push_back("edge endpoint '" + end + "' is not a node");
                edges_ok = false;
            }
        }
        if (a == b) v.push_back("self-loop on '" + a + "'");
        if (!seen.insert(std::minmax(a, b)).second) v.push_back("duplicate edge " + a + "-" + b);
    }

    if (edges_ok && tree.has_node(tree.root())) {
        std::set<std::string> reached{tree.root()};
        std::deque<std::string> queue{tree.root()};
        while (!queue.empty()) {
            const std::string cur = queue.front();
            queue.pop_front();
            for (const auto& nb : tree.neighbours(cur)) {
                if (reached.insert(nb).second) queue.push_back(nb);
            }
        }
        for (const auto& id : ids) {
            if (!reached.count(id)) v.push_back("not connected: '" + id + "' is unreachable from the root");
        }
    }
    if (edges_ok) {
        std::map<std::string, std::string> up;
        const auto find = [&up](std::string x) {
            for (auto it = up.find(x); it != up.end(); it = up.find(x)) x = it->second;
            return x;
        };
        for (const auto& [a, b] : tree.edges()) {
            const std::string ra = find(a), rb = find(b);
            if (ra == rb) {
                v.push_back("not acyclic: edge " + a + "-" + b + " closes a cycle (" +
                            std::to_string(tree.edges().size()) + " edges for " + std::to_string(ids.size()) +
                            " nodes)");
                break;
            }
            up[ra] = rb;
        }
    }
    return r;
}

std::vector<std::string> find_path(const SinaTree& tree, const std::string& from, const std::string& to) {
    tree.node(from);
    tree.node(to);
    std::map<std::string, std::string> parent{{from, from}};
    std::deque<std::string> queue{from};
    while (!queue.empty() && !parent.count(to)) {
        const std::string cur = queue.front();
        queue.pop_front();
        for (const auto& nb : tree.neighbours(cur)) {
            if (parent.emplace(nb, cur).second) queue.push_back(nb);
        }
    }
    if (!parent.count(to)) {
        throw Error(ErrorCode::InvariantViolation, "no path from '" + from + "' to '" + to + "'");
    }
    std::vector<std::string> path{to};
    while (path.back() != from) path.push_back(parent.at(path.back()));
    return {path.rbegin(), path.rend()};
}

Pose interpolate(const Pose& a, const Pose& b, double f) {
    return Pose{a.x + f * (b.x - a.x),
                a.y + f * (b.y - a.y),
                a.z + f * (b.z - a.z),
                normalize_angle(a.yaw + f * shortest_delta(a.yaw, b.yaw)),
                normalize_angle(a.pitch + f * shortest_delta(a.pitch, b.pitch))};
}

SinaTree insert_intermediate(const SinaTree& tree, const std::string& a, const std::string& b, double fraction,
                             const SituationId& situation, const TaskDescriptor& task, const std::string& node_id) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw Error(ErrorCode::InvalidFraction, "fraction " + std::to_string(fraction) + " is not in (0,1)");
    }
    if (!tree.has_edge(a, b)) throw Error(ErrorCode::EdgeNotFound, "no edge " + a + "-" + b);
    validate_task(task);

    std::string id = node_id;
    if (id.empty()) {
        id = a + "~" + b;
        for (int k = 2; tree.has_node(id); ++k) id = a + "~" + b + "~" + std::to_string(k);
    } else if (tree.has_node(id)) {
        throw Error(ErrorCode::InvalidConfig, "node id '" + id + "' already exists");
    }

    std::vector<TreeNode> nodes = tree.nodes();
    nodes.push_back(TreeNode{id, interpolate(tree.node(a).pose, tree.node(b).pose, fraction), situation, task});
    std::vector<SinaTree::Edge> edges;
    for (const auto& e : tree.edges()) {
        if ((e.first == a && e.second == b) || (e.first == b && e.second == a)) {
            edges.emplace_back(a, id);
            edges.emplace_back(id, b);
        } else {
            edges.push_back(e);
        }
    }
    return SinaTree(tree.root(), std::move(nodes), std::move(edges));
}

std::string nearest_node(const SinaTree& tree, const Pose& p) {
    if (tree.nodes().empty()) throw Error(ErrorCode::InvariantViolation, "nearest_node on an empty tree");
    const TreeNode* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& n : tree.nodes()) {
        const double dx = n.pose.x - p.x, dy = n.pose.y - p.y, dz = n.pose.z - p.z;
        const double d = dx * dx + dy * dy + dz * dz;
        if (d < best_d || (d == best_d && n.id < best->id)) {
            best = &n;
            best_d = d;
        }
    }
    return best->id;
}

} // namespace nahid
