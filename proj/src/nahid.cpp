#include "nahid/nahid.hpp"

#include "nahid/error.hpp"
#include "nahid/seeding.hpp"

#include <algorithm>
#include <set>
#include <span>

namespace nahid {

namespace {

std::uint64_t id_hash(const std::string& id) {
    return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(id.data()), id.size()));
}

std::string target_class_of(const TaskDescriptor& task) {
    if (const auto* d = std::get_if<DetectTask>(&task)) return d->target_class;
    if (const auto* t = std::get_if<TreatTask>(&task)) return t->target_class;
    if (const auto* v = std::get_if<VerifyTask>(&task)) return v->target_class;
    throw Error(ErrorCode::InvalidConfig, "navigate nodes have no detection target");
}

ClassId class_index(const BackendDescriptor& desc, const std::string& name) {
    const auto it = std::find(desc.classes.begin(), desc.classes.end(), name);
    if (it == desc.classes.end()) {
        throw Error(ErrorCode::InvalidConfig, "class '" + name + "' is not produced by this model");
    }
    return desc.binary() ? ClassId{1} : static_cast<ClassId>(it - desc.classes.begin());
}

nlohmann::json targets_json(const std::vector<Coord>& pts) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : pts) out.push_back({p.x, p.y});
    return out;
}

/// Appends events with consecutive sequence numbers.
class Recorder {
public:
    explicit Recorder(ActionLog& log) : log_(log) {}

    void add(std::size_t step, const std::string& node, EventKind kind, nlohmann::json payload = nlohmann::json::object()) {
        log_.events.push_back(LogEvent{log_.events.size(), step, node, kind, std::move(payload)});
    }

private:
    ActionLog& log_;
};

nlohmann::json detection_json(const DetectionResult& r) {
    return {{"area", r.area}, {"confidence", r.confidence}, {"success", r.success}, {"target_label", r.target}};
}

nlohmann::json geomodel_check(const SurgicalPlan& plan, const TreeNode& node, const std::string& target) {
    if (!plan.geomodel) return nullptr;
    nlohmann::json out;
    try {
        const auto visible = expected_visible(*plan.geomodel, {node.pose.x, node.pose.y, node.pose.z},
                                              plan.visibility_radius);
        nlohmann::json names = nlohmann::json::array();
        bool found = false;
        for (const auto& v : visible) {
            names.push_back(v.organ);
            found = found || v.organ == target;
        }
        out["expected_visible"] = names;
        out["warning"] = found ? nlohmann::json(nullptr)
                               : nlohmann::json("target '" + target + "' is not expected at this pose");
    } catch (const Error& e) {
        out["expected_visible"] = nlohmann::json::array();
        out["warning"] = e.what();
    }
    return out;
}

struct Abort {
    std::string node;
    std::string reason;
    std::string code;
};

} // namespace

// SurgicalPlan --------------------------------------------------------------

std::string SurgicalPlan::rollback_target(const std::string& node) const {
    const auto it = failure_policy.find(node);
    return it == failure_policy.end() ? tree.root() : it->second;
}

ValidationReport SurgicalPlan::validate() const {
    ValidationReport r = nahid::validate(tree);
    auto& v = r.violations;
    if (state_order.empty()) {
        v.push_back("state_order is empty");
    } else if (state_order.front() != tree.root()) {
        v.push_back("state_order must start at the root '" + tree.root() + "'");
    }
    for (std::size_t i = 0; i < state_order.size(); ++i) {
        if (!tree.has_node(state_order[i])) {
            v.push_back("state_order names unknown node '" + state_order[i] + "'");
        } else if (i > 0 && !tree.has_edge(state_order[i - 1], state_order[i])) {
            v.push_back("state_order step " + state_order[i - 1] + " -> " + state_order[i] + " is not a tree edge");
        }
    }
    for (const auto& [from, to] : failure_policy) {
        if (!tree.has_node(from)) v.push_back("failure_policy names unknown node '" + from + "'");
        if (!tree.has_node(to)) v.push_back("failure_policy target '" + to + "' is not a node");
    }
    if (visibility_radius < 0) v.push_back("visibility_radius must be non-negative");
    return r;
}

SurgicalPlan SurgicalPlan::load(const std::filesystem::path& path) {
    const auto base = path.parent_path();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedFile, path.string() + ": " + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::MalformedFile, "unsupported plan version");
        SurgicalPlan plan;
        plan.tree = SinaTree::load(base / doc.at("tree").get<std::string>());
        plan.registry = ModelRegistry::load(base / doc.at("registry").get<std::string>());
        if (doc.contains("geomodel") && !doc["geomodel"].is_null()) {
            plan.geomodel = GeometricModel::load(base / doc["geomodel"].get<std::string>());
        }
        plan.state_order = doc.at("state_order").get<std::vector<std::string>>();
        plan.failure_policy = doc.value("failure_policy", std::map<std::string, std::string>{});
        plan.arms = doc.value("arms", nlohmann::json::object());
        plan.visibility_radius = doc.value("visibility_radius", 30.0);
        if (doc.contains("sina")) {
            const auto& s = doc["sina"];
            plan.edges.low_threshold = s.value("low", plan.edges.low_threshold);
            plan.edges.high_threshold = s.value("high", plan.edges.high_threshold);
            plan.edges.blur_radius = s.value("blur_radius", plan.edges.blur_radius);
        }
        plan.edges.validate();
        if (doc.contains("simulation")) {
            const auto& s = doc["simulation"];
            SimulationSpec& sim = plan.simulation;
            sim.seed = s.value("seed", sim.seed);
            sim.size = s.value("size", sim.size);
            sim.num_regions = s.value("num_regions", sim.num_regions);
            sim.host_region = s.value("host_region", sim.host_region);
            sim.lesion_area = s.value("lesion_area", sim.lesion_area);
            sim.texture_amplitude = s.value("texture_amplitude", sim.texture_amplitude);
            sim.lesion_nodes = s.value("lesion_nodes", std::vector<std::string>{});
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedFile, path.string() + ": " + e.what());
    }
}

// SimulationEnv -------------------------------------------------------------

SimulationEnv::SimulationEnv(const SinaTree& tree, const SimulationSpec& spec) {
    const std::set<std::string> lesion_nodes(spec.lesion_nodes.begin(), spec.lesion_nodes.end());
    for (const auto& n : lesion_nodes) {
        if (!tree.has_node(n)) throw Error(ErrorCode::InvalidConfig, "lesion node '" + n + "' is not in the tree");
    }
    for (const auto& node : tree.nodes()) {
        PhantomSpec ps;
        ps.size = spec.size;
        ps.num_regions = spec.num_regions;
        ps.host_region = spec.host_region;
        ps.lesion_area = spec.lesion_area;
        ps.texture_amplitude = spec.texture_amplitude;
        ps.lesion = lesion_nodes.count(node.id) != 0;
        ps.seed = derive_seed(spec.seed, id_hash(node.id));
        scenes_.emplace(node.id, generate_scene(ps));
    }
}

const PhantomScene& SimulationEnv::scene(const std::string& node) const {
    const auto it = scenes_.find(node);
    if (it == scenes_.end()) throw Error(ErrorCode::NodeNotFound, "no simulated scene for '" + node + "'");
    return it->second;
}

std::size_t SimulationEnv::lesion_area(const std::string& node) const {
    const PhantomScene& s = scene(node);
    return s.truth.mask_of(s.lesion_class).count();
}

std::size_t SimulationEnv::ablate(const std::string& node, const std::vector<Coord>& targets, double radius) {
    scene(node);
    PhantomScene& s = scenes_.at(node);
    const double r2 = radius * radius;
    std::size_t cleared = 0;
    for (std::size_t y = 0; y < s.truth.height(); ++y) {
        for (std::size_t x = 0; x < s.truth.width(); ++x) {
            if (s.truth.at(x, y) != s.lesion_class) continue;
            for (const Coord& t : targets) {
                const double dx = static_cast<double>(x) - static_cast<double>(t.x);
                const double dy = static_cast<double>(y) - static_cast<double>(t.y);
                if (dx * dx + dy * dy <= r2) {
                    s.truth.at(x, y) = s.host_class;
                    ++cleared;
                    break;
                }
            }
        }
    }
    if (cleared > 0) s.frame = render_frame(s.truth, s.spec.seed, s.spec.texture_amplitude);
    return cleared;
}

// Detection -----------------------------------------------------------------

std::vector<Coord> plan_targets(const BinaryMask& mask, std::size_t spacing) {
    if (spacing == 0) throw Error(ErrorCode::InvalidConfig, "target spacing must be at least 1");
    std::size_t x0 = mask.width, y0 = mask.height, x1 = 0, y1 = 0;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    std::vector<Coord> out;
    if (x0 > x1) return out;
    for (std::size_t y = y0; y <= y1; y += spacing) {
        for (std::size_t x = x0; x <= x1; x += spacing) {
            if (mask.at(x, y)) out.push_back({x, y});
        }
    }
    return out;
}

DetectionResult detect_at(const SurgicalPlan& plan, const std::string& node_id, const GrayImage& frame,
                          const LabelImage* truth, std::size_t workers, std::optional<std::size_t> epsilon_override) {
    const TreeNode& node = plan.tree.node(node_id);
    const std::string target_name = target_class_of(node.task);
    const BackendDescriptor& desc = plan.registry.resolve(node.situation);
    const ClassId target = class_index(desc, target_name);

    const ProbMap probs = infer(desc, frame, truth);
    RefineOptions opts;
    opts.edges = plan.edges;
    opts.workers = static_cast<unsigned>(std::max<std::size_t>(workers, 1));

    DetectionResult r;
    r.region_map = refine(frame, probs, opts);
    r.target = target;
    r.target_mask = BinaryMask(frame.width(), frame.height());
    double mass = 0.0;
    for (std::size_t i = 0; i < r.region_map.region_of.size(); ++i) {
        const RegionId rid = r.region_map.region_of[i];
        if (r.region_map.regions[rid].label != target) continue;
        r.target_mask.bits[i] = 1;
        mass += probs.label_probability(i, target);
        ++r.area;
    }
    r.confidence = r.area ? mass / static_cast<double>(r.area) : 0.0;

    if (const auto* v = std::get_if<VerifyTask>(&node.task)) {
        r.success = r.area <= epsilon_override.value_or(v->residual_epsilon);
    } else if (epsilon_override) {
        r.success = r.area <= *epsilon_override;
    } else if (const auto* d = std::get_if<DetectTask>(&node.task)) {
        r.success = r.area >= d->min_area;
    } else {
        r.success = r.area >= 1;
    }
    return r;
}

// Log -----------------------------------------------------------------------

std::string to_string(EventKind kind) {
    switch (kind) {
    case EventKind::Enter: return "ENTER";
    case EventKind::DetectResult: return "DETECT_RESULT";
    case EventKind::TreatFire: return "TREAT_FIRE";
    case EventKind::VerifyResult: return "VERIFY_RESULT";
    case EventKind::Rollback: return "ROLLBACK";
    case EventKind::Complete: return "COMPLETE";
    case EventKind::Abort: return "ABORT";
    }
    return "UNKNOWN";
}

std::string ActionLog::to_jsonl() const {
    std::string out;
    for (const auto& e : events) {
        const nlohmann::json line = {{"v", kVersion},        {"seq", e.seq},          {"step", e.step},
                                     {"node", e.node},       {"event", to_string(e.kind)}, {"payload", e.payload}};
        out += line.dump();
        out += '\n';
    }
    return out;
}

std::vector<const LogEvent*> ActionLog::of_kind(EventKind kind) const {
    std::vector<const LogEvent*> out;
    for (const auto& e : events) {
        if (e.kind == kind) out.push_back(&e);
    }
    return out;
}

// Executor ------------------------------------------------------------------

ActionLog execute(const SurgicalPlan& plan, SimulationEnv& env, const ExecuteOptions& opts) {
    ActionLog log;
    Recorder rec(log);

    const ValidationReport report = plan.validate();
    if (!report.ok()) {
        nlohmann::json violations = report.violations;
        rec.add(0, plan.tree.root(), EventKind::Abort,
                {{"reason", "plan is invalid"}, {"code", "InvariantViolation"}, {"violations", violations}});
        return log;
    }

    bool treated = false;
    bool nothing_to_treat = false;
    std::optional<Abort> abort;
    std::size_t step = 0;

    for (; step < plan.state_order.size() && !abort; ++step) {
        const std::string& id = plan.state_order[step];
        const TreeNode& node = plan.tree.node(id);
        rec.add(step, id, EventKind::Enter,
                {{"pose", {node.pose.x, node.pose.y, node.pose.z, node.pose.yaw, node.pose.pitch}},
                 {"situation", node.situation.str()},
                 {"task", task_kind(node.task)}});
        if (std::holds_alternative<NavigateTask>(node.task)) continue;

        try {
            const std::string target = target_class_of(node.task);
            const auto observe = [&](std::optional<std::size_t> eps = std::nullopt) {
                const PhantomScene& s = env.scene(id);
                return detect_at(plan, id, s.frame, &s.truth, opts.workers, eps);
            };

            if (const auto* d = std::get_if<DetectTask>(&node.task)) {
                const DetectionResult r = observe();
                nlohmann::json p = detection_json(r);
                p["target_class"] = target;
                p["min_area"] = d->min_area;
                p["geomodel"] = geomodel_check(plan, node, target);
                rec.add(step, id, EventKind::DetectResult, p);
                if (!r.success) nothing_to_treat = true;
            } else if (const auto* v = std::get_if<VerifyTask>(&node.task)) {
                if (nothing_to_treat) continue;
                const DetectionResult r = observe();
                nlohmann::json p = detection_json(r);
                p["target_class"] = target;
                p["residual_epsilon"] = v->residual_epsilon;
                rec.add(step, id, EventKind::VerifyResult, p);
                if (!r.success) {
                    abort = Abort{id, "residual " + target + " area " + std::to_string(r.area) + " exceeds " +
                                          std::to_string(v->residual_epsilon),
                                  "ResidualPersists"};
                }
            } else if (const auto* t = std::get_if<TreatTask>(&node.task)) {
                if (nothing_to_treat) continue;
                DetectionResult r = observe();
                nlohmann::json p = detection_json(r);
                p["target_class"] = target;
                p["geomodel"] = geomodel_check(plan, node, target);
                rec.add(step, id, EventKind::DetectResult, p);
                if (r.area == 0) {
                    nothing_to_treat = true;
                    continue;
                }
                bool clear = false;
                for (std::size_t iter = 1; iter <= t->max_iters && !clear; ++iter) {
                    const std::vector<Coord> targets = plan_targets(r.target_mask, t->spacing);
                    const std::size_t cleared = env.ablate(id, targets, static_cast<double>(t->spacing));
                    rec.add(step, id, EventKind::TreatFire,
                            {{"iteration", iter},
                             {"spacing", t->spacing},
                             {"radius", t->spacing},
                             {"targets", targets_json(targets)},
                             {"cleared", cleared}});
                    treated = true;
                    r = observe(std::size_t{0});
                    nlohmann::json vp = detection_json(r);
                    vp["target_class"] = target;
                    vp["iteration"] = iter;
                    vp["residual_epsilon"] = 0;
                    rec.add(step, id, EventKind::VerifyResult, vp);
                    clear = r.success;
                }
                if (!clear) {
                    abort = Abort{id, "residual " + target + " area " + std::to_string(r.area) + " after " +
                                          std::to_string(t->max_iters) + " treatment iterations",
                                  "ResidualPersists"};
                }
            }
        } catch (const Error& e) {
            abort = Abort{id, e.what(), std::string(to_string(e.code()))};
        }
    }

    if (abort) {
        const std::size_t at = step - 1;
        const std::string target = plan.rollback_target(abort->node);
        const std::vector<std::string> path = find_path(plan.tree, abort->node, target);
        for (std::size_t i = 0; i < path.size(); ++i) {
            rec.add(at, path[i], EventKind::Rollback,
                    {{"index", i}, {"from", abort->node}, {"target", target}});
        }
        rec.add(at, target, EventKind::Abort,
                {{"reason", abort->reason}, {"code", abort->code}, {"failed_node", abort->node}});
        return log;
    }

    const std::string last = plan.state_order.back();
    rec.add(plan.state_order.size() - 1, last, EventKind::Complete,
            {{"outcome", treated ? "treated" : "no_treatment"}});
    return log;
}

} // namespace nahid
