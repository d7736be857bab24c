#include "nahid/error.hpp"
#include "nahid/sinatree.hpp"
#include "support/oracles.hpp"
#include "support/trees.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace nahid;
using nahid::testgen::Rng;

namespace {

TreeNode node(const std::string& id, double x, double y = 0, double z = 0, const std::string& sit = "s") {
    return TreeNode{id, Pose::make(x, y, z), SituationId(sit), NavigateTask{}};
}

SinaTree chain() {
    return SinaTree("A", {node("A", 0), node("B", 10), node("C", 20)}, {{"A", "B"}, {"B", "C"}});
}

ModelRegistry registry_for(std::initializer_list<const char*> ids) {
    ModelRegistry reg;
    for (const char* id : ids) {
        BackendDescriptor d;
        d.params = SyntheticOracle{};
        d.classes = {"x", "y"};
        reg.add(SituationId(id), d);
    }
    return reg;
}

bool mentions(const ValidationReport& r, const std::string& text) {
    for (const auto& v : r.violations) {
        if (v.find(text) != std::string::npos) return true;
    }
    return false;
}

/// Angle interpolation written independently: pick the representative of b
/// within 180 degrees of a, lerp, then wrap with floor arithmetic.
double lerp_angle_oracle(double a, double b, double f) {
    double best = b;
    for (double cand : {b - 720.0, b - 360.0, b, b + 360.0, b + 720.0}) {
        if (std::abs(cand - a) < std::abs(best - a)) best = cand;
    }
    const double raw = a + f * (best - a);
    double w = raw - 360.0 * std::floor((raw + 180.0) / 360.0);
    if (w == -180.0) w = 180.0;
    return w;
}

} // namespace

TEST(Angles, Normalize) {
    EXPECT_EQ(normalize_angle(180.0), 180.0);
    EXPECT_EQ(normalize_angle(-180.0), 180.0);
    EXPECT_EQ(normalize_angle(190.0), -170.0);
    EXPECT_EQ(normalize_angle(-540.0), 180.0);
    EXPECT_EQ(normalize_angle(725.0), 5.0);
    EXPECT_THROW(Pose::make(0, std::numeric_limits<double>::quiet_NaN(), 0), Error);
    EXPECT_EQ(Pose::make(0, 0, 0, 370, -200).yaw, 10.0);
    EXPECT_EQ(Pose::make(0, 0, 0, 370, -200).pitch, 160.0);
}

TEST(Tasks, Bounds) {
    EXPECT_NO_THROW(validate_task(NavigateTask{}));
    EXPECT_THROW(validate_task(DetectTask{"lesion", 0}), Error);
    EXPECT_THROW(validate_task(TreatTask{"lesion", 0, 1}), Error);
    EXPECT_THROW(validate_task(TreatTask{"lesion", 1, 0}), Error);
    EXPECT_THROW(validate_task(VerifyTask{"", 0}), Error);
    EXPECT_NO_THROW(validate_task(VerifyTask{"lesion", 0}));
}

TEST(Validate, ChainIsOk) {
    const auto reg = registry_for({"s"});
    EXPECT_TRUE(validate(chain(), &reg).ok());
}

TEST(Validate, TriangleIsNotAcyclic) {
    const SinaTree t("A", {node("A", 0), node("B", 1), node("C", 2)}, {{"A", "B"}, {"B", "C"}, {"C", "A"}});
    const ValidationReport r = validate(t);
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(mentions(r, "not acyclic"));
}

TEST(Validate, CycleInDisconnectedGraph) {
    const SinaTree t("A", {node("A", 0), node("B", 1), node("C", 2), node("D", 3)},
                     {{"B", "C"}, {"C", "D"}, {"D", "B"}});
    const ValidationReport r = validate(t);
    EXPECT_TRUE(mentions(r, "not acyclic"));
    EXPECT_TRUE(mentions(r, "not connected"));
}

TEST(Validate, UnregisteredSituationNamesNode) {
    const SinaTree t("A", {node("A", 0), node("B", 1, 0, 0, "spleen_focus")}, {{"A", "B"}});
    const auto reg = registry_for({"s"});
    const ValidationReport r = validate(t, &reg);
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_TRUE(mentions(r, "'B'"));
    EXPECT_TRUE(mentions(r, "spleen_focus"));
}

TEST(Validate, StructuralViolations) {
    EXPECT_TRUE(mentions(validate(SinaTree()), "no nodes"));
    EXPECT_TRUE(mentions(validate(SinaTree("Z", {node("A", 0)}, {})), "root"));
    EXPECT_TRUE(mentions(validate(SinaTree("A", {node("A", 0), node("A", 1)}, {{"A", "A"}})), "duplicate node"));
    EXPECT_TRUE(mentions(validate(SinaTree("A", {node("A", 0)}, {{"A", "Q"}})), "'Q'"));
    EXPECT_TRUE(mentions(validate(SinaTree("A", {node("A", 0), node("B", 1)}, {})), "not connected"));
    EXPECT_TRUE(mentions(validate(SinaTree("A", {node("A", 0), node("B", 1)}, {{"A", "B"}, {"B", "A"}})),
                         "duplicate edge"));
    SinaTree bad_task("A", {TreeNode{"A", Pose{}, SituationId("s"), DetectTask{"x", 0}}}, {});
    EXPECT_TRUE(mentions(validate(bad_task), "min_area"));
}

TEST(FindPath, Basics) {
    const SinaTree t = chain();
    EXPECT_EQ(find_path(t, "A", "A"), std::vector<std::string>{"A"});
    EXPECT_EQ(find_path(t, "A", "C"), (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_EQ(find_path(t, "C", "A"), (std::vector<std::string>{"C", "B", "A"}));
    try {
        find_path(t, "A", "Q");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NodeNotFound);
    }
}

TEST(FindPath, RandomTreesMatchBfsOracle) {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const SinaTree t = testgen::random_tree(rng, testgen::uniform(rng, 1, 50));
        ASSERT_TRUE(validate(t).ok());
        const auto adj = testgen::adjacency(t);
        for (int q = 0; q < 5; ++q) {
            const auto& a = t.nodes()[testgen::uniform(rng, 0, t.nodes().size() - 1)].id;
            const auto& b = t.nodes()[testgen::uniform(rng, 0, t.nodes().size() - 1)].id;
            const auto path = find_path(t, a, b);
            EXPECT_EQ(path, oracle::bfs_path(adj, a, b));
            EXPECT_EQ(oracle::count_simple_paths(adj, a, b), 1u);
            auto back = find_path(t, b, a);
            std::reverse(back.begin(), back.end());
            EXPECT_EQ(back, path);
        }
    }
}

TEST(InsertIntermediate, Midpoint) {
    const SinaTree t("a", {node("a", 0), node("b", 10)}, {{"a", "b"}});
    const SinaTree u = insert_intermediate(t, "a", "b", 0.5, SituationId("s"), NavigateTask{}, "M");
    EXPECT_EQ(u.node("M").pose, Pose::make(5, 0, 0));
    EXPECT_EQ(find_path(u, "a", "b"), (std::vector<std::string>{"a", "M", "b"}));
    EXPECT_FALSE(u.has_edge("a", "b"));
    EXPECT_TRUE(validate(u).ok());
    // the source tree is untouched
    EXPECT_TRUE(t.has_edge("a", "b"));
    EXPECT_EQ(t.nodes().size(), 2u);
}

TEST(InsertIntermediate, Errors) {
    const SinaTree t = chain();
    const auto code = [&](auto fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    const SituationId s("s");
    EXPECT_EQ(code([&] { insert_intermediate(t, "A", "B", 1.0, s, NavigateTask{}); }), ErrorCode::InvalidFraction);
    EXPECT_EQ(code([&] { insert_intermediate(t, "A", "B", 0.0, s, NavigateTask{}); }), ErrorCode::InvalidFraction);
    EXPECT_EQ(code([&] { insert_intermediate(t, "A", "B", std::nan(""), s, NavigateTask{}); }),
              ErrorCode::InvalidFraction);
    EXPECT_EQ(code([&] { insert_intermediate(t, "A", "C", 0.5, s, NavigateTask{}); }), ErrorCode::EdgeNotFound);
    EXPECT_EQ(code([&] { insert_intermediate(t, "A", "B", 0.5, s, NavigateTask{}, "C"); }), ErrorCode::InvalidConfig);
}

TEST(InsertIntermediate, ReversedEdgeAndGeneratedIds) {
    const SinaTree t = chain();
    const SinaTree u = insert_intermediate(t, "B", "A", 0.25, SituationId("s"), NavigateTask{});
    EXPECT_TRUE(u.has_node("B~A"));
    EXPECT_DOUBLE_EQ(u.node("B~A").pose.x, 7.5);
    const SinaTree v = insert_intermediate(u, "B", "B~A", 0.5, SituationId("s"), NavigateTask{});
    EXPECT_TRUE(v.has_node("B~B~A"));
    const SinaTree w = insert_intermediate(v, "B~B~A", "B~A", 0.5, SituationId("s"), NavigateTask{});
    EXPECT_EQ(w.nodes().size(), 6u);
    EXPECT_TRUE(validate(w).ok());
}

TEST(InsertIntermediate, ShortestArcYaw) {
    Pose a = Pose::make(0, 0, 0, 170), b = Pose::make(0, 0, 0, -170);
    EXPECT_EQ(interpolate(a, b, 0.5).yaw, 180.0);
    EXPECT_EQ(interpolate(b, a, 0.5).yaw, 180.0);
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const double ya = static_cast<double>(testgen::uniform(rng, 0, 3599)) / 10.0 - 180.0;
        const double yb = static_cast<double>(testgen::uniform(rng, 0, 3599)) / 10.0 - 180.0;
        if (std::abs(std::abs(ya - yb) - 180.0) < 1e-9) continue;  // antipodal: both arcs are shortest
        const double f = testgen::uniform01(rng) * 0.98 + 0.01;
        const Pose m = interpolate(Pose::make(0, 0, 0, ya), Pose::make(0, 0, 0, yb), f);
        double diff = std::abs(m.yaw - lerp_angle_oracle(ya, yb, f));
        diff = std::min(diff, 360.0 - diff);
        EXPECT_LT(diff, 1e-9) << ya << " " << yb << " " << f;
        EXPECT_GT(m.yaw, -180.0);
        EXPECT_LE(m.yaw, 180.0);
    }
}

TEST(InsertIntermediate, PreservesTreeShapeOnRandomTrees) {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        SinaTree t = testgen::random_tree(rng, testgen::uniform(rng, 2, 30));
        const auto& [a, b] = t.edges()[testgen::uniform(rng, 0, t.edges().size() - 1)];
        const SinaTree u = insert_intermediate(t, a, b, 0.3, SituationId("s"), NavigateTask{});
        EXPECT_EQ(u.nodes().size(), t.nodes().size() + 1);
        EXPECT_EQ(u.edges().size(), t.edges().size() + 1);
        EXPECT_EQ(u.edges().size() + 1, u.nodes().size());
        EXPECT_TRUE(validate(u).ok());
    }
}

TEST(NearestNode, ExactAndTies) {
    const SinaTree t = chain();
    EXPECT_EQ(nearest_node(t, Pose::make(10, 0, 0)), "B");
    const SinaTree tie("b1", {node("b1", 0), node("a2", 10)}, {{"b1", "a2"}});
    EXPECT_EQ(nearest_node(tie, Pose::make(5, 0, 0)), "a2");
    EXPECT_THROW(nearest_node(SinaTree(), Pose{}), Error);
}

TEST(NearestNode, MatchesLinearScan) {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const SinaTree t = testgen::random_tree(rng, testgen::uniform(rng, 1, 40));
        const Pose q = Pose::make(static_cast<double>(testgen::uniform(rng, 0, 100)),
                                  static_cast<double>(testgen::uniform(rng, 0, 100)),
                                  static_cast<double>(testgen::uniform(rng, 0, 100)));
        std::string best;
        double best_d = 1e300;
        for (const auto& n : t.nodes()) {
            const double d = std::hypot(n.pose.x - q.x, n.pose.y - q.y, n.pose.z - q.z);
            if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && n.id < best)) {
                best = n.id;
                best_d = d;
            }
        }
        EXPECT_EQ(nearest_node(t, q), best);
    }
}

TEST(TreeJson, RoundTrip) {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        SinaTree t = testgen::random_tree(rng, testgen::uniform(rng, 1, 20));
        auto nodes = t.nodes();
        nodes[0].task = TreatTask{"lesion", 6, 3};
        if (nodes.size() > 1) nodes[1].task = VerifyTask{"lesion", 2};
        nodes.back().task = DetectTask{"lesion", 10};
        t = SinaTree(t.root(), nodes, t.edges());
        EXPECT_EQ(SinaTree::from_json(nlohmann::json::parse(t.to_json().dump())), t);
    }
}

TEST(TreeJson, FileRoundTripAndErrors) {
    const auto path = std::filesystem::temp_directory_path() / "nahid_tree_test.json";
    chain().save(path);
    EXPECT_EQ(SinaTree::load(path), chain());
    std::filesystem::remove(path);
    EXPECT_THROW(SinaTree::from_json(nlohmann::json{{"version", 1}}), Error);
    nlohmann::json bad = chain().to_json();
    bad["nodes"][0]["task"] = {{"kind", "dance"}};
    EXPECT_THROW(SinaTree::from_json(bad), Error);
    bad = chain().to_json();
    bad["edges"][0] = {"A"};
    EXPECT_THROW(SinaTree::from_json(bad), Error);
}
