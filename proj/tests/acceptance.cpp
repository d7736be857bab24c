// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is non-zero if any criterion fails.

#include "nahid/cli.hpp"
#include "nahid/error.hpp"
#include "nahid/nahid.hpp"
#include "nahid/seeding.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/trees.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace nahid;
using testgen::Rng;

namespace {

const std::filesystem::path kScenario = std::filesystem::path(NAHID_DATA_DIR) / "scenario";

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& why) {
        if (!ok && pass) {
            pass = false;
            detail = why;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 5) {
    std::ostringstream s;
    s.precision(digits);
    s << std::fixed << v;
    return s.str();
}

Verdict partition_oracle() {
    Verdict v;
    Rng rng(1);
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t agree = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const EdgeMap e = testgen::random_edges(rng, 16, 16, testgen::uniform01(rng) * 0.6);
        const RegionMap rm = partition_regions(e);
        agree += oracle::same_partition(rm.region_of, oracle::components_by_propagation(e), kUnassigned, -1L);
    }
    const double secs = seconds_since(t0);
    v.require(agree == 1000, std::to_string(1000 - agree) + " of 1000 maps disagree with the flood-fill oracle");
    v.require(secs < 5.0, "took " + fmt(secs, 2) + " s");
    if (v.pass) v.detail = "1000/1000 match, " + fmt(secs, 3) + " s";
    return v;
}

Verdict refinement_gain() {
    Verdict v;
    double sum = 0, worst_raw = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        PhantomSpec spec;
        spec.seed = seed;
        spec.num_regions = 3 + seed % 3;
        const PhantomScene s = generate_scene(spec);
        const ProbMap noisy = corrupt(s.truth, {NoiseSpec::Mode::IidFlip, 0.1, 1}, derive_seed(seed, 1));
        const double raw = macro_iou(argmax(noisy), s.truth);
        const double refined = macro_iou(to_label_image(refine(s.frame, noisy, RefineOptions{exact_edge_config()})), s.truth);
        v.require(refined > raw, "scene " + std::to_string(seed) + ": refined " + fmt(refined) + " <= raw " + fmt(raw));
        v.require(raw < 0.95, "scene " + std::to_string(seed) + ": raw " + fmt(raw) + " >= 0.95");
        sum += refined;
        worst_raw = std::max(worst_raw, raw);
    }
    const double mean = sum / 50.0;
    v.require(mean >= 0.999, "mean refined macro-IoU " + fmt(mean) + " < 0.999");
    if (v.pass) v.detail = "mean refined " + fmt(mean) + ", max raw " + fmt(worst_raw) + ", gain on 50/50";
    return v;
}

Verdict latency() {
    Verdict v;
    std::ostringstream out, err;
    const cli::CommandOutcome o =
        cli::run({"bench", "refine", "--size", "128", "--classes", "5", "--runs", "100", "--workers", "1"}, out, err);
    v.require(o.exit_code == 0, "bench refine failed: " + err.str());
    if (!v.pass) return v;
    const double median = nlohmann::json::parse(out.str()).at("median_ms").get<double>();
    v.require(median < 40.0, "median " + fmt(median, 3) + " ms >= 40 ms");
    if (v.pass) v.detail = "median " + fmt(median, 3) + " ms over 100 runs";
    return v;
}

Verdict parallel_determinism() {
    Verdict v;
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        GrayImage frame;
        ProbMap probs;
        EdgeDetectorConfig edges;
        if (i % 2 == 0) {
            PhantomSpec spec;
            spec.seed = 900 + i;
            spec.num_regions = 3 + i % 3;
            spec.lesion = i % 4 == 0;
            const PhantomScene s = generate_scene(spec);
            frame = s.frame;
            probs = corrupt(s.truth, {NoiseSpec::Mode::IidFlip, 0.2, 1}, spec.seed);
            edges = exact_edge_config();
        } else {
            const std::size_t w = testgen::uniform(rng, 40, 160), h = testgen::uniform(rng, 40, 160);
            frame = testgen::random_gray(rng, w, h);
            probs = testgen::random_probs(rng, w, h, testgen::uniform(rng, 1, 6));
        }
        const Bytes one = serialize_region_map(refine(frame, probs, RefineOptions{edges, 0.5f, 1}));
        for (unsigned workers : {2u, 8u}) {
            v.require(serialize_region_map(refine(frame, probs, RefineOptions{edges, 0.5f, workers})) == one,
                      "input " + std::to_string(i) + " differs at " + std::to_string(workers) + " workers");
        }
    }
    if (v.pass) v.detail = "20 inputs byte-identical for workers 1, 2, 8";
    return v;
}

Verdict end_to_end() {
    Verdict v;
    const SurgicalPlan plan = SurgicalPlan::load(kScenario / "scenario_ovary.json");
    v.require(plan.tree.nodes().size() == 3, "bundled tree does not have 3 nodes");
    SimulationEnv env(plan.tree, plan.simulation);
    const std::string focus = plan.state_order.back();
    const PhantomScene before = env.scene(focus);
    v.require(env.lesion_area(focus) == 60, "lesion is " + std::to_string(env.lesion_area(focus)) + " px");
    const ActionLog log = execute(plan, env);
    v.require(!log.events.empty() && log.events.back().kind == EventKind::Complete, "log does not end in COMPLETE");
    const auto verifies = log.of_kind(EventKind::VerifyResult);
    v.require(!verifies.empty() && verifies.back()->payload.at("area") == 0, "final verify area is not 0");
    const auto fires = log.of_kind(EventKind::TreatFire);
    v.require(!fires.empty(), "no TREAT_FIRE events");
    std::size_t points = 0;
    for (const auto* f : fires) {
        for (const auto& t : f->payload.at("targets")) {
            ++points;
            v.require(before.truth.at(t[0].get<std::size_t>(), t[1].get<std::size_t>()) == before.lesion_class,
                      "fire point outside the lesion");
        }
    }
    SimulationEnv again(plan.tree, plan.simulation);
    v.require(execute(plan, again).to_jsonl() == log.to_jsonl(), "second run differs");
    if (v.pass) {
        v.detail = std::to_string(log.events.size()) + " events, " + std::to_string(points) +
                   " fire points inside the lesion, identical rerun";
    }
    return v;
}

Verdict rollback() {
    Verdict v;
    SurgicalPlan plan = SurgicalPlan::load(kScenario / "scenario_ovary.json");
    const std::string focus = plan.state_order.back();
    plan.registry.erase(plan.tree.node(focus).situation);
    SimulationEnv env(plan.tree, plan.simulation);
    const ActionLog log = execute(plan, env);
    std::vector<std::string> forward = find_path(plan.tree, plan.tree.root(), focus);
    std::reverse(forward.begin(), forward.end());
    std::vector<std::string> got;
    for (const auto* e : log.of_kind(EventKind::Rollback)) got.push_back(e->node);
    v.require(!log.events.empty() && log.events.back().kind == EventKind::Abort, "log does not end in ABORT");
    v.require(got == forward, "ROLLBACK sequence is not the reversed forward path");
    if (v.pass) {
        std::string seq;
        for (const auto& n : got) seq += (seq.empty() ? "" : " > ") + n;
        v.detail = "ROLLBACK " + seq + ", then ABORT";
    }
    return v;
}

Verdict tree_properties() {
    Verdict v;
    Rng rng(7);
    for (int trial = 0; trial < 500 && v.pass; ++trial) {
        const std::size_t n = testgen::uniform(rng, 1, 50);
        const SinaTree t = testgen::random_tree(rng, n);
        const auto adj = testgen::adjacency(t);
        v.require(validate(t).ok(), "random tree rejected");
        for (int q = 0; q < 5; ++q) {
            const std::string& a = t.nodes()[testgen::uniform(rng, 0, n - 1)].id;
            const std::string& b = t.nodes()[testgen::uniform(rng, 0, n - 1)].id;
            v.require(find_path(t, a, b) == oracle::bfs_path(adj, a, b), "find_path differs from BFS");
            v.require(oracle::count_simple_paths(adj, a, b) == 1, "path not unique");
        }
        if (n > 1) {
            const auto [a, b] = t.edges()[testgen::uniform(rng, 0, t.edges().size() - 1)];
            const SinaTree u = insert_intermediate(t, a, b, 0.05 + 0.9 * testgen::uniform01(rng), SituationId("s"),
                                                   NavigateTask{});
            v.require(u.edges().size() + 1 == u.nodes().size() && u.nodes().size() == n + 1,
                      "insert_intermediate broke |E| = |V| - 1");
            v.require(validate(u).ok(), "tree invalid after insert");
        }
    }
    std::size_t rejected = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const SinaTree t = testgen::random_tree(rng, testgen::uniform(rng, 3, 50));
        rejected += !validate(testgen::cyclize(rng, t)).ok();
    }
    v.require(rejected == 100, std::to_string(100 - rejected) + " cyclized graphs accepted");
    if (v.pass) v.detail = "500 trees agree with BFS, unique paths, inserts keep |E|=|V|-1; 100/100 cycles rejected";
    return v;
}

Verdict augmentation() {
    Verdict v;
    Rng rng(8);
    for (std::size_t n : {0u, 1u, 7u, 25u}) {
        std::vector<Sample> data;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t w = testgen::uniform(rng, 1, 20), h = testgen::uniform(rng, 1, 20);
            data.emplace_back(testgen::random_gray(rng, w, h), testgen::random_labels(rng, w, h, 4));
        }
        const auto out = augment_rotations(data);
        v.require(out.size() == 4 * n, "N=" + std::to_string(n) + " gave " + std::to_string(out.size()));
        for (const auto& [frame, truth] : out) {
            GrayImage f = frame;
            LabelImage t = truth;
            for (int k = 0; k < 4; ++k) {
                f = rotate_quarter(f, Rotation(1));
                t = rotate_quarter(t, Rotation(1));
            }
            v.require(f == frame && t == truth, "four quarter turns are not the identity");
        }
    }
    if (v.pass) v.detail = "N in {0,1,7,25} -> 4N, rot90^4 = id on every element";
    return v;
}

Verdict codec() {
    Verdict v;
    Rng rng(9);
    std::size_t truncations = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t w = testgen::uniform(rng, 1, 40), h = testgen::uniform(rng, 1, 40);
        const ProbMap p = testgen::random_probs(rng, w, h, testgen::uniform(rng, 1, 8));
        const Bytes bytes = encode_pmap(p);
        const ProbMap q = decode_pmap(bytes);
        const bool same_bits = q.width() == w && q.height() == h && q.num_classes() == p.num_classes() &&
                               std::memcmp(q.values().data(), p.values().data(), p.values().size() * sizeof(float)) == 0;
        v.require(same_bits, "map " + std::to_string(trial) + " not bit-identical");
        for (int cut = 0; cut < 3; ++cut) {
            const std::size_t keep = testgen::uniform(rng, 0, bytes.size() - 1);
            try {
                decode_pmap(std::span(bytes).first(keep));
                v.require(false, "truncated file of " + std::to_string(keep) + " bytes accepted");
            } catch (const Error& e) {
                v.require(e.code() == ErrorCode::MalformedFile, "truncation raised " + std::string(e.what()));
                ++truncations;
            }
        }
    }
    if (v.pass) v.detail = "200 maps bit-identical, " + std::to_string(truncations) + " truncations rejected";
    return v;
}

Verdict metrics() {
    Verdict v;
    BinaryMask a(4, 4), b(4, 4);
    for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t x = 0; x < 2; ++x) {
            a.set(x, y, true);
            b.set(x, y + 1, true);
        }
    }
    v.require(iou(a, b) == 1.0 / 3.0, "iou " + fmt(iou(a, b), 17) + " != 1/3");
    v.require(dice(a, b) == 0.5, "dice " + fmt(dice(a, b), 17) + " != 1/2");
    v.require(iou(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0 && dice(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0,
              "empty masks do not score 1.0");
    Rng rng(10);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t w = testgen::uniform(rng, 1, 12), h = testgen::uniform(rng, 1, 12);
        const double da = testgen::uniform01(rng), db = testgen::uniform01(rng);
        BinaryMask x(w, h), y(w, h);
        for (std::size_t j = 0; j < h; ++j) {
            for (std::size_t i = 0; i < w; ++i) {
                x.set(i, j, testgen::uniform01(rng) < da);
                y.set(i, j, testgen::uniform01(rng) < db);
            }
        }
        v.require(dice(x, y) >= iou(x, y), "dice < iou on pair " + std::to_string(trial));
    }
    if (v.pass) v.detail = "iou = 1/3 and dice = 1/2 exactly, empty = 1.0, dice >= iou on 1000 pairs";
    return v;
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"partition oracle equivalence", partition_oracle},
        {"refinement gain", refinement_gain},
        {"latency budget", latency},
        {"parallel determinism", parallel_determinism},
        {"end-to-end scenario", end_to_end},
        {"rollback soundness", rollback},
        {"tree properties", tree_properties},
        {"augmentation", augmentation},
        {"codec exactness", codec},
        {"metric checks", metrics},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw ") + e.what()};
        }
        failed += !v.pass;
        std::cout << "criterion " << i + 1 << " " << criteria[i].first << ": " << (v.pass ? "PASS" : "FAIL") << " ("
                  << v.detail << ")" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
