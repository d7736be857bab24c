#include "nahid/cli.hpp"

#include "nahid/error.hpp"
#include "nahid/nahid.hpp"
#include "nahid/seeding.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>

namespace nahid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Defaults shared by every subcommand, from --config or NAHID_CONFIG:
/// {"sina": {low, high, blur_radius}, "workers", "tree", "registry"}.
struct Defaults {
    EdgeDetectorConfig edges;
    unsigned workers = 1;
    std::string tree;
    std::string registry;
};

Defaults load_defaults(const std::string& path) {
    Defaults d;
    if (path.empty()) return d;
    json doc;
    try {
        doc = json::parse(read_file_text(path));
        const fs::path base = fs::path(path).parent_path();
        if (doc.contains("sina")) {
            const auto& s = doc["sina"];
            d.edges.low_threshold = s.value("low", d.edges.low_threshold);
            d.edges.high_threshold = s.value("high", d.edges.high_threshold);
            d.edges.blur_radius = s.value("blur_radius", d.edges.blur_radius);
        }
        d.workers = doc.value("workers", d.workers);
        if (doc.contains("tree")) d.tree = (base / doc["tree"].get<std::string>()).string();
        if (doc.contains("registry")) d.registry = (base / doc["registry"].get<std::string>()).string();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedFile, path + ": " + e.what());
    }
    return d;
}

class OutDir {
public:
    explicit OutDir(fs::path dir, CommandOutcome& outcome) : dir_(std::move(dir)), outcome_(outcome) {
        fs::create_directories(dir_);
    }

    void bytes(const std::string& name, std::span<const std::uint8_t> data) {
        write_file(dir_ / name, data);
        outcome_.artifacts.push_back(dir_ / name);
    }
    void text(const std::string& name, const std::string& data) {
        write_text(dir_ / name, data);
        outcome_.artifacts.push_back(dir_ / name);
    }
    fs::path sub(const std::string& name) const { return dir_ / name; }

private:
    fs::path dir_;
    CommandOutcome& outcome_;
};

std::size_t classes_from_meta(const fs::path& label_file) {
    const fs::path meta = label_file.parent_path() / "meta.json";
    if (!fs::exists(meta)) {
        throw Error(ErrorCode::InvalidConfig, "--classes is required when no meta.json sits next to " +
                                                  label_file.string());
    }
    try {
        return json::parse(read_file_text(meta)).at("num_classes").get<std::size_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedFile, meta.string() + ": " + e.what());
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Args {
    std::string config;

    // shared
    std::uint64_t seed = 0;
    std::string out;
    unsigned workers = 0;

    // refine
    std::string frame, pmap;
    std::optional<float> low, high;
    std::optional<unsigned> blur;
    float binary_threshold = 0.5f;

    // tree
    std::string tree, registry, from, to, situation, task = R"({"kind":"navigate"})", id;
    double fraction = 0.5;

    // phantom
    std::size_t size = 128, regions = 4, host = 1, lesion_area = 0, count = 1;
    unsigned amplitude = 1;
    std::string truth, mode = "iid_flip";
    std::size_t classes = 0;
    double p = 0.1;
    unsigned band = 1;

    // eval
    std::string pred;
    std::size_t scenes = 50;

    // surgery
    std::string plan;
    bool seed_given = false;

    // bench
    std::size_t runs = 100;
    std::size_t bench_classes = 5;
};

class Runner {
public:
    Runner(const Args& a, const Defaults& d, std::ostream& out, std::ostream& err)
        : a_(a), d_(d), out_(out), err_(err) {}

    CommandOutcome outcome;

    unsigned workers() const { return a_.workers ? a_.workers : std::max(1u, d_.workers); }

    EdgeDetectorConfig edges() const {
        EdgeDetectorConfig e = d_.edges;
        if (a_.low) e.low_threshold = *a_.low;
        if (a_.high) e.high_threshold = *a_.high;
        if (a_.blur) e.blur_radius = *a_.blur;
        e.validate();
        return e;
    }

    std::string tree_path() const {
        const std::string& t = a_.tree.empty() ? d_.tree : a_.tree;
        if (t.empty()) throw Error(ErrorCode::InvalidConfig, "no tree given (--tree or config \"tree\")");
        return t;
    }

    void refine() {
        const GrayImage frame = decode_image(read_file(a_.frame));
        const ProbMap probs = decode_pmap(read_file(a_.pmap));
        const RegionMap rm = nahid::refine(frame, probs, RefineOptions{edges(), a_.binary_threshold, workers()});
        OutDir dir(a_.out, outcome);
        dir.bytes("region_map.bin", serialize_region_map(rm));
        dir.text("regions.json", region_table_json(rm));
        dir.bytes("labels.pgm", encode_label_pgm(to_label_image(rm)));
        dir.bytes("overlay.pgm", encode_pgm(render_overlay(frame, rm)));
        out_ << json{{"regions", rm.regions.size()}, {"width", rm.width}, {"height", rm.height}}.dump() << "\n";
    }

    void tree_validate() {
        const SinaTree tree = SinaTree::load(tree_path());
        const std::string reg = a_.registry.empty() ? d_.registry : a_.registry;
        std::optional<ModelRegistry> registry;
        if (!reg.empty()) registry = ModelRegistry::load(reg);
        const ValidationReport report = validate(tree, registry ? &*registry : nullptr);
        if (report.ok()) {
            out_ << "ok\n";
            return;
        }
        for (const auto& v : report.violations) out_ << v << "\n";
        outcome.exit_code = kExitFailure;
    }

    void tree_path_cmd() {
        for (const auto& id : find_path(SinaTree::load(tree_path()), a_.from, a_.to)) out_ << id << "\n";
    }

    void tree_insert() {
        const SinaTree tree = SinaTree::load(tree_path());
        json task_doc;
        try {
            task_doc = json::parse(a_.task);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("--task is not JSON: ") + e.what());
        }
        const TaskDescriptor task = task_from_json(task_doc);
        const SinaTree next =
            insert_intermediate(tree, a_.from, a_.to, a_.fraction, SituationId(a_.situation), task, a_.id);
        OutDir dir(a_.out, outcome);
        dir.text("tree.json", next.to_json().dump(2) + "\n");
        for (const auto& n : next.nodes()) {
            if (!tree.has_node(n.id)) out_ << n.id << "\n";
        }
    }

    void phantom_generate() {
        OutDir dir(a_.out, outcome);
        for (std::size_t i = 0; i < a_.count; ++i) {
            PhantomSpec spec;
            spec.size = a_.size;
            spec.num_regions = a_.regions;
            spec.host_region = a_.host;
            spec.lesion = a_.lesion_area > 0;
            if (spec.lesion) spec.lesion_area = a_.lesion_area;
            spec.texture_amplitude = a_.amplitude;
            spec.seed = a_.seed + i;
            const PhantomScene scene = generate_scene(spec);
            char name[32];
            std::snprintf(name, sizeof name, "scene_%03zu", i);
            const fs::path target = a_.count == 1 ? dir.sub("") : dir.sub(name);
            write_scene_bundle(scene, target);
            for (const char* f : {"frame.pgm", "truth.pgm", "meta.json"}) outcome.artifacts.push_back(target / f);
        }
        out_ << json{{"scenes", a_.count}, {"first_seed", a_.seed}}.dump() << "\n";
    }

    void phantom_corrupt() {
        const std::size_t classes = a_.classes ? a_.classes : classes_from_meta(a_.truth);
        const LabelImage truth = decode_label_image(read_file(a_.truth), classes);
        NoiseSpec noise{noise_mode_from_string(a_.mode), a_.p, a_.band};
        noise.validate();
        const ProbMap probs = corrupt(truth, noise, a_.seed);
        OutDir dir(a_.out, outcome);
        dir.bytes("corrupted.pmap", encode_pmap(probs));
        dir.bytes("argmax.pgm", encode_label_pgm(argmax(probs)));
        out_ << json{{"macro_iou", macro_iou(argmax(probs), truth)}}.dump() << "\n";
    }

    void eval_iou() {
        const std::size_t classes = a_.classes ? a_.classes : classes_from_meta(a_.truth);
        const LabelImage truth = decode_label_image(read_file(a_.truth), classes);
        const LabelImage pred = decode_label_image(read_file(a_.pred), classes);
        json per_class = json::array();
        for (ClassId c = 0; c < classes; ++c) {
            const BinaryMask pm = pred.mask_of(c), tm = truth.mask_of(c);
            per_class.push_back({{"class", c}, {"iou", iou(pm, tm)}, {"dice", dice(pm, tm)}});
        }
        out_ << json{{"macro_iou", macro_iou(pred, truth)}, {"classes", per_class}}.dump(2) << "\n";
    }

    /// Seeded phantom scenes (3 to 5 regions), iid flips at --p, refined with
    /// edges that coincide with the true boundaries.
    void eval_report() {
        json rows = json::array();
        double raw_sum = 0, refined_sum = 0;
        bool every_scene_gains = true;
        for (std::size_t i = 0; i < a_.scenes; ++i) {
            PhantomSpec spec;
            spec.seed = a_.seed + i;
            spec.num_regions = 3 + i % 3;
            spec.size = a_.size;
            const PhantomScene s = generate_scene(spec);
            const ProbMap noisy = corrupt(s.truth, {NoiseSpec::Mode::IidFlip, a_.p, 1}, derive_seed(spec.seed, 1));
            const double raw = macro_iou(argmax(noisy), s.truth);
            const RegionMap rm = nahid::refine(s.frame, noisy, RefineOptions{exact_edge_config(), 0.5f, workers()});
            const double refined = macro_iou(to_label_image(rm), s.truth);
            raw_sum += raw;
            refined_sum += refined;
            every_scene_gains = every_scene_gains && refined > raw;
            rows.push_back({{"seed", spec.seed}, {"num_regions", spec.num_regions}, {"raw", raw}, {"refined", refined}});
        }
        const double n = static_cast<double>(std::max<std::size_t>(a_.scenes, 1));
        const json report = {{"scenes", rows},
                             {"p", a_.p},
                             {"mean_raw", raw_sum / n},
                             {"mean_refined", refined_sum / n},
                             {"every_scene_gains", every_scene_gains}};
        OutDir dir(a_.out, outcome);
        dir.text("report.json", report.dump(2) + "\n");
        out_ << json{{"mean_raw", raw_sum / n}, {"mean_refined", refined_sum / n},
                     {"every_scene_gains", every_scene_gains}}
                    .dump()
             << "\n";
    }

    void surgery_run() {
        SurgicalPlan plan = SurgicalPlan::load(a_.plan);
        if (a_.seed_given) plan.simulation.seed = a_.seed;
        SimulationEnv env(plan.tree, plan.simulation);
        const ActionLog log = execute(plan, env, ExecuteOptions{workers()});
        const std::string text = log.to_jsonl();
        const bool complete = !log.events.empty() && log.events.back().kind == EventKind::Complete;
        if (a_.out.empty()) {
            out_ << text;
        } else {
            OutDir dir(a_.out, outcome);
            dir.text("action_log.jsonl", text);
            out_ << json{{"final", log.events.empty() ? "" : to_string(log.events.back().kind)},
                         {"events", log.events.size()}}
                        .dump()
                 << "\n";
        }
        if (!complete) {
            const LogEvent& last = log.events.back();
            err_ << "surgery aborted: " << last.payload.value("reason", std::string("unknown")) << "\n";
            outcome.exit_code = kExitFailure;
        }
    }

    /// Median wall time of full refinement on a phantom scene with `classes`
    /// labels (classes - 1 regions plus the lesion class).
    void bench_refine() {
        if (a_.bench_classes < 3) throw Error(ErrorCode::InvalidConfig, "bench refine needs --classes >= 3");
        if (a_.runs == 0) throw Error(ErrorCode::InvalidConfig, "--runs must be positive");
        PhantomSpec spec;
        spec.size = a_.size;
        spec.num_regions = a_.bench_classes - 1;
        spec.lesion = true;
        spec.host_region = 1;
        spec.seed = a_.seed;
        const PhantomScene s = generate_scene(spec);
        const ProbMap probs = corrupt(s.truth, {NoiseSpec::Mode::IidFlip, 0.1, 1}, derive_seed(a_.seed, 1));
        const RefineOptions opts{edges(), 0.5f, workers()};
        nahid::refine(s.frame, probs, opts);
        std::vector<double> ms;
        ms.reserve(a_.runs);
        for (std::size_t r = 0; r < a_.runs; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const RegionMap rm = nahid::refine(s.frame, probs, opts);
            const auto t1 = std::chrono::steady_clock::now();
            if (rm.regions.empty()) throw Error(ErrorCode::InvariantViolation, "refine produced no regions");
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        const json report = {{"size", a_.size},
                             {"classes", a_.bench_classes},
                             {"runs", a_.runs},
                             {"workers", workers()},
                             {"median_ms", median(ms)},
                             {"min_ms", *std::min_element(ms.begin(), ms.end())},
                             {"max_ms", *std::max_element(ms.begin(), ms.end())}};
        if (!a_.out.empty()) {
            OutDir dir(a_.out, outcome);
            dir.text("bench_refine.json", report.dump(2) + "\n");
        }
        out_ << report.dump() << "\n";
    }

private:
    const Args& a_;
    const Defaults& d_;
    std::ostream& out_;
    std::ostream& err_;
};

} // namespace

CommandOutcome run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    Args a;
    CLI::App app{"Edge-guided segmentation refinement, Sina trees and the surgery simulator", "nahid"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", a.config, "Default config JSON (falls back to $NAHID_CONFIG)");

    const auto add_workers = [&](CLI::App* c) {
        c->add_option("--workers", a.workers, "Worker threads (results do not depend on it)")
            ->check(CLI::Range(1u, 256u));
    };
    const auto add_seed = [&](CLI::App* c) { c->add_option("--seed", a.seed, "Seed for all randomness"); };

    CLI::App* refine = app.add_subcommand("refine", "Fuse a frame and a probability map into refined regions");
    refine->add_option("--frame", a.frame, "Frame image (PGM or PNG)")->required()->check(CLI::ExistingFile);
    refine->add_option("--pmap", a.pmap, "Probability map (.pmap)")->required()->check(CLI::ExistingFile);
    refine->add_option("--out", a.out, "Output directory")->required();
    refine->add_option("--low", a.low, "Hysteresis low threshold");
    refine->add_option("--high", a.high, "Hysteresis high threshold");
    refine->add_option("--blur", a.blur, "Box blur radius");
    refine->add_option("--binary-threshold", a.binary_threshold, "Foreground threshold for 1-channel maps")
        ->check(CLI::Range(0.0f, 1.0f));
    add_workers(refine);

    CLI::App* tree = app.add_subcommand("tree", "Sina tree tools");
    tree->require_subcommand(1);
    CLI::App* tvalidate = tree->add_subcommand("validate", "Check tree structure (and situations)");
    tvalidate->add_option("--tree", a.tree, "Tree JSON");
    tvalidate->add_option("--registry", a.registry, "Model registry JSON");
    CLI::App* tpath = tree->add_subcommand("path", "Print the unique path between two nodes");
    tpath->add_option("--tree", a.tree, "Tree JSON");
    tpath->add_option("--from", a.from, "Start node")->required();
    tpath->add_option("--to", a.to, "End node")->required();
    CLI::App* tinsert = tree->add_subcommand("insert", "Split an edge with an intermediate node");
    tinsert->add_option("--tree", a.tree, "Tree JSON");
    tinsert->add_option("--from", a.from, "Edge endpoint a")->required();
    tinsert->add_option("--to", a.to, "Edge endpoint b")->required();
    tinsert->add_option("--fraction", a.fraction, "Position along a->b, strictly inside (0, 1)")->required();
    tinsert->add_option("--situation", a.situation, "Situation id of the new node")->required();
    tinsert->add_option("--task", a.task, "Task JSON, e.g. {\"kind\":\"navigate\"}");
    tinsert->add_option("--id", a.id, "Node id (default <from>~<to>)");
    tinsert->add_option("--out", a.out, "Output directory")->required();

    CLI::App* phantom = app.add_subcommand("phantom", "Synthetic scenes");
    phantom->require_subcommand(1);
    CLI::App* pgen = phantom->add_subcommand("generate", "Write scene bundles");
    add_seed(pgen);
    pgen->add_option("--size", a.size, "Image side")->check(CLI::Range(std::size_t{8}, std::size_t{4096}));
    pgen->add_option("--regions", a.regions, "Voronoi regions")->check(CLI::PositiveNumber);
    pgen->add_option("--host", a.host, "Region hosting the lesion");
    pgen->add_option("--lesion-area", a.lesion_area, "Lesion pixels (0 for none)");
    pgen->add_option("--amplitude", a.amplitude, "Texture amplitude");
    pgen->add_option("--count", a.count, "Number of scenes (seeds seed, seed+1, ...)")->check(CLI::PositiveNumber);
    pgen->add_option("--out", a.out, "Output directory")->required();
    CLI::App* pcor = phantom->add_subcommand("corrupt", "Corrupt a truth label image into a probability map");
    add_seed(pcor);
    pcor->add_option("--truth", a.truth, "Truth label PGM")->required()->check(CLI::ExistingFile);
    pcor->add_option("--classes", a.classes, "Class count (default: meta.json next to the truth)");
    pcor->add_option("--mode", a.mode, "iid_flip or boundary_band")
        ->check(CLI::IsMember({"iid_flip", "boundary_band"}));
    pcor->add_option("--p", a.p, "Flip probability")->check(CLI::Range(0.0, 1.0));
    pcor->add_option("--band", a.band, "Band width for boundary_band");
    pcor->add_option("--out", a.out, "Output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "Metrics");
    eval->require_subcommand(1);
    CLI::App* eiou = eval->add_subcommand("iou", "Per-class IoU and Dice of a prediction");
    eiou->add_option("--pred", a.pred, "Predicted label PGM")->required()->check(CLI::ExistingFile);
    eiou->add_option("--truth", a.truth, "Truth label PGM")->required()->check(CLI::ExistingFile);
    eiou->add_option("--classes", a.classes, "Class count (default: meta.json next to the truth)");
    CLI::App* ereport = eval->add_subcommand("report", "Raw versus refined macro IoU over seeded scenes");
    add_seed(ereport);
    ereport->add_option("--scenes", a.scenes, "Scene count")->check(CLI::PositiveNumber);
    ereport->add_option("--size", a.size, "Image side")->check(CLI::Range(std::size_t{32}, std::size_t{4096}));
    ereport->add_option("--p", a.p, "Flip probability")->check(CLI::Range(0.0, 1.0));
    ereport->add_option("--out", a.out, "Output directory")->required();
    add_workers(ereport);

    CLI::App* surgery = app.add_subcommand("surgery", "Closed-loop simulator");
    surgery->require_subcommand(1);
    CLI::App* srun = surgery->add_subcommand("run", "Execute a plan against the phantom world");
    srun->add_option("--plan", a.plan, "Plan JSON")->required()->check(CLI::ExistingFile);
    srun->add_option("--seed", a.seed, "Overrides the plan's simulation seed");
    srun->add_option("--out", a.out, "Output directory (log goes to stdout without it)");
    add_workers(srun);

    CLI::App* bench = app.add_subcommand("bench", "Timing");
    bench->require_subcommand(1);
    CLI::App* brefine = bench->add_subcommand("refine", "Median latency of full refinement");
    add_seed(brefine);
    brefine->add_option("--size", a.size, "Image side")->check(CLI::Range(std::size_t{32}, std::size_t{4096}));
    brefine->add_option("--classes", a.bench_classes, "Class count");
    brefine->add_option("--runs", a.runs, "Timed runs");
    brefine->add_option("--low", a.low, "Hysteresis low threshold");
    brefine->add_option("--high", a.high, "Hysteresis high threshold");
    brefine->add_option("--blur", a.blur, "Box blur radius");
    brefine->add_option("--out", a.out, "Output directory");
    add_workers(brefine);

    std::vector<std::string> args(argv.rbegin(), argv.rend());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return {};
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return {};
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        const CLI::App* where = &app;
        for (CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); sub;
             sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front()) {
            where = sub;
        }
        err << where->help();
        return {kExitUsage, {}};
    }
    a.seed_given = srun->count("--seed") > 0;

    try {
        std::string config = a.config;
        if (config.empty()) {
            if (const char* env = std::getenv("NAHID_CONFIG")) config = env;
        }
        const Defaults defaults = load_defaults(config);
        Runner r(a, defaults, out, err);
        if (*refine) r.refine();
        else if (*tvalidate) r.tree_validate();
        else if (*tpath) r.tree_path_cmd();
        else if (*tinsert) r.tree_insert();
        else if (*pgen) r.phantom_generate();
        else if (*pcor) r.phantom_corrupt();
        else if (*eiou) r.eval_iou();
        else if (*ereport) r.eval_report();
        else if (*srun) r.surgery_run();
        else if (*brefine) r.bench_refine();
        return r.outcome;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return {kExitFailure, {}};
    }
}

} // namespace nahid::cli
