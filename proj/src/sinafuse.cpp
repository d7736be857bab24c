#include "nahid/sinafuse.hpp"

#include "nahid/error.hpp"
#include "nahid/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>

namespace nahid {

std::size_t RegionMap::unassigned_count() const {
    return static_cast<std::size_t>(std::count(region_of.begin(), region_of.end(), kUnassigned));
}

RegionMap partition_regions(const EdgeMap& edges) {
    const std::size_t w = edges.width();
    const std::size_t h = edges.height();
    RegionMap rm;
    rm.width = w;
    rm.height = h;
    rm.region_of.assign(w * h, kUnassigned);

    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < w * h; ++seed) {
        if (edges[seed] || rm.region_of[seed] != kUnassigned) continue;
        const auto id = static_cast<RegionId>(rm.regions.size());
        std::size_t count = 0;
        rm.region_of[seed] = id;
        stack.push_back(seed);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++count;
            const std::size_t x = i % w;
            const std::size_t y = i / w;
            auto visit = [&](std::size_t j) {
                if (!edges[j] && rm.region_of[j] == kUnassigned) {
                    rm.region_of[j] = id;
                    stack.push_back(j);
                }
            };
            if (x > 0) visit(i - 1);
            if (x + 1 < w) visit(i + 1);
            if (y > 0) visit(i - w);
            if (y + 1 < h) visit(i + w);
        }
        RegionRecord rec;
        rec.region_id = id;
        rec.pixel_count = count;
        rm.regions.push_back(std::move(rec));
    }
    return rm;
}

namespace {

void require_same_size(std::size_t w, std::size_t h, const ProbMap& probs, const char* what) {
    if (w != probs.width() || h != probs.height()) {
        throw Error(ErrorCode::SizeMismatch, std::string(what) + " is " + std::to_string(w) + "x" +
                                                 std::to_string(h) + " but probability map is " +
                                                 std::to_string(probs.width()) + "x" +
                                                 std::to_string(probs.height()));
    }
}

ClassId vote(const std::vector<std::size_t>& histogram, const std::vector<double>& mass) {
    ClassId best = 0;
    for (std::size_t c = 1; c < histogram.size(); ++c) {
        if (histogram[c] > histogram[best] ||
            (histogram[c] == histogram[best] && mass[c] > mass[best])) {
            best = static_cast<ClassId>(c);
        }
    }
    return best;
}

/// Recomputes every record from the current membership. Each region sums its
/// own pixels in row-major order, so results do not depend on the worker count.
void tally(RegionMap& rm, const ProbMap& probs, const VoteOptions& opts) {
    const std::size_t n = rm.width * rm.height;
    const std::size_t classes = probs.label_count();
    const LabelImage pixel_votes = argmax(probs, opts.binary_threshold);
    rm.num_classes = classes;

    std::vector<std::size_t> offsets(rm.regions.size() + 1, 0);
    for (RegionId id : rm.region_of) {
        if (id != kUnassigned) ++offsets[id + 1];
    }
    for (std::size_t r = 0; r < rm.regions.size(); ++r) offsets[r + 1] += offsets[r];
    std::vector<std::size_t> members(offsets.back());
    {
        std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const RegionId id = rm.region_of[i];
            if (id != kUnassigned) members[cursor[id]++] = i;
        }
    }

    parallel_for(rm.regions.size(), opts.workers, [&](std::size_t r) {
        RegionRecord& rec = rm.regions[r];
        rec.region_id = static_cast<RegionId>(r);
        rec.label_histogram.assign(classes, 0);
        rec.class_mass.assign(classes, 0.0);
        rec.pixel_count = offsets[r + 1] - offsets[r];
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
            const std::size_t i = members[k];
            ++rec.label_histogram[pixel_votes.labels()[i]];
            for (std::size_t c = 0; c < classes; ++c) {
                rec.class_mass[c] += probs.label_probability(i, static_cast<ClassId>(c));
            }
        }
        rec.label = vote(rec.label_histogram, rec.class_mass);
        rec.confidence = rec.pixel_count == 0
                             ? 0.0
                             : std::clamp(rec.class_mass[rec.label] / static_cast<double>(rec.pixel_count),
                                          0.0, 1.0);
    });
}

} // namespace

RegionMap majority_label(RegionMap skeleton, const ProbMap& probs, const VoteOptions& opts) {
    require_same_size(skeleton.width, skeleton.height, probs, "region map");
    tally(skeleton, probs, opts);
    return skeleton;
}

RegionMap assign_edge_pixels(RegionMap rm, const ProbMap& probs, const VoteOptions& opts,
                             std::size_t* sweeps) {
    require_same_size(rm.width, rm.height, probs, "region map");
    const std::size_t w = rm.width;
    const std::size_t h = rm.height;
    std::size_t sweep_count = 0;

    if (rm.regions.empty()) {
        rm.region_of.assign(w * h, 0);
        rm.regions.resize(1);
    } else {
        std::size_t remaining = rm.unassigned_count();
        std::vector<RegionId> next = rm.region_of;
        while (remaining > 0) {
            ++sweep_count;
            const std::vector<RegionId>& cur = rm.region_of;
            std::vector<std::size_t> assigned_per_block(row_blocks(h), 0);
            parallel_for(row_blocks(h), opts.workers, [&](std::size_t block) {
                const std::size_t y_end = std::min(h, (block + 1) * kRowBlock);
                for (std::size_t y = block * kRowBlock; y < y_end; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::size_t i = y * w + x;
                        if (cur[i] != kUnassigned) continue;
                        std::array<RegionId, 8> ids{};
                        std::array<int, 8> counts{};
                        std::size_t distinct = 0;
                        for (int dy = -1; dy <= 1; ++dy) {
                            for (int dx = -1; dx <= 1; ++dx) {
                                if (dx == 0 && dy == 0) continue;
                                const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
                                const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
                                if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) ||
                                    ny >= static_cast<std::ptrdiff_t>(h)) {
                                    continue;
                                }
                                const RegionId id = cur[static_cast<std::size_t>(ny) * w +
                                                        static_cast<std::size_t>(nx)];
                                if (id == kUnassigned) continue;
                                std::size_t k = 0;
                                while (k < distinct && ids[k] != id) ++k;
                                if (k == distinct) {
                                    ids[distinct] = id;
                                    counts[distinct] = 0;
                                    ++distinct;
                                }
                                ++counts[k];
                            }
                        }
                        if (distinct == 0) continue;
                        std::size_t best = 0;
                        for (std::size_t k = 1; k < distinct; ++k) {
                            if (counts[k] > counts[best] ||
                                (counts[k] == counts[best] && ids[k] < ids[best])) {
                                best = k;
                            }
                        }
                        next[i] = ids[best];
                        ++assigned_per_block[block];
                    }
                }
            });
            std::size_t assigned = 0;
            for (std::size_t a : assigned_per_block) assigned += a;
            if (assigned == 0) {
                throw Error(ErrorCode::InvariantViolation, "edge absorption stalled");
            }
            remaining -= assigned;
            rm.region_of = next;
        }
    }
    if (sweeps) *sweeps = sweep_count;
    tally(rm, probs, opts);
    return rm;
}

RegionMap refine_with_edges(const EdgeMap& edges, const ProbMap& probs, const VoteOptions& opts) {
    require_same_size(edges.width(), edges.height(), probs, "edge map");
    RegionMap rm = majority_label(partition_regions(edges), probs, opts);
    return assign_edge_pixels(std::move(rm), probs, opts);
}

RegionMap refine(const GrayImage& frame, const ProbMap& probs, const EdgeDetector& detector,
                 const VoteOptions& opts) {
    require_same_size(frame.width(), frame.height(), probs, "frame");
    return refine_with_edges(detector.detect(frame, opts.workers), probs, opts);
}

RegionMap refine(const GrayImage& frame, const ProbMap& probs, const RefineOptions& opts) {
    return refine(frame, probs, SobelHysteresisDetector(opts.edges), opts.vote());
}

LabelImage to_label_image(const RegionMap& rm) {
    if (rm.unassigned_count() != 0) {
        throw Error(ErrorCode::InvariantViolation, "region map still has unassigned pixels");
    }
    std::vector<ClassId> labels(rm.region_of.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rm.regions[rm.region_of[i]].label;
    return LabelImage(rm.width, rm.height, std::max<std::size_t>(rm.num_classes, 2), std::move(labels));
}

std::string region_table_json(const RegionMap& rm) {
    nlohmann::json regions = nlohmann::json::array();
    for (const RegionRecord& rec : rm.regions) {
        regions.push_back({{"id", rec.region_id},
                           {"label", rec.label},
                           {"pixel_count", rec.pixel_count},
                           {"confidence", rec.confidence},
                           {"label_histogram", rec.label_histogram}});
    }
    return nlohmann::json{{"regions", std::move(regions)}}.dump() + "\n";
}

Bytes serialize_region_map(const RegionMap& rm) {
    Bytes out = encode_label_pgm(to_label_image(rm));
    const std::string table = region_table_json(rm);
    out.insert(out.end(), table.begin(), table.end());
    return out;
}

GrayImage render_overlay(const GrayImage& frame, const RegionMap& rm) {
    GrayImage out = frame;
    for (std::size_t y = 0; y < rm.height; ++y) {
        for (std::size_t x = 0; x < rm.width; ++x) {
            const RegionId id = rm.at(x, y);
            const bool boundary = (x + 1 < rm.width && rm.at(x + 1, y) != id) ||
                                  (y + 1 < rm.height && rm.at(x, y + 1) != id);
            if (boundary) out.at(x, y) = 255;
        }
    }
    return out;
}

} // namespace nahid
