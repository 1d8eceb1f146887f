#include "clonescope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace clonescope {

namespace {

std::vector<std::string> clone_order_of(const std::vector<ManifestEntry>& manifest) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const auto& e : manifest)
        if (seen.insert(e.clone).second) order.push_back(e.clone);
    std::sort(order.begin(), order.end());
    return order;
}

} // namespace

PreparedData prepare_bags(const std::vector<ManifestEntry>& manifest, const PipelineConfig& cfg,
                          std::vector<std::string>* warnings) {
    if (manifest.empty()) throw std::runtime_error("empty manifest");

    PreparedData out;
    out.clone_order = clone_order_of(manifest);
    std::map<std::string, int> clone_idx;
    for (std::size_t i = 0; i < out.clone_order.size(); ++i) clone_idx[out.clone_order[i]] = int(i);

    if (cfg.embedder == "import") {
        out.bags = import_embeddings(cfg.embeddings_path, manifest, out.clone_order);
        for (const auto& e : manifest) out.manifest_by_id[e.image_id] = e;
        return out;
    }
    if (cfg.embedder != "builtin") throw std::runtime_error("unknown embedder: " + cfg.embedder);

    // pass 1: tile and filter everything, keeping foreground patches
    struct ImagePatches {
        const ManifestEntry* entry;
        std::vector<Patch> foreground;
    };
    std::vector<ImagePatches> per_image;
    for (const auto& e : manifest) {
        out.manifest_by_id[e.image_id] = e;
        Image img = load_gray_image(e.path);
        auto patches = tile_image(img, e.image_id, cfg.tiling);
        if (patches.empty() && warnings)
            warnings->push_back("image smaller than one patch after scaling: " + e.image_id);
        ImagePatches ip{&e, {}};
        for (auto& p : patches) {
            auto d = foreground_filter(p, cfg.tiling.std_low, cfg.tiling.std_high);
            p.foreground = d.keep;
            p.measured_std = d.std;
            if (d.keep) ip.foreground.push_back(std::move(p));
        }
        if (ip.foreground.empty() && warnings)
            warnings->push_back("no foreground patches in image: " + e.image_id);
        per_image.push_back(std::move(ip));
    }

    std::vector<const Patch*> all_fg;
    for (const auto& ip : per_image)
        for (const auto& p : ip.foreground) all_fg.push_back(&p);
    out.norm_stats = compute_norm_stats(all_fg, cfg.norm_sample, cfg.seed);

    for (auto& ip : per_image) {
        if (ip.foreground.empty()) continue;
        MilBag bag;
        bag.image_id = ip.entry->image_id;
        bag.clone = ip.entry->clone;
        bag.isolate = ip.entry->isolate;
        bag.preparation = ip.entry->preparation;
        bag.label = clone_idx.at(ip.entry->clone);
        for (const auto& p : ip.foreground)
            bag.instances.push_back(embed_patch(normalize_patch(p, out.norm_stats)));
        out.bags.push_back(std::move(bag));
    }
    if (out.bags.empty()) throw std::runtime_error("no bags after filtering");
    return out;
}

Patch extract_patch(const ManifestEntry& entry, const std::string& patch_id, const TilingConfig& cfg) {
    // patch ids look like {image_id}_r{row}_c{col}
    auto rpos = patch_id.rfind("_r");
    auto cpos = patch_id.rfind("_c");
    if (rpos == std::string::npos || cpos == std::string::npos || cpos < rpos)
        throw std::runtime_error("malformed patch id: " + patch_id);
    int row = std::stoi(patch_id.substr(rpos + 2, cpos - rpos - 2));
    int col = std::stoi(patch_id.substr(cpos + 2));

    Image img = load_gray_image(entry.path);
    for (auto& p : tile_image(img, entry.image_id, cfg))
        if (p.row == row && p.col == col) return p;
    throw std::runtime_error("patch not found: " + patch_id);
}

namespace {

std::vector<double> column(const std::vector<CellRecord>& cells, const std::string& clone, int which) {
    std::vector<double> v;
    for (const auto& c : cells) {
        if (c.clone != clone) continue;
        switch (which) {
            case 0: v.push_back(c.props.area); break;
            case 1: v.push_back(c.props.roundness); break;
            default: v.push_back(c.props.mean_intensity); break;
        }
    }
    return v;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

} // namespace

ExplainResult explain(const MilModel& model, const std::vector<const MilBag*>& test_bags,
                      const PreparedData& data, const PipelineConfig& cfg) {
    ExplainResult out;
    out.essential = essential_patches(model, test_bags);
    if (out.essential.empty()) throw std::runtime_error("nothing to explain");

    // both paths start from segmentation of each essential patch
    for (const auto& ep : out.essential) {
        const ManifestEntry& entry = data.manifest_by_id.at(ep.image_id);
        Patch raw = extract_patch(entry, ep.patch_id, cfg.tiling);
        auto seg = identify_primary_objects(raw.pixels, cfg.seg);

        // path 1: centers -> persistence -> pbow
        std::vector<RegionProps> props;
        for (const auto& s : seg.segments) props.push_back(region_properties(s.pixels, raw.pixels));
        PointCloud cloud = centers_point_cloud(props, ep.patch_id);
        PBoWVector v = pbow(h0_persistence(cloud));
        out.pbows_by_clone[entry.clone].push_back(std::move(v));

        // path 2: isolated segments, refined boundaries, region properties
        auto isolated_ids = isolated_segments(seg, cfg.seg.isolation_gap);
        std::set<int> isolated(isolated_ids.begin(), isolated_ids.end());
        for (const auto& s : seg.segments) {
            if (!isolated.count(s.label)) continue;
            auto refined = refine_segment(raw.pixels, s, cfg.seg.refine_dilation);
            CellRecord rec;
            rec.patch_id = ep.patch_id;
            rec.clone = entry.clone;
            rec.props = region_properties(refined.pixels, raw.pixels);
            rec.refined_fallback = refined.fallback;
            out.cells.push_back(std::move(rec));
        }
    }

    for (const auto& [clone, vecs] : out.pbows_by_clone)
        if (vecs.size() >= 2) out.profiles[clone] = average_pbow(vecs, clone);

    // pairwise PBoW significance + representative patches
    std::vector<std::string> clones;
    for (const auto& [clone, _] : out.pbows_by_clone) clones.push_back(clone);
    for (std::size_t i = 0; i < clones.size(); ++i) {
        for (std::size_t j = i + 1; j < clones.size(); ++j) {
            const auto& va = out.pbows_by_clone[clones[i]];
            const auto& vb = out.pbows_by_clone[clones[j]];
            if (va.size() < 2 || vb.size() < 2) continue;
            PBoWPairAnalysis pair;
            pair.clone_a = clones[i];
            pair.clone_b = clones[j];
            pair.significance = bin_significance(va, vb, cfg.alpha);
            if (!pair.significance.significant_bins.empty()) {
                const auto& c1 = out.profiles.at(clones[i]);
                const auto& c2 = out.profiles.at(clones[j]);
                const auto& feats = pair.significance.significant_bins;
                pair.representatives_a =
                    representative_patches(va, c1, c2, feats, cfg.representative_count);
                pair.representatives_b =
                    representative_patches(vb, c2, c1, feats, cfg.representative_count);
            }
            out.pbow_pairs.push_back(std::move(pair));
        }
    }

    // pairwise per-property comparisons
    static const char* kProperty[] = {"size", "roundness", "intensity"};
    for (std::size_t i = 0; i < clones.size(); ++i) {
        for (std::size_t j = i + 1; j < clones.size(); ++j) {
            for (int which = 0; which < 3; ++which) {
                auto a = column(out.cells, clones[i], which);
                auto b = column(out.cells, clones[j], which);
                if (a.size() < 2 || b.size() < 2) continue;
                CloneComparison cmp;
                cmp.clone_a = clones[i];
                cmp.clone_b = clones[j];
                cmp.welch = welch_t(a, b);
                cmp.mann_whitney = mann_whitney_u(a, b);
                auto& dst = which == 0   ? out.size_tests
                            : which == 1 ? out.roundness_tests
                                         : out.intensity_tests;
                if (cmp.welch.p < cfg.alpha) {
                    std::ostringstream os;
                    double ma = mean_of(a), mb = mean_of(b);
                    const char* rel;
                    if (which == 2)
                        rel = ma < mb ? "darker than" : "lighter than";
                    else
                        rel = ma > mb ? "greater than" : "less than";
                    os << kProperty[which] << ": clone " << clones[i] << " " << rel << " clone "
                       << clones[j] << " (p=" << cmp.welch.p << ")";
                    out.summary.push_back(os.str());
                }
                dst.push_back(std::move(cmp));
            }
        }
    }
    for (const auto& pair : out.pbow_pairs) {
        if (pair.significance.significant_bins.empty()) continue;
        std::ostringstream os;
        os << "spatial arrangement: clones " << pair.clone_a << " and " << pair.clone_b
           << " differ in " << pair.significance.significant_bins.size()
           << " death-time bins (alpha=" << pair.significance.alpha << ")";
        out.summary.push_back(os.str());
    }
    return out;
}

} // namespace clonescope
