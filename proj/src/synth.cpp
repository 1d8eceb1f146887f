#include "clonescope/synth.hpp"
#include "clonescope/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

using nlohmann::json;

namespace clonescope {

namespace {

void validate(const CloneSpec& s) {
    if (s.size_std < 0 || s.roundness_std < 0 || s.intensity_std < 0 || s.background_std < 0)
        throw std::invalid_argument("negative std in clone spec");
    if (s.roundness_mean <= 0 || s.roundness_mean > 1)
        throw std::invalid_argument("roundness mean outside (0,1]");
    if (s.intensity_mean < 0 || s.intensity_mean > 255 || s.background_mean < 0 || s.background_mean > 255)
        throw std::invalid_argument("intensity outside [0,255]");
}

} // namespace

SynthImage generate_image(const CloneSpec& spec, int size, std::uint64_t seed) {
    validate(spec);
    const double area = double(size) * size;
    const double expected_cell_area =
        std::numbers::pi / 4.0 * spec.size_mean * (spec.size_mean * spec.roundness_mean);
    const double expected_coverage =
        spec.parent_intensity * spec.offspring_mean * expected_cell_area;
    if (expected_coverage > 0.5) throw std::invalid_argument("overcrowded spec");

    Rng rng(seed);
    SynthImage out;
    out.image = Image(size, size);

    // background noise first, row-major
    for (double& px : out.image.pixels)
        px = std::clamp(rng.normal(spec.background_mean, spec.background_std), 0.0, 255.0);

    // Thomas process: Poisson parents, Gaussian-scattered offspring
    int parents = rng.poisson(spec.parent_intensity * area);
    for (int p = 0; p < parents; ++p) {
        double px = rng.uniform(0.0, double(size));
        double py = rng.uniform(0.0, double(size));
        int offspring = rng.poisson(spec.offspring_mean);
        for (int o = 0; o < offspring; ++o) {
            GroundTruthCell cell;
            cell.cx = px + rng.normal(0.0, spec.offspring_scatter);
            cell.cy = py + rng.normal(0.0, spec.offspring_scatter);
            cell.major = std::max(2.0, rng.normal(spec.size_mean, spec.size_std));
            double roundness = std::clamp(rng.normal(spec.roundness_mean, spec.roundness_std), 0.05, 1.0);
            cell.minor = cell.major * roundness;
            cell.orientation = rng.uniform(0.0, std::numbers::pi);
            cell.intensity = std::clamp(rng.normal(spec.intensity_mean, spec.intensity_std), 0.0, 255.0);

            double r = cell.major / 2.0;
            if (cell.cx + r < 0 || cell.cy + r < 0 || cell.cx - r >= size || cell.cy - r >= size)
                continue; // entirely outside the frame
            out.cells.push_back(cell);
        }
    }

    // rasterize filled rotated ellipses
    for (const GroundTruthCell& c : out.cells) {
        double a = c.major / 2.0, b = c.minor / 2.0;
        double ct = std::cos(c.orientation), st = std::sin(c.orientation);
        int x0 = std::max(0, int(std::floor(c.cx - a)));
        int x1 = std::min(size - 1, int(std::ceil(c.cx + a)));
        int y0 = std::max(0, int(std::floor(c.cy - a)));
        int y1 = std::min(size - 1, int(std::ceil(c.cy + a)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double dx = x - c.cx, dy = y - c.cy;
                double u = dx * ct + dy * st;
                double v = -dx * st + dy * ct;
                if (u * u / (a * a) + v * v / (b * b) <= 1.0)
                    out.image.at(x, y) = c.intensity;
            }
        }
    }
    return out;
}

GeneratedDataset generate_dataset(const DatasetSpec& spec, const std::string& out_dir) {
    if (spec.clones.empty()) throw std::invalid_argument("no clone specs");
    if (spec.preparations_per_isolate != 2)
        throw std::invalid_argument("cross-validation protocol requires exactly 2 preparations per isolate");
    for (const auto& c : spec.clones) validate(c);

    std::filesystem::create_directories(out_dir);
    Rng root(spec.seed);

    GeneratedDataset out;
    std::uint64_t image_counter = 0;
    std::uint64_t isolate_counter = 0;
    for (std::size_t ci = 0; ci < spec.clones.size(); ++ci) {
        const CloneSpec& base = spec.clones[ci];
        for (int iso = 0; iso < spec.isolates_per_clone; ++iso) {
            // isolate effect: multiplicative jitter on the spec means
            Rng jr = root.child(1000000 + isolate_counter++);
            auto jitter = [&](double v) { return v * (1.0 + spec.isolate_jitter * jr.uniform(-1.0, 1.0)); };
            CloneSpec s = base;
            s.parent_intensity = jitter(s.parent_intensity);
            s.offspring_mean = jitter(s.offspring_mean);
            s.offspring_scatter = jitter(s.offspring_scatter);
            s.size_mean = jitter(s.size_mean);
            s.roundness_mean = std::min(1.0, jitter(s.roundness_mean));
            s.intensity_mean = std::clamp(jitter(s.intensity_mean), 0.0, 255.0);

            std::string isolate_id = base.label + "_iso" + std::to_string(iso);
            for (int prep = 0; prep < spec.preparations_per_isolate; ++prep) {
                std::string prep_id = "p" + std::to_string(prep);
                for (int img = 0; img < spec.images_per_preparation; ++img) {
                    std::string image_id = isolate_id + "_" + prep_id + "_" + std::to_string(img);
                    SynthImage si = generate_image(s, spec.image_size, root.child(image_counter++).raw());

                    std::string png = out_dir + "/" + image_id + ".png";
                    save_gray_png(si.image, png);

                    std::ofstream gt(out_dir + "/" + image_id + ".gt.jsonl");
                    for (const auto& c : si.cells) {
                        json j{{"cx", c.cx},       {"cy", c.cy},
                               {"major", c.major}, {"minor", c.minor},
                               {"orientation", c.orientation}, {"intensity", c.intensity}};
                        gt << j.dump() << "\n";
                    }

                    ManifestEntry e;
                    e.path = png;
                    e.clone = base.label;
                    e.isolate = isolate_id;
                    e.preparation = prep_id;
                    e.image_id = image_id;
                    out.manifest.push_back(std::move(e));
                }
            }
        }
    }

    out.manifest_path = out_dir + "/manifest.jsonl";
    write_manifest(out.manifest, out.manifest_path);
    return out;
}

std::vector<CloneSpec> clone_presets() {
    CloneSpec a;
    a.label = "A";
    a.parent_intensity = 3.5e-5;
    a.offspring_mean = 5.0;
    a.offspring_scatter = 26.0;
    a.size_mean = 19.0;
    a.size_std = 2.0;
    a.roundness_mean = 0.85;
    a.roundness_std = 0.06;
    a.intensity_mean = 120.0;
    a.intensity_std = 8.0;

    CloneSpec b;
    b.label = "B";
    b.parent_intensity = 5.0e-5;
    b.offspring_mean = 3.0;
    b.offspring_scatter = 55.0;
    b.size_mean = 13.5;
    b.size_std = 1.5;
    b.roundness_mean = 0.62;
    b.roundness_std = 0.08;
    b.intensity_mean = 152.0;
    b.intensity_std = 8.0;

    CloneSpec c;
    c.label = "C";
    c.parent_intensity = 3.2e-5;
    c.offspring_mean = 6.0;
    c.offspring_scatter = 16.0;
    c.size_mean = 15.0;
    c.size_std = 1.8;
    c.roundness_mean = 0.72;
    c.roundness_std = 0.08;
    c.intensity_mean = 148.0;
    c.intensity_std = 8.0;

    return {a, b, c};
}

} // namespace clonescope
