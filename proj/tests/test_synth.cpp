#include "doctest.h"

#include "clonescope/rng.hpp"
#include "clonescope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace clonescope;
namespace fs = std::filesystem;

namespace {

double mean_nn_distance(const std::vector<GroundTruthCell>& cells) {
    double total = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        double best = 1e300;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (i == j) continue;
            double dx = cells[i].cx - cells[j].cx, dy = cells[i].cy - cells[j].cy;
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
        if (best < 1e300) {
            total += best;
            ++counted;
        }
    }
    return counted ? total / counted : 0.0;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("zero parent intensity yields a background-only image") {
    CloneSpec s;
    s.parent_intensity = 0.0;
    auto out = generate_image(s, 128, 5);
    CHECK(out.cells.empty());
    double mean = 0.0;
    for (double v : out.image.pixels) mean += v;
    mean /= double(out.image.size());
    CHECK(mean == doctest::Approx(s.background_mean).epsilon(0.01));
}

TEST_CASE("zero scatter collapses offspring onto their cluster parent") {
    CloneSpec s;
    s.offspring_scatter = 0.0;
    s.parent_intensity = 1e-4;
    s.offspring_mean = 4.0;
    auto out = generate_image(s, 256, 9);
    REQUIRE(!out.cells.empty());
    std::set<std::pair<double, double>> centers;
    for (const auto& c : out.cells) centers.insert({c.cx, c.cy});
    CHECK(centers.size() < out.cells.size()); // clusters share one center
}

TEST_CASE("smaller scatter gives smaller nearest-neighbour distances") {
    CloneSpec tight, loose;
    tight.offspring_scatter = 8.0;
    loose.offspring_scatter = 50.0;
    tight.parent_intensity = loose.parent_intensity = 3e-5;
    tight.offspring_mean = loose.offspring_mean = 6.0;

    int tight_wins = 0, trials = 0;
    double tight_total = 0.0, loose_total = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto a = generate_image(tight, 512, seed);
        auto b = generate_image(loose, 512, seed + 1000);
        if (a.cells.size() < 4 || b.cells.size() < 4) continue;
        double da = mean_nn_distance(a.cells), db = mean_nn_distance(b.cells);
        tight_total += da;
        loose_total += db;
        tight_wins += da < db;
        ++trials;
    }
    REQUIRE(trials > 30);
    CHECK(tight_wins > trials * 3 / 4);
    CHECK(tight_total / trials < loose_total / trials);
}

TEST_CASE("planted size and intensity differences show up in the ground truth") {
    auto presets = clone_presets();
    REQUIRE(presets.size() == 3);
    const CloneSpec &a = presets[0], &b = presets[1], &c = presets[2];

    // A largest / roundest / darkest, B most dispersed, C tightest
    CHECK(a.size_mean > b.size_mean);
    CHECK(a.size_mean > c.size_mean);
    CHECK(a.roundness_mean > b.roundness_mean);
    CHECK(a.roundness_mean > c.roundness_mean);
    CHECK(a.intensity_mean < b.intensity_mean);
    CHECK(a.intensity_mean < c.intensity_mean);
    CHECK(b.offspring_scatter > a.offspring_scatter);
    CHECK(c.offspring_scatter < a.offspring_scatter);

    double area_a = 0, area_b = 0;
    std::size_t n_a = 0, n_b = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (const auto& cell : generate_image(a, 512, seed).cells) {
            area_a += cell.major * cell.minor;
            ++n_a;
        }
        for (const auto& cell : generate_image(b, 512, seed + 500).cells) {
            area_b += cell.major * cell.minor;
            ++n_b;
        }
    }
    REQUIRE(n_a > 20);
    REQUIRE(n_b > 20);
    CHECK(area_a / double(n_a) > 1.5 * area_b / double(n_b));
}

TEST_CASE("generate_image is deterministic per seed") {
    CloneSpec s;
    auto a = generate_image(s, 256, 42);
    auto b = generate_image(s, 256, 42);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.cells.size() == b.cells.size());
    auto c = generate_image(s, 256, 43);
    CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("generate_dataset writes the full tree and a consistent manifest") {
    DatasetSpec spec;
    spec.clones = clone_presets();
    spec.isolates_per_clone = 2;
    spec.images_per_preparation = 2;
    spec.image_size = 256;
    spec.seed = 3;

    auto dir = fs::temp_directory_path() / "clonescope_synth_test";
    fs::remove_all(dir);
    auto out = generate_dataset(spec, dir.string());

    CHECK(out.manifest.size() == 3u * 2 * 2 * 2);
    std::set<std::string> ids;
    for (const auto& e : out.manifest) {
        CHECK(ids.insert(e.image_id).second);
        CHECK(fs::exists(e.path));
        CHECK(fs::exists(dir / (e.image_id + ".gt.jsonl")));
    }
    CHECK(fs::exists(out.manifest_path));

    auto again = generate_dataset(spec, (dir.string() + "_again"));
    CHECK(slurp(out.manifest[0].path) == slurp(again.manifest[0].path));
    CHECK(slurp(out.manifest.back().path) == slurp(again.manifest.back().path));
    fs::remove_all(dir);
    fs::remove_all(dir.string() + "_again");
}

TEST_CASE("dataset generation validates its spec") {
    DatasetSpec spec;
    spec.clones = clone_presets();
    spec.preparations_per_isolate = 3;
    CHECK_THROWS_AS(generate_dataset(spec, "/tmp/clonescope_invalid"), std::invalid_argument);

    CloneSpec crowded;
    crowded.parent_intensity = 1.0; // expected coverage far beyond 50%
    CHECK_THROWS_AS(generate_image(crowded, 128, 0), std::invalid_argument);

    CloneSpec bad_roundness;
    bad_roundness.roundness_mean = 1.5;
    CHECK_THROWS_AS(generate_image(bad_roundness, 128, 0), std::invalid_argument);

    CloneSpec bad_intensity;
    bad_intensity.intensity_mean = 400.0;
    CHECK_THROWS_AS(generate_image(bad_intensity, 128, 0), std::invalid_argument);
}

TEST_CASE("rendered cells are darker than the background in the presets") {
    for (const auto& preset : clone_presets()) {
        auto out = generate_image(preset, 512, 77);
        REQUIRE(!out.cells.empty());
        // sample the pixel at each cell center
        double cell_mean = 0.0;
        int counted = 0;
        for (const auto& c : out.cells) {
            int x = int(c.cx), y = int(c.cy);
            if (!out.image.in_bounds(x, y)) continue;
            cell_mean += out.image.at(x, y);
            ++counted;
        }
        REQUIRE(counted > 0);
        cell_mean /= counted;
        CHECK(cell_mean < preset.background_mean - 20.0);
    }
}
