#include "doctest.h"

#include "clonescope/pipeline.hpp"
#include "clonescope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace clonescope;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path dir;
    std::vector<ManifestEntry> manifest;
    PipelineConfig cfg;

    Fixture() {
        dir = fs::temp_directory_path() / "clonescope_pipeline_test";
        fs::remove_all(dir);
        DatasetSpec spec;
        spec.clones = clone_presets();
        spec.isolates_per_clone = 1;
        spec.images_per_preparation = 2;
        spec.image_size = 256;
        spec.seed = 11;
        manifest = generate_dataset(spec, dir.string()).manifest;

        cfg.tiling.scale = 1.0;
        cfg.tiling.patch_size = 128;
        cfg.tiling.stride = 128;
        cfg.seed = 11;
    }
    ~Fixture() { fs::remove_all(dir); }
};

} // namespace

TEST_CASE("prepare_bags builds one labeled bag per image") {
    Fixture fx;
    std::vector<std::string> warnings;
    auto data = prepare_bags(fx.manifest, fx.cfg, &warnings);

    CHECK(data.clone_order == std::vector<std::string>{"A", "B", "C"});
    CHECK(data.bags.size() <= fx.manifest.size());
    CHECK(data.bags.size() >= fx.manifest.size() - warnings.size());
    CHECK(std::isfinite(data.norm_stats.mean));
    CHECK(data.norm_stats.std > 0.0);

    std::set<std::string> ids;
    for (const auto& bag : data.bags) {
        CHECK(ids.insert(bag.image_id).second);
        CHECK(bag.label == int(std::find(data.clone_order.begin(), data.clone_order.end(), bag.clone) -
                                data.clone_order.begin()));
        CHECK(bag.instances.size() <= 4); // 256/128 tiling
        CHECK(!bag.instances.empty());
        for (const auto& e : bag.instances) {
            CHECK(e.v.size() == std::size_t(kBuiltinEmbeddingDim));
            for (double v : e.v) CHECK(std::isfinite(v));
        }
        CHECK(data.manifest_by_id.count(bag.image_id) == 1);
    }
}

TEST_CASE("prepare_bags is deterministic") {
    Fixture fx;
    auto d1 = prepare_bags(fx.manifest, fx.cfg);
    auto d2 = prepare_bags(fx.manifest, fx.cfg);
    REQUIRE(d1.bags.size() == d2.bags.size());
    CHECK(d1.norm_stats.mean == d2.norm_stats.mean);
    for (std::size_t i = 0; i < d1.bags.size(); ++i)
        for (std::size_t k = 0; k < d1.bags[i].instances.size(); ++k)
            CHECK(d1.bags[i].instances[k].v == d2.bags[i].instances[k].v);
}

TEST_CASE("prepare_bags validates its inputs") {
    Fixture fx;
    CHECK_THROWS_AS(prepare_bags({}, fx.cfg), std::runtime_error);

    PipelineConfig bad = fx.cfg;
    bad.embedder = "resnet";
    CHECK_THROWS_AS(prepare_bags(fx.manifest, bad), std::runtime_error);

    ManifestEntry missing;
    missing.path = (fx.dir / "missing.png").string();
    missing.clone = "A";
    missing.image_id = "missing";
    CHECK_THROWS_AS(prepare_bags({missing}, fx.cfg), std::exception);
}

TEST_CASE("extract_patch re-derives the exact tiled window") {
    Fixture fx;
    const ManifestEntry& entry = fx.manifest.front();
    Image img = load_gray_image(entry.path);
    auto patches = tile_image(img, entry.image_id, fx.cfg.tiling);
    REQUIRE(!patches.empty());

    for (const auto& p : patches) {
        Patch back = extract_patch(entry, p.patch_id(), fx.cfg.tiling);
        CHECK(back.row == p.row);
        CHECK(back.col == p.col);
        CHECK(back.pixels.pixels == p.pixels.pixels);
    }

    CHECK_THROWS_AS(extract_patch(entry, "garbled", fx.cfg.tiling), std::runtime_error);
    CHECK_THROWS_AS(extract_patch(entry, entry.image_id + "_r99_c99", fx.cfg.tiling),
                    std::runtime_error);
}

TEST_CASE("the import embedder reproduces builtin embeddings through EMB1") {
    Fixture fx;
    auto data = prepare_bags(fx.manifest, fx.cfg);
    auto path = (fx.dir / "bags.emb1").string();
    write_embeddings(data.bags, path);

    PipelineConfig imp = fx.cfg;
    imp.embedder = "import";
    imp.embeddings_path = path;
    auto data2 = prepare_bags(fx.manifest, imp);

    REQUIRE(data2.bags.size() == data.bags.size());
    for (std::size_t i = 0; i < data.bags.size(); ++i) {
        CHECK(data2.bags[i].image_id == data.bags[i].image_id);
        CHECK(data2.bags[i].label == data.bags[i].label);
        for (std::size_t k = 0; k < data.bags[i].instances.size(); ++k)
            for (std::size_t j = 0; j < data.bags[i].instances[k].v.size(); ++j)
                CHECK(data2.bags[i].instances[k].v[j] ==
                      doctest::Approx(double(float(data.bags[i].instances[k].v[j]))));
    }
}

TEST_CASE("explain runs both paths end to end on a trained model") {
    Fixture fx;
    auto data = prepare_bags(fx.manifest, fx.cfg);
    std::vector<const MilBag*> all;
    for (const auto& b : data.bags) all.push_back(&b);

    MilHyper h;
    h.steps = 800;
    h.lr = 0.1;
    h.seed = 2;
    auto trained = train(all, MilMethod::AbMILP, int(data.bags.front().dim()), h);
    auto result = explain(trained.model, all, data, fx.cfg);

    CHECK(!result.essential.empty());
    CHECK(result.essential.size() <= 2 * all.size());
    for (const auto& e : result.essential) CHECK(data.manifest_by_id.count(e.image_id));

    std::size_t pbow_count = 0;
    for (const auto& [clone, vecs] : result.pbows_by_clone) pbow_count += vecs.size();
    CHECK(pbow_count == result.essential.size());
    for (const auto& [clone, profile] : result.profiles) {
        CHECK(profile.n >= 2);
        for (double w : profile.ci_half_width) CHECK(w >= 0.0);
    }
    for (const auto& pair : result.pbow_pairs) {
        CHECK(pair.clone_a < pair.clone_b);
        for (int bin : pair.significance.significant_bins) {
            CHECK(bin >= 0);
            CHECK(bin < kPBoWBins);
            CHECK(pair.significance.p[bin] < fx.cfg.alpha);
        }
    }
    for (const auto& cell : result.cells) {
        CHECK(cell.props.area > 0.0);
        CHECK(cell.props.roundness > 0.0);
        CHECK(cell.props.roundness <= 1.0);
    }
    // tests only run where both clones have at least 2 cells
    for (const auto& t : result.size_tests) {
        CHECK(t.welch.n1 >= 2);
        CHECK(t.welch.n2 >= 2);
        CHECK(t.welch.p >= 0.0);
        CHECK(t.welch.p <= 1.0);
    }
}

TEST_CASE("explain requires at least one correctly predicted image") {
    Fixture fx;
    auto data = prepare_bags(fx.manifest, fx.cfg);
    std::vector<const MilBag*> all;
    for (const auto& b : data.bags) all.push_back(&b);

    // an untrained model with mismatched labels: force zero correct predictions
    MilHyper h;
    MilModel fresh = MilModel::init(int(data.bags.front().dim()), h);
    std::vector<MilBag> relabeled;
    for (const auto& b : data.bags) {
        MilBag copy = b;
        auto p = forward_image(b, fresh, MilMethod::AbMILP);
        int pred = int(std::max_element(p.begin(), p.end()) - p.begin());
        copy.label = (pred + 1) % kNumClasses; // never equal to the prediction
        relabeled.push_back(std::move(copy));
    }
    std::vector<const MilBag*> wrong;
    for (const auto& b : relabeled) wrong.push_back(&b);
    CHECK_THROWS_WITH_AS(explain(fresh, wrong, data, fx.cfg), "nothing to explain",
                         std::runtime_error);
}
