#include "doctest.h"

#include "clonescope/mil.hpp"
#include "clonescope/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace clonescope;

namespace {

Embedding emb(std::vector<double> v, const std::string& id = "") {
    Embedding e;
    e.v = std::move(v);
    e.patch_id = id;
    return e;
}

MilBag random_bag(Rng& rng, int n, int dim, int label, const std::string& image_id) {
    MilBag b;
    b.image_id = image_id;
    b.label = label;
    b.clone = "c" + std::to_string(label);
    for (int i = 0; i < n; ++i) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal(0.0, 1.0);
        b.instances.push_back(emb(std::move(v), image_id + "_p" + std::to_string(i)));
    }
    return b;
}

// three well-separated class centers in R^dim
std::vector<MilBag> separable_bags(Rng& rng, int per_class, int dim, double spread = 0.3) {
    std::vector<MilBag> bags;
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < per_class; ++i) {
            MilBag b;
            b.image_id = "img_c" + std::to_string(c) + "_" + std::to_string(i);
            b.label = c;
            b.clone = "c" + std::to_string(c);
            b.isolate = "iso" + std::to_string(c) + "_" + std::to_string(i / 2);
            b.preparation = "p" + std::to_string(i % 2); // even per_class: both preps per isolate
            int n = 3 + int(rng.uniform_int(4));
            for (int k = 0; k < n; ++k) {
                std::vector<double> v(dim, 0.0);
                v[c % dim] = 3.0;
                v[(c + 1) % dim] = -2.0 * c;
                for (double& x : v) x += rng.normal(0.0, spread);
                b.instances.push_back(emb(std::move(v), b.image_id + "_p" + std::to_string(k)));
            }
            bags.push_back(std::move(b));
        }
    }
    return bags;
}

std::vector<const MilBag*> ptrs(const std::vector<MilBag>& bags) {
    std::vector<const MilBag*> out;
    for (const auto& b : bags) out.push_back(&b);
    return out;
}

} // namespace

TEST_CASE("method names round-trip through the parser") {
    for (const char* name : {"mv", "imax", "imean", "emax", "emean", "abmilp"}) {
        auto m = parse_method(name);
        REQUIRE(m.has_value());
        CHECK(parse_method(name) == m);
    }
    CHECK_FALSE(parse_method("nope").has_value());
    CHECK(std::string(method_name(MilMethod::AbMILP)) == "embedding+abmilp");
    CHECK(std::string(method_name(MilMethod::InstanceMV)) == "instance+mv");
}

TEST_CASE("abmilp pooling: single instance is returned exactly") {
    MilHyper h;
    h.heads = 3;
    MilModel m = MilModel::init(5, h);
    std::vector<Embedding> bag{emb({1.5, -2.0, 0.25, 4.0, -0.5})};
    auto pool = abmilp_pool(bag, m);
    REQUIRE(pool.z.size() == 15);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 5; ++j) CHECK(pool.z[k * 5 + j] == bag[0].v[j]);
    CHECK(pool.attention[0] == doctest::Approx(1.0));
}

TEST_CASE("abmilp pooling: identical instances give uniform weights") {
    MilHyper h;
    MilModel m = MilModel::init(4, h);
    std::vector<Embedding> bag(7, emb({0.3, -1.0, 2.0, 0.9}));
    auto pool = abmilp_pool(bag, m);
    for (double a : pool.attention) CHECK(std::fabs(a - 1.0 / 7.0) < 1e-9);
    for (const auto& head : pool.per_head)
        for (double a : head) CHECK(std::fabs(a - 1.0 / 7.0) < 1e-9);
}

TEST_CASE("abmilp pooling: weights sum to 1 on random bags") {
    Rng rng(3);
    MilHyper h;
    MilModel m = MilModel::init(6, h);
    for (int trial = 0; trial < 500; ++trial) {
        auto b = random_bag(rng, 1 + int(rng.uniform_int(10)), 6, 0, "t");
        auto pool = abmilp_pool(b.instances, m);
        double s = 0.0;
        for (double a : pool.attention) s += a;
        CHECK(std::fabs(s - 1.0) < 1e-9);
        for (const auto& head : pool.per_head) {
            double hs = 0.0;
            for (double a : head) hs += a;
            CHECK(std::fabs(hs - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("abmilp pooling: permutation equivariance") {
    Rng rng(11);
    MilHyper h;
    MilModel m = MilModel::init(5, h);
    auto b = random_bag(rng, 6, 5, 0, "t");
    auto pool = abmilp_pool(b.instances, m);

    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    std::vector<Embedding> shuffled;
    for (int i : perm) shuffled.push_back(b.instances[i]);
    auto pool2 = abmilp_pool(shuffled, m);

    for (std::size_t j = 0; j < pool.z.size(); ++j)
        CHECK(pool2.z[j] == doctest::Approx(pool.z[j]).epsilon(1e-12));
    for (int i = 0; i < 6; ++i)
        CHECK(pool2.attention[i] == doctest::Approx(pool.attention[perm[i]]).epsilon(1e-12));
}

TEST_CASE("abmilp pooling: z stays inside the instance convex hull") {
    Rng rng(13);
    MilHyper h;
    h.heads = 2;
    MilModel m = MilModel::init(4, h);
    for (int trial = 0; trial < 100; ++trial) {
        auto b = random_bag(rng, 2 + int(rng.uniform_int(6)), 4, 0, "t");
        auto pool = abmilp_pool(b.instances, m);
        for (int k = 0; k < 2; ++k) {
            for (int j = 0; j < 4; ++j) {
                double lo = 1e300, hi = -1e300;
                for (const auto& e : b.instances) {
                    lo = std::min(lo, e.v[j]);
                    hi = std::max(hi, e.v[j]);
                }
                CHECK(pool.z[k * 4 + j] >= lo - 1e-12);
                CHECK(pool.z[k * 4 + j] <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("abmilp pooling: duplicating every instance leaves z unchanged") {
    Rng rng(17);
    MilHyper h;
    MilModel m = MilModel::init(5, h);
    auto b = random_bag(rng, 5, 5, 0, "t");
    auto pool = abmilp_pool(b.instances, m);
    std::vector<Embedding> doubled = b.instances;
    doubled.insert(doubled.end(), b.instances.begin(), b.instances.end());
    auto pool2 = abmilp_pool(doubled, m);
    for (std::size_t j = 0; j < pool.z.size(); ++j)
        CHECK(pool2.z[j] == doctest::Approx(pool.z[j]).epsilon(1e-12));
}

TEST_CASE("abmilp pooling rejects an empty bag") {
    MilHyper h;
    MilModel m = MilModel::init(3, h);
    CHECK_THROWS_AS(abmilp_pool({}, m), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
    // L=5, M=4, N<=6, relative error < 1e-4
    Rng rng(23);
    MilHyper h;
    h.attention_dim = 4;
    h.heads = 2;
    h.seed = 23;
    const int L = 5;

    for (int trial = 0; trial < 20; ++trial) {
        MilHyper ht = h;
        ht.seed = 23 + trial;
        MilModel m = MilModel::init(L, ht);
        std::vector<MilBag> bags;
        for (int b = 0; b < 3; ++b)
            bags.push_back(random_bag(rng, 1 + int(rng.uniform_int(6)), L, b % kNumClasses,
                                      "b" + std::to_string(b)));
        auto batch = ptrs(bags);
        const double wd = trial % 2 ? 0.01 : 0.0;

        Gradients g;
        loss_and_gradients(m, batch, wd, g);

        const double eps = 1e-6;
        auto fd = [&](double* param) {
            double orig = *param;
            Gradients scratch;
            *param = orig + eps;
            double lp = loss_and_gradients(m, batch, wd, scratch);
            *param = orig - eps;
            double lm = loss_and_gradients(m, batch, wd, scratch);
            *param = orig;
            return (lp - lm) / (2.0 * eps);
        };
        auto close = [&](double analytic, double numeric) {
            double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            CHECK(std::fabs(analytic - numeric) / denom < 1e-4);
        };

        for (int k = 0; k < m.heads; ++k) {
            for (std::size_t i = 0; i < m.V[k].size(); i += 7) close(g.V[k][i], fd(&m.V[k][i]));
            for (std::size_t i = 0; i < m.w[k].size(); ++i) close(g.w[k][i], fd(&m.w[k][i]));
        }
        for (std::size_t i = 0; i < m.head_W.size(); i += 5) close(g.head_W[i], fd(&m.head_W[i]));
        for (int c = 0; c < kNumClasses; ++c) close(g.head_b[c], fd(&m.head_b[c]));
    }
}

TEST_CASE("weight decay adds exactly the quadratic penalty to the loss") {
    Rng rng(31);
    MilHyper h;
    h.heads = 2;
    MilModel m = MilModel::init(5, h);
    std::vector<MilBag> bags{random_bag(rng, 4, 5, 1, "b0")};
    auto batch = ptrs(bags);

    Gradients g;
    double base = loss_and_gradients(m, batch, 0.0, g);
    double with_wd = loss_and_gradients(m, batch, 0.1, g);

    double sq = 0.0;
    for (int k = 0; k < m.heads; ++k) {
        for (double v : m.V[k]) sq += v * v;
        for (double v : m.w[k]) sq += v * v;
    }
    for (double v : m.head_W) sq += v * v;
    for (double v : m.head_b) sq += v * v;
    CHECK(with_wd == doctest::Approx(base + 0.05 * sq).epsilon(1e-12));
}

TEST_CASE("training with lr = 0 leaves the parameters unchanged") {
    Rng rng(37);
    auto bags = separable_bags(rng, 3, 6);
    MilHyper h;
    h.lr = 0.0;
    h.steps = 50;
    h.seed = 5;
    auto trained = train(ptrs(bags), MilMethod::AbMILP, 6, h);
    MilModel fresh = MilModel::init(6, trained.model.hyper);
    for (int k = 0; k < fresh.heads; ++k) {
        CHECK(trained.model.V[k] == fresh.V[k]);
        CHECK(trained.model.w[k] == fresh.w[k]);
    }
    CHECK(trained.model.head_W == fresh.head_W);
    CHECK(trained.loss_history.size() == 50);
}

TEST_CASE("all methods fit the separable fixture") {
    Rng rng(41);
    auto bags = separable_bags(rng, 6, 6);
    auto all = ptrs(bags);
    MilHyper h;
    h.steps = 1500;
    h.lr = 0.1;
    h.seed = 7;
    for (MilMethod m : {MilMethod::AbMILP, MilMethod::InstanceMV, MilMethod::InstanceMax,
                        MilMethod::InstanceMean, MilMethod::EmbeddingMax, MilMethod::EmbeddingMean}) {
        auto trained = train(all, m, 6, h);
        auto report = evaluate(trained.model, all, m);
        CHECK(report.accuracy >= 0.95);
        // final losses should be far below the ln(3) chance level
        double tail = 0.0;
        for (std::size_t i = trained.loss_history.size() - 50; i < trained.loss_history.size(); ++i)
            tail += trained.loss_history[i];
        CHECK(tail / 50.0 < std::log(3.0));
    }
}

TEST_CASE("training is deterministic per seed") {
    Rng rng(43);
    auto bags = separable_bags(rng, 3, 5);
    MilHyper h;
    h.steps = 200;
    h.seed = 99;
    auto t1 = train(ptrs(bags), MilMethod::AbMILP, 5, h);
    auto t2 = train(ptrs(bags), MilMethod::AbMILP, 5, h);
    CHECK(t1.model.head_W == t2.model.head_W);
    CHECK(t1.model.V == t2.model.V);
    CHECK(t1.loss_history == t2.loss_history);

    h.seed = 100;
    auto t3 = train(ptrs(bags), MilMethod::AbMILP, 5, h);
    CHECK(t1.model.head_W != t3.model.head_W);
}

TEST_CASE("training rejects a missing class") {
    Rng rng(47);
    std::vector<MilBag> bags;
    bags.push_back(random_bag(rng, 3, 4, 0, "a"));
    bags.push_back(random_bag(rng, 3, 4, 1, "b"));
    MilHyper h;
    CHECK_THROWS_AS(train(ptrs(bags), MilMethod::AbMILP, 4, h), std::runtime_error);
}

TEST_CASE("evaluate: mv has no AUC, perfect separation gives 1.0 everywhere else") {
    Rng rng(53);
    auto bags = separable_bags(rng, 6, 6);
    auto all = ptrs(bags);
    MilHyper h;
    h.steps = 1500;
    h.lr = 0.1;
    auto ab = train(all, MilMethod::AbMILP, 6, h);
    auto rep = evaluate(ab.model, all, MilMethod::AbMILP);
    CHECK(rep.auc_applicable);
    CHECK(rep.accuracy == doctest::Approx(1.0));
    CHECK(rep.macro_f1 == doctest::Approx(1.0));
    CHECK(rep.macro_auc == doctest::Approx(1.0));
    CHECK_FALSE(rep.zero_division_flag);
    std::uint64_t total = 0;
    for (auto& row : rep.confusion)
        for (auto v : row) total += v;
    CHECK(total == all.size());

    auto mv = train(all, MilMethod::InstanceMV, 6, h);
    auto mv_rep = evaluate(mv.model, all, MilMethod::InstanceMV);
    CHECK_FALSE(mv_rep.auc_applicable);
    CHECK(std::isnan(mv_rep.macro_auc));
}

TEST_CASE("evaluate flags zero-division on a degenerate prediction set") {
    // untrained model on one-class data: some classes never predicted
    Rng rng(59);
    std::vector<MilBag> bags;
    for (int i = 0; i < 4; ++i) bags.push_back(random_bag(rng, 3, 4, 0, "z" + std::to_string(i)));
    MilHyper h;
    MilModel m = MilModel::init(4, h);
    auto rep = evaluate(m, ptrs(bags), MilMethod::AbMILP);
    CHECK(rep.zero_division_flag);
}

TEST_CASE("fold splits put one preparation per isolate in train and the other in test") {
    Rng rng(61);
    auto bags = separable_bags(rng, 6, 5); // isolates have preparations p0/p1
    auto splits = make_fold_splits(bags, 5, 3);
    REQUIRE(splits.size() == 5);

    std::map<std::string, std::pair<std::string, std::string>> meta; // id -> (isolate, prep)
    for (const auto& b : bags) meta[b.image_id] = {b.isolate, b.preparation};

    for (const auto& split : splits) {
        std::set<std::string> train(split.train_ids.begin(), split.train_ids.end());
        std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
        CHECK(train.size() + test.size() == bags.size());
        for (const auto& id : train) CHECK_FALSE(test.count(id));

        // per isolate: train uses exactly one preparation, test the other
        std::map<std::string, std::set<std::string>> train_preps, test_preps;
        for (const auto& id : train) train_preps[meta[id].first].insert(meta[id].second);
        for (const auto& id : test) test_preps[meta[id].first].insert(meta[id].second);
        for (const auto& [iso, preps] : train_preps) {
            CHECK(preps.size() == 1);
            CHECK(test_preps[iso].size() == 1);
            CHECK(*preps.begin() != *test_preps[iso].begin());
        }
    }
}

TEST_CASE("fold splits reject isolates without exactly 2 preparations") {
    Rng rng(67);
    auto bags = separable_bags(rng, 4, 5);
    MilBag extra = bags[0]; // a third preparation for its isolate
    extra.image_id = "extra";
    extra.preparation = "p2";
    bags.push_back(std::move(extra));
    CHECK_THROWS_AS(make_fold_splits(bags, 5, 0), std::runtime_error);
}

TEST_CASE("cross_validate recovers the separable fixture and aggregates confusion") {
    Rng rng(71);
    auto bags = separable_bags(rng, 8, 6);
    MilHyper h;
    h.steps = 1200;
    h.lr = 0.1;
    h.seed = 1;
    auto cv = cross_validate(bags, MilMethod::AbMILP, 3, h);
    REQUIRE(cv.folds.size() == 3);
    CHECK(cv.mean.accuracy > 0.9);
    std::uint64_t total = 0;
    for (auto& row : cv.mean.confusion)
        for (auto v : row) total += v;
    std::uint64_t per_fold = 0;
    for (const auto& f : cv.folds)
        for (auto& row : f.metrics.confusion)
            for (auto v : row) per_fold += v;
    CHECK(total == per_fold);
}

TEST_CASE("grid search basics") {
    Rng rng(73);
    auto bags = separable_bags(rng, 6, 5);
    auto all = ptrs(bags);
    MilHyper h;
    h.steps = 600;
    h.seed = 4;

    auto single = grid_search(all, MilMethod::AbMILP, 5, {0.05}, {0.001}, h);
    CHECK(single.best_lr == 0.05);
    CHECK(single.best_weight_decay == 0.001);
    CHECK(single.table.size() == 1);

    auto grid = grid_search(all, MilMethod::AbMILP, 5, {0.0, 0.1}, {0.0, 0.01}, h);
    CHECK(grid.table.size() == 4);
    CHECK(grid.best_lr == 0.1); // lr = 0 cannot fit the separable fixture

    CHECK_THROWS_AS(grid_search(all, MilMethod::AbMILP, 5, {}, {0.0}, h), std::invalid_argument);
}

TEST_CASE("essential patches are the top-2 attention patches of correct images") {
    Rng rng(79);
    auto bags = separable_bags(rng, 6, 6);
    auto all = ptrs(bags);
    MilHyper h;
    h.steps = 1200;
    h.lr = 0.1;
    auto trained = train(all, MilMethod::AbMILP, 6, h);
    auto essential = essential_patches(trained.model, all);

    std::map<std::string, std::vector<EssentialPatch>> by_image;
    for (const auto& e : essential) by_image[e.image_id].push_back(e);

    for (const auto& bag : bags) {
        auto p = forward_image(bag, trained.model, MilMethod::AbMILP);
        int pred = int(std::max_element(p.begin(), p.end()) - p.begin());
        auto it = by_image.find(bag.image_id);
        if (pred != bag.label) {
            CHECK(it == by_image.end());
            continue;
        }
        REQUIRE(it != by_image.end());
        REQUIRE(it->second.size() == 2);

        auto pool = abmilp_pool(bag.instances, trained.model);
        std::vector<double> att = pool.attention;
        std::sort(att.begin(), att.end(), std::greater<>());
        CHECK(it->second[0].attention == doctest::Approx(att[0]));
        CHECK(it->second[1].attention == doctest::Approx(att[1]));

        std::set<std::string> ids;
        for (const auto& inst : bag.instances) ids.insert(inst.patch_id);
        for (const auto& e : it->second) CHECK(ids.count(e.patch_id));
    }
}

TEST_CASE("EMB1 archives round-trip through write and import") {
    Rng rng(83);
    std::vector<MilBag> bags;
    std::vector<ManifestEntry> manifest;
    for (int i = 0; i < 5; ++i) {
        auto b = random_bag(rng, 2 + i, 7, i % kNumClasses, "img" + std::to_string(i));
        b.isolate = "iso" + std::to_string(i);
        b.preparation = "p0";
        ManifestEntry e;
        e.image_id = b.image_id;
        e.clone = "c" + std::to_string(i % kNumClasses);
        e.isolate = b.isolate;
        e.preparation = b.preparation;
        manifest.push_back(e);
        bags.push_back(std::move(b));
    }
    auto path = (std::filesystem::temp_directory_path() / "clonescope_emb1_test.emb1").string();
    write_embeddings(bags, path);
    auto loaded = import_embeddings(path, manifest, {"c0", "c1", "c2"});

    REQUIRE(loaded.size() == bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) {
        CHECK(loaded[i].image_id == bags[i].image_id);
        CHECK(loaded[i].label == bags[i].label);
        CHECK(loaded[i].isolate == bags[i].isolate);
        REQUIRE(loaded[i].instances.size() == bags[i].instances.size());
        for (std::size_t k = 0; k < bags[i].instances.size(); ++k) {
            CHECK(loaded[i].instances[k].patch_id == bags[i].instances[k].patch_id);
            for (std::size_t j = 0; j < 7; ++j)
                CHECK(loaded[i].instances[k].v[j] ==
                      doctest::Approx(double(float(bags[i].instances[k].v[j]))));
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("EMB1 import rejects bad input") {
    auto dir = std::filesystem::temp_directory_path();
    std::vector<ManifestEntry> manifest;

    auto bad_magic = (dir / "clonescope_bad_magic.emb1").string();
    std::ofstream(bad_magic, std::ios::binary) << "NOPE\x01\x00\x00\x00\x02\x00\x00\x00";
    CHECK_THROWS_WITH_AS(import_embeddings(bad_magic, manifest, {}), "not an EMB1 archive",
                         std::runtime_error);

    auto truncated = (dir / "clonescope_truncated.emb1").string();
    std::ofstream(truncated, std::ios::binary) << "EMB1\x05\x00\x00\x00";
    CHECK_THROWS_AS(import_embeddings(truncated, manifest, {}), std::runtime_error);

    // valid archive but the image id is not in the manifest
    Rng rng(89);
    std::vector<MilBag> bags{random_bag(rng, 2, 3, 0, "mystery")};
    auto orphan = (dir / "clonescope_orphan.emb1").string();
    write_embeddings(bags, orphan);
    CHECK_THROWS_AS(import_embeddings(orphan, manifest, {}), std::runtime_error);

    CHECK_THROWS_AS(import_embeddings((dir / "clonescope_missing.emb1").string(), manifest, {}),
                    std::runtime_error);
    for (const auto& p : {bad_magic, truncated, orphan}) std::filesystem::remove(p);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    Rng rng(97);
    auto bags = separable_bags(rng, 3, 5);
    MilHyper h;
    h.steps = 300;
    h.seed = 12;
    auto trained = train(ptrs(bags), MilMethod::AbMILP, 5, h);

    auto path = (std::filesystem::temp_directory_path() / "clonescope_ckpt_test.json").string();
    save_checkpoint(trained.model, path);
    MilModel loaded = load_checkpoint(path);
    std::filesystem::remove(path);

    CHECK(loaded.input_dim == trained.model.input_dim);
    CHECK(loaded.heads == trained.model.heads);
    CHECK(loaded.V == trained.model.V);
    CHECK(loaded.w == trained.model.w);
    CHECK(loaded.head_W == trained.model.head_W);
    CHECK(loaded.head_b == trained.model.head_b);

    for (const auto& b : bags) {
        auto p1 = forward_image(b, trained.model, MilMethod::AbMILP);
        auto p2 = forward_image(b, loaded, MilMethod::AbMILP);
        CHECK(p1 == p2);
    }
}

TEST_CASE("builtin embedder is deterministic and has the documented layout") {
    Rng rng(101);
    Patch p;
    p.image_id = "img";
    p.pixels = Image(40, 40);
    for (double& v : p.pixels.pixels) v = rng.normal(0.0, 1.0);

    auto e1 = embed_patch(p);
    auto e2 = embed_patch(p);
    CHECK(e1.v == e2.v);
    REQUIRE(e1.v.size() == std::size_t(kBuiltinEmbeddingDim));

    double hist_sum = 0.0;
    for (int i = 0; i < 32; ++i) hist_sum += e1.v[i];
    CHECK(hist_sum == doctest::Approx(1.0));
    double orient_sum = 0.0;
    for (int i = 35; i < 44; ++i) orient_sum += e1.v[i];
    CHECK(orient_sum == doctest::Approx(1.0));
    // constant patch: zero std and empty gradient bins
    Patch flat;
    flat.pixels = Image(16, 16, 0.5);
    auto ef = embed_patch(flat);
    CHECK(ef.v[32] == doctest::Approx(0.5));
    CHECK(ef.v[33] == doctest::Approx(0.0));
}
