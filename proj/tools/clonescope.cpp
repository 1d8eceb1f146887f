// clonescope command-line front end.
//
// Subcommands: synth, tile, embed, import-embeddings, run, explain,
// report. Config precedence: values from --config are applied first,
// flags given on the command line override them. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numeric failure.

#include "CLI11.hpp"

#include "clonescope/pipeline.hpp"
#include "clonescope/report.hpp"
#include "clonescope/simd/kernels.hpp"
#include "clonescope/synth.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clonescope;

namespace {

// ---------------------------------------------------------------- logging

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel g_log_level = [] {
    const char* env = std::getenv("CLONESCOPE_LOG");
    if (!env) return LogLevel::Warn;
    std::string v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "warn") return LogLevel::Warn;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    std::cerr << "clonescope: unknown CLONESCOPE_LOG level '" << v << "', using warn\n";
    return LogLevel::Warn;
}();

void log(LogLevel level, const std::string& msg) {
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (level <= g_log_level) std::cerr << "[" << names[int(level)] << "] " << msg << "\n";
}

// ----------------------------------------------------------------- config

struct CliConfig {
    std::string manifest;
    std::string workdir = "work";
    std::vector<std::string> methods{"abmilp"};
    int folds = 5;
    std::uint64_t seed = 0;
    double lr = 0.05;
    double wd = 0.0;
    int steps = 2000;
    int heads = 3;
    bool grid = false;
    double alpha = 0.01;
    int jobs = 1;
    std::string config_path;

    // tiling / embedder knobs
    double scale = 0.5;
    int patch_size = 250;
    int stride = 125;
    std::string embedder = "builtin";
    std::string embeddings;

    // synth knobs
    int isolates = 4;
    int preparations = 2;
    int images = 5;
    int image_size = 512;
};

void apply_config_file(CliConfig& c, const std::string& path, const CLI::App& app) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j = json::parse(in);

    // flags present on the command line keep their value
    auto absent = [&](const std::string& flag) {
        auto* opt = app.get_option_no_throw(flag);
        return !opt || opt->count() == 0;
    };
    auto set_str = [&](const char* key, const char* flag, std::string& dst) {
        if (j.contains(key) && absent(flag)) dst = j[key].get<std::string>();
    };
    auto set_num = [&](const char* key, const char* flag, auto& dst) {
        using T = std::decay_t<decltype(dst)>;
        if (j.contains(key) && absent(flag)) dst = j[key].get<T>();
    };
    set_str("manifest", "--manifest", c.manifest);
    set_str("workdir", "--workdir", c.workdir);
    if (j.contains("methods") && absent("--method")) c.methods = j["methods"].get<std::vector<std::string>>();
    set_num("folds", "--folds", c.folds);
    set_num("seed", "--seed", c.seed);
    set_num("lr", "--lr", c.lr);
    set_num("wd", "--wd", c.wd);
    set_num("steps", "--steps", c.steps);
    set_num("heads", "--heads", c.heads);
    if (j.contains("grid") && absent("--grid")) c.grid = j["grid"].get<bool>();
    set_num("alpha", "--alpha", c.alpha);
    set_num("jobs", "--jobs", c.jobs);
    set_num("scale", "--scale", c.scale);
    set_num("patch_size", "--patch-size", c.patch_size);
    set_num("stride", "--stride", c.stride);
    set_str("embedder", "--embedder", c.embedder);
    set_str("embeddings", "--embeddings", c.embeddings);
    set_num("isolates", "--isolates", c.isolates);
    set_num("preparations", "--preparations", c.preparations);
    set_num("images", "--images", c.images);
    set_num("image_size", "--image-size", c.image_size);
}

json config_json(const CliConfig& c) {
    json j;
    j["manifest"] = c.manifest;
    j["workdir"] = c.workdir;
    j["methods"] = c.methods;
    j["folds"] = c.folds;
    j["seed"] = c.seed;
    j["lr"] = c.lr;
    j["wd"] = c.wd;
    j["steps"] = c.steps;
    j["heads"] = c.heads;
    j["grid"] = c.grid;
    j["alpha"] = c.alpha;
    j["jobs"] = c.jobs;
    j["scale"] = c.scale;
    j["patch_size"] = c.patch_size;
    j["stride"] = c.stride;
    j["embedder"] = c.embedder;
    j["embeddings"] = c.embeddings;
    j["isolates"] = c.isolates;
    j["preparations"] = c.preparations;
    j["images"] = c.images;
    j["image_size"] = c.image_size;
    return j;
}

PipelineConfig pipeline_config(const CliConfig& c) {
    PipelineConfig p;
    p.tiling.scale = c.scale;
    p.tiling.patch_size = c.patch_size;
    p.tiling.stride = c.stride;
    p.seed = c.seed;
    p.embedder = c.embedder;
    p.embeddings_path = c.embeddings;
    p.alpha = c.alpha;
    return p;
}

MilHyper hyper_of(const CliConfig& c) {
    MilHyper h;
    h.lr = c.lr;
    h.weight_decay = c.wd;
    h.steps = c.steps;
    h.heads = c.heads;
    h.seed = c.seed;
    return h;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_config(const fs::path& dir, const CliConfig& c) {
    write_text(dir / "config.json", config_json(c).dump(2) + "\n");
}

MilMethod method_or_throw(const std::string& name) {
    auto m = parse_method(name);
    if (!m) throw CLI::ValidationError("--method", "unknown method: " + name);
    return *m;
}

// ------------------------------------------------------------ subcommands

int cmd_synth(const CliConfig& c) {
    DatasetSpec spec;
    spec.clones = clone_presets();
    spec.isolates_per_clone = c.isolates;
    spec.preparations_per_isolate = c.preparations;
    spec.images_per_preparation = c.images;
    spec.image_size = c.image_size;
    spec.seed = c.seed;
    fs::path dir = fs::path(c.workdir) / "synth";
    fs::create_directories(dir);
    auto out = generate_dataset(spec, dir.string());
    write_config(dir, c);
    log(LogLevel::Info, "wrote " + std::to_string(out.manifest.size()) + " images under " + dir.string());
    std::cout << out.manifest_path << "\n";
    return 0;
}

int cmd_tile(const CliConfig& c) {
    if (c.manifest.empty()) throw CLI::RequiredError("--manifest");
    auto manifest = read_manifest(c.manifest);
    auto cfg = pipeline_config(c);
    fs::path dir = fs::path(c.workdir) / "tile";
    fs::create_directories(dir);

    std::ostringstream index;
    std::vector<Patch> foreground;
    for (const auto& e : manifest) {
        Image img = load_gray_image(e.path);
        auto patches = tile_image(img, e.image_id, cfg.tiling);
        for (auto& p : patches) {
            auto d = foreground_filter(p, cfg.tiling.std_low, cfg.tiling.std_high);
            p.foreground = d.keep;
            p.measured_std = d.std;
            json rec;
            rec["patch_id"] = p.patch_id();
            rec["image_id"] = p.image_id;
            rec["row"] = p.row;
            rec["col"] = p.col;
            rec["foreground"] = p.foreground;
            rec["std"] = p.measured_std;
            index << rec.dump() << "\n";
            if (p.foreground) foreground.push_back(std::move(p));
        }
    }
    std::vector<const Patch*> fg_ptrs;
    for (const auto& p : foreground) fg_ptrs.push_back(&p);
    auto stats = compute_norm_stats(fg_ptrs, cfg.norm_sample, cfg.seed);

    write_text(dir / "patches.jsonl", index.str());
    json sj;
    sj["mean"] = stats.mean;
    sj["std"] = stats.std;
    sj["sample_size"] = stats.sample_size;
    sj["seed"] = stats.seed;
    write_text(dir / "norm_stats.json", sj.dump(2) + "\n");
    write_config(dir, c);
    std::cout << foreground.size() << " foreground patches\n";
    return 0;
}

int cmd_embed(const CliConfig& c) {
    if (c.manifest.empty()) throw CLI::RequiredError("--manifest");
    auto manifest = read_manifest(c.manifest);
    auto cfg = pipeline_config(c);
    cfg.embedder = "builtin";
    std::vector<std::string> warnings;
    auto data = prepare_bags(manifest, cfg, &warnings);
    for (const auto& w : warnings) log(LogLevel::Warn, w);
    fs::path dir = fs::path(c.workdir) / "embed";
    fs::create_directories(dir);
    write_embeddings(data.bags, (dir / "embeddings.emb1").string());
    write_config(dir, c);
    std::cout << data.bags.size() << " bags written\n";
    return 0;
}

int cmd_import_embeddings(const CliConfig& c) {
    if (c.manifest.empty()) throw CLI::RequiredError("--manifest");
    if (c.embeddings.empty()) throw CLI::RequiredError("--embeddings");
    auto manifest = read_manifest(c.manifest);
    std::set<std::string> clones;
    for (const auto& e : manifest) clones.insert(e.clone);
    auto bags = import_embeddings(c.embeddings, manifest,
                                  std::vector<std::string>(clones.begin(), clones.end()));
    fs::path dir = fs::path(c.workdir) / "import";
    fs::create_directories(dir);
    json j;
    j["bags"] = bags.size();
    std::size_t instances = 0;
    for (const auto& b : bags) instances += b.instances.size();
    j["instances"] = instances;
    j["dim"] = bags.empty() ? 0 : bags.front().dim();
    j["source"] = c.embeddings;
    write_text(dir / "import.json", j.dump(2) + "\n");
    write_config(dir, c);
    std::cout << bags.size() << " bags, " << instances << " instances\n";
    return 0;
}

MetricsReport sum_confusion(const CrossValidation& cv) {
    MetricsReport agg = cv.mean;
    agg.confusion = {};
    for (const auto& f : cv.folds)
        for (int t = 0; t < kNumClasses; ++t)
            for (int p = 0; p < kNumClasses; ++p) agg.confusion[t][p] += f.metrics.confusion[t][p];
    return agg;
}

int cmd_run(const CliConfig& c) {
    if (c.manifest.empty()) throw CLI::RequiredError("--manifest");
    auto manifest = read_manifest(c.manifest);
    auto cfg = pipeline_config(c);
    std::vector<std::string> warnings;
    auto data = prepare_bags(manifest, cfg, &warnings);
    for (const auto& w : warnings) log(LogLevel::Warn, w);
    log(LogLevel::Info, "prepared " + std::to_string(data.bags.size()) + " bags (simd: " +
                            std::string(simd::active_name()) + ")");

    fs::path dir = fs::path(c.workdir) / "run";
    fs::create_directories(dir);
    write_config(dir, c);

    struct MethodOutcome {
        MilMethod method;
        CrossValidation cv;
        std::string error;
        GridSearchResult grid;
        bool grid_used = false;
    };

    std::vector<MilMethod> methods;
    for (const auto& name : c.methods) methods.push_back(method_or_throw(name));

    auto run_one = [&](MilMethod m) {
        MethodOutcome out;
        out.method = m;
        try {
            MilHyper hyper = hyper_of(c);
            int dim = int(data.bags.front().dim());
            if (c.grid) {
                std::vector<const MilBag*> ptrs;
                for (const auto& b : data.bags) ptrs.push_back(&b);
                out.grid = grid_search(ptrs, m, dim, {0.001, 0.01, 0.05, 0.1},
                                       {0.0, 0.0001, 0.001}, hyper);
                hyper.lr = out.grid.best_lr;
                hyper.weight_decay = out.grid.best_weight_decay;
                out.grid_used = true;
            }
            out.cv = cross_validate(data.bags, m, c.folds, hyper);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        return out;
    };

    std::vector<MethodOutcome> outcomes(methods.size());
    if (c.jobs > 1) {
        std::vector<std::future<MethodOutcome>> futs;
        for (auto m : methods)
            futs.push_back(std::async(std::launch::async, run_one, m));
        for (std::size_t i = 0; i < futs.size(); ++i) outcomes[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < methods.size(); ++i) outcomes[i] = run_one(methods[i]);
    }

    std::ostringstream table;
    table << table_header() << "\n";
    bool any_ok = false;
    for (const auto& out : outcomes) {
        const std::string mname = method_name(out.method);
        if (!out.error.empty()) {
            log(LogLevel::Error, mname + " failed: " + out.error);
            json ej;
            ej["method"] = mname;
            ej["error"] = out.error;
            write_text(dir / (mname + "_error.json"), ej.dump(2) + "\n");
            table << mname << "  [failed: " << out.error << "]\n";
            continue;
        }
        any_ok = true;
        json j = cross_validation_json(out.cv, out.method);
        if (out.grid_used) {
            json gj;
            gj["best_lr"] = out.grid.best_lr;
            gj["best_weight_decay"] = out.grid.best_weight_decay;
            json cells = json::array();
            for (const auto& cell : out.grid.table)
                cells.push_back({{"lr", cell.lr},
                                 {"weight_decay", cell.weight_decay},
                                 {"validation_accuracy", cell.validation_accuracy}});
            gj["table"] = cells;
            j["grid_search"] = gj;
        }
        write_text(dir / (mname + ".json"), j.dump(2) + "\n");
        write_text(dir / (mname + "_confusion.csv"),
                   confusion_csv(sum_confusion(out.cv), data.clone_order));
        for (const auto& f : out.cv.folds)
            write_text(dir / (mname + "_fold" + std::to_string(f.split.fold) + "_confusion.csv"),
                       confusion_csv(f.metrics, data.clone_order));
        table << table_row(out.method, out.cv) << "\n";
    }

    // paired Wilcoxon over per-fold accuracies for each method pair
    std::vector<const MethodOutcome*> ok;
    for (const auto& out : outcomes)
        if (out.error.empty()) ok.push_back(&out);
    if (ok.size() >= 2) {
        table << "\nwilcoxon signed-rank on per-fold accuracy\n";
        json wj = json::array();
        for (std::size_t i = 0; i < ok.size(); ++i) {
            for (std::size_t k = i + 1; k < ok.size(); ++k) {
                std::vector<double> a, b;
                for (const auto& f : ok[i]->cv.folds) a.push_back(f.metrics.accuracy);
                for (const auto& f : ok[k]->cv.folds) b.push_back(f.metrics.accuracy);
                std::string pair = std::string(method_name(ok[i]->method)) + " vs " +
                                   method_name(ok[k]->method);
                try {
                    auto r = wilcoxon_signed_rank(a, b);
                    json e = test_result_json(r);
                    e["pair"] = pair;
                    wj.push_back(e);
                    std::ostringstream line;
                    line << "  " << pair << ": W=" << r.statistic << " p=" << r.p
                         << (r.exact ? " (exact)" : "");
                    table << line.str() << "\n";
                } catch (const std::exception& e) {
                    table << "  " << pair << ": " << e.what() << "\n";
                    wj.push_back({{"pair", pair}, {"error", e.what()}});
                }
            }
        }
        write_text(dir / "wilcoxon.json", wj.dump(2) + "\n");
    }

    write_text(dir / "table.txt", table.str());
    std::cout << table.str();
    if (!any_ok) throw std::runtime_error("all methods failed");
    return 0;
}

int cmd_explain(const CliConfig& c) {
    if (c.manifest.empty()) throw CLI::RequiredError("--manifest");
    auto manifest = read_manifest(c.manifest);
    auto cfg = pipeline_config(c);
    std::vector<std::string> warnings;
    auto data = prepare_bags(manifest, cfg, &warnings);
    for (const auto& w : warnings) log(LogLevel::Warn, w);

    // train on fold 0's split and explain its held-out preparations
    auto splits = make_fold_splits(data.bags, c.folds, c.seed);
    std::set<std::string> test_ids(splits[0].test_ids.begin(), splits[0].test_ids.end());
    std::vector<const MilBag*> train_bags, test_bags;
    for (const auto& b : data.bags)
        (test_ids.count(b.image_id) ? test_bags : train_bags).push_back(&b);
    log(LogLevel::Info, "training attention model on " + std::to_string(train_bags.size()) +
                            " bags, explaining " + std::to_string(test_bags.size()));

    auto trained = train(train_bags, MilMethod::AbMILP, int(data.bags.front().dim()), hyper_of(c));
    auto result = explain(trained.model, test_bags, data, cfg);

    fs::path dir = fs::path(c.workdir) / "explain";
    fs::create_directories(dir);
    write_config(dir, c);
    save_checkpoint(trained.model, (dir / "model.json").string());
    write_text(dir / "explain.json", explain_json(result).dump(2) + "\n");
    write_text(dir / "pbow_profiles.svg", pbow_profile_svg(result.profiles));
    for (const char* prop : {"size", "roundness", "intensity"})
        write_text(dir / (std::string(prop) + "_hist.svg"),
                   property_histogram_svg(result.cells, prop));

    std::vector<PBoWVector> all_pbows;
    for (const auto& [clone, vecs] : result.pbows_by_clone)
        for (const auto& v : vecs) all_pbows.push_back(v);
    std::sort(all_pbows.begin(), all_pbows.end(),
              [](const PBoWVector& a, const PBoWVector& b) { return a.patch_id < b.patch_id; });
    write_text(dir / "pbow.csv", pbow_csv(all_pbows));

    for (const auto& ep : result.essential) {
        const auto& entry = data.manifest_by_id.at(ep.image_id);
        Patch raw = extract_patch(entry, ep.patch_id, cfg.tiling);
        auto seg = identify_primary_objects(raw.pixels, cfg.seg);
        std::vector<RegionProps> props;
        for (const auto& s : seg.segments) props.push_back(region_properties(s.pixels, raw.pixels));
        auto diagram = h0_persistence(centers_point_cloud(props, ep.patch_id));
        write_text(dir / "diagrams" / (ep.patch_id + ".csv"), diagram_csv(diagram));
    }

    std::ostringstream summary;
    for (const auto& line : result.summary) summary << line << "\n";
    if (result.summary.empty()) summary << "no significant differences at alpha " << c.alpha << "\n";
    write_text(dir / "summary.txt", summary.str());
    std::cout << summary.str();
    return 0;
}

int cmd_report(const CliConfig& c) {
    // re-render the human-readable table from a previous run directory
    fs::path dir = fs::path(c.workdir) / "run";
    if (!fs::exists(dir)) throw std::runtime_error("no run directory under " + c.workdir);
    fs::path table = dir / "table.txt";
    if (fs::exists(table)) {
        std::ifstream in(table);
        std::cout << in.rdbuf();
    }
    fs::path summary = fs::path(c.workdir) / "explain" / "summary.txt";
    if (fs::exists(summary)) {
        std::ifstream in(summary);
        std::cout << "\nexplainability summary\n" << in.rdbuf();
    }
    if (!fs::exists(table) && !fs::exists(summary))
        throw std::runtime_error("nothing to report under " + c.workdir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CliConfig c;
    CLI::App app{"bacteria clone classification pipeline"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--manifest", c.manifest, "JSON-lines dataset manifest");
        sub->add_option("--workdir", c.workdir, "output directory");
        sub->add_option("--seed", c.seed, "master RNG seed");
        sub->add_option("--jobs", c.jobs, "parallel workers; 1 = canonical byte-exact outputs")
            ->check(CLI::PositiveNumber);
        sub->add_option("--config", c.config_path, "JSON config file (flags override file values)");
        sub->add_option("--scale", c.scale, "image downscale factor");
        sub->add_option("--patch-size", c.patch_size, "patch side length, px");
        sub->add_option("--stride", c.stride, "tiling stride, px");
        return sub;
    };
    auto add_train = [&](CLI::App* sub) {
        sub->add_option("--method", c.methods, "mv|imax|imean|emax|emean|abmilp (repeatable)");
        sub->add_option("--folds", c.folds, "cross-validation folds")->check(CLI::PositiveNumber);
        sub->add_option("--lr", c.lr, "learning rate");
        sub->add_option("--wd", c.wd, "weight decay");
        sub->add_option("--steps", c.steps, "training steps");
        sub->add_option("--heads", c.heads, "attention heads");
        sub->add_flag("--grid", c.grid, "grid-search lr and weight decay");
        sub->add_option("--alpha", c.alpha, "significance level");
        sub->add_option("--embedder", c.embedder, "builtin|import");
        sub->add_option("--embeddings", c.embeddings, "EMB1 archive for --embedder import");
        return sub;
    };

    auto* synth = add_common(app.add_subcommand("synth", "generate a synthetic dataset"));
    synth->add_option("--isolates", c.isolates, "isolates per clone");
    synth->add_option("--preparations", c.preparations, "preparations per isolate");
    synth->add_option("--images", c.images, "images per preparation");
    synth->add_option("--image-size", c.image_size, "square image side, px");

    auto* tile = add_common(app.add_subcommand("tile", "tile and filter patches"));
    auto* embed = add_common(app.add_subcommand("embed", "compute builtin patch embeddings"));
    auto* import_cmd =
        add_common(app.add_subcommand("import-embeddings", "validate an external EMB1 archive"));
    import_cmd->add_option("--embeddings", c.embeddings, "EMB1 archive path");
    auto* run = add_train(add_common(app.add_subcommand("run", "cross-validated classification")));
    auto* explain_cmd =
        add_train(add_common(app.add_subcommand("explain", "two-path explainability bundle")));
    auto* report_cmd = add_common(app.add_subcommand("report", "re-render tables and summaries"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!c.config_path.empty()) apply_config_file(c, c.config_path, *sub);
        if (sub == synth) return cmd_synth(c);
        if (sub == tile) return cmd_tile(c);
        if (sub == embed) return cmd_embed(c);
        if (sub == import_cmd) return cmd_import_embeddings(c);
        if (sub == run) return cmd_run(c);
        if (sub == explain_cmd) return cmd_explain(c);
        if (sub == report_cmd) return cmd_report(c);
        return 1;
    } catch (const CLI::Error& e) {
        std::cerr << "clonescope: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        log(LogLevel::Error, e.what());
        return 3;
    } catch (const std::exception& e) {
        log(LogLevel::Error, e.what());
        return 2;
    }
}
