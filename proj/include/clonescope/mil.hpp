#pragma once
// Multiple-instance classification: hand-crafted patch embedder, EMB1
// embedding import, attention pooling with baseline poolings, gradient
// training, cross-validation by preparation, and metrics.

#include "clonescope/manifest.hpp"
#include "clonescope/tiling.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clonescope {

inline constexpr int kNumClasses = 3;
inline constexpr int kBuiltinEmbeddingDim = 64;

struct Embedding {
    std::vector<double> v;
    std::string patch_id;
};

struct MilBag {
    std::string image_id;
    std::vector<Embedding> instances;
    int label = -1; // class index into the experiment's clone list
    std::string clone;
    std::string isolate;
    std::string preparation;

    std::size_t dim() const { return instances.empty() ? 0 : instances.front().v.size(); }
};

enum class MilMethod { InstanceMV, InstanceMax, InstanceMean, EmbeddingMax, EmbeddingMean, AbMILP };

const char* method_name(MilMethod m);
std::optional<MilMethod> parse_method(const std::string& name);
inline bool is_instance_method(MilMethod m) {
    return m == MilMethod::InstanceMV || m == MilMethod::InstanceMax || m == MilMethod::InstanceMean;
}

struct MilHyper {
    double lr = 0.05;
    double weight_decay = 0.0;
    int steps = 2000;
    int lr_decay_every = 1000; // step-decay x0.1, matching the training schedule
    double lr_decay = 0.1;
    int attention_dim = 32; // M
    int heads = 3;          // parallel (V, w) pairs; 1 recovers the single-head operator
    std::uint64_t seed = 0;
};

struct MilModel {
    int input_dim = 0; // L
    int attention_dim = 0;
    int heads = 1;
    // attention parameters, per head: V is M x L row-major, w is length M
    std::vector<std::vector<double>> V;
    std::vector<std::vector<double>> w;
    // classifier on pooled z (length heads*L)
    std::vector<double> head_W; // kNumClasses x (heads*L) row-major
    std::array<double, kNumClasses> head_b{};
    // per-patch classifier for the instance baselines
    std::vector<double> patch_W; // kNumClasses x L row-major
    std::array<double, kNumClasses> patch_b{};
    MilHyper hyper;

    static MilModel init(int input_dim, const MilHyper& hyper);
};

// deterministic hand-crafted features: 32-bin histogram, moments,
// gradient-orientation bins, 4x5 mean-pooled intensities
Embedding embed_patch(const Patch& patch);

// EMB1 archive: magic "EMB1", u32 record count, u32 L, then per record
// u16+image id, u16+patch id, L x f32 little-endian.
void write_embeddings(const std::vector<MilBag>& bags, const std::string& path);
std::vector<MilBag> import_embeddings(const std::string& path, const std::vector<ManifestEntry>& manifest,
                                      const std::vector<std::string>& clone_order);

struct PoolResult {
    std::vector<double> z;                      // heads*L
    std::vector<double> attention;              // N, averaged over heads, sums to 1
    std::vector<std::vector<double>> per_head;  // heads x N
};

PoolResult abmilp_pool(const std::vector<Embedding>& h, const MilModel& model);

std::vector<double> pool_embedding_max(const std::vector<Embedding>& h);
std::vector<double> pool_embedding_mean(const std::vector<Embedding>& h);

// row i = softmax(patch_W h_i + patch_b)
std::vector<std::array<double, kNumClasses>> instance_scores(const std::vector<Embedding>& h,
                                                             const MilModel& model);

struct InstancePool {
    std::array<double, kNumClasses> probs{};
    int label = -1;
    bool tie = false; // majority-vote tie, lowest class index won
};
InstancePool pool_instance(const std::vector<std::array<double, kNumClasses>>& scores, MilMethod mode);

std::array<double, kNumClasses> forward_image(const MilBag& bag, const MilModel& model, MilMethod method);

struct Gradients {
    std::vector<std::vector<double>> V;
    std::vector<std::vector<double>> w;
    std::vector<double> head_W;
    std::array<double, kNumClasses> head_b{};
};

// mean categorical cross-entropy of the attention route over the batch,
// plus weight_decay/2 * ||params||^2; exact backpropagation
double loss_and_gradients(const MilModel& model, const std::vector<const MilBag*>& batch,
                          double weight_decay, Gradients& out);

struct TrainResult {
    MilModel model;
    std::vector<double> loss_history;
};

// class-weighted bag sampling (probability inversely proportional to
// class count), step-decayed gradient descent, deterministic per seed
TrainResult train(const std::vector<const MilBag*>& bags, MilMethod method, int input_dim,
                  const MilHyper& hyper);

struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double macro_auc = 0.0; // NaN when probabilities are unavailable (instance+mv)
    bool auc_applicable = true;
    bool zero_division_flag = false;
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{}; // [truth][pred]
};

MetricsReport evaluate(const MilModel& model, const std::vector<const MilBag*>& bags, MilMethod method);

struct FoldSplit {
    int fold = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

struct FoldOutcome {
    FoldSplit split;
    MetricsReport metrics;
    MilModel model;
};

struct CrossValidation {
    std::vector<FoldOutcome> folds;
    MetricsReport mean;
    MetricsReport stddev;
};

// per fold and isolate, one whole preparation trains and the other tests
std::vector<FoldSplit> make_fold_splits(const std::vector<MilBag>& bags, int folds, std::uint64_t seed);

CrossValidation cross_validate(const std::vector<MilBag>& bags, MilMethod method, int folds,
                               const MilHyper& hyper);

struct GridCell {
    double lr;
    double weight_decay;
    double validation_accuracy;
};

struct GridSearchResult {
    double best_lr;
    double best_weight_decay;
    std::vector<GridCell> table;
};

// selects by accuracy on a validation split carved from the training
// bags; ties break toward lower lr, then lower weight decay
GridSearchResult grid_search(const std::vector<const MilBag*>& train_bags, MilMethod method,
                             int input_dim, const std::vector<double>& lr_grid,
                             const std::vector<double>& wd_grid, const MilHyper& base,
                             double validation_fraction = 0.25);

struct EssentialPatch {
    std::string image_id;
    std::string patch_id;
    double attention;
};

// top-2 attention patches of each correctly predicted image
std::vector<EssentialPatch> essential_patches(const MilModel& model,
                                              const std::vector<const MilBag*>& bags);

void save_checkpoint(const MilModel& model, const std::string& path);
MilModel load_checkpoint(const std::string& path);

} // namespace clonescope
