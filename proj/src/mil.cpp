#include "clonescope/mil.hpp"
#include "clonescope/rng.hpp"
#include "clonescope/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace clonescope {

const char* method_name(MilMethod m) {
    switch (m) {
        case MilMethod::InstanceMV: return "instance+mv";
        case MilMethod::InstanceMax: return "instance+max";
        case MilMethod::InstanceMean: return "instance+mean";
        case MilMethod::EmbeddingMax: return "embedding+max";
        case MilMethod::EmbeddingMean: return "embedding+mean";
        case MilMethod::AbMILP: return "embedding+abmilp";
    }
    return "?";
}

std::optional<MilMethod> parse_method(const std::string& name) {
    if (name == "mv") return MilMethod::InstanceMV;
    if (name == "imax") return MilMethod::InstanceMax;
    if (name == "imean") return MilMethod::InstanceMean;
    if (name == "emax") return MilMethod::EmbeddingMax;
    if (name == "emean") return MilMethod::EmbeddingMean;
    if (name == "abmilp") return MilMethod::AbMILP;
    return std::nullopt;
}

MilModel MilModel::init(int input_dim, const MilHyper& hyper) {
    MilModel m;
    m.input_dim = input_dim;
    m.attention_dim = hyper.attention_dim;
    m.heads = hyper.heads;
    m.hyper = hyper;

    Rng rng(hyper.seed);
    const double bound = 1.0 / std::sqrt(double(input_dim));
    auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (double& x : v) x = rng.uniform(-bound, bound);
    };
    m.V.resize(m.heads);
    m.w.resize(m.heads);
    for (int k = 0; k < m.heads; ++k) {
        fill(m.V[k], std::size_t(m.attention_dim) * input_dim);
        fill(m.w[k], std::size_t(m.attention_dim));
    }
    fill(m.head_W, std::size_t(kNumClasses) * m.heads * input_dim);
    fill(m.patch_W, std::size_t(kNumClasses) * input_dim);
    m.head_b.fill(0.0);
    m.patch_b.fill(0.0);
    return m;
}

namespace {

void softmax_inplace(std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        s += x;
    }
    for (double& x : v) x /= s;
}

std::array<double, kNumClasses> softmax3(const std::array<double, kNumClasses>& logits) {
    std::array<double, kNumClasses> p = logits;
    double mx = *std::max_element(p.begin(), p.end());
    double s = 0.0;
    for (double& x : p) {
        x = std::exp(x - mx);
        s += x;
    }
    for (double& x : p) x /= s;
    return p;
}

} // namespace

Embedding embed_patch(const Patch& patch) {
    const Image& img = patch.pixels;
    const std::size_t n = img.size();
    Embedding e;
    e.patch_id = patch.patch_id();
    e.v.assign(kBuiltinEmbeddingDim, 0.0);
    if (n == 0) return e;

    // 32-bin histogram of normalized intensities clipped to [-3, 3]
    for (double v : img.pixels) {
        double c = std::clamp(v, -3.0, 3.0);
        int bin = std::min(31, int((c + 3.0) / 6.0 * 32.0));
        e.v[bin] += 1.0;
    }
    for (int i = 0; i < 32; ++i) e.v[i] /= double(n);

    // mean / std / skewness
    double mean = simd::sum(img.pixels.data(), n) / double(n);
    double m2 = 0.0, m3 = 0.0;
    for (double v : img.pixels) {
        double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= double(n);
    m3 /= double(n);
    double sd = m2 > 0 ? std::sqrt(m2) : 0.0;
    e.v[32] = mean;
    e.v[33] = sd;
    e.v[34] = sd > 0 ? m3 / (sd * sd * sd) : 0.0;

    // 9 gradient-orientation bins, magnitude weighted
    constexpr double pi = 3.14159265358979323846;
    double gsum = 0.0;
    std::array<double, 9> gh{};
    for (int y = 1; y + 1 < img.height; ++y) {
        for (int x = 1; x + 1 < img.width; ++x) {
            double gx = img.at(x + 1, y) - img.at(x - 1, y);
            double gy = img.at(x, y + 1) - img.at(x, y - 1);
            double mag = std::sqrt(gx * gx + gy * gy);
            if (mag == 0.0) continue;
            double ang = std::atan2(gy, gx);
            if (ang < 0) ang += pi;
            if (ang >= pi) ang -= pi;
            int bin = std::min(8, int(ang / pi * 9.0));
            gh[bin] += mag;
            gsum += mag;
        }
    }
    for (int i = 0; i < 9; ++i) e.v[35 + i] = gsum > 0 ? gh[i] / gsum : 0.0;

    // 4x5 mean-pooled intensities
    for (int gy = 0; gy < 4; ++gy) {
        for (int gx = 0; gx < 5; ++gx) {
            int x0 = gx * img.width / 5, x1 = (gx + 1) * img.width / 5;
            int y0 = gy * img.height / 4, y1 = (gy + 1) * img.height / 4;
            double s = 0.0;
            std::size_t cnt = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    s += img.at(x, y);
                    ++cnt;
                }
            e.v[44 + gy * 5 + gx] = cnt ? s / double(cnt) : 0.0;
        }
    }
    return e;
}

PoolResult abmilp_pool(const std::vector<Embedding>& h, const MilModel& model) {
    if (h.empty()) throw std::invalid_argument("empty bag");
    const int N = int(h.size());
    const int L = model.input_dim;
    const int M = model.attention_dim;

    PoolResult out;
    out.z.assign(std::size_t(model.heads) * L, 0.0);
    out.attention.assign(N, 0.0);
    out.per_head.assign(model.heads, std::vector<double>(N, 0.0));

    std::vector<double> t(M);
    for (int k = 0; k < model.heads; ++k) {
        std::vector<double>& a = out.per_head[k];
        for (int i = 0; i < N; ++i) {
            const double* hi = h[i].v.data();
            double logit = 0.0;
            for (int m = 0; m < M; ++m) {
                double s = simd::dot(model.V[k].data() + std::size_t(m) * L, hi, L);
                logit += model.w[k][m] * std::tanh(s);
            }
            a[i] = logit;
        }
        softmax_inplace(a);
        double* zk = out.z.data() + std::size_t(k) * L;
        for (int i = 0; i < N; ++i) simd::axpy(a[i], h[i].v.data(), zk, L);
        for (int i = 0; i < N; ++i) out.attention[i] += a[i] / double(model.heads);
    }
    return out;
}

std::vector<double> pool_embedding_max(const std::vector<Embedding>& h) {
    if (h.empty()) throw std::invalid_argument("empty bag");
    std::vector<double> z = h.front().v;
    for (std::size_t i = 1; i < h.size(); ++i)
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = std::max(z[j], h[i].v[j]);
    return z;
}

std::vector<double> pool_embedding_mean(const std::vector<Embedding>& h) {
    if (h.empty()) throw std::invalid_argument("empty bag");
    std::vector<double> z(h.front().v.size(), 0.0);
    for (const auto& e : h) simd::axpy(1.0, e.v.data(), z.data(), z.size());
    for (double& x : z) x /= double(h.size());
    return z;
}

std::vector<std::array<double, kNumClasses>> instance_scores(const std::vector<Embedding>& h,
                                                             const MilModel& model) {
    std::vector<std::array<double, kNumClasses>> out;
    out.reserve(h.size());
    const int L = model.input_dim;
    for (const auto& e : h) {
        std::array<double, kNumClasses> logits;
        for (int c = 0; c < kNumClasses; ++c)
            logits[c] = simd::dot(model.patch_W.data() + std::size_t(c) * L, e.v.data(), L) + model.patch_b[c];
        out.push_back(softmax3(logits));
    }
    return out;
}

InstancePool pool_instance(const std::vector<std::array<double, kNumClasses>>& scores, MilMethod mode) {
    if (scores.empty()) throw std::invalid_argument("no instances");
    InstancePool out;
    switch (mode) {
        case MilMethod::InstanceMV: {
            std::array<int, kNumClasses> votes{};
            for (const auto& row : scores) {
                int am = int(std::max_element(row.begin(), row.end()) - row.begin());
                ++votes[am];
            }
            int best = int(std::max_element(votes.begin(), votes.end()) - votes.begin());
            out.label = best;
            out.tie = std::count(votes.begin(), votes.end(), votes[best]) > 1;
            for (int c = 0; c < kNumClasses; ++c)
                out.probs[c] = double(votes[c]) / double(scores.size());
            break;
        }
        case MilMethod::InstanceMax: {
            out.probs.fill(0.0);
            for (const auto& row : scores)
                for (int c = 0; c < kNumClasses; ++c) out.probs[c] = std::max(out.probs[c], row[c]);
            double s = out.probs[0] + out.probs[1] + out.probs[2];
            for (double& p : out.probs) p /= s;
            out.label = int(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
            break;
        }
        case MilMethod::InstanceMean: {
            out.probs.fill(0.0);
            for (const auto& row : scores)
                for (int c = 0; c < kNumClasses; ++c) out.probs[c] += row[c] / double(scores.size());
            out.label = int(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
            break;
        }
        default:
            throw std::invalid_argument("pool_instance: not an instance method");
    }
    return out;
}

std::array<double, kNumClasses> forward_image(const MilBag& bag, const MilModel& model, MilMethod method) {
    if (is_instance_method(method)) return pool_instance(instance_scores(bag.instances, model), method).probs;

    std::vector<double> z;
    if (method == MilMethod::AbMILP)
        z = abmilp_pool(bag.instances, model).z;
    else if (method == MilMethod::EmbeddingMax)
        z = pool_embedding_max(bag.instances);
    else
        z = pool_embedding_mean(bag.instances);

    if (z.size() != model.head_W.size() / kNumClasses)
        throw std::invalid_argument("method/model dimension mismatch");
    std::array<double, kNumClasses> logits;
    for (int c = 0; c < kNumClasses; ++c)
        logits[c] = simd::dot(model.head_W.data() + std::size_t(c) * z.size(), z.data(), z.size()) +
                    model.head_b[c];
    return softmax3(logits);
}

double loss_and_gradients(const MilModel& model, const std::vector<const MilBag*>& batch,
                          double weight_decay, Gradients& g) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const int L = model.input_dim;
    const int M = model.attention_dim;
    const int ZL = model.heads * L;

    g.V.assign(model.heads, std::vector<double>(std::size_t(M) * L, 0.0));
    g.w.assign(model.heads, std::vector<double>(M, 0.0));
    g.head_W.assign(std::size_t(kNumClasses) * ZL, 0.0);
    g.head_b.fill(0.0);

    double loss = 0.0;
    const double inv_batch = 1.0 / double(batch.size());

    std::vector<double> t(M), s(M);
    for (const MilBag* bag : batch) {
        if (bag->label < 0 || bag->label >= kNumClasses) throw std::invalid_argument("unlabeled bag " + bag->image_id);
        const int N = int(bag->instances.size());
        PoolResult pool = abmilp_pool(bag->instances, model);

        std::array<double, kNumClasses> logits;
        for (int c = 0; c < kNumClasses; ++c)
            logits[c] = simd::dot(model.head_W.data() + std::size_t(c) * ZL, pool.z.data(), ZL) +
                        model.head_b[c];
        std::array<double, kNumClasses> p = softmax3(logits);
        double nll = -std::log(std::max(p[bag->label], 1e-300));
        if (!std::isfinite(nll)) throw std::runtime_error("non-finite loss at bag " + bag->image_id);
        loss += nll * inv_batch;

        // dlogits = p - onehot
        std::array<double, kNumClasses> dlogits = p;
        dlogits[bag->label] -= 1.0;

        std::vector<double> dz(ZL, 0.0);
        for (int c = 0; c < kNumClasses; ++c) {
            double dc = dlogits[c] * inv_batch;
            simd::axpy(dc, pool.z.data(), g.head_W.data() + std::size_t(c) * ZL, ZL);
            g.head_b[c] += dc;
            simd::axpy(dc, model.head_W.data() + std::size_t(c) * ZL, dz.data(), ZL);
        }

        for (int k = 0; k < model.heads; ++k) {
            const std::vector<double>& a = pool.per_head[k];
            const double* dzk = dz.data() + std::size_t(k) * L;

            // da_i = dz_k . h_i ; dl through the softmax Jacobian
            std::vector<double> da(N), dl(N);
            double dot_a_da = 0.0;
            for (int i = 0; i < N; ++i) {
                da[i] = simd::dot(dzk, bag->instances[i].v.data(), L);
                dot_a_da += a[i] * da[i];
            }
            for (int i = 0; i < N; ++i) dl[i] = a[i] * (da[i] - dot_a_da);

            for (int i = 0; i < N; ++i) {
                if (dl[i] == 0.0) continue;
                const double* hi = bag->instances[i].v.data();
                for (int m = 0; m < M; ++m) {
                    double sv = simd::dot(model.V[k].data() + std::size_t(m) * L, hi, L);
                    double tv = std::tanh(sv);
                    g.w[k][m] += dl[i] * tv;
                    double ds = dl[i] * model.w[k][m] * (1.0 - tv * tv);
                    simd::axpy(ds, hi, g.V[k].data() + std::size_t(m) * L, L);
                }
            }
        }
    }

    if (weight_decay != 0.0) {
        double sq = 0.0;
        auto decay = [&](const std::vector<double>& p, std::vector<double>& gp) {
            sq += simd::sumsq(p.data(), p.size());
            simd::axpy(weight_decay, p.data(), gp.data(), p.size());
        };
        for (int k = 0; k < model.heads; ++k) {
            decay(model.V[k], g.V[k]);
            decay(model.w[k], g.w[k]);
        }
        decay(model.head_W, g.head_W);
        for (int c = 0; c < kNumClasses; ++c) {
            sq += model.head_b[c] * model.head_b[c];
            g.head_b[c] += weight_decay * model.head_b[c];
        }
        loss += 0.5 * weight_decay * sq;
    }
    return loss;
}

namespace {

// class-weighted sampler: p(bag) proportional to 1 / class count
struct BagSampler {
    std::vector<double> cdf;
    const std::vector<const MilBag*>* bags;

    BagSampler(const std::vector<const MilBag*>& b) : bags(&b) {
        std::array<std::size_t, kNumClasses> counts{};
        for (const MilBag* bag : b) ++counts[bag->label];
        for (int c = 0; c < kNumClasses; ++c)
            if (counts[c] == 0) throw std::runtime_error("class " + std::to_string(c) + " absent from training set");
        double acc = 0.0;
        cdf.reserve(b.size());
        for (const MilBag* bag : b) {
            acc += 1.0 / double(counts[bag->label]);
            cdf.push_back(acc);
        }
    }

    const MilBag* sample(Rng& rng) const {
        double u = rng.uniform() * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t i = std::min(std::size_t(it - cdf.begin()), bags->size() - 1);
        return (*bags)[i];
    }
};

void check_classes(const std::vector<const MilBag*>& bags) {
    std::array<std::size_t, kNumClasses> counts{};
    for (const MilBag* b : bags) {
        if (b->label < 0 || b->label >= kNumClasses) throw std::runtime_error("unlabeled bag " + b->image_id);
        ++counts[b->label];
    }
    for (int c = 0; c < kNumClasses; ++c)
        if (counts[c] == 0) throw std::runtime_error("class " + std::to_string(c) + " absent from training set");
}

} // namespace

TrainResult train(const std::vector<const MilBag*>& bags, MilMethod method, int input_dim,
                  const MilHyper& hyper) {
    if (bags.empty()) throw std::invalid_argument("no training bags");
    check_classes(bags);

    MilHyper h = hyper;
    if (method != MilMethod::AbMILP) h.heads = 1;
    TrainResult result{MilModel::init(input_dim, h), {}};
    MilModel& model = result.model;
    Rng rng(hyper.seed ^ 0x5ca1ab1eULL);
    BagSampler sampler(bags);

    const int L = input_dim;

    // pooled vectors are fixed inputs for the embedding baselines
    std::vector<std::vector<double>> pooled;
    if (method == MilMethod::EmbeddingMax || method == MilMethod::EmbeddingMean) {
        pooled.reserve(bags.size());
        for (const MilBag* b : bags)
            pooled.push_back(method == MilMethod::EmbeddingMax ? pool_embedding_max(b->instances)
                                                               : pool_embedding_mean(b->instances));
    }
    std::map<const MilBag*, std::size_t> bag_index;
    for (std::size_t i = 0; i < bags.size(); ++i) bag_index[bags[i]] = i;

    Gradients g;
    double lr = h.lr;
    for (int step = 0; step < h.steps; ++step) {
        if (step > 0 && h.lr_decay_every > 0 && step % h.lr_decay_every == 0) lr *= h.lr_decay;
        const MilBag* bag = sampler.sample(rng);
        double loss = 0.0;

        if (method == MilMethod::AbMILP) {
            std::vector<const MilBag*> batch{bag};
            loss = loss_and_gradients(model, batch, h.weight_decay, g);
            for (int k = 0; k < model.heads; ++k) {
                simd::axpy(-lr, g.V[k].data(), model.V[k].data(), model.V[k].size());
                simd::axpy(-lr, g.w[k].data(), model.w[k].data(), model.w[k].size());
            }
            simd::axpy(-lr, g.head_W.data(), model.head_W.data(), model.head_W.size());
            for (int c = 0; c < kNumClasses; ++c) model.head_b[c] -= lr * g.head_b[c];
        } else if (is_instance_method(method)) {
            // per-patch softmax regression, gradient averaged over the bag
            std::vector<double> gW(std::size_t(kNumClasses) * L, 0.0);
            std::array<double, kNumClasses> gb{};
            const double inv = 1.0 / double(bag->instances.size());
            for (const Embedding& e : bag->instances) {
                std::array<double, kNumClasses> logits;
                for (int c = 0; c < kNumClasses; ++c)
                    logits[c] = simd::dot(model.patch_W.data() + std::size_t(c) * L, e.v.data(), L) +
                                model.patch_b[c];
                auto p = softmax3(logits);
                loss -= std::log(std::max(p[bag->label], 1e-300)) * inv;
                p[bag->label] -= 1.0;
                for (int c = 0; c < kNumClasses; ++c) {
                    simd::axpy(p[c] * inv, e.v.data(), gW.data() + std::size_t(c) * L, L);
                    gb[c] += p[c] * inv;
                }
            }
            if (h.weight_decay != 0.0) {
                loss += 0.5 * h.weight_decay * simd::sumsq(model.patch_W.data(), model.patch_W.size());
                simd::axpy(h.weight_decay, model.patch_W.data(), gW.data(), gW.size());
            }
            simd::axpy(-lr, gW.data(), model.patch_W.data(), model.patch_W.size());
            for (int c = 0; c < kNumClasses; ++c) model.patch_b[c] -= lr * gb[c];
        } else {
            // softmax regression on the pooled vector
            const std::vector<double>& z = pooled[bag_index[bag]];
            std::array<double, kNumClasses> logits;
            for (int c = 0; c < kNumClasses; ++c)
                logits[c] = simd::dot(model.head_W.data() + std::size_t(c) * L, z.data(), L) +
                            model.head_b[c];
            auto p = softmax3(logits);
            loss = -std::log(std::max(p[bag->label], 1e-300));
            if (h.weight_decay != 0.0)
                loss += 0.5 * h.weight_decay * simd::sumsq(model.head_W.data(), model.head_W.size());
            p[bag->label] -= 1.0;
            for (int c = 0; c < kNumClasses; ++c) {
                double* wc = model.head_W.data() + std::size_t(c) * L;
                for (int j = 0; j < L; ++j)
                    wc[j] -= lr * (p[c] * z[j] + h.weight_decay * wc[j]);
                model.head_b[c] -= lr * p[c];
            }
        }
        result.loss_history.push_back(loss);
    }
    return result;
}

MetricsReport evaluate(const MilModel& model, const std::vector<const MilBag*>& bags, MilMethod method) {
    MetricsReport r;
    if (bags.empty()) return r;

    std::vector<std::array<double, kNumClasses>> probs;
    std::vector<int> truth, pred;
    for (const MilBag* b : bags) {
        auto p = forward_image(*b, model, method);
        probs.push_back(p);
        truth.push_back(b->label);
        pred.push_back(int(std::max_element(p.begin(), p.end()) - p.begin()));
    }

    for (std::size_t i = 0; i < bags.size(); ++i) ++r.confusion[truth[i]][pred[i]];
    std::uint64_t correct = 0;
    for (int c = 0; c < kNumClasses; ++c) correct += r.confusion[c][c];
    r.accuracy = double(correct) / double(bags.size());

    double psum = 0, rsum = 0, fsum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        std::uint64_t tp = r.confusion[c][c], fp = 0, fn = 0;
        for (int o = 0; o < kNumClasses; ++o) {
            if (o == c) continue;
            fp += r.confusion[o][c];
            fn += r.confusion[c][o];
        }
        double prec, rec;
        if (tp + fp == 0) {
            prec = 0.0;
            r.zero_division_flag = true;
        } else
            prec = double(tp) / double(tp + fp);
        if (tp + fn == 0) {
            rec = 0.0;
            r.zero_division_flag = true;
        } else
            rec = double(tp) / double(tp + fn);
        double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        psum += prec;
        rsum += rec;
        fsum += f1;
    }
    r.macro_precision = psum / kNumClasses;
    r.macro_recall = rsum / kNumClasses;
    r.macro_f1 = fsum / kNumClasses;

    if (method == MilMethod::InstanceMV) {
        r.auc_applicable = false;
        r.macro_auc = std::nan("");
        return r;
    }

    // macro one-vs-rest AUC via midranks
    double auc_sum = 0.0;
    int auc_classes = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<std::pair<double, int>> sc; // (score, is_positive)
        std::size_t npos = 0;
        for (std::size_t i = 0; i < bags.size(); ++i) {
            sc.push_back({probs[i][c], truth[i] == c});
            npos += truth[i] == c;
        }
        std::size_t nneg = bags.size() - npos;
        if (npos == 0 || nneg == 0) continue;
        std::sort(sc.begin(), sc.end(), [](auto& a, auto& b) { return a.first < b.first; });
        double rank_pos = 0.0;
        std::size_t i = 0;
        while (i < sc.size()) {
            std::size_t j = i;
            while (j + 1 < sc.size() && sc[j + 1].first == sc[i].first) ++j;
            double midrank = 0.5 * double(i + 1 + j + 1);
            for (std::size_t k = i; k <= j; ++k)
                if (sc[k].second) rank_pos += midrank;
            i = j + 1;
        }
        auc_sum += (rank_pos - double(npos) * (npos + 1) / 2.0) / (double(npos) * double(nneg));
        ++auc_classes;
    }
    r.macro_auc = auc_classes ? auc_sum / auc_classes : std::nan("");
    return r;
}

std::vector<FoldSplit> make_fold_splits(const std::vector<MilBag>& bags, int folds, std::uint64_t seed) {
    // isolate -> preparation -> image ids, in first-seen order
    std::vector<std::string> isolate_order;
    std::map<std::string, std::vector<std::string>> prep_order;
    std::map<std::string, std::map<std::string, std::vector<std::string>>> tree;
    for (const MilBag& b : bags) {
        if (!tree.count(b.isolate)) isolate_order.push_back(b.isolate);
        auto& preps = tree[b.isolate];
        if (!preps.count(b.preparation)) prep_order[b.isolate].push_back(b.preparation);
        preps[b.preparation].push_back(b.image_id);
    }
    for (const auto& iso : isolate_order)
        if (prep_order[iso].size() != 2)
            throw std::runtime_error("isolate " + iso + " has " + std::to_string(prep_order[iso].size()) +
                                     " preparations, expected 2");

    std::vector<FoldSplit> out;
    Rng rng(seed);
    for (int f = 0; f < folds; ++f) {
        FoldSplit split;
        split.fold = f;
        for (const auto& iso : isolate_order) {
            int train_prep = int(rng.uniform_int(2));
            for (int pi = 0; pi < 2; ++pi) {
                const auto& ids = tree[iso][prep_order[iso][pi]];
                auto& dst = pi == train_prep ? split.train_ids : split.test_ids;
                dst.insert(dst.end(), ids.begin(), ids.end());
            }
        }
        out.push_back(std::move(split));
    }
    return out;
}

namespace {

double sum_metric(const MetricsReport& m, int which) {
    switch (which) {
        case 0: return m.accuracy;
        case 1: return m.macro_precision;
        case 2: return m.macro_recall;
        case 3: return m.macro_f1;
        default: return m.macro_auc;
    }
}

void set_metric(MetricsReport& m, int which, double v) {
    switch (which) {
        case 0: m.accuracy = v; break;
        case 1: m.macro_precision = v; break;
        case 2: m.macro_recall = v; break;
        case 3: m.macro_f1 = v; break;
        default: m.macro_auc = v; break;
    }
}

} // namespace

CrossValidation cross_validate(const std::vector<MilBag>& bags, MilMethod method, int folds,
                               const MilHyper& hyper) {
    if (bags.empty()) throw std::invalid_argument("no bags");
    const int input_dim = int(bags.front().dim());

    std::map<std::string, const MilBag*> by_id;
    for (const MilBag& b : bags) by_id[b.image_id] = &b;

    CrossValidation cv;
    for (FoldSplit& split : make_fold_splits(bags, folds, hyper.seed)) {
        std::vector<const MilBag*> train_bags, test_bags;
        for (const auto& id : split.train_ids) train_bags.push_back(by_id.at(id));
        for (const auto& id : split.test_ids) test_bags.push_back(by_id.at(id));

        MilHyper h = hyper;
        h.seed = hyper.seed + std::uint64_t(split.fold) * 7919;
        TrainResult tr = train(train_bags, method, input_dim, h);
        FoldOutcome fo;
        fo.split = std::move(split);
        fo.metrics = evaluate(tr.model, test_bags, method);
        fo.model = std::move(tr.model);
        cv.folds.push_back(std::move(fo));
    }

    const double n = double(cv.folds.size());
    cv.mean.auc_applicable = method != MilMethod::InstanceMV;
    cv.stddev.auc_applicable = cv.mean.auc_applicable;
    for (int w = 0; w < 5; ++w) {
        double m = 0.0;
        for (const auto& f : cv.folds) m += sum_metric(f.metrics, w);
        m /= n;
        double s = 0.0;
        for (const auto& f : cv.folds) {
            double d = sum_metric(f.metrics, w) - m;
            s += d * d;
        }
        set_metric(cv.mean, w, m);
        set_metric(cv.stddev, w, n > 1 ? std::sqrt(s / (n - 1)) : 0.0);
    }
    for (const auto& f : cv.folds)
        for (int a = 0; a < kNumClasses; ++a)
            for (int b = 0; b < kNumClasses; ++b) cv.mean.confusion[a][b] += f.metrics.confusion[a][b];
    return cv;
}

GridSearchResult grid_search(const std::vector<const MilBag*>& train_bags, MilMethod method,
                             int input_dim, const std::vector<double>& lr_grid,
                             const std::vector<double>& wd_grid, const MilHyper& base,
                             double validation_fraction) {
    if (lr_grid.empty() || wd_grid.empty()) throw std::invalid_argument("empty grid");

    // stratified validation split, seeded
    std::array<std::vector<const MilBag*>, kNumClasses> by_class;
    for (const MilBag* b : train_bags) by_class[b->label].push_back(b);
    Rng rng(base.seed ^ 0x6a09e667ULL);
    std::vector<const MilBag*> fit, val;
    for (auto& cls : by_class) {
        rng.shuffle(cls.begin(), cls.end());
        std::size_t nval = std::max<std::size_t>(1, std::size_t(double(cls.size()) * validation_fraction));
        if (nval >= cls.size()) nval = cls.size() > 1 ? cls.size() - 1 : 0;
        for (std::size_t i = 0; i < cls.size(); ++i)
            (i < nval ? val : fit).push_back(cls[i]);
    }
    if (val.empty()) throw std::runtime_error("validation split empty");

    GridSearchResult out{lr_grid.front(), wd_grid.front(), {}};
    double best_acc = -1.0;
    for (double lr : lr_grid) {
        for (double wd : wd_grid) {
            MilHyper h = base;
            h.lr = lr;
            h.weight_decay = wd;
            TrainResult tr = train(fit, method, input_dim, h);
            double acc = evaluate(tr.model, val, method).accuracy;
            out.table.push_back({lr, wd, acc});
            if (acc > best_acc ||
                (acc == best_acc && (lr < out.best_lr ||
                                     (lr == out.best_lr && wd < out.best_weight_decay)))) {
                best_acc = acc;
                out.best_lr = lr;
                out.best_weight_decay = wd;
            }
        }
    }
    return out;
}

std::vector<EssentialPatch> essential_patches(const MilModel& model,
                                              const std::vector<const MilBag*>& bags) {
    std::vector<EssentialPatch> out;
    for (const MilBag* bag : bags) {
        auto p = forward_image(*bag, model, MilMethod::AbMILP);
        int pred = int(std::max_element(p.begin(), p.end()) - p.begin());
        if (pred != bag->label) continue;
        PoolResult pool = abmilp_pool(bag->instances, model);
        std::vector<int> idx(bag->instances.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return pool.attention[a] > pool.attention[b]; });
        for (std::size_t k = 0; k < std::min<std::size_t>(2, idx.size()); ++k)
            out.push_back({bag->image_id, bag->instances[idx[k]].patch_id, pool.attention[idx[k]]});
    }
    return out;
}

} // namespace clonescope
