#include "clonescope/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace clonescope {

using nlohmann::json;

namespace {

// fixed-precision number formatting keeps outputs byte-stable
std::string fmt(double v, int digits = 6) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

json confusion_json(const MetricsReport& m) {
    json rows = json::array();
    for (const auto& row : m.confusion) {
        json r = json::array();
        for (auto v : row) r.push_back(v);
        rows.push_back(r);
    }
    return rows;
}

} // namespace

json metrics_json(const MetricsReport& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["macro_precision"] = m.macro_precision;
    j["macro_recall"] = m.macro_recall;
    j["macro_f1"] = m.macro_f1;
    if (m.auc_applicable)
        j["macro_auc"] = m.macro_auc;
    else
        j["macro_auc"] = "n/a";
    j["zero_division_flag"] = m.zero_division_flag;
    j["confusion"] = confusion_json(m);
    j["averaging"] = "macro";
    return j;
}

json cross_validation_json(const CrossValidation& cv, MilMethod method) {
    json j;
    j["method"] = method_name(method);
    j["mean"] = metrics_json(cv.mean);
    j["stddev"] = metrics_json(cv.stddev);
    json folds = json::array();
    for (const auto& f : cv.folds) {
        json fj;
        fj["fold"] = f.split.fold;
        fj["train_ids"] = f.split.train_ids;
        fj["test_ids"] = f.split.test_ids;
        fj["metrics"] = metrics_json(f.metrics);
        folds.push_back(fj);
    }
    j["folds"] = folds;
    return j;
}

json test_result_json(const TestResult& r) {
    json j;
    j["statistic"] = r.statistic;
    j["p"] = r.p;
    j["method"] = r.method;
    j["n1"] = r.n1;
    j["n2"] = r.n2;
    j["exact"] = r.exact;
    j["degenerate"] = r.degenerate;
    if (r.zeros_dropped) j["zeros_dropped"] = r.zeros_dropped;
    return j;
}

std::string confusion_csv(const MetricsReport& m, const std::vector<std::string>& clone_order) {
    std::ostringstream os;
    os << "truth\\pred";
    for (int c = 0; c < kNumClasses; ++c)
        os << "," << (c < int(clone_order.size()) ? clone_order[c] : "class" + std::to_string(c));
    os << "\n";
    for (int t = 0; t < kNumClasses; ++t) {
        os << (t < int(clone_order.size()) ? clone_order[t] : "class" + std::to_string(t));
        for (int c = 0; c < kNumClasses; ++c) os << "," << m.confusion[t][c];
        os << "\n";
    }
    return os.str();
}

std::string table_header() {
    std::ostringstream os;
    os << std::left << std::setw(18) << "method" << std::setw(14) << "accuracy" << std::setw(14)
       << "precision" << std::setw(14) << "recall" << std::setw(14) << "f1" << std::setw(14) << "auc";
    return os.str();
}

std::string table_row(MilMethod method, const CrossValidation& cv) {
    auto cell = [](double mean, double sd) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1) << mean * 100.0 << " +/- " << sd * 100.0;
        return os.str();
    };
    std::ostringstream os;
    os << std::left << std::setw(18) << method_name(method)
       << std::setw(14) << cell(cv.mean.accuracy, cv.stddev.accuracy)
       << std::setw(14) << cell(cv.mean.macro_precision, cv.stddev.macro_precision)
       << std::setw(14) << cell(cv.mean.macro_recall, cv.stddev.macro_recall)
       << std::setw(14) << cell(cv.mean.macro_f1, cv.stddev.macro_f1) << std::setw(14)
       << (cv.mean.auc_applicable ? cell(cv.mean.macro_auc, cv.stddev.macro_auc) : std::string("n/a"));
    return os.str();
}

std::string diagram_csv(const PersistenceDiagram& d) {
    std::ostringstream os;
    os << "birth,death\n";
    for (double death : d.deaths) os << "0," << fmt(death) << "\n";
    return os.str();
}

std::string pbow_csv(const std::vector<PBoWVector>& vectors) {
    std::ostringstream os;
    os << "patch_id";
    for (int b = 0; b < kPBoWBins; ++b) os << ",bin" << b;
    os << ",overflow\n";
    for (const auto& v : vectors) {
        os << v.patch_id;
        for (auto c : v.counts) os << "," << c;
        os << "," << v.overflow << "\n";
    }
    return os.str();
}

json explain_json(const ExplainResult& r) {
    json j;
    json essential = json::array();
    for (const auto& e : r.essential) {
        essential.push_back({{"image_id", e.image_id}, {"patch_id", e.patch_id},
                             {"attention", e.attention}});
    }
    j["essential_patches"] = essential;

    json profiles;
    for (const auto& [clone, p] : r.profiles) {
        json pj;
        pj["n"] = p.n;
        pj["mean"] = std::vector<double>(p.mean.begin(), p.mean.end());
        pj["ci_half_width"] = std::vector<double>(p.ci_half_width.begin(), p.ci_half_width.end());
        profiles[clone] = pj;
    }
    j["pbow_profiles"] = profiles;

    json pairs = json::array();
    for (const auto& pr : r.pbow_pairs) {
        json pj;
        pj["clone_a"] = pr.clone_a;
        pj["clone_b"] = pr.clone_b;
        pj["alpha"] = pr.significance.alpha;
        pj["significant_bins"] = pr.significance.significant_bins;
        pj["p"] = std::vector<double>(pr.significance.p.begin(), pr.significance.p.end());
        json ra = json::array(), rb = json::array();
        for (const auto& s : pr.representatives_a)
            ra.push_back({{"patch_id", s.patch_id}, {"score", s.score}});
        for (const auto& s : pr.representatives_b)
            rb.push_back({{"patch_id", s.patch_id}, {"score", s.score}});
        pj["representatives_a"] = ra;
        pj["representatives_b"] = rb;
        pairs.push_back(pj);
    }
    j["pbow_pairs"] = pairs;

    json cells = json::array();
    for (const auto& c : r.cells) {
        cells.push_back({{"patch_id", c.patch_id},
                         {"clone", c.clone},
                         {"area", c.props.area},
                         {"roundness", c.props.roundness},
                         {"mean_intensity", c.props.mean_intensity},
                         {"major_axis", c.props.major_axis},
                         {"minor_axis", c.props.minor_axis},
                         {"refined_fallback", c.refined_fallback}});
    }
    j["cells"] = cells;

    auto tests_json = [](const std::vector<CloneComparison>& tests) {
        json arr = json::array();
        for (const auto& t : tests) {
            arr.push_back({{"clone_a", t.clone_a},
                           {"clone_b", t.clone_b},
                           {"welch", test_result_json(t.welch)},
                           {"mann_whitney", test_result_json(t.mann_whitney)}});
        }
        return arr;
    };
    j["size_tests"] = tests_json(r.size_tests);
    j["roundness_tests"] = tests_json(r.roundness_tests);
    j["intensity_tests"] = tests_json(r.intensity_tests);
    j["summary"] = r.summary;
    return j;
}

namespace {

const char* kPalette[] = {"#4878a8", "#d8734a", "#5ea05e", "#9468bd", "#c8aa48", "#777777"};

struct SvgCanvas {
    std::ostringstream os;
    int width, height;

    SvgCanvas(int w, int h) : width(w), height(h) {
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
           << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
           << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    }
    void rect(double x, double y, double w, double h, const std::string& fill) {
        os << "<rect x=\"" << fmt(x, 2) << "\" y=\"" << fmt(y, 2) << "\" width=\"" << fmt(w, 2)
           << "\" height=\"" << fmt(h, 2) << "\" fill=\"" << fill << "\"/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double sw = 1.0) {
        os << "<line x1=\"" << fmt(x1, 2) << "\" y1=\"" << fmt(y1, 2) << "\" x2=\"" << fmt(x2, 2)
           << "\" y2=\"" << fmt(y2, 2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
           << fmt(sw, 2) << "\"/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 12,
              const std::string& anchor = "start") {
        os << "<text x=\"" << fmt(x, 2) << "\" y=\"" << fmt(y, 2) << "\" font-size=\"" << size
           << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
    }
    std::string finish() {
        os << "</svg>\n";
        return os.str();
    }
};

} // namespace

std::string pbow_profile_svg(const std::map<std::string, ClonePBoWProfile>& profiles) {
    const int W = 1200, H = 420;
    const double left = 60, right = 30, top = 40, bottom = 50;
    const double plot_w = W - left - right, plot_h = H - top - bottom;
    SvgCanvas svg(W, H);

    double ymax = 1e-9;
    for (const auto& [_, p] : profiles)
        for (int b = 0; b < kPBoWBins; ++b) ymax = std::max(ymax, p.mean[b] + p.ci_half_width[b]);
    ymax *= 1.05;

    auto ypix = [&](double v) { return top + plot_h * (1.0 - v / ymax); };
    svg.line(left, top, left, top + plot_h, "black");
    svg.line(left, top + plot_h, left + plot_w, top + plot_h, "black");
    svg.text(left, top - 12, "mean PBoW count per death-time bin, 0.99 CI", 13);
    svg.text(left + plot_w / 2, H - 12, "death time bin", 12, "middle");
    for (int tick = 0; tick <= 4; ++tick) {
        double v = ymax * tick / 4.0;
        svg.line(left - 4, ypix(v), left, ypix(v), "black");
        svg.text(left - 8, ypix(v) + 4, fmt(v, 2), 10, "end");
    }
    for (int b = 0; b <= kPBoWBins; b += 16)
        svg.text(left + plot_w * b / kPBoWBins, top + plot_h + 16, std::to_string(b), 10, "middle");

    const int groups = int(profiles.size());
    const double slot = plot_w / kPBoWBins;
    const double bar = slot / std::max(1, groups) * 0.85;
    int gi = 0;
    for (const auto& [clone, p] : profiles) {
        const std::string color = kPalette[gi % 6];
        for (int b = 0; b < kPBoWBins; ++b) {
            if (p.mean[b] <= 0 && p.ci_half_width[b] <= 0) continue;
            double x = left + slot * b + bar * gi;
            svg.rect(x, ypix(p.mean[b]), bar, top + plot_h - ypix(p.mean[b]), color);
            if (p.ci_half_width[b] > 0) {
                double cx = x + bar / 2;
                svg.line(cx, ypix(p.mean[b] + p.ci_half_width[b]),
                         cx, ypix(std::max(0.0, p.mean[b] - p.ci_half_width[b])), "black", 0.6);
            }
        }
        svg.rect(left + plot_w - 140, top + 8 + 18.0 * gi, 12, 12, color);
        svg.text(left + plot_w - 122, top + 18 + 18.0 * gi, clone + " (n=" + std::to_string(p.n) + ")",
                 11);
        ++gi;
    }
    return svg.finish();
}

std::string property_histogram_svg(const std::vector<CellRecord>& cells, const std::string& property,
                                   int bins) {
    auto value_of = [&](const CellRecord& c) {
        if (property == "size") return c.props.area;
        if (property == "roundness") return c.props.roundness;
        return c.props.mean_intensity;
    };
    // lower mean intensity = darker; the axis label follows the plots' convention
    std::string axis = property == "intensity" ? "color intensity" : property;

    std::map<std::string, std::vector<double>> by_clone;
    double lo = 1e300, hi = -1e300;
    for (const auto& c : cells) {
        double v = value_of(c);
        by_clone[c.clone].push_back(v);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (by_clone.empty() || hi <= lo) {
        lo = 0;
        hi = 1;
    }
    const double span = (hi - lo) * 1.0001;

    std::map<std::string, std::vector<int>> hist;
    int hmax = 1;
    for (const auto& [clone, vals] : by_clone) {
        std::vector<int> h(bins, 0);
        for (double v : vals) ++h[std::min(bins - 1, int((v - lo) / span * bins))];
        for (int c : h) hmax = std::max(hmax, c);
        hist[clone] = std::move(h);
    }

    const int W = 700, H = 360;
    const double left = 55, right = 25, top = 40, bottom = 50;
    const double plot_w = W - left - right, plot_h = H - top - bottom;
    SvgCanvas svg(W, H);
    svg.line(left, top, left, top + plot_h, "black");
    svg.line(left, top + plot_h, left + plot_w, top + plot_h, "black");
    svg.text(left, top - 12, "cell " + axis + " by clone", 13);
    svg.text(left + plot_w / 2, H - 12, axis, 12, "middle");
    for (int tick = 0; tick <= 4; ++tick) {
        double frac = tick / 4.0;
        svg.text(left - 8, top + plot_h * (1 - frac) + 4, std::to_string(int(hmax * frac)), 10, "end");
        svg.text(left + plot_w * frac, top + plot_h + 16, fmt(lo + span * frac, 1), 10, "middle");
    }

    const int groups = int(hist.size());
    const double slot = plot_w / bins;
    const double bar = slot / std::max(1, groups) * 0.85;
    int gi = 0;
    for (const auto& [clone, h] : hist) {
        const std::string color = kPalette[gi % 6];
        for (int b = 0; b < bins; ++b) {
            if (!h[b]) continue;
            double bh = plot_h * h[b] / hmax;
            svg.rect(left + slot * b + bar * gi, top + plot_h - bh, bar, bh, color);
        }
        svg.rect(left + plot_w - 120, top + 8 + 18.0 * gi, 12, 12, color);
        svg.text(left + plot_w - 102, top + 18 + 18.0 * gi, clone, 11);
        ++gi;
    }
    return svg.finish();
}

} // namespace clonescope
