#include "clonescope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace clonescope {

namespace {

// midranks of v (1-based); also returns tie-group sizes
std::vector<double> midranks(const std::vector<double>& v, std::vector<std::size_t>* tie_sizes = nullptr) {
    std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double r = 0.5 * double(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        if (tie_sizes) tie_sizes->push_back(j - i + 1);
        i = j + 1;
    }
    return ranks;
}

} // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    // continued fraction (modified Lentz)
    auto betacf = [](double a, double b, double x) {
        const double eps = 1e-14, fpmin = 1e-300;
        double qab = a + b, qap = a + 1.0, qam = a - 1.0;
        double c = 1.0, d = 1.0 - qab * x / qap;
        if (std::fabs(d) < fpmin) d = fpmin;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= 300; ++m) {
            int m2 = 2 * m;
            double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if (std::fabs(d) < fpmin) d = fpmin;
            c = 1.0 + aa / c;
            if (std::fabs(c) < fpmin) c = fpmin;
            d = 1.0 / d;
            h *= d * c;
            aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if (std::fabs(d) < fpmin) d = fpmin;
            c = 1.0 + aa / c;
            if (std::fabs(c) < fpmin) c = fpmin;
            d = 1.0 / d;
            double del = d * c;
            h *= del;
            if (std::fabs(del - 1.0) < eps) break;
        }
        return h;
    };
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
    if (df <= 0) throw std::invalid_argument("df must be positive");
    double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

double student_t_quantile(double p, double df) {
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("quantile p in (0,1)");
    if (p == 0.5) return 0.0;
    bool upper = p > 0.5;
    double target = upper ? p : 1.0 - p;
    // CDF(t) = 1 - tail/2 for t >= 0
    auto cdf = [df](double t) { return 1.0 - 0.5 * student_t_two_sided(t, df); };
    double lo = 0.0, hi = 1.0;
    while (cdf(hi) < target) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (cdf(mid) < target ? lo : hi) = mid;
    }
    double t = 0.5 * (lo + hi);
    return upper ? t : -t;
}

TestResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("paired samples of equal size required");

    std::vector<double> absd;
    std::vector<int> sign;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        if (d == 0.0) {
            ++zeros;
            continue;
        }
        absd.push_back(std::fabs(d));
        sign.push_back(d > 0 ? 1 : -1);
    }
    if (absd.empty()) throw std::runtime_error("degenerate pairs");

    std::vector<std::size_t> ties;
    std::vector<double> ranks = midranks(absd, &ties);
    std::size_t n = absd.size();
    double wplus = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += ranks[i];
        if (sign[i] > 0) wplus += ranks[i];
    }

    TestResult r;
    r.method = "wilcoxon_signed_rank";
    r.n1 = r.n2 = x.size();
    r.zeros_dropped = zeros;
    r.statistic = std::min(wplus, total - wplus);

    if (n <= 12) {
        const double tol = 1e-9;
        std::uint64_t le = 0, ge = 0;
        std::uint64_t count = std::uint64_t(1) << n;
        for (std::uint64_t mask = 0; mask < count; ++mask) {
            double w = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (std::uint64_t(1) << i)) w += ranks[i];
            if (w <= wplus + tol) ++le;
            if (w >= wplus - tol) ++ge;
        }
        double tail = double(std::min(le, ge)) / double(count);
        r.p = std::min(1.0, 2.0 * tail);
        r.exact = true;
    } else {
        double mean = double(n) * (n + 1) / 4.0;
        double var = double(n) * (n + 1) * (2.0 * n + 1) / 24.0;
        for (std::size_t t : ties) var -= (double(t) * t * t - t) / 48.0;
        double z = (std::fabs(wplus - mean) - 0.5) / std::sqrt(var);
        r.p = 2.0 * (1.0 - normal_cdf(std::max(0.0, z)));
    }
    return r;
}

TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("non-empty samples required");

    std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<std::size_t> ties;
    std::vector<double> ranks = midranks(pooled, &ties);

    double r1 = 0.0;
    for (std::size_t i = 0; i < n1; ++i) r1 += ranks[i];
    double u1 = r1 - double(n1) * (n1 + 1) / 2.0;
    double u2 = double(n1) * n2 - u1;

    TestResult r;
    r.method = "mann_whitney_u";
    r.n1 = n1;
    r.n2 = n2;
    r.statistic = std::min(u1, u2);

    if (n <= 12) {
        // enumerate all C(n, n1) assignments of pooled ranks to group 1
        const double tol = 1e-9;
        std::uint64_t le = 0, ge = 0, count = 0;
        std::vector<std::size_t> idx(n1);
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            double rsum = 0.0;
            for (std::size_t i : idx) rsum += ranks[i];
            double u = rsum - double(n1) * (n1 + 1) / 2.0;
            ++count;
            if (u <= u1 + tol) ++le;
            if (u >= u1 - tol) ++ge;
            // next combination
            std::size_t k = n1;
            while (k > 0 && idx[k - 1] == n - n1 + k - 1) --k;
            if (k == 0) break;
            ++idx[k - 1];
            for (std::size_t j = k; j < n1; ++j) idx[j] = idx[j - 1] + 1;
        }
        double tail = double(std::min(le, ge)) / double(count);
        r.p = std::min(1.0, 2.0 * tail);
        r.exact = true;
    } else {
        double mean = double(n1) * n2 / 2.0;
        double tie_term = 0.0;
        for (std::size_t t : ties) tie_term += double(t) * t * t - t;
        double var = double(n1) * n2 / 12.0 * (double(n + 1) - tie_term / (double(n) * (n - 1)));
        if (var <= 0) {
            r.p = 1.0;
            r.degenerate = true;
            return r;
        }
        double z = (std::fabs(u1 - mean) - 0.5) / std::sqrt(var);
        r.p = 2.0 * (1.0 - normal_cdf(std::max(0.0, z)));
    }
    return r;
}

TestResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("need >= 2 samples per group");

    auto mean_var = [](const std::vector<double>& v) {
        double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair{m, s / double(v.size() - 1)};
    };
    auto [ma, va] = mean_var(a);
    auto [mb, vb] = mean_var(b);

    TestResult r;
    r.method = "welch_t";
    r.n1 = a.size();
    r.n2 = b.size();

    double sa = va / double(a.size());
    double sb = vb / double(b.size());
    if (sa + sb == 0.0) {
        r.degenerate = true;
        r.p = ma == mb ? 1.0 : 0.0;
        r.statistic = ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
        return r;
    }
    r.statistic = (ma - mb) / std::sqrt(sa + sb);
    double df = (sa + sb) * (sa + sb) /
                (sa * sa / double(a.size() - 1) + sb * sb / double(b.size() - 1));
    r.p = student_t_two_sided(r.statistic, df);
    return r;
}

std::pair<double, double> ci_mean(const std::vector<double>& sample, double level) {
    if (sample.size() < 2) throw std::invalid_argument("need >= 2 samples");
    double n = double(sample.size());
    double m = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
    double s2 = 0.0;
    for (double x : sample) s2 += (x - m) * (x - m);
    s2 /= (n - 1);
    if (s2 == 0.0) return {m, m};
    double t = student_t_quantile(0.5 + level / 2.0, n - 1);
    double hw = t * std::sqrt(s2 / n);
    return {m - hw, m + hw};
}

} // namespace clonescope
