#pragma once
// Rank tests, Welch's t, and t-based confidence intervals.

#include <string>
#include <vector>

namespace clonescope {

struct TestResult {
    double statistic = 0.0;
    double p = 1.0; // two-sided
    std::string method;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    bool exact = false;
    bool degenerate = false;
    std::size_t zeros_dropped = 0; // Wilcoxon only
};

// Paired test; zero differences dropped. Exact enumeration of all 2^n
// sign assignments when n <= 12, normal approximation with tie
// correction otherwise.
TestResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

// Exact label-assignment enumeration when |a|+|b| <= 12.
TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

TestResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

std::pair<double, double> ci_mean(const std::vector<double>& sample, double level);

// regularized incomplete beta I_x(a,b), absolute error < 1e-10
double incomplete_beta(double a, double b, double x);
// two-sided tail of Student's t with df degrees of freedom
double student_t_two_sided(double t, double df);
double student_t_quantile(double p, double df); // inverse CDF
double normal_cdf(double z);

} // namespace clonescope
