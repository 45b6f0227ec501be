#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace biofuse::stats {

struct MannWhitneyResult {
    double u = 0.0;       // U statistic of the first sample
    double p = 1.0;       // two-sided
    std::string method;   // "exact" or "normal-approx"
};

// Two-sided Mann-Whitney U from rank sums with midranks for ties. Exact
// enumeration of the U distribution when n_x + n_y <= 12 and the pooled
// sample is tie-free; otherwise the normal approximation with tie and
// continuity (0.5) corrections.
MannWhitneyResult mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y);

// min(1, factor * p_raw)
double bonferroni(double p_raw, std::size_t factor);

// **** | *** | ** | * | ns, with the 0.05 boundary inclusive for ns.
std::string significance_symbol(double p_corr);

struct TestResult {
    double u = 0.0;
    double p_raw = 1.0;
    double p_corr = 1.0;
    std::string symbol = "ns";
    std::string method;
};

TestResult compare(const std::vector<double>& x, const std::vector<double>& y,
                   std::size_t bonferroni_factor);

}  // namespace biofuse::stats
