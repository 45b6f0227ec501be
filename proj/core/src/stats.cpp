#include "biofuse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "biofuse/errors.hpp"

namespace biofuse::stats {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// Number of rank subsets of size nx (from nx+ny pooled ranks) with each
// possible U value; the classic two-sample recurrence
//   N(u; nx, ny) = N(u - ny; nx-1, ny) + N(u; nx, ny-1).
std::vector<std::uint64_t> u_distribution(std::size_t nx, std::size_t ny) {
    const std::size_t umax = nx * ny;
    std::vector<std::vector<std::uint64_t>> cur(nx + 1, std::vector<std::uint64_t>(umax + 1, 0));
    // ny = 0 base: only U = 0 reachable for every nx
    for (std::size_t i = 0; i <= nx; ++i) cur[i][0] = 1;
    for (std::size_t j = 1; j <= ny; ++j) {
        std::vector<std::vector<std::uint64_t>> next(nx + 1,
                                                     std::vector<std::uint64_t>(umax + 1, 0));
        for (std::size_t u = 0; u <= umax; ++u) next[0][u] = (u == 0) ? 1 : 0;
        for (std::size_t i = 1; i <= nx; ++i) {
            for (std::size_t u = 0; u <= umax; ++u) {
                std::uint64_t v = cur[i][u];                  // largest rank in y
                if (u >= j) v += next[i - 1][u - j];          // largest rank in x
                next[i][u] = v;
            }
        }
        cur = std::move(next);
    }
    return cur[nx];
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.empty() || y.empty()) throw UsageError("mann_whitney_u: samples must be non-empty");
    const std::size_t nx = x.size(), ny = y.size(), n = nx + ny;

    struct Entry {
        double v;
        bool from_x;
    };
    std::vector<Entry> pooled;
    pooled.reserve(n);
    for (const double v : x) pooled.push_back({v, true});
    for (const double v : y) pooled.push_back({v, false});
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const Entry& a, const Entry& b) { return a.v < b.v; });

    // midranks and tie group sizes
    double rank_sum_x = 0.0;
    bool ties = false;
    std::vector<std::size_t> tie_sizes;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[j + 1].v == pooled[i].v) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        if (j > i) {
            ties = true;
            tie_sizes.push_back(j - i + 1);
        }
        for (std::size_t k = i; k <= j; ++k) {
            if (pooled[k].from_x) rank_sum_x += midrank;
        }
        i = j + 1;
    }

    const double u_x = rank_sum_x - static_cast<double>(nx) * (nx + 1) / 2.0;

    MannWhitneyResult res;
    res.u = u_x;
    if (n <= 12 && !ties) {
        const auto dist = u_distribution(nx, ny);
        std::uint64_t total = 0, count_le = 0, count_ge = 0;
        const auto u_int = static_cast<std::size_t>(std::llround(u_x));
        for (std::size_t u = 0; u < dist.size(); ++u) {
            total += dist[u];
            if (u <= u_int) count_le += dist[u];
            if (u >= u_int) count_ge += dist[u];
        }
        const double tail =
            static_cast<double>(std::min(count_le, count_ge)) / static_cast<double>(total);
        res.p = std::min(1.0, 2.0 * tail);
        res.method = "exact";
    } else {
        const double mu = static_cast<double>(nx) * static_cast<double>(ny) / 2.0;
        double tie_term = 0.0;
        for (const std::size_t t : tie_sizes) {
            tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
        }
        const double dn = static_cast<double>(n);
        double sigma_sq = static_cast<double>(nx) * static_cast<double>(ny) / 12.0 *
                          ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
        res.method = "normal-approx";
        if (sigma_sq <= 0.0) {
            res.p = 1.0;  // pooled sample fully tied, no discrimination
        } else {
            const double numer = std::max(0.0, std::abs(u_x - mu) - 0.5);
            const double z = numer / std::sqrt(sigma_sq);
            res.p = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
        }
    }
    return res;
}

double bonferroni(double p_raw, std::size_t factor) {
    if (factor < 1) throw UsageError("bonferroni: factor must be >= 1");
    return std::min(1.0, static_cast<double>(factor) * p_raw);
}

std::string significance_symbol(double p_corr) {
    if (!(p_corr >= 0.0 && p_corr <= 1.0)) {
        throw UsageError("significance_symbol: p " + std::to_string(p_corr) + " outside [0, 1]");
    }
    if (p_corr < 0.0001) return "****";
    if (p_corr < 0.001) return "***";
    if (p_corr < 0.01) return "**";
    if (p_corr < 0.05) return "*";
    return "ns";
}

TestResult compare(const std::vector<double>& x, const std::vector<double>& y,
                   std::size_t bonferroni_factor) {
    const MannWhitneyResult mw = mann_whitney_u(x, y);
    TestResult res;
    res.u = mw.u;
    res.p_raw = mw.p;
    res.method = mw.method;
    res.p_corr = bonferroni(mw.p, bonferroni_factor);
    res.symbol = significance_symbol(res.p_corr);
    return res;
}

}  // namespace biofuse::stats
