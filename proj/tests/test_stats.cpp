#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biofuse/errors.hpp"
#include "biofuse/rng.hpp"
#include "biofuse/stats.hpp"

using namespace biofuse;
using namespace biofuse::stats;

namespace {

// Independent oracle: enumerate every C(n, nx) assignment of pooled ranks to
// the first sample explicitly and count tail probabilities of U. No shared
// code with the DP in the implementation.
double exact_p_by_enumeration(std::size_t nx, std::size_t ny, double u_obs) {
    const std::size_t n = nx + ny;
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + nx, true);
    std::sort(pick.begin(), pick.end());  // lexicographically first combination

    std::size_t total = 0, le = 0, ge = 0;
    do {
        // U = sum of x ranks - nx(nx+1)/2, ranks are positions 1..n
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pick[i]) rank_sum += static_cast<double>(i + 1);
        }
        const double u = rank_sum - static_cast<double>(nx) * (nx + 1) / 2.0;
        ++total;
        if (u <= u_obs + 1e-12) ++le;
        if (u >= u_obs - 1e-12) ++ge;
    } while (std::next_permutation(pick.begin(), pick.end()));

    return std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) /
                             static_cast<double>(total));
}

}  // namespace

TEST_CASE("worked examples from first principles") {
    {
        const auto res = mann_whitney_u({1, 2, 3}, {4, 5, 6});
        CHECK(res.u == 0.0);
        CHECK(res.method == "exact");
        CHECK(res.p == doctest::Approx(0.1).epsilon(1e-12));
    }
    {
        const auto res = mann_whitney_u({1, 3}, {2, 4});
        CHECK(res.u == 1.0);
        CHECK(res.method == "exact");
        CHECK(res.p == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }
    {
        // identical multisets tie everywhere: U = n^2/2, p capped at 1
        const auto res = mann_whitney_u({1, 2, 3}, {1, 2, 3});
        CHECK(res.u == doctest::Approx(4.5));
        CHECK(res.method == "normal-approx");
        CHECK(res.p == 1.0);
    }
}

TEST_CASE("empty samples are rejected") {
    CHECK_THROWS_AS(mann_whitney_u({}, {1.0}), UsageError);
    CHECK_THROWS_AS(mann_whitney_u({1.0}, {}), UsageError);
}

TEST_CASE("exact branch matches exhaustive enumeration for all tie-free splits, n <= 10") {
    for (std::size_t n = 2; n <= 10; ++n) {
        for (std::size_t nx = 1; nx < n; ++nx) {
            const std::size_t ny = n - nx;
            // every split of ranks {1..n} into x and y
            std::vector<bool> pick(n, false);
            std::fill(pick.begin(), pick.begin() + nx, true);
            std::sort(pick.begin(), pick.end());
            do {
                std::vector<double> x, y;
                for (std::size_t i = 0; i < n; ++i) {
                    (pick[i] ? x : y).push_back(static_cast<double>(i + 1));
                }
                const auto res = mann_whitney_u(x, y);
                REQUIRE(res.method == "exact");
                const double oracle = exact_p_by_enumeration(nx, ny, res.u);
                REQUIRE(res.p == doctest::Approx(oracle).epsilon(1e-12));
            } while (std::next_permutation(pick.begin(), pick.end()));
        }
    }
}

TEST_CASE("U complementarity: U(x,y) + U(y,x) = nx * ny") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t nx = 1 + rng.uniform_int(8);
        const std::size_t ny = 1 + rng.uniform_int(8);
        std::vector<double> x(nx), y(ny);
        for (auto& v : x) v = rng.uniform(-5, 5);
        for (auto& v : y) v = rng.uniform(-5, 5);
        const double uxy = mann_whitney_u(x, y).u;
        const double uyx = mann_whitney_u(y, x).u;
        CHECK(uxy + uyx == doctest::Approx(static_cast<double>(nx * ny)).epsilon(1e-12));
    }
}

TEST_CASE("p invariant under strictly monotone transforms") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> x(6), y(7);
        for (auto& v : x) v = rng.uniform(-2, 2);
        for (auto& v : y) v = rng.uniform(-2, 2);
        const double p0 = mann_whitney_u(x, y).p;

        const double a = rng.uniform(0.5, 3.0);
        const double b = rng.uniform(-4.0, 4.0);
        auto mono = [&](double v) { return a * std::exp(v / 3.0) + b; };
        std::vector<double> xt, yt;
        for (const double v : x) xt.push_back(mono(v));
        for (const double v : y) yt.push_back(mono(v));
        CHECK(mann_whitney_u(xt, yt).p == doctest::Approx(p0).epsilon(1e-12));
    }
}

TEST_CASE("exact and normal branches agree within 0.02 on tie-free 6 vs 6") {
    Rng rng(13);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> x(6), y(6);
        for (auto& v : x) v = rng.uniform(-1, 1);
        for (auto& v : y) v = rng.uniform(-1, 1);
        const auto exact = mann_whitney_u(x, y);
        REQUIRE(exact.method == "exact");

        // push the same ranks through the approximate branch by inflating n
        // is not possible directly; instead recompute the normal p here
        const double nx = 6, ny = 6, n = 12;
        const double mu = nx * ny / 2.0;
        const double sigma = std::sqrt(nx * ny / 12.0 * (n + 1.0));
        const double z = std::max(0.0, std::abs(exact.u - mu) - 0.5) / sigma;
        const double p_norm = std::min(1.0, std::erfc(z * M_SQRT1_2));
        CHECK(std::abs(exact.p - p_norm) <= 0.02);
    }
}

TEST_CASE("bonferroni correction") {
    CHECK(bonferroni(0.004, 10) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(bonferroni(0.3, 10) == 1.0);
    CHECK(bonferroni(0.123, 1) == doctest::Approx(0.123).epsilon(1e-15));
    CHECK_THROWS_AS(bonferroni(0.1, 0), UsageError);
}

TEST_CASE("significance symbols at the stated thresholds") {
    CHECK(significance_symbol(0.03) == "*");
    CHECK(significance_symbol(0.0005) == "***");
    CHECK(significance_symbol(0.05) == "ns");  // inclusive boundary
    CHECK(significance_symbol(0.00005) == "****");
    CHECK(significance_symbol(0.005) == "**");
    CHECK(significance_symbol(0.9) == "ns");
    CHECK_THROWS_AS(significance_symbol(-0.01), UsageError);
    CHECK_THROWS_AS(significance_symbol(1.5), UsageError);
}

TEST_CASE("symbol strictness is monotone in p") {
    const std::vector<std::string> order = {"****", "***", "**", "*", "ns"};
    auto strictness = [&](const std::string& s) {
        return std::find(order.begin(), order.end(), s) - order.begin();
    };
    double prev = -1;
    for (const double p : {0.00001, 0.0005, 0.005, 0.03, 0.05, 0.3, 1.0}) {
        const auto idx = strictness(significance_symbol(p));
        CHECK(idx >= prev);
        prev = static_cast<double>(idx);
    }
}

TEST_CASE("compare pipeline ties everything together") {
    const auto res = compare({0.1, 0.2, 0.3}, {0.7, 0.8, 0.9}, 10);
    CHECK(res.p_raw == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(res.p_corr == 1.0);
    CHECK(res.symbol == "ns");
    CHECK(res.method == "exact");
}
