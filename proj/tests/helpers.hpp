#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "biofuse/rng.hpp"
#include "biofuse/tensor.hpp"

namespace testutil {

// Unique scratch directory under the build tree, wiped on construction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / ("biofuse_test_" + name);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }

    std::string str() const { return path.string(); }
    std::string sub(const std::string& child) const { return (path / child).string(); }
};

inline std::vector<double> random_values(std::size_t n, biofuse::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline biofuse::autodiff::Tensor random_tensor(biofuse::autodiff::Shape shape, biofuse::Rng& rng,
                                               bool requires_grad = true) {
    const std::size_t n = biofuse::autodiff::shape_numel(shape);
    return biofuse::autodiff::Tensor::from(std::move(shape), random_values(n, rng),
                                           requires_grad);
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    }
    return true;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
