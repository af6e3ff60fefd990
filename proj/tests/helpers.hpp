#pragma once

#include "ivcea/data_model.hpp"
#include "ivcea/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline Eigen::VectorXi mask(const Eigen::VectorXd& v) {
    Eigen::VectorXi m(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) m(i) = std::isnan(v(i)) ? 0 : 1;
    return m;
}

inline ivcea::TrialDataset make_dataset(const std::vector<int>& z, const std::vector<int>& d,
                                        const std::vector<double>& y1, const std::vector<double>& y2,
                                        const std::vector<std::pair<std::string, std::vector<double>>>& covs = {}) {
    ivcea::TrialDataset ds;
    const auto n = static_cast<Eigen::Index>(z.size());
    ds.z = Eigen::Map<const Eigen::VectorXi>(z.data(), n);
    ds.d = Eigen::Map<const Eigen::VectorXi>(d.data(), n);
    ds.y1 = Eigen::Map<const Eigen::VectorXd>(y1.data(), n);
    ds.y2 = Eigen::Map<const Eigen::VectorXd>(y2.data(), n);
    ds.r1 = mask(ds.y1);
    ds.r2 = mask(ds.y2);
    for (const auto& [name, v] : covs) {
        Eigen::VectorXd values = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
        ds.covariates.push_back({name, values, mask(values)});
    }
    return ds;
}

/// Small IV dataset: one-sided non-compliance driven by a latent U, one covariate.
inline ivcea::TrialDataset random_iv_data(Eigen::Index n, std::uint64_t seed, double effect1 = 2.0,
                                          double effect2 = -1.0) {
    ivcea::Rng rng(seed);
    std::normal_distribution<double> norm;
    std::bernoulli_distribution coin(0.5);
    std::vector<int> z(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
    std::vector<double> y1(static_cast<std::size_t>(n)), y2(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double u = norm(rng);
        x[k] = norm(rng);
        z[k] = coin(rng);
        d[k] = z[k] && (u + norm(rng) > -0.3);
        const double e = norm(rng);
        y1[k] = 1.0 + effect1 * d[k] + 0.5 * x[k] + u + e;
        y2[k] = -0.5 + effect2 * d[k] - 0.3 * x[k] - 0.5 * u + 0.5 * e + norm(rng);
    }
    return make_dataset(z, d, y1, y2, {{"x", x}});
}

}  // namespace testing
