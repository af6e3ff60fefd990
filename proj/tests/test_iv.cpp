#include "helpers.hpp"

#include "ivcea/errors.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/simulator.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace ivcea;

namespace {

struct Moments {
    double sum = 0, sumsq = 0;
    int n = 0;
    void add(double v) {
        sum += v;
        sumsq += v * v;
        ++n;
    }
    double mean() const { return sum / n; }
    double mc_se() const { return std::sqrt((sumsq - sum * sum / n) / (n - 1) / n); }
};

DgpConfig small_reference(std::uint64_t seed) {
    auto cfg = confounded_switching();
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("wald: four-row hand example") {
    Eigen::Vector4i z(1, 1, 0, 0), d(1, 0, 0, 0);
    Eigen::Vector4d y(10, 2, 2, 4);
    CHECK(wald_cace(z, d, y) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("wald: perfect compliance is the difference in means") {
    Eigen::Vector4i z(1, 1, 0, 0);
    Eigen::Vector4d y(10, 2, 2, 4);
    CHECK(wald_cace(z, z, y) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("wald: receipt identical in both arms") {
    Eigen::Vector4i z(1, 1, 0, 0), d(1, 0, 1, 0);
    Eigen::Vector4d y(10, 2, 2, 4);
    CHECK_THROWS_AS(wald_cace(z, d, y), IdentificationError);
}

TEST_CASE("tsls: no covariates equals wald") {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto ds = testing::random_iv_data(400, seed);
        auto r1 = tsls(ds, Outcome::Cost);
        auto r2 = tsls(ds, Outcome::Qaly);
        CHECK(std::abs(r1.effect() - wald_cace(ds.z, ds.d, ds.y1)) < 1e-10);
        CHECK(std::abs(r2.effect() - wald_cace(ds.z, ds.d, ds.y2)) < 1e-10);
    }
}

TEST_CASE("tsls: perfect compliance equals ols on assignment") {
    auto ds = testing::random_iv_data(200, 4);
    ds.d = ds.z;
    IvOptions opt;
    opt.covariates = {"x"};
    auto r = tsls(ds, Outcome::Cost, opt);
    Eigen::MatrixXd X(200, 3);
    X << Eigen::VectorXd::Ones(200), ds.z.cast<double>(), ds.covariate("x").values;
    auto o = ols(X, ds.y1);
    CHECK(std::abs(r.effect() - o.coefficients(1)) < 1e-10);
}

TEST_CASE("tsls: weak instrument warning") {
    auto ds = testing::random_iv_data(300, 5);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        ds.z(i) = static_cast<int>(i % 2);
        ds.d(i) = (i % 10 == 0 || i % 10 == 1 || i == 3) ? 1 : 0;
    }
    auto r = tsls(ds, Outcome::Cost);
    CHECK(r.first_stage_f < kWeakInstrumentF);
    CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("three_sls: just identified equals per-outcome tsls") {
    for (std::uint64_t seed : {6, 7}) {
        auto ds = testing::random_iv_data(500, seed);
        for (bool covs : {false, true}) {
            IvOptions opt;
            if (covs) opt.covariates = {"x"};
            auto est = three_sls(ds, opt);
            auto a = tsls(ds, Outcome::Cost, opt);
            auto b = tsls(ds, Outcome::Qaly, opt);
            CHECK(std::abs(est.theta(0) - a.effect()) < 1e-8 * std::max(1.0, std::abs(a.effect())));
            CHECK(std::abs(est.theta(1) - b.effect()) < 1e-8 * std::max(1.0, std::abs(b.effect())));
        }
    }
}

TEST_CASE("tsls_pair: diagonal matches single-outcome tsls") {
    auto ds = testing::random_iv_data(400, 8);
    IvOptions opt;
    opt.covariates = {"x"};
    auto pair = tsls_pair(ds, opt);
    auto a = tsls(ds, Outcome::Cost, opt);
    auto b = tsls(ds, Outcome::Qaly, opt);
    CHECK(pair.theta(0) == doctest::Approx(a.effect()).epsilon(1e-10));
    CHECK(pair.theta(1) == doctest::Approx(b.effect()).epsilon(1e-10));
    CHECK(pair.covariance(0, 0) == doctest::Approx(a.effect_se() * a.effect_se()).epsilon(1e-8));
    CHECK(pair.covariance(1, 1) == doctest::Approx(b.effect_se() * b.effect_se()).epsilon(1e-8));
    CHECK(pair.covariance(0, 1) == doctest::Approx(pair.covariance(1, 0)));
}

TEST_CASE("estimands coincide under perfect compliance") {
    auto cfg = small_reference(9);
    cfg.p_complier = 1.0;
    cfg.p_never_taker = 0.0;
    cfg.p_always_taker = 0.0;
    auto trial = generate_trial(cfg);
    IvOptions opt;
    opt.covariates = {"eq5d0"};
    auto a = three_sls(trial.data, opt), b = itt_sur(trial.data, opt), c = pp_sur(trial.data, opt);
    CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() < 1e-8 * 1000);
    CHECK((b.theta - c.theta).cwiseAbs().maxCoeff() < 1e-8 * 1000);
}

TEST_CASE("pp: empty per-protocol sample") {
    auto ds = testing::random_iv_data(20, 10);
    ds.d = (1 - ds.z.array()).matrix();
    CHECK_THROWS_AS(pp_sur(ds), ValidationError);
}

TEST_CASE("weighted three_sls with equal weights equals unweighted") {
    auto ds = testing::random_iv_data(300, 12);
    std::vector<double> w(300, 2.5);
    IvOptions a, b;
    a.covariates = b.covariates = {"x"};
    b.weights = w;
    auto u = three_sls(ds, a), v = three_sls(ds, b);
    CHECK((u.theta - v.theta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((u.covariance - v.covariance).cwiseAbs().maxCoeff() < 1e-10 * u.covariance.cwiseAbs().maxCoeff());
}

TEST_CASE("simulated tsls with effect 1.0 is unbiased") {
    Moments m;
    for (int rep = 0; rep < 1000; ++rep) {
        auto cfg = small_reference(derive_seed(101, 1, rep));
        cfg.effect_cost = 1.0;
        cfg.cost_sd = 2.0;
        cfg.cost_u = 1.0;
        cfg.cost_eq5d0 = 0.0;
        m.add(tsls(generate_trial(cfg).data, Outcome::Cost).effect());
    }
    CHECK(std::abs(m.mean() - 1.0) < 3 * m.mc_se());
}

TEST_CASE("simulated three_sls: unbiased, correlated, PP biased") {
    Moments c3, q3, cpp, qpp, covsign;
    for (int rep = 0; rep < 200; ++rep) {
        auto trial = generate_trial(small_reference(derive_seed(202, 1, rep)));
        IvOptions opt;
        opt.covariates = {"eq5d0"};
        auto est = three_sls(trial.data, opt);
        auto pp = pp_sur(trial.data, opt);
        c3.add(est.theta(0));
        q3.add(est.theta(1));
        cpp.add(pp.theta(0));
        qpp.add(pp.theta(1));
        covsign.add(est.covariance(0, 1) > 0 ? 1.0 : 0.0);
    }
    CHECK(std::abs(c3.mean() - 1000) < 3 * c3.mc_se());
    CHECK(std::abs(q3.mean() - 0.1) < 3 * q3.mc_se());
    CHECK(covsign.mean() == 1.0);
    CHECK(std::abs(cpp.mean() - 1000) > 5 * cpp.mc_se());
    CHECK(q3.mean() - 0.1 > -3 * q3.mc_se());
    CHECK(qpp.mean() - 0.1 < -5 * qpp.mc_se());
}

TEST_CASE("independent outcomes give a joint covariance near zero") {
    Moments corr;
    for (int rep = 0; rep < 200; ++rep) {
        auto cfg = small_reference(derive_seed(303, 1, rep));
        cfg.rho = 0.0;
        cfg.qaly_u = 0.0;
        cfg.cost_eq5d0 = 0.0;
        auto est = three_sls(generate_trial(cfg).data);
        corr.add(est.covariance(0, 1) / std::sqrt(est.covariance(0, 0) * est.covariance(1, 1)));
    }
    CHECK(std::abs(corr.mean()) < 3 * corr.mc_se() + 0.01);
}

TEST_CASE("ipw adherence recovers the effect without unmeasured confounding") {
    Moments c;
    for (int rep = 0; rep < 200; ++rep) {
        auto cfg = small_reference(derive_seed(404, 1, rep));
        cfg.stratum_loading = 0.0;
        IvOptions opt;
        opt.covariates = {"eq5d0"};
        c.add(ipw_adherence(generate_trial(cfg).data, opt).theta(0));
    }
    CHECK(std::abs(c.mean() - 1000) < 3 * c.mc_se());
}

TEST_CASE("binary outcome estimators") {
    SUBCASE("2sps with perfect compliance is logistic of y on z") {
        auto cfg = small_reference(11);
        cfg.p_complier = 1.0;
        cfg.p_never_taker = cfg.p_always_taker = 0.0;
        auto trial = generate_trial(cfg);
        auto yb = generate_binary_outcome(trial, -0.5, 0.7, 0.0, 5);
        auto r = tsps(trial.data, yb);
        Eigen::MatrixXd X(trial.data.size(), 2);
        X << Eigen::VectorXd::Ones(trial.data.size()), trial.data.z.cast<double>();
        auto o = logistic(X, yb);
        CHECK(r.log_odds_ratio == doctest::Approx(o.coefficients(1)).epsilon(1e-8));
    }
    SUBCASE("null effect, no confounding") {
        Moments a, b;
        for (int rep = 0; rep < 200; ++rep) {
            auto cfg = small_reference(derive_seed(505, 1, rep));
            cfg.stratum_loading = 0.0;
            auto trial = generate_trial(cfg);
            auto yb = generate_binary_outcome(trial, -0.3, 0.0, 0.0, derive_seed(505, 2, rep));
            a.add(tsps(trial.data, yb).log_odds_ratio);
            b.add(tsri(trial.data, yb).log_odds_ratio);
        }
        CHECK(std::abs(a.mean()) < 3 * a.mc_se());
        CHECK(std::abs(b.mean()) < 3 * b.mc_se());
    }
    SUBCASE("2sri recovers log-OR 0.7 without unmeasured confounding") {
        Moments b;
        for (int rep = 0; rep < 200; ++rep) {
            auto cfg = small_reference(derive_seed(606, 1, rep));
            auto trial = generate_trial(cfg);
            auto yb = generate_binary_outcome(trial, -0.3, 0.7, 0.0, derive_seed(606, 2, rep));
            b.add(tsri(trial.data, yb).log_odds_ratio);
        }
        CHECK(std::abs(b.mean() - 0.7) < 3 * b.mc_se());
    }
}

TEST_CASE("estimand names") {
    CHECK(parse_estimand("cace") == Estimand::Cace);
    CHECK(to_string(Estimand::Pp) == "PP");
    CHECK_THROWS_AS(parse_estimand("late-ish"), ConfigError);
}
