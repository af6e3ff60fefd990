#include "helpers.hpp"

#include "ivcea/errors.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/missing_data.hpp"
#include "ivcea/simulator.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace ivcea;

namespace {

// y2 missing at random given cost, arm and baseline utility
SimulatedTrial qaly_missing_trial(std::uint64_t seed, Eigen::Index n = 600) {
    auto cfg = confounded_switching();
    cfg.n = n;
    cfg.seed = seed;
    auto trial = generate_trial(cfg);
    MissingnessConfig mc;
    mc.mechanism = Mechanism::MAR;
    mc.models[2].enabled = true;
    mc.models[2].intercept = 0.8;
    mc.models[2].y1 = -0.7;
    mc.models[2].z = 0.3;
    trial.data = apply_missingness(trial.data, mc, derive_seed(seed, 2)).data;
    return trial;
}

double mean_diff(const TrialDataset& ds, const Eigen::VectorXd& y) {
    double s[2] = {0, 0};
    int n[2] = {0, 0};
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        s[ds.z(i)] += y(i);
        ++n[ds.z(i)];
    }
    return s[1] / n[1] - s[0] / n[0];
}

CaceEstimate itt_plain(const TrialDataset& ds) { return itt_sur(ds); }

}  // namespace

TEST_CASE("pom: MCAR reduces to intercept-only models") {
    int all_empty = 0;
    for (int rep = 0; rep < 10; ++rep) {
        auto cfg = confounded_switching();
        cfg.seed = derive_seed(31, 1, rep);
        auto trial = generate_trial(cfg);
        auto ds = apply_missingness(trial.data, MissingnessConfig::mcar(0.15), derive_seed(31, 2, rep)).data;
        ds = enforce_monotone(ds).data;
        auto spec = PomSpec::defaults(ds);
        spec.p_threshold = 0.01;
        auto poms = fit_pom(ds, spec);
        bool empty = true;
        for (const auto& m : poms.models) empty = empty && m.selected.empty();
        all_empty += empty;
    }
    CHECK(all_empty >= 8);
}

TEST_CASE("pom: r2 depending on eq5d0 keeps eq5d0") {
    int exact = 0;
    for (int rep = 0; rep < 10; ++rep) {
        auto cfg = confounded_switching();
        cfg.n = 5000;
        cfg.seed = derive_seed(32, 1, rep);
        auto trial = generate_trial(cfg);
        MissingnessConfig mc;
        mc.mechanism = Mechanism::CDM;
        mc.models[2].enabled = true;
        mc.models[2].intercept = 0.5;
        mc.models[2].eq5d0 = 1.0;
        auto ds = apply_missingness(trial.data, mc, derive_seed(32, 2, rep)).data;
        auto spec = PomSpec::defaults(ds);
        spec.p_threshold = 0.01;
        auto poms = fit_pom(ds, spec);
        const auto& sel = poms.models[2].selected;
        CHECK(std::find(sel.begin(), sel.end(), "eq5d0") != sel.end());
        exact += sel == std::vector<std::string>{"eq5d0"};
        CHECK(poms.models[0].always_observed);
        CHECK(poms.models[1].always_observed);
    }
    CHECK(exact >= 8);
}

TEST_CASE("pom: candidate not yet observed is rejected") {
    PomSpec spec;
    spec.candidates[1] = {"y2"};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.order = {0, 2, 1};
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("pom: perfect prediction is a positivity error") {
    auto ds = testing::random_iv_data(200, 33);
    ds.covariates.push_back({"eq5d0", Eigen::VectorXd::Constant(200, 0.5), Eigen::VectorXi::Ones(200)});
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (ds.covariate("x").values(i) > 0.3) {
            ds.y2(i) = testing::kNaN;
            ds.r2(i) = 0;
        }
    PomSpec spec;
    spec.candidates[2] = {"x"};
    CHECK_THROWS_AS(fit_pom(ds, spec), PositivityError);
}

TEST_CASE("ipw: complete data gives unit weights and the CCA estimate") {
    auto trial = generate_trial(confounded_switching());
    auto& ds = trial.data;
    auto poms = fit_pom(ds, PomSpec::defaults(ds));
    auto w = ipw_weights(ds, poms);
    CHECK((w.w.array() == 1.0).all());
    IvOptions a, b;
    a.covariates = b.covariates = {"eq5d0"};
    b.weights = w.span();
    CHECK((three_sls(ds, a).theta - three_sls(ds, b).theta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ipw: weights are inverse products and zero for incomplete cases") {
    auto trial = qaly_missing_trial(34, 2000);
    auto& ds = trial.data;
    auto poms = fit_pom(ds, PomSpec::defaults(ds));
    auto w = ipw_weights(ds, poms);
    Eigen::VectorXd p2 = pom_probabilities(ds, poms.models[2]);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        if (ds.r2(i)) CHECK(w.w(i) == doctest::Approx(1.0 / p2(i)).epsilon(1e-12));
        else CHECK(w.w(i) == 0.0);
    }
    CHECK(w.n_complete == ds.r2.sum());

    WeightOptions opt;
    opt.stabilize = true;
    opt.truncation_quantile = 0.9;
    auto s = ipw_weights(ds, poms, opt);
    CHECK(s.n_truncated > 0);
    CHECK(s.max == s.truncated_at);
    const double scale = static_cast<double>(w.n_complete) / static_cast<double>(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        CHECK(s.w(i) == doctest::Approx(std::min(w.w(i) * scale, s.truncated_at)).epsilon(1e-12));
}

TEST_CASE("mi: no missing cells gives identical copies") {
    auto trial = generate_trial(confounded_switching());
    MiConfig cfg;
    cfg.m = 3;
    auto imp = mi_impute(trial.data, cfg);
    REQUIRE(imp.m() == 3);
    for (const auto& d : imp.datasets) CHECK(to_csv(d) == to_csv(trial.data));
}

TEST_CASE("mi: observed cells kept, donors valid, deterministic") {
    auto trial = qaly_missing_trial(35);
    const auto& src = trial.data;
    MiConfig cfg;
    cfg.m = 5;
    cfg.seed = 9;
    auto imp = mi_impute(src, cfg);
    CHECK(count_pmm_violations(imp) == 0);
    for (const auto& d : imp.datasets) {
        CHECK(d.r2.sum() == d.size());
        for (Eigen::Index i = 0; i < src.size(); ++i) {
            CHECK(d.y1(i) == src.y1(i));
            if (src.r2(i)) CHECK(d.y2(i) == src.y2(i));
        }
    }
    // explicit donor check: each imputed value is an observed value in the same arm
    std::set<double> pool[2];
    for (Eigen::Index i = 0; i < src.size(); ++i)
        if (src.r2(i)) pool[src.z(i)].insert(src.y2(i));
    for (Eigen::Index i = 0; i < src.size(); ++i)
        if (!src.r2(i))
            for (const auto& d : imp.datasets) CHECK(pool[src.z(i)].count(d.y2(i)) == 1);

    auto again = mi_impute(src, cfg);
    cfg.workers = 2;
    auto threaded = mi_impute(src, cfg);
    for (int j = 0; j < 5; ++j) {
        CHECK(to_csv(again.datasets[j]) == to_csv(imp.datasets[j]));
        CHECK(to_csv(threaded.datasets[j]) == to_csv(imp.datasets[j]));
    }
    CHECK(to_csv(imp.datasets[0]) != to_csv(imp.datasets[1]));
}

TEST_CASE("mi: too few donors") {
    auto ds = testing::random_iv_data(12, 36);
    for (Eigen::Index i = 0; i < 12; ++i)
        if (ds.z(i) == 1 && i > 2) {
            ds.y2(i) = testing::kNaN;
            ds.r2(i) = 0;
        }
    MiConfig cfg;
    cfg.m = 2;
    cfg.donors = 5;
    CHECK_THROWS_AS(mi_impute(ds, cfg), ValidationError);
}

TEST_CASE("rubin: M = 2 toy") {
    std::vector<Eigen::VectorXd> q{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 3.0)};
    std::vector<Eigen::MatrixXd> u{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::MatrixXd::Constant(1, 1, 1.0)};
    auto p = rubin_pool(q, u);
    CHECK(p.estimate(0) == 2.0);
    CHECK(p.within(0, 0) == 1.0);
    CHECK(p.between(0, 0) == 2.0);
    CHECK(p.total(0, 0) == 4.0);
    // r = 1.5 * 2 / 1 = 3, dof = 1 * (1 + 1/3)^2
    CHECK(p.dof(0) == doctest::Approx(16.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("rubin: identical estimates, permutation, M = 1") {
    Eigen::Vector2d a(1, 2);
    Eigen::Matrix2d v;
    v << 2, 0.5, 0.5, 1;
    std::vector<Eigen::VectorXd> q{a, a, a};
    std::vector<Eigen::MatrixXd> u{v, v, v};
    auto p = rubin_pool(q, u);
    CHECK(p.between.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.total == p.within);
    CHECK(std::isinf(p.dof(0)));

    std::vector<Eigen::VectorXd> q2{Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 1), Eigen::Vector2d(0.5, 4)};
    std::vector<Eigen::MatrixXd> u2{v, 2 * v, 3 * v};
    auto p1 = rubin_pool(q2, u2);
    std::vector<Eigen::VectorXd> q3{q2[2], q2[0], q2[1]};
    std::vector<Eigen::MatrixXd> u3{u2[2], u2[0], u2[1]};
    auto p2 = rubin_pool(q3, u3);
    CHECK((p1.estimate - p2.estimate).cwiseAbs().maxCoeff() < 1e-15);
    Eigen::MatrixXd t = p1.within + (1.0 + 1.0 / 3.0) * p1.between;
    CHECK((p1.total - t).cwiseAbs().maxCoeff() < 1e-14);

    std::vector<Eigen::VectorXd> one{a};
    std::vector<Eigen::MatrixXd> onev{v};
    CHECK_THROWS_AS(rubin_pool(one, onev), ValidationError);
}

TEST_CASE("pattern mixture offsets") {
    auto trial = qaly_missing_trial(37);
    MiConfig cfg;
    cfg.m = 5;
    cfg.seed = 3;
    auto imp = mi_impute(trial.data, cfg);
    auto base = analyze_imputations(imp, itt_plain);

    SUBCASE("zero delta is identity") {
        std::vector<Offset> offs{{2, 1, 0.0}};
        auto res = pattern_mixture_offset(imp, offs);
        for (int j = 0; j < imp.m(); ++j) CHECK(to_csv(res.set.datasets[j]) == to_csv(imp.datasets[j]));
    }
    SUBCASE("delta shifts pooled incremental QALY by delta times imputed fraction") {
        const double delta = -0.05;
        std::vector<Offset> offs{{2, 1, delta}};
        auto res = pattern_mixture_offset(imp, offs);
        double n1 = 0, imputed1 = 0;
        for (Eigen::Index i = 0; i < trial.data.size(); ++i)
            if (trial.data.z(i) == 1) {
                n1 += 1;
                imputed1 += trial.data.r2(i) == 0;
            }
        REQUIRE(imputed1 > 0);
        auto shifted = analyze_imputations(res.set, itt_plain);
        double brute = 0;
        for (const auto& d : res.set.datasets) brute += mean_diff(d, d.y2);
        brute /= imp.m();
        CHECK(std::abs(shifted.pooled.estimate(1) - brute) < 1e-10);
        CHECK(std::abs(shifted.pooled.estimate(1) - base.pooled.estimate(1) - delta * imputed1 / n1) < 1e-10);
        CHECK(shifted.pooled.estimate(0) == doctest::Approx(base.pooled.estimate(0)).epsilon(1e-10));
        for (Eigen::Index i = 0; i < trial.data.size(); ++i)
            if (trial.data.r2(i)) CHECK(res.set.datasets[0].y2(i) == imp.datasets[0].y2(i));
    }
    SUBCASE("INB is monotone in the treatment-arm QALY delta") {
        double prev = -1e300;
        for (double delta : {-0.1, -0.05, 0.0, 0.05, 0.1}) {
            std::vector<Offset> offs{{2, 1, delta}};
            auto a = analyze_imputations(pattern_mixture_offset(imp, offs).set, itt_plain);
            double inb = 20000 * a.pooled.estimate(1) - a.pooled.estimate(0);
            CHECK(inb > prev);
            prev = inb;
        }
    }
    SUBCASE("never-imputed variable warns") {
        std::vector<Offset> offs{{1, 1, 10.0}};
        CHECK_FALSE(pattern_mixture_offset(imp, offs).warnings.empty());
    }
}
