#include "ivcea/errors.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/rng.hpp"
#include "ivcea/simulator.hpp"

#include <doctest.h>

#include <cmath>

using namespace ivcea;

TEST_CASE("perfect compliance: D equals Z and CACE equals ITT") {
    auto cfg = confounded_switching();
    cfg.p_complier = 1.0;
    cfg.p_never_taker = cfg.p_always_taker = 0.0;
    auto t = generate_trial(cfg);
    CHECK(t.data.d == t.data.z);
    CHECK(t.truth.cace == t.truth.itt);
}

TEST_CASE("large sample: compliance difference 0.6, ITT on cost 600") {
    auto cfg = confounded_switching();
    cfg.n = 100000;
    cfg.seed = 17;
    auto t = generate_trial(cfg);
    const auto& ds = t.data;
    double d1 = 0, d0 = 0, n1 = 0, n0 = 0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        (ds.z(i) ? d1 : d0) += ds.d(i);
        (ds.z(i) ? n1 : n0) += 1;
    }
    const double diff = d1 / n1 - d0 / n0;
    CHECK(std::abs(diff - 0.6) < 3 * std::sqrt(0.25 / n1 + 0.25 / n0));
    auto itt = itt_sur(ds);
    CHECK(std::abs(itt.theta(0) - 600.0) < 3 * itt.se(0));
    CHECK(t.truth.itt(0) == doctest::Approx(600.0));
    CHECK(t.truth.compliance_difference == doctest::Approx(0.6));
}

TEST_CASE("strata: monotone receipt and exclusion") {
    auto t = generate_trial(confounded_switching());
    const auto& tr = t.truth;
    for (Eigen::Index i = 0; i < t.data.size(); ++i) {
        CHECK(tr.d1(i) >= tr.d0(i));
        CHECK(t.data.d(i) == (t.data.z(i) ? tr.d1(i) : tr.d0(i)));
        // exclusion: potential outcomes differ only for compliers
        if (tr.stratum[static_cast<std::size_t>(i)] != Stratum::Complier) {
            CHECK(tr.y1_potential(i, 0) == tr.y1_potential(i, 1));
            CHECK(tr.y2_potential(i, 0) == tr.y2_potential(i, 1));
        } else {
            CHECK(tr.y1_potential(i, 1) - tr.y1_potential(i, 0) == doctest::Approx(1000.0));
        }
    }
}

TEST_CASE("switching is prognosis driven") {
    auto cfg = confounded_switching();
    cfg.n = 20000;
    auto t = generate_trial(cfg);
    double u_never = 0, u_always = 0, n_never = 0, n_always = 0;
    for (Eigen::Index i = 0; i < t.data.size(); ++i) {
        auto s = t.truth.stratum[static_cast<std::size_t>(i)];
        if (s == Stratum::NeverTaker) {
            u_never += t.truth.u(i);
            n_never += 1;
        } else if (s == Stratum::AlwaysTaker) {
            u_always += t.truth.u(i);
            n_always += 1;
        }
    }
    CHECK(u_never / n_never < 0);
    CHECK(u_always / n_always > 0);
}

TEST_CASE("null effects: estimators centred on zero") {
    double s3 = 0, ss3 = 0, si = 0, ssi = 0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
        auto cfg = confounded_switching();
        cfg.effect_cost = cfg.effect_qaly = 0.0;
        cfg.seed = derive_seed(77, 1, rep);
        auto ds = generate_trial(cfg).data;
        double a = three_sls(ds).theta(0), b = itt_sur(ds).theta(0);
        s3 += a;
        ss3 += a * a;
        si += b;
        ssi += b * b;
    }
    auto mcse = [&](double s, double ss) { return std::sqrt((ss - s * s / reps) / (reps - 1) / reps); };
    CHECK(std::abs(s3 / reps) < 3 * mcse(s3, ss3));
    CHECK(std::abs(si / reps) < 3 * mcse(si, ssi));
}

TEST_CASE("missingness: MCAR rates") {
    auto t = generate_trial(confounded_switching());
    auto none = apply_missingness(t.data, MissingnessConfig::mcar(0.0), 3).data;
    CHECK(none.r1.sum() == none.size());
    CHECK(none.r2.sum() == none.size());
    CHECK(none.r0().sum() == none.size());

    // the cascade compounds: slot 0 alone is a clean binomial draw
    auto some = apply_missingness(t.data, MissingnessConfig::mcar(0.3), 4).data;
    const double n = static_cast<double>(some.size());
    const double miss0 = 1.0 - some.r0().sum() / n;
    CHECK(std::abs(miss0 - 0.3) < 3 * std::sqrt(0.3 * 0.7 / n));
    CHECK(is_monotone(some));
}

TEST_CASE("missingness: MAR preset drops about 40% of costs") {
    auto cfg = mar_cost_on_qaly();
    cfg.n = 20000;
    auto t = generate_trial(cfg);
    auto ds = apply_missingness(t.data, cfg.missingness, 5).data;
    const double frac = 1.0 - ds.r1.sum() / static_cast<double>(ds.size());
    CHECK(frac > 0.35);
    CHECK(frac < 0.45);
    CHECK(ds.r2.sum() == ds.size());
    CHECK(is_monotone(ds, cfg.missingness.order));
}

TEST_CASE("determinism and validation") {
    auto cfg = confounded_switching();
    cfg.seed = 99;
    auto a = generate_trial(cfg), b = generate_trial(cfg);
    CHECK(to_csv(a.data) == to_csv(b.data));
    CHECK(a.truth.u == b.truth.u);
    auto ma = apply_missingness(a.data, MissingnessConfig::mcar(0.2), 8).data;
    auto mb = apply_missingness(b.data, MissingnessConfig::mcar(0.2), 8).data;
    CHECK(to_csv(ma) == to_csv(mb));

    cfg.p_complier = 0.9;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    auto bad = confounded_switching();
    bad.missingness.models[0].enabled = true;
    bad.missingness.models[0].y1 = 1.0;
    bad.missingness.mechanism = Mechanism::MAR;
    CHECK_THROWS_AS(generate_trial(bad), ConfigError);
}

TEST_CASE("positivity warning") {
    auto t = generate_trial(confounded_switching());
    MissingnessConfig mc;
    mc.mechanism = Mechanism::CDM;
    mc.models[1].enabled = true;
    mc.models[1].intercept = -40.0;
    CHECK_FALSE(apply_missingness(t.data, mc, 1).warnings.empty());
}
