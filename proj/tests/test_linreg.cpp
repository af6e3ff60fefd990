#include "helpers.hpp"

#include "ivcea/errors.hpp"
#include "ivcea/linreg.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace ivcea;

namespace {

Eigen::MatrixXd with_intercept(const Eigen::VectorXd& x) {
    Eigen::MatrixXd X(x.size(), 2);
    X.col(0).setOnes();
    X.col(1) = x;
    return X;
}

// plain Newton-Raphson on two parameters, 2x2 inverse by hand
std::array<double, 2> newton_logit(const std::vector<double>& x, const std::vector<double>& y) {
    double b0 = 0, b1 = 0;
    for (int it = 0; it < 100; ++it) {
        double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * x[i])));
            double w = p * (1 - p);
            g0 += y[i] - p;
            g1 += (y[i] - p) * x[i];
            h00 += w;
            h01 += w * x[i];
            h11 += w * x[i] * x[i];
        }
        double det = h00 * h11 - h01 * h01;
        b0 += (h11 * g0 - h01 * g1) / det;
        b1 += (-h01 * g0 + h00 * g1) / det;
    }
    return {b0, b1};
}

}  // namespace

TEST_CASE("ols: exact fit y = 2x") {
    Eigen::VectorXd x(4);
    x << 1, 2, 3, 4;
    auto fit = ols(with_intercept(x), 2 * x);
    CHECK(fit.coefficients(0) == doctest::Approx(0).epsilon(1e-12));
    CHECK(fit.coefficients(1) == doctest::Approx(2).epsilon(1e-12));
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ols: five points against hand-solved normal equations") {
    // X'X = [[5, 15], [15, 55]], X'y = [20, 69]  =>  b = (1.3, 0.9)
    Eigen::VectorXd x(5), y(5);
    x << 1, 2, 3, 4, 5;
    y << 2, 3, 5, 4, 6;
    auto fit = ols(with_intercept(x), y);
    CHECK(fit.coefficients(0) == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(fit.coefficients(1) == doctest::Approx(0.9).epsilon(1e-12));
    // residuals (-0.2, -0.1, 1.0, -0.9, 0.2): RSS = 1.9, sigma2 = 1.9 / 3
    CHECK(fit.sigma2 == doctest::Approx(1.9 / 3).epsilon(1e-12));
    CHECK(fit.covariance(1, 1) == doctest::Approx(1.9 / 3 * 5.0 / 50.0).epsilon(1e-12));
    CHECK(fit.covariance(0, 1) == doctest::Approx(1.9 / 3 * -15.0 / 50.0).epsilon(1e-12));
}

TEST_CASE("ols: robust covariance is the HC0 sandwich") {
    Eigen::VectorXd x(5), y(5);
    x << 1, 2, 3, 4, 5;
    y << 2, 3, 5, 4, 6;
    Eigen::MatrixXd X = with_intercept(x);
    OlsOptions opt;
    opt.covariance = CovarianceType::Robust;
    auto fit = ols(X, y, opt);
    Eigen::VectorXd e(5);
    e << -0.2, -0.1, 1.0, -0.9, 0.2;
    Eigen::Matrix2d bread = (X.transpose() * X).inverse();
    Eigen::Matrix2d meat = X.transpose() * e.cwiseAbs2().asDiagonal() * X;
    Eigen::Matrix2d expected = bread * meat * bread;
    CHECK((fit.covariance - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ols: equal weights match the unweighted fit") {
    auto ds = testing::random_iv_data(40, 11);
    Eigen::MatrixXd X(40, 3);
    X.col(0).setOnes();
    X.col(1) = ds.d.cast<double>();
    X.col(2) = ds.covariate("x").values;
    std::vector<double> w(40, 3.7);
    OlsOptions opt;
    opt.weights = w;
    auto a = ols(X, ds.y1);
    auto b = ols(X, ds.y1, opt);
    CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ols: rank deficiency names the column") {
    Eigen::VectorXd x(4);
    x << 1, 2, 3, 4;
    Eigen::MatrixXd X(4, 3);
    X << Eigen::VectorXd::Ones(4), x, 2 * x;
    OlsOptions opt;
    opt.names = {"(Intercept)", "x", "x2"};
    try {
        ols(X, x, opt);
        FAIL("expected SingularError");
    } catch (const SingularError& e) {
        REQUIRE(e.columns().size() == 1);
        CHECK((e.columns()[0] == "x" || e.columns()[0] == "x2"));
    }
}

TEST_CASE("logistic: constant response is separation") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 1);
    CHECK_THROWS_AS(logistic(X, Eigen::VectorXd::Ones(5)), SeparationError);
}

TEST_CASE("logistic: complete separation") {
    Eigen::VectorXd x(6), y(6);
    x << 1, 2, 3, 4, 5, 6;
    y << 0, 0, 0, 1, 1, 1;
    CHECK_THROWS_AS(logistic(with_intercept(x), y), SeparationError);
}

TEST_CASE("logistic: balanced y independent of x") {
    Eigen::VectorXd x(8), y(8);
    x << 0, 0, 0, 0, 1, 1, 1, 1;
    y << 0, 1, 1, 0, 1, 0, 0, 1;
    auto fit = logistic(with_intercept(x), y);
    CHECK(std::abs(fit.coefficients(1)) < 1e-6);
    CHECK(std::abs(fit.coefficients(0)) < 1e-6);
}

TEST_CASE("logistic: six rows against an independent Newton solve") {
    std::vector<double> xs{0, 1, 2, 3, 4, 5}, ys{0, 0, 1, 0, 1, 1};
    auto oracle = newton_logit(xs, ys);
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xs.data(), 6), y = Eigen::Map<Eigen::VectorXd>(ys.data(), 6);
    auto fit = logistic(with_intercept(x), y);
    CHECK(fit.coefficients(0) == doctest::Approx(oracle[0]).epsilon(1e-6));
    CHECK(fit.coefficients(1) == doctest::Approx(oracle[1]).epsilon(1e-6));
    CHECK(fit.p_value(1) > 0.0);
    CHECK(fit.p_value(1) < 1.0);
}

TEST_CASE("logistic: unbalanced intercept-only fit is logit of the mean") {
    Eigen::VectorXd y(10);
    y << 1, 1, 1, 0, 0, 0, 0, 0, 0, 0;
    auto fit = logistic(Eigen::MatrixXd::Ones(10, 1), y);
    CHECK(fit.coefficients(0) == doctest::Approx(std::log(0.3 / 0.7)).epsilon(1e-8));
}

TEST_CASE("fgls: identical designs reduce to per-equation ols") {
    auto ds = testing::random_iv_data(300, 21);
    Eigen::MatrixXd X(300, 3);
    X << Eigen::VectorXd::Ones(300), ds.d.cast<double>(), ds.covariate("x").values;
    std::vector<Equation> eqs{{X, ds.y1}, {X, ds.y2}};
    auto sys = fgls_system(eqs);
    auto o1 = ols(X, ds.y1), o2 = ols(X, ds.y2);
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::abs(sys.coef(0, j) - o1.coefficients(j)) <= 1e-8 * std::abs(o1.coefficients(j)));
        CHECK(std::abs(sys.coef(1, j) - o2.coefficients(j)) <= 1e-8 * std::abs(o2.coefficients(j)));
    }
    CHECK(sys.cov(0, 1, 1, 1) != 0.0);
}

TEST_CASE("fgls: one equation is ols") {
    auto ds = testing::random_iv_data(100, 22);
    Eigen::MatrixXd X(100, 2);
    X << Eigen::VectorXd::Ones(100), ds.covariate("x").values;
    std::vector<Equation> eqs{{X, ds.y1}};
    auto sys = fgls_system(eqs);
    auto o = ols(X, ds.y1);
    CHECK((sys.blocks[0] - o.coefficients).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sys.covariance - o.covariance).cwiseAbs().maxCoeff() < 1e-9 * o.covariance.cwiseAbs().maxCoeff());
}

TEST_CASE("fgls: subset regressors keep their ols coefficients") {
    auto ds = testing::random_iv_data(250, 23);
    Eigen::MatrixXd X1(250, 2), X2(250, 3);
    X1 << Eigen::VectorXd::Ones(250), ds.d.cast<double>();
    X2 << X1, ds.covariate("x").values;
    std::vector<Equation> eqs{{X1, ds.y1}, {X2, ds.y2}};
    auto sys = fgls_system(eqs);
    auto o1 = ols(X1, ds.y1);
    for (Eigen::Index j = 0; j < 2; ++j)
        CHECK(std::abs(sys.coef(0, j) - o1.coefficients(j)) <= 1e-8 * std::abs(o1.coefficients(j)));
}

TEST_CASE("fgls: singular residual covariance suggests ols") {
    auto ds = testing::random_iv_data(60, 24);
    Eigen::MatrixXd X(60, 2);
    X << Eigen::VectorXd::Ones(60), ds.covariate("x").values;
    std::vector<Equation> eqs{{X, ds.y1}, {X, ds.y1}};
    try {
        fgls_system(eqs);
        FAIL("expected SingularError");
    } catch (const SingularError& e) {
        CHECK(std::string(e.what()).find("ols") != std::string::npos);
    }
}

TEST_CASE("fgls: known residual covariance is used as given") {
    auto ds = testing::random_iv_data(80, 25);
    Eigen::MatrixXd X1(80, 2), X2(80, 1);
    X1 << Eigen::VectorXd::Ones(80), ds.covariate("x").values;
    X2 << Eigen::VectorXd::Ones(80);
    std::vector<Equation> eqs{{X1, ds.y1}, {X2, ds.y2}};
    Eigen::Matrix2d S;
    S << 2.0, 0.6, 0.6, 1.0;
    FglsOptions opt;
    opt.residual_cov = S;
    auto sys = fgls_system(eqs, opt);

    // direct GLS: b = (X' (S^-1 (x) I) X)^-1 X' (S^-1 (x) I) y
    Eigen::MatrixXd Xs = Eigen::MatrixXd::Zero(160, 3);
    Xs.block(0, 0, 80, 2) = X1;
    Xs.block(80, 2, 80, 1) = X2;
    Eigen::VectorXd ys(160);
    ys << ds.y1, ds.y2;
    Eigen::Matrix2d Si = S.inverse();
    Eigen::MatrixXd Om = Eigen::MatrixXd::Zero(160, 160);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            Om.block(80 * a, 80 * b, 80, 80) = Si(a, b) * Eigen::MatrixXd::Identity(80, 80);
    Eigen::MatrixXd A = Xs.transpose() * Om * Xs;
    Eigen::VectorXd b = A.inverse() * (Xs.transpose() * Om * ys);
    CHECK((sys.coefficients - b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sys.covariance - A.inverse()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("normal helpers") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
}
