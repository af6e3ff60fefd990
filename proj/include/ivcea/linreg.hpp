#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ivcea {

enum class CovarianceType {
    Classical,  // sigma^2 (X'WX)^-1, residual variance on n - k degrees of freedom
    Robust,     // heteroscedasticity-robust sandwich (HC0)
};

/// Relative pivot threshold for rank decisions in every least-squares solve.
inline constexpr double kRankTolerance = 1e-10;

struct FitResult {
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd residuals;
    Eigen::VectorXd fitted;  // X b for OLS, probabilities for logistic
    Eigen::Index nobs = 0;
    std::vector<std::string> names;
    double sigma2 = 0.0;  // OLS residual variance; 1 for logistic
    int iterations = 0;

    double se(Eigen::Index j) const;
    /// Two-sided normal-reference Wald p-value for coefficient j.
    double p_value(Eigen::Index j) const;
    Eigen::Index index_of(const std::string& name) const;
};

struct OlsOptions {
    /// Nonnegative observation weights; empty for an unweighted fit.
    std::span<const double> weights{};
    CovarianceType covariance = CovarianceType::Classical;
    /// Column names used in error messages and results.
    std::vector<std::string> names{};
};

/// (Weighted) least squares via column-pivoted QR.
/// Throws SingularError naming the columns dropped by the rank decision.
FitResult ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const OlsOptions& opt = {});

struct LogisticOptions {
    int max_iterations = 50;
    double gradient_tolerance = 1e-8;
    /// Coefficient norm beyond which the fit is declared separated.
    double divergence_norm = 1e4;
    /// Linear predictor magnitude treated as a fitted probability of 0 or 1.
    double boundary_eta = 30.0;
    std::span<const double> weights{};
    std::vector<std::string> names{};
};

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton-Raphson with step halving). Covariance is the inverse
/// observed information.
///
/// Throws SeparationError when y is constant, the coefficient norm diverges
/// or a fitted probability reaches the 0/1 boundary, and ConvergenceError
/// when the gradient tolerance is not met in max_iterations.
FitResult logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const LogisticOptions& opt = {});

/// One equation of a stacked system.
struct Equation {
    Eigen::MatrixXd design;
    Eigen::VectorXd y;
    std::vector<std::string> names{};
    /// Design used to form residuals when it differs from `design`
    /// (the structural regressors in three-stage least squares).
    std::optional<Eigen::MatrixXd> residual_design{};
};

struct SystemEstimate {
    std::vector<Eigen::VectorXd> blocks;  // per-equation coefficients
    Eigen::VectorXd coefficients;         // blocks stacked
    Eigen::MatrixXd covariance;           // joint covariance of `coefficients`
    Eigen::MatrixXd residual_cov;         // sigma_{ll'} used in the GLS step
    std::vector<Eigen::VectorXd> residuals;
    std::vector<Eigen::Index> offsets;  // start of each block in `coefficients`
    Eigen::Index nobs = 0;
    int iterations = 0;

    double coef(std::size_t eq, Eigen::Index j) const { return blocks[eq](j); }
    /// Covariance between coefficient j of equation a and coefficient k of equation b.
    double cov(std::size_t a, Eigen::Index j, std::size_t b, Eigen::Index k) const {
        return covariance(offsets[a] + j, offsets[b] + k);
    }
};

struct FglsOptions {
    /// Known residual covariance; estimated from first-stage OLS when absent.
    std::optional<Eigen::MatrixXd> residual_cov{};
    std::span<const double> weights{};
    CovarianceType covariance = CovarianceType::Classical;
    /// Re-estimate the residual covariance from GLS residuals until the
    /// coefficients stop moving (iterated FGLS). Off by default.
    bool iterate = false;
    int max_iterations = 100;
    double tolerance = 1e-10;
};

/// Residual covariance with a (n - k_l)(n - k_l') degrees-of-freedom correction.
Eigen::MatrixXd residual_covariance(const std::vector<Eigen::VectorXd>& residuals,
                                    const std::vector<Eigen::Index>& ncoef,
                                    std::span<const double> weights = {});

/// Feasible GLS for seemingly unrelated regressions (one-step Zellner by default).
/// All equations must share the same observations.
SystemEstimate fgls_system(std::span<const Equation> equations, const FglsOptions& opt = {});

/// Normal CDF and two-sided p-value helpers shared by the estimators.
double normal_cdf(double x);
double two_sided_p(double z);

}  // namespace ivcea
