#pragma once

#include "ivcea/data_model.hpp"
#include "ivcea/linreg.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace ivcea {

enum class Estimand { Cace, Itt, Pp, Ate };

std::string to_string(Estimand e);
Estimand parse_estimand(const std::string& s);

enum class Outcome { Cost, Qaly };

/// Conventional weak-instrument threshold on the first-stage F statistic.
inline constexpr double kWeakInstrumentF = 10.0;

/// Treatment effects on (cost, QALY) with their joint covariance.
struct CaceEstimate {
    Eigen::Vector2d theta = Eigen::Vector2d::Zero();  // (cost, QALY)
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
    double alpha1 = 0.0;         // first-stage coefficient on assignment
    double first_stage_f = 0.0;  // alpha1^2 / var(alpha1)
    Estimand estimand = Estimand::Cace;
    Eigen::Index n_used = 0;
    SystemEstimate system;  // full stacked fit, both equations
    std::vector<std::string> coefficient_names;
    std::vector<std::string> warnings;

    double se(int j) const;
};

struct IvOptions {
    std::vector<std::string> covariates{};
    /// Per-subject weights over the full dataset (e.g. inverse probability
    /// weights). Subjects with zero weight are excluded.
    std::span<const double> weights{};
    CovarianceType covariance = CovarianceType::Robust;
};

/// {E(Y|Z=1) - E(Y|Z=0)} / {E(D|Z=1) - E(D|Z=0)}.
/// Throws IdentificationError when an arm is empty or receipt does not differ by arm.
double wald_cace(const Eigen::VectorXi& z, const Eigen::VectorXi& d, const Eigen::VectorXd& y);

struct TslsResult {
    FitResult fit;          // second stage: (Intercept), d, covariates...
    FitResult first_stage;  // d on (Intercept), z, covariates...
    double first_stage_f = 0.0;
    std::vector<std::string> warnings;

    double effect() const { return fit.coefficients(1); }
    double effect_se() const { return fit.se(1); }
};

/// Two-stage least squares for one outcome. The first stage always contains
/// every second-stage covariate. Standard errors use the structural residuals
/// y - [1, d, X] b, not the second-stage residuals.
TslsResult tsls(const TrialDataset& ds, Outcome outcome, const IvOptions& opt = {});

/// 2sls for both outcomes on their common complete cases, with the joint
/// covariance of the two effect estimates (cross term from the structural
/// residuals of both equations).
CaceEstimate tsls_pair(const TrialDataset& ds, const IvOptions& opt = {});

/// Three-stage least squares for (cost, QALY): 2sls per outcome, residual
/// covariance from the 2sls structural residuals, then GLS on the stacked
/// system with fitted receipt.
CaceEstimate three_sls(const TrialDataset& ds, const IvOptions& opt = {});

/// Intention-to-treat SUR: both outcomes on assignment and covariates.
CaceEstimate itt_sur(const TrialDataset& ds, const IvOptions& opt = {});

/// Per-protocol SUR: drops subjects with d != z, then both outcomes on receipt.
CaceEstimate pp_sur(const TrialDataset& ds, const IvOptions& opt = {});

/// Inverse probability of adherence weighting. Adherers (d == z) are weighted
/// by 1 / P(adherent | z, covariates) from a logistic non-compliance model and
/// analysed by SUR on receipt. Targets the average treatment effect and
/// requires that the covariates capture every confounder of adherence.
/// Throws PositivityError when the model predicts adherence perfectly.
CaceEstimate ipw_adherence(const TrialDataset& ds, const IvOptions& opt = {});

struct BinaryIvResult {
    FitResult first_stage;    // linear: d on (Intercept), z, covariates
    FitResult outcome_model;  // logistic second stage
    double log_odds_ratio = 0.0;
    double se = 0.0;  // second-stage model-based SE, not corrected for the first stage
    double first_stage_f = 0.0;
    std::vector<std::string> warnings;
};

/// Two-stage predictor substitution: logistic regression of y on fitted d.
/// Biased for the conditional odds ratio when d and y share unmeasured causes.
BinaryIvResult tsps(const TrialDataset& ds, const Eigen::VectorXd& binary_outcome, const IvOptions& opt = {});

/// Two-stage residual inclusion: logistic regression of y on d and the
/// first-stage residual. Because the odds ratio is non-collapsible, the
/// estimate is conditional on the residual and only targets the population
/// conditional odds ratio when there is no unmeasured confounding.
BinaryIvResult tsri(const TrialDataset& ds, const Eigen::VectorXd& binary_outcome, const IvOptions& opt = {});

}  // namespace ivcea
