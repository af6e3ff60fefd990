#pragma once

#include "ivcea/data_model.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/linreg.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ivcea {

// ---------------------------------------------------------------------------
// Inverse probability weighting
// ---------------------------------------------------------------------------

/// Candidate regressors for the three probability-of-missingness models.
///
/// Variable names: "z" (assignment), "d" (receipt), "y1", "y2", or any
/// covariate name. Cascade variables (eq5d0, y1, y2) may only be candidates
/// for a model later in `order` than themselves, where they are observed.
struct PomSpec {
    std::array<std::vector<std::string>, 3> candidates{};  // by slot
    double p_threshold = 0.1;
    MonotoneOrder order = kDefaultOrder;

    /// Fully observed baseline covariates for every model; assignment and
    /// receipt from the second model on; each earlier cascade variable.
    static PomSpec defaults(const TrialDataset& ds, const MonotoneOrder& order = kDefaultOrder);

    /// Throws ConfigError when a candidate is not observed at its stage.
    void validate() const;
};

struct PomModel {
    int slot = 0;
    /// Regressors kept by backward selection (intercept implicit).
    std::vector<std::string> selected;
    /// Regressors removed, in removal order.
    std::vector<std::string> removed;
    FitResult fit;  // empty when `always_observed`
    Eigen::Index n_at_risk = 0;
    /// Every at-risk subject was observed; the fitted probability is 1.
    bool always_observed = false;
};

struct FittedPoms {
    std::array<PomModel, 3> models{};  // by slot
    MonotoneOrder order = kDefaultOrder;
};

/// One logistic model per indicator on the at-risk subset of the monotone
/// cascade, with backward elimination by largest Wald p-value until every
/// remaining p-value is below the threshold. Requires a monotone dataset.
/// Throws PositivityError on perfect prediction.
FittedPoms fit_pom(const TrialDataset& ds, const PomSpec& spec);

/// Fitted observation probability of every subject under one model
/// (subjects whose regressors are missing get NaN).
Eigen::VectorXd pom_probabilities(const TrialDataset& ds, const PomModel& model);

struct WeightOptions {
    /// Multiply by the observed fraction of complete cases (mean weight near 1).
    bool stabilize = false;
    /// Cap weights at this quantile of the complete-case weights, e.g. 0.99.
    std::optional<double> truncation_quantile{};
    /// Warn when max / mean weight exceeds this ratio.
    double instability_ratio = 10.0;
};

struct WeightVector {
    Eigen::VectorXd w;  // 0 for incomplete cases
    bool stabilized = false;
    std::optional<double> truncation_quantile{};
    double truncated_at = 0.0;
    Eigen::Index n_truncated = 0;
    double max = 0.0;
    double mean = 0.0;  // over complete cases
    Eigen::Index n_complete = 0;
    std::vector<std::string> warnings;

    std::span<const double> span() const { return {w.data(), static_cast<std::size_t>(w.size())}; }
};

/// w_i = 1 / (pi0_i pi1_i pi2_i) for complete cases, 0 otherwise.
/// Throws PositivityError when a complete case has a fitted probability of 0.
WeightVector ipw_weights(const TrialDataset& ds, const FittedPoms& poms, const WeightOptions& opt = {});

// ---------------------------------------------------------------------------
// Multiple imputation
// ---------------------------------------------------------------------------

struct MiConfig {
    int m = 50;
    int donors = 5;
    int cycles = 10;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    /// Fully observed covariates used as imputation predictors in addition to
    /// receipt and the other imputed variables. Empty means every fully
    /// observed covariate.
    std::optional<std::vector<std::string>> auxiliary{};
    bool include_receipt = true;
};

/// M completed copies of a dataset. Completed datasets carry indicator 1
/// everywhere; `imputed` records which cells were filled in (by slot).
struct ImputationSet {
    TrialDataset source;
    std::vector<TrialDataset> datasets;
    std::array<Eigen::VectorXi, 3> imputed{};
    std::vector<int> imputation_order;  // slots, in chained-equation order
    MiConfig config;

    int m() const { return static_cast<int>(datasets.size()); }
};

/// Chained-equation multiple imputation with predictive mean matching,
/// stratified by randomised arm. Each step regresses the target on receipt,
/// the other cascade variables and auxiliary covariates, draws the
/// coefficients and residual variance from their approximate posterior, and
/// fills every missing cell with the observed value of a donor drawn
/// uniformly from the `donors` nearest predicted means (type-1 matching).
/// Imputation j uses its own seeded substream.
ImputationSet mi_impute(const TrialDataset& ds, const MiConfig& cfg);

/// Number of imputed cells whose value is not an observed value of that
/// variable within the same randomised arm (0 for a correct PMM run).
std::size_t count_pmm_violations(const ImputationSet& imp);

struct PooledEstimate {
    Eigen::VectorXd estimate;  // Q-bar
    Eigen::MatrixXd within;    // W
    Eigen::MatrixXd between;   // B
    Eigen::MatrixXd total;     // T = W + (1 + 1/M) B
    Eigen::VectorXd dof;       // per component; infinity when B = 0
    int m = 0;
    std::string dof_method = "rubin-large-sample";

    double se(Eigen::Index j) const { return std::sqrt(total(j, j)); }
};

/// Rubin's rules. dof_j = (M - 1) (1 + 1/r_j)^2 with r_j = (1 + 1/M) B_jj / W_jj.
PooledEstimate rubin_pool(std::span<const Eigen::VectorXd> estimates, std::span<const Eigen::MatrixXd> covariances);

/// Rubin degrees of freedom for a scalar with within variance w and between variance b.
double rubin_dof(double w, double b, int m);

struct MiAnalysis {
    PooledEstimate pooled;  // over (cost, QALY)
    std::vector<CaceEstimate> per_imputation;
};

/// Runs the analysis on every completed dataset and pools (theta1, theta2).
MiAnalysis analyze_imputations(const ImputationSet& imp,
                               const std::function<CaceEstimate(const TrialDataset&)>& analysis);

// ---------------------------------------------------------------------------
// Pattern-mixture sensitivity analysis
// ---------------------------------------------------------------------------

enum class ArmBy { Assigned, Received };

struct Offset {
    int slot = 2;  // 0 = eq5d0, 1 = y1 (cost), 2 = y2 (QALY)
    int arm = 1;
    double delta = 0.0;
};

struct OffsetResult {
    ImputationSet set;
    std::vector<std::string> warnings;
};

/// Adds delta to every imputed cell of the offset's variable in its arm.
/// Observed cells are never changed.
OffsetResult pattern_mixture_offset(const ImputationSet& imp, std::span<const Offset> offsets,
                                    ArmBy arm_by = ArmBy::Assigned);

}  // namespace ivcea
