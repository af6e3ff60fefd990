#pragma once

#include "ivcea/cea.hpp"
#include "ivcea/data_model.hpp"
#include "ivcea/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ivcea {

enum class BayesMissing {
    Cca,    // analyse subjects with every modelled value observed
    Model,  // sample missing outcomes and covariates inside the chain
};

/// Normal prior on one effect parameter, in original data units.
/// Parameter names: "b10" (compliance difference), "b11" (cost), "b12" (QALY).
struct PriorOverride {
    std::string parameter;
    double mean = 0.0;
    double sd = 10.0;
};

struct BayesIvConfig {
    /// SD of the N(0, sd^2) prior on every regression coefficient. Outcomes
    /// and covariates are standardised before sampling, so the prior applies
    /// on that scale.
    double prior_sd = 10.0;
    std::vector<PriorOverride> prior_overrides{};
    /// Wishart(df, scale) prior on the inverse residual covariance of (D, Y1, Y2).
    double wishart_df = 4.0;
    Eigen::Matrix3d wishart_scale = Eigen::Matrix3d::Identity();
    int chains = 4;
    int iterations = 10000;  // per chain, including burn-in
    int burnin = 5000;
    int thin = 1;
    std::uint64_t seed = 1;
    /// Initial random-walk SD for b10, as a multiple of its least-squares SE.
    /// Tuned during burn-in towards 44% acceptance, then frozen.
    double proposal_scale = 2.4;
    std::vector<std::string> covariates{};
    BayesMissing missing = BayesMissing::Cca;
    /// Throw MixingError when any split R-hat exceeds rhat_threshold.
    bool fail_on_nonconvergence = true;
    double rhat_threshold = 1.05;
    unsigned workers = 1;

    /// Throws ConfigError when invalid.
    void validate() const;
};

/// Posterior draws from all chains, chain-major, on the original data scale.
///
/// Columns: b00, b10, b01, b11, b02, b12 (intercepts and effects of the
/// reduced form), then covariate coefficients named "<cov>:d", "<cov>:y1",
/// "<cov>:y2", then the residual covariance entries s_dd, s_d1, s_d2, s_11,
/// s_12, s_22.
struct PosteriorDraws {
    std::vector<std::string> names;
    Eigen::MatrixXd draws;  // (chains * kept) x names.size()
    int chains = 0;
    int kept_per_chain = 0;
    Eigen::VectorXd acceptance;  // b10 Metropolis acceptance rate per chain
    Eigen::VectorXd rhat;        // split R-hat per column
    Eigen::VectorXd ess;         // effective sample size per column
    Eigen::Index n_used = 0;
    Eigen::Index n_augmented = 0;  // subjects with at least one sampled value
    std::string missing_method = "cca";
    BayesIvConfig config;
    std::vector<std::string> warnings;

    Eigen::Index index_of(const std::string& name) const;
    Eigen::VectorXd column(const std::string& name) const { return draws.col(index_of(name)); }
    Eigen::Matrix3d sigma(Eigen::Index draw) const;
    double max_rhat() const;
};

/// Raised when a chain set fails the R-hat check. The draws are kept for inspection.
class MixingError : public ConvergenceError {
public:
    MixingError(const std::string& what, std::shared_ptr<const PosteriorDraws> draws)
        : ConvergenceError(what), draws_(std::move(draws)) {}
    const PosteriorDraws& draws() const { return *draws_; }

private:
    std::shared_ptr<const PosteriorDraws> draws_;
};

/// Bayesian reduced-form IV for (D, Y1, Y2) ~ trivariate normal with means
///   D:  X g0 + b10 Z
///   Y1: X g1 + b11 b10 Z
///   Y2: X g2 + b12 b10 Z
/// where X holds an intercept and the covariates. The causal effects are
/// b11 (cost) and b12 (QALY).
///
/// Sampler per iteration: the coefficients other than b10 by their exact
/// normal full conditional, b10 by adaptive random-walk Metropolis, the
/// inverse covariance by its Wishart full conditional, and (with
/// BayesMissing::Model) missing outcomes and covariates from their
/// conditionals, each incomplete covariate having its own normal model.
/// Chains use independent seeded substreams and may run in parallel.
///
/// Throws IdentificationError before sampling when Z is constant or
/// receipt does not differ by arm.
PosteriorDraws fit_bayes_iv(const TrialDataset& ds, const BayesIvConfig& cfg = {});

/// Medians and equal-tailed 95% intervals of b11, b12 and the per-draw INB.
CeaResult summarize_posterior(const PosteriorDraws& draws, double lambda);

/// Split R-hat of one parameter; `chains` is draws x chains.
double split_rhat(const Eigen::MatrixXd& chains);

/// Multi-chain effective sample size using Geyer's initial positive sequence.
double effective_sample_size(const Eigen::MatrixXd& chains);

/// Sample quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double p);

}  // namespace ivcea
