#pragma once

#include "ivcea/data_model.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ivcea {

enum class Stratum { Complier = 0, NeverTaker = 1, AlwaysTaker = 2 };

enum class Mechanism { MCAR, CDM, MAR, MNAR };
std::string to_string(Mechanism m);
Mechanism parse_mechanism(const std::string& s);

/// Logistic model for one observation indicator:
/// logit P(observed) = intercept + sum of coefficient * predictor.
/// eq5d0, age, y1 and y2 enter as sample z-scores; z and d enter as 0/1.
struct ObservationModel {
    bool enabled = false;  // disabled: always observed
    double intercept = 0.0;
    double eq5d0 = 0.0;
    double age = 0.0;
    double z = 0.0;
    double d = 0.0;
    double y1 = 0.0;
    double y2 = 0.0;
};

struct MissingnessConfig {
    Mechanism mechanism = Mechanism::MCAR;
    /// Cascade order over indicator slots (0 = eq5d0, 1 = y1, 2 = y2). A value
    /// is only drawn as observed if every earlier slot is observed.
    MonotoneOrder order = kDefaultOrder;
    std::array<ObservationModel, 3> models{};  // indexed by slot

    /// MCAR with the same missing probability for every slot.
    static MissingnessConfig mcar(double missing_rate);
};

/// Data-generating process with principal-strata compliance driven by an
/// unobserved prognostic confounder U ~ N(0, 1).
///
/// Stratum: a latent uniform V = Phi(k U + sqrt(1 - k^2) e), e ~ N(0, 1),
/// is cut at the never-taker and complier shares, so subjects with low U
/// (good prognosis) tend to be never-takers and high U always-takers.
///
/// Outcomes: Y_l = base_l + u_l U + b_l (eq5d0 - mean) + effect_l D + sd_l eps_l
/// where (eps_1, eps_2) share a latent term giving correlation rho.
struct DgpConfig {
    Eigen::Index n = 2000;
    double p_complier = 0.6;
    double p_never_taker = 0.25;
    double p_always_taker = 0.15;
    double stratum_loading = 0.7;  // k above, in [0, 1)

    double eq5d0_mean = 0.6;
    double eq5d0_sd = 0.25;
    double age_mean = 50.0;  // auxiliary baseline covariate, no outcome effect by default
    double age_sd = 12.0;

    double cost_base = 5000.0;
    double qaly_base = 3.0;
    double cost_u = 600.0;   // U loading on cost
    double qaly_u = -0.12;   // U loading on QALY
    double cost_eq5d0 = -800.0;
    double qaly_eq5d0 = 1.5;
    double cost_age = 0.0;
    double qaly_age = 0.0;
    double cost_sd = 1500.0;
    double qaly_sd = 0.35;
    double rho = 0.5;

    double effect_cost = 1000.0;  // complier effect of receipt on cost
    double effect_qaly = 0.1;     // complier effect of receipt on QALY

    MissingnessConfig missingness{};
    std::uint64_t seed = 1;

    /// Throws ConfigError when invalid.
    void validate() const;
};

/// The reference "confounded-switching" scenario: n = 2000, complier share
/// 0.6, effects (1000, 0.1), rho = 0.5, complete data.
DgpConfig confounded_switching();

/// Reference scenario with about 40% of costs missing at random, driven by
/// the always-observed QALY outcome and assigned arm.
DgpConfig mar_cost_on_qaly();

struct DgpTruth {
    std::vector<Stratum> stratum;
    Eigen::VectorXi d0, d1;  // potential receipt under z = 0, 1
    Eigen::MatrixXd y1_potential;  // n x 2, columns z = 0, 1
    Eigen::MatrixXd y2_potential;
    Eigen::VectorXd u;
    Eigen::Vector2d cace = Eigen::Vector2d::Zero();  // configured complier effects
    Eigen::Vector2d itt = Eigen::Vector2d::Zero();   // population ITT = p_complier * cace
    double compliance_difference = 0.0;               // population E(D|Z=1) - E(D|Z=0)
    Eigen::Vector2d sample_cace = Eigen::Vector2d::Zero();  // mean over sampled compliers
};

struct SimulatedTrial {
    TrialDataset data;  // complete
    DgpTruth truth;
};

/// Complete trial data with 1:1 randomisation. Deterministic given cfg.seed.
SimulatedTrial generate_trial(const DgpConfig& cfg);

struct MissingnessResult {
    TrialDataset data;
    std::vector<std::string> warnings;
};

/// Draws observation indicators by the configured cascade. Requires a
/// complete dataset containing eq5d0. Deterministic given seed.
MissingnessResult apply_missingness(const TrialDataset& ds, const MissingnessConfig& cfg, std::uint64_t seed);

/// Binary outcome for the two-stage logistic estimators:
/// logit P(Y = 1) = intercept + log_or * D + u_loading * U, with U the
/// trial's confounder. Deterministic given seed.
Eigen::VectorXd generate_binary_outcome(const SimulatedTrial& trial, double intercept, double log_or,
                                        double u_loading, std::uint64_t seed);

}  // namespace ivcea
