#pragma once

#include "ivcea/iv.hpp"

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ivcea {

struct PosteriorDraws;
struct PooledEstimate;

/// Two-sided 95% normal quantile.
inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

enum class IntervalKind { Wald, Rubin, Credible };
std::string to_string(IntervalKind k);

/// Incremental cost-effectiveness summary at one willingness-to-pay value.
///
/// For Wald and Rubin results inb == lambda * incremental_qaly - incremental_cost
/// exactly and the interval is symmetric about inb. Credible results report
/// per-draw posterior medians and equal-tailed quantiles instead.
struct CeaResult {
    double incremental_cost = 0.0;
    double incremental_qaly = 0.0;
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
    double lambda = 0.0;
    double inb = 0.0;
    double inb_se = 0.0;
    Interval inb_interval;
    Interval cost_interval;
    Interval qaly_interval;
    double dof = std::numeric_limits<double>::infinity();  // t reference for Rubin intervals
    IntervalKind kind = IntervalKind::Wald;
    Estimand estimand = Estimand::Cace;
    std::string missing_method = "cca";
};

/// INB(lambda) = lambda * theta2 - theta1 with
/// var = lambda^2 var(theta2) + var(theta1) - 2 lambda cov(theta1, theta2).
CeaResult inb(const CaceEstimate& est, double lambda);

/// Same, from a point estimate and its 2x2 covariance.
CeaResult inb(const Eigen::Vector2d& theta, const Eigen::Matrix2d& covariance, double lambda);

/// INB from Rubin-pooled (cost, QALY) estimates, with a t interval whose
/// degrees of freedom are computed for the INB contrast itself.
CeaResult inb(const PooledEstimate& pooled, double lambda);

enum class Quadrant {
    TradeOff,      // costs more, gains QALYs
    Dominant,      // costs less, gains QALYs
    Dominated,     // costs more, loses QALYs
    CheaperWorse,  // costs less, loses QALYs
};
std::string to_string(Quadrant q);

struct IcerResult {
    double ratio = 0.0;
    Quadrant quadrant = Quadrant::TradeOff;
};

/// theta1 / theta2 with its cost-effectiveness plane quadrant.
/// Throws Error when the QALY difference is zero (use INB instead).
IcerResult icer(double incremental_cost, double incremental_qaly);
IcerResult icer(const CaceEstimate& est);

struct CeacPoint {
    double lambda = 0.0;
    double probability = 0.0;  // P(INB(lambda) > 0)
};

/// Evenly spaced grid start, start+step, ..., up to and including stop.
std::vector<double> lambda_grid(double start, double stop, double step);

/// Normal approximation: Phi(INB(lambda) / SE(INB(lambda))).
std::vector<CeacPoint> ceac(const CaceEstimate& est, std::span<const double> grid);
std::vector<CeacPoint> ceac(const Eigen::Vector2d& theta, const Eigen::Matrix2d& covariance,
                            std::span<const double> grid);

/// Fraction of draws with lambda * b12 - b11 > 0.
std::vector<CeacPoint> ceac(const PosteriorDraws& draws, std::span<const double> grid);

}  // namespace ivcea
