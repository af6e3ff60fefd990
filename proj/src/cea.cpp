#include "ivcea/cea.hpp"

#include "ivcea/bayes_iv.hpp"
#include "ivcea/errors.hpp"
#include "ivcea/missing_data.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <sstream>

namespace ivcea {

namespace {

double t_quantile_975(double dof) {
    if (!std::isfinite(dof) || dof > 1e7) return kZ95;
    return boost::math::quantile(boost::math::students_t(dof), 0.975);
}

Interval symmetric(double centre, double se, double crit) { return {centre - crit * se, centre + crit * se}; }

double checked_sd(double var, const Eigen::Matrix2d& cov) {
    if (var < 0) {
        std::ostringstream ss;
        ss << "negative INB variance " << var << " from covariance [[" << cov(0, 0) << ", " << cov(0, 1) << "], ["
           << cov(1, 0) << ", " << cov(1, 1) << "]]";
        throw Error(ss.str());
    }
    return std::sqrt(var);
}

double inb_variance(const Eigen::Matrix2d& cov, double lambda) {
    return lambda * lambda * cov(1, 1) + cov(0, 0) - 2.0 * lambda * cov(0, 1);
}

}  // namespace

std::string to_string(IntervalKind k) {
    switch (k) {
        case IntervalKind::Wald: return "wald";
        case IntervalKind::Rubin: return "rubin";
        case IntervalKind::Credible: return "credible";
    }
    return "unknown";
}

CeaResult inb(const Eigen::Vector2d& theta, const Eigen::Matrix2d& covariance, double lambda) {
    CeaResult r;
    r.incremental_cost = theta(0);
    r.incremental_qaly = theta(1);
    r.covariance = covariance;
    r.lambda = lambda;
    r.inb = lambda * theta(1) - theta(0);
    r.inb_se = checked_sd(inb_variance(covariance, lambda), covariance);
    r.inb_interval = symmetric(r.inb, r.inb_se, kZ95);
    r.cost_interval = symmetric(theta(0), checked_sd(covariance(0, 0), covariance), kZ95);
    r.qaly_interval = symmetric(theta(1), checked_sd(covariance(1, 1), covariance), kZ95);
    r.kind = IntervalKind::Wald;
    return r;
}

CeaResult inb(const CaceEstimate& est, double lambda) {
    CeaResult r = inb(est.theta, est.covariance, lambda);
    r.estimand = est.estimand;
    return r;
}

CeaResult inb(const PooledEstimate& pooled, double lambda) {
    if (pooled.estimate.size() != 2) throw Error("pooled estimate must hold (cost, QALY)");
    const Eigen::Vector2d theta = pooled.estimate;
    const Eigen::Matrix2d total = pooled.total;
    CeaResult r = inb(theta, total, lambda);
    const Eigen::Vector2d a(-1.0, lambda);
    const double w = a.dot(pooled.within * a);
    const double b = a.dot(pooled.between * a);
    r.dof = rubin_dof(w, b, pooled.m);
    r.inb_interval = symmetric(r.inb, r.inb_se, t_quantile_975(r.dof));
    r.cost_interval = symmetric(theta(0), std::sqrt(total(0, 0)), t_quantile_975(pooled.dof(0)));
    r.qaly_interval = symmetric(theta(1), std::sqrt(total(1, 1)), t_quantile_975(pooled.dof(1)));
    r.kind = IntervalKind::Rubin;
    r.missing_method = "mi";
    return r;
}

std::string to_string(Quadrant q) {
    switch (q) {
        case Quadrant::TradeOff: return "trade-off";
        case Quadrant::Dominant: return "dominant";
        case Quadrant::Dominated: return "dominated";
        case Quadrant::CheaperWorse: return "cheaper-less-effective";
    }
    return "unknown";
}

IcerResult icer(double incremental_cost, double incremental_qaly) {
    if (incremental_qaly == 0.0)
        throw Error("ICER undefined: incremental QALY is zero; report the incremental net benefit instead");
    IcerResult r;
    r.ratio = incremental_cost / incremental_qaly;
    const bool more_costly = incremental_cost > 0;
    if (incremental_qaly > 0)
        r.quadrant = more_costly ? Quadrant::TradeOff : Quadrant::Dominant;
    else
        r.quadrant = more_costly ? Quadrant::Dominated : Quadrant::CheaperWorse;
    return r;
}

IcerResult icer(const CaceEstimate& est) { return icer(est.theta(0), est.theta(1)); }

std::vector<double> lambda_grid(double start, double stop, double step) {
    if (!(step > 0) || stop < start) throw ConfigError("lambda grid needs step > 0 and stop >= start");
    std::vector<double> g;
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= count; ++i) g.push_back(start + static_cast<double>(i) * step);
    return g;
}

std::vector<CeacPoint> ceac(const Eigen::Vector2d& theta, const Eigen::Matrix2d& covariance,
                            std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("empty lambda grid");
    std::vector<CeacPoint> out;
    out.reserve(grid.size());
    for (double l : grid) {
        const double nb = l * theta(1) - theta(0);
        const double se = checked_sd(inb_variance(covariance, l), covariance);
        double p;
        if (se > 0)
            p = normal_cdf(nb / se);
        else
            p = nb > 0 ? 1.0 : nb < 0 ? 0.0 : 0.5;
        out.push_back({l, p});
    }
    return out;
}

std::vector<CeacPoint> ceac(const CaceEstimate& est, std::span<const double> grid) {
    return ceac(est.theta, est.covariance, grid);
}

std::vector<CeacPoint> ceac(const PosteriorDraws& draws, std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("empty lambda grid");
    if (draws.draws.rows() == 0) throw Error("no posterior draws");
    const Eigen::VectorXd c = draws.column("b11");
    const Eigen::VectorXd q = draws.column("b12");
    std::vector<CeacPoint> out;
    for (double l : grid) {
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < c.size(); ++i) k += (l * q(i) - c(i)) > 0;
        out.push_back({l, static_cast<double>(k) / static_cast<double>(c.size())});
    }
    return out;
}

}  // namespace ivcea
