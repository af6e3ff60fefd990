#include "ivcea/linreg.hpp"

#include "ivcea/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ivcea {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double FitResult::se(Eigen::Index j) const { return std::sqrt(covariance(j, j)); }

double FitResult::p_value(Eigen::Index j) const { return two_sided_p(coefficients(j) / se(j)); }

Eigen::Index FitResult::index_of(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error("no coefficient named '" + name + "'");
    return it - names.begin();
}

namespace {

std::vector<std::string> column_names(const std::vector<std::string>& names, Eigen::Index k) {
    if (static_cast<Eigen::Index>(names.size()) == k) return names;
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < k; ++j) out.push_back("x" + std::to_string(j));
    return out;
}

Eigen::VectorXd weight_vector(std::span<const double> w, Eigen::Index n) {
    if (w.empty()) return Eigen::VectorXd::Ones(n);
    if (static_cast<Eigen::Index>(w.size()) != n)
        throw ValidationError("weights length " + std::to_string(w.size()) + " does not match " +
                              std::to_string(n) + " observations");
    Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(out(i) >= 0.0) || !std::isfinite(out(i)))
            throw ValidationError("weights must be finite and nonnegative", i);
    return out;
}

Eigen::Index positive_count(const Eigen::VectorXd& w) { return (w.array() > 0.0).count(); }

// Pivoted QR with the shared rank rule. Throws SingularError naming the
// columns left outside the numerical rank.
Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_checked_qr(const Eigen::MatrixXd& a,
                                                            const std::vector<std::string>& names,
                                                            const char* what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    qr.setThreshold(kRankTolerance);
    qr.compute(a);
    if (qr.rank() < a.cols()) {
        std::vector<std::string> offending;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < a.cols(); ++j) offending.push_back(names[static_cast<std::size_t>(perm(j))]);
        std::string msg = std::string(what) + ": design is rank deficient (rank " + std::to_string(qr.rank()) +
                          " of " + std::to_string(a.cols()) + "); dependent columns:";
        for (const auto& c : offending) msg += " " + c;
        throw SingularError(msg, offending);
    }
    return qr;
}

// (A'A)^-1 from the pivoted QR of A.
Eigen::MatrixXd inverse_gram(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    const Eigen::Index k = qr.cols();
    Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd inner = rinv * rinv.transpose();
    const auto& p = qr.colsPermutation();
    Eigen::MatrixXd out = p * inner * p.transpose();
    return 0.5 * (out + out.transpose());
}

}  // namespace

// ---------------------------------------------------------------------------
// Ordinary least squares
// ---------------------------------------------------------------------------

FitResult ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const OlsOptions& opt) {
    const Eigen::Index n = design.rows();
    const Eigen::Index k = design.cols();
    if (y.size() != n) throw ValidationError("ols: response length does not match design rows");
    if (k == 0) throw ValidationError("ols: design has no columns");
    const auto names = column_names(opt.names, k);
    const Eigen::VectorXd w = weight_vector(opt.weights, n);
    const Eigen::Index npos = positive_count(w);
    if (npos < k)
        throw SingularError("ols: " + std::to_string(npos) + " observations with positive weight for " +
                                std::to_string(k) + " coefficients",
                            names);

    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd xw = sw.asDiagonal() * design;
    const auto qr = rank_checked_qr(xw, names, "ols");

    FitResult fit;
    fit.names = names;
    fit.nobs = n;
    fit.coefficients = qr.solve(sw.cwiseProduct(y));
    fit.fitted = design * fit.coefficients;
    fit.residuals = y - fit.fitted;

    const Eigen::MatrixXd bread = inverse_gram(qr);
    const double rss = (w.array() * fit.residuals.array().square()).sum();
    const Eigen::Index dof = npos - k;
    fit.sigma2 = dof > 0 ? rss / static_cast<double>(dof) : std::numeric_limits<double>::quiet_NaN();

    if (opt.covariance == CovarianceType::Classical) {
        fit.covariance = fit.sigma2 * bread;
    } else {
        const Eigen::VectorXd scale = (w.array() * fit.residuals.array()).matrix();
        const Eigen::MatrixXd s = scale.asDiagonal() * design;
        const Eigen::MatrixXd meat = s.transpose() * s;
        fit.covariance = bread * meat * bread;
        fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Logistic regression by IRLS
// ---------------------------------------------------------------------------

namespace {

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double e = eta(i);
        // log(1 + exp(e)) computed stably
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += w(i) * (y(i) * e - softplus);
    }
    return ll;
}

Eigen::VectorXd inv_logit(const Eigen::VectorXd& eta) {
    return eta.unaryExpr([](double e) {
        return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
    });
}

}  // namespace

FitResult logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const LogisticOptions& opt) {
    const Eigen::Index n = design.rows();
    const Eigen::Index k = design.cols();
    if (y.size() != n) throw ValidationError("logistic: response length does not match design rows");
    const auto names = column_names(opt.names, k);
    const Eigen::VectorXd w = weight_vector(opt.weights, n);

    double ysum = 0.0, wsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError("logistic: response must be 0 or 1", i);
        if (w(i) > 0) {
            ysum += w(i) * y(i);
            wsum += w(i);
        }
    }
    if (wsum == 0.0) throw ValidationError("logistic: no observations with positive weight");
    if (ysum == 0.0 || ysum == wsum)
        throw SeparationError("logistic: response is constant, so the fitted probability is 0 or 1 "
                              "and the MLE does not exist (perfect prediction)");

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    double ll = log_likelihood(eta, y, w);

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        const Eigen::VectorXd p = inv_logit(eta);
        const Eigen::VectorXd grad = design.transpose() * (w.array() * (y - p).array()).matrix();
        const Eigen::VectorXd info_w = (w.array() * p.array() * (1.0 - p.array())).sqrt();
        const Eigen::MatrixXd xw = info_w.asDiagonal() * design;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
        qr.setThreshold(kRankTolerance);
        qr.compute(xw);
        if (qr.rank() < k) {
            if (eta.cwiseAbs().maxCoeff() > opt.boundary_eta)
                throw SeparationError("logistic: fitted probabilities reached 0 or 1 (perfect prediction)");
            rank_checked_qr(xw, names, "logistic");  // throws with column names
        }

        if (grad.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
            if (eta.cwiseAbs().maxCoeff() > opt.boundary_eta)
                throw SeparationError("logistic: fitted probabilities reached 0 or 1 (perfect prediction)");
            FitResult fit;
            fit.names = names;
            fit.nobs = n;
            fit.coefficients = beta;
            fit.covariance = inverse_gram(qr);
            fit.fitted = p;
            fit.residuals = y - p;
            fit.sigma2 = 1.0;
            fit.iterations = iter - 1;
            return fit;
        }

        // Newton direction: (X'WX) step = grad, via the weighted QR.
        const Eigen::MatrixXd h_inv = inverse_gram(qr);
        const Eigen::VectorXd step = h_inv * grad;
        double t = 1.0;
        Eigen::VectorXd candidate, cand_eta;
        double cand_ll = -std::numeric_limits<double>::infinity();
        for (int halving = 0; halving < 40; ++halving) {
            candidate = beta + t * step;
            cand_eta = design * candidate;
            cand_ll = log_likelihood(cand_eta, y, w);
            if (cand_ll >= ll - 1e-12 * (1.0 + std::abs(ll))) break;
            t *= 0.5;
        }
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;
        if (beta.norm() > opt.divergence_norm)
            throw SeparationError("logistic: coefficient norm diverged (complete separation)");
    }
    if (eta.cwiseAbs().maxCoeff() > opt.boundary_eta)
        throw SeparationError("logistic: fitted probabilities reached 0 or 1 (perfect prediction)");
    throw ConvergenceError("logistic: IRLS did not reach gradient tolerance in " +
                           std::to_string(opt.max_iterations) + " iterations");
}

// ---------------------------------------------------------------------------
// Feasible GLS for equation systems
// ---------------------------------------------------------------------------

Eigen::MatrixXd residual_covariance(const std::vector<Eigen::VectorXd>& residuals,
                                    const std::vector<Eigen::Index>& ncoef, std::span<const double> weights) {
    const std::size_t m = residuals.size();
    if (m == 0 || ncoef.size() != m) throw ValidationError("residual_covariance: mismatched inputs");
    const Eigen::Index n = residuals.front().size();
    const Eigen::VectorXd w = weight_vector(weights, n);
    const double npos = static_cast<double>(positive_count(w));
    const double wsum = w.sum();
    Eigen::MatrixXd s(m, m);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a; b < m; ++b) {
            const double cross = (w.array() * residuals[a].array() * residuals[b].array()).sum() / wsum * npos;
            const double dof = std::sqrt((npos - static_cast<double>(ncoef[a])) * (npos - static_cast<double>(ncoef[b])));
            if (!(dof > 0)) throw SingularError("residual_covariance: no residual degrees of freedom");
            s(a, b) = s(b, a) = cross / dof;
        }
    }
    return s;
}

namespace {

void check_residual_cov(const Eigen::MatrixXd& s) {
    if (!s.isApprox(s.transpose(), 1e-12)) throw ValidationError("residual covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
    const double maxev = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > kRankTolerance * maxev) || !(s.diagonal().minCoeff() > 0))
        throw SingularError("fgls: residual covariance is singular or not positive definite; the equations are "
                            "(nearly) perfectly correlated, fit them equation by equation with ols instead");
}

struct GlsSolution {
    Eigen::VectorXd beta;
    Eigen::MatrixXd a_inv;
};

GlsSolution gls_solve(std::span<const Equation> eqs, const std::vector<Eigen::Index>& offsets, Eigen::Index total,
                      const Eigen::MatrixXd& siginv, const Eigen::VectorXd& w) {
    const std::size_t m = eqs.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(total, total);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(total);
    std::vector<Eigen::MatrixXd> xw(m);
    for (std::size_t l = 0; l < m; ++l) xw[l] = w.asDiagonal() * eqs[l].design;
    for (std::size_t l = 0; l < m; ++l) {
        const Eigen::Index kl = eqs[l].design.cols();
        for (std::size_t q = 0; q < m; ++q) {
            const Eigen::Index kq = eqs[q].design.cols();
            a.block(offsets[l], offsets[q], kl, kq) = siginv(l, q) * (xw[l].transpose() * eqs[q].design);
            b.segment(offsets[l], kl) += siginv(l, q) * (xw[l].transpose() * eqs[q].y);
        }
    }
    a = 0.5 * (a + a.transpose());
    std::vector<std::string> names;
    for (std::size_t l = 0; l < m; ++l)
        for (Eigen::Index j = 0; j < eqs[l].design.cols(); ++j)
            names.push_back("eq" + std::to_string(l + 1) + ":" +
                            (static_cast<Eigen::Index>(eqs[l].names.size()) == eqs[l].design.cols()
                                 ? eqs[l].names[static_cast<std::size_t>(j)]
                                 : "x" + std::to_string(j)));
    const auto qr = rank_checked_qr(a, names, "fgls");
    GlsSolution sol;
    sol.beta = qr.solve(b);
    sol.a_inv = qr.inverse();
    sol.a_inv = 0.5 * (sol.a_inv + sol.a_inv.transpose());
    return sol;
}

std::vector<Eigen::VectorXd> system_residuals(std::span<const Equation> eqs, const std::vector<Eigen::VectorXd>& blocks) {
    std::vector<Eigen::VectorXd> out;
    for (std::size_t l = 0; l < eqs.size(); ++l) {
        const Eigen::MatrixXd& rx = eqs[l].residual_design ? *eqs[l].residual_design : eqs[l].design;
        out.push_back(eqs[l].y - rx * blocks[l]);
    }
    return out;
}

}  // namespace

SystemEstimate fgls_system(std::span<const Equation> eqs, const FglsOptions& opt) {
    if (eqs.empty()) throw ValidationError("fgls: no equations");
    const std::size_t m = eqs.size();
    const Eigen::Index n = eqs.front().design.rows();
    std::vector<Eigen::Index> offsets, ncoef;
    Eigen::Index total = 0;
    for (const auto& e : eqs) {
        if (e.design.rows() != n || e.y.size() != n)
            throw ValidationError("fgls: all equations must share the same observations");
        if (e.residual_design && (e.residual_design->rows() != n || e.residual_design->cols() != e.design.cols()))
            throw ValidationError("fgls: residual design must match the equation design shape");
        offsets.push_back(total);
        ncoef.push_back(e.design.cols());
        total += e.design.cols();
    }
    const Eigen::VectorXd w = weight_vector(opt.weights, n);

    // Stage 1: equation-wise least squares.
    std::vector<Eigen::VectorXd> blocks;
    for (const auto& e : eqs) {
        OlsOptions o;
        o.weights = opt.weights;
        o.names = e.names;
        blocks.push_back(ols(e.design, e.y, o).coefficients);
    }
    std::vector<Eigen::VectorXd> resid = system_residuals(eqs, blocks);

    Eigen::MatrixXd sigma = opt.residual_cov ? *opt.residual_cov : residual_covariance(resid, ncoef, opt.weights);
    if (sigma.rows() != static_cast<Eigen::Index>(m) || sigma.cols() != static_cast<Eigen::Index>(m))
        throw ValidationError("fgls: residual covariance must be " + std::to_string(m) + "x" + std::to_string(m));
    check_residual_cov(sigma);

    SystemEstimate est;
    GlsSolution sol;
    Eigen::VectorXd previous;
    const int max_iter = opt.iterate && !opt.residual_cov ? opt.max_iterations : 1;
    for (int it = 1; it <= max_iter; ++it) {
        sol = gls_solve(eqs, offsets, total, sigma.inverse(), w);
        est.iterations = it;
        for (std::size_t l = 0; l < m; ++l) blocks[l] = sol.beta.segment(offsets[l], ncoef[l]);
        resid = system_residuals(eqs, blocks);
        if (it < max_iter) {
            if (previous.size() &&
                (sol.beta - previous).cwiseAbs().maxCoeff() <= opt.tolerance * (1.0 + sol.beta.cwiseAbs().maxCoeff()))
                break;
            previous = sol.beta;
            sigma = residual_covariance(resid, ncoef, opt.weights);
            check_residual_cov(sigma);
        }
    }

    est.blocks = blocks;
    est.coefficients = sol.beta;
    est.residual_cov = sigma;
    est.residuals = resid;
    est.offsets = offsets;
    est.nobs = n;

    if (opt.covariance == CovarianceType::Classical) {
        est.covariance = sol.a_inv;
    } else {
        const Eigen::MatrixXd siginv = sigma.inverse();
        Eigen::MatrixXd e(n, static_cast<Eigen::Index>(m));
        for (std::size_t l = 0; l < m; ++l) e.col(static_cast<Eigen::Index>(l)) = resid[l];
        const Eigen::MatrixXd u = (e * siginv).array().colwise() * w.array();  // n x m scores per equation
        Eigen::MatrixXd g(n, total);
        for (std::size_t l = 0; l < m; ++l)
            g.middleCols(offsets[l], ncoef[l]) = u.col(static_cast<Eigen::Index>(l)).asDiagonal() * eqs[l].design;
        const Eigen::MatrixXd meat = g.transpose() * g;
        est.covariance = sol.a_inv * meat * sol.a_inv;
        est.covariance = 0.5 * (est.covariance + est.covariance.transpose());
    }
    return est;
}

}  // namespace ivcea
