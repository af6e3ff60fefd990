#include "ivcea/bayes_iv.hpp"

#include "ivcea/parallel.hpp"
#include "ivcea/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ivcea {

void BayesIvConfig::validate() const {
    if (!(prior_sd > 0)) throw ConfigError("prior_sd must be positive");
    for (const auto& o : prior_overrides) {
        if (o.parameter != "b10" && o.parameter != "b11" && o.parameter != "b12")
            throw ConfigError("prior override must name b10, b11 or b12, got '" + o.parameter + "'");
        if (!(o.sd > 0)) throw ConfigError("prior override SD must be positive");
    }
    if (!(wishart_df >= 3)) throw ConfigError("Wishart degrees of freedom must be at least 3");
    Eigen::LLT<Eigen::Matrix3d> llt(wishart_scale);
    if (llt.info() != Eigen::Success || !wishart_scale.isApprox(wishart_scale.transpose()))
        throw ConfigError("Wishart scale must be symmetric positive definite");
    if (chains < 2) throw ConfigError("at least two chains are needed for convergence diagnostics");
    if (burnin < 0 || iterations <= burnin) throw ConfigError("iterations must exceed burn-in");
    if (thin < 1) throw ConfigError("thinning interval must be at least 1");
    if ((iterations - burnin) % thin != 0) throw ConfigError("iterations minus burn-in must be a multiple of thin");
    if (!(proposal_scale > 0)) throw ConfigError("proposal_scale must be positive");
}

Eigen::Index PosteriorDraws::index_of(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error("no posterior column named '" + name + "'");
    return it - names.begin();
}

Eigen::Matrix3d PosteriorDraws::sigma(Eigen::Index draw) const {
    const Eigen::Index s = index_of("s_dd");
    Eigen::Matrix3d m;
    m(0, 0) = draws(draw, s);
    m(0, 1) = m(1, 0) = draws(draw, s + 1);
    m(0, 2) = m(2, 0) = draws(draw, s + 2);
    m(1, 1) = draws(draw, s + 3);
    m(1, 2) = m(2, 1) = draws(draw, s + 4);
    m(2, 2) = draws(draw, s + 5);
    return m;
}

double PosteriorDraws::max_rhat() const {
    double m = 0;
    for (Eigen::Index j = 0; j < rhat.size(); ++j)
        if (rhat(j) > m) m = rhat(j);
    return m;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw Error("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double split_rhat(const Eigen::MatrixXd& chains) {
    const Eigen::Index half = chains.rows() / 2;
    if (half < 2) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::Index m = 2 * chains.cols();
    Eigen::VectorXd means(m), vars(m);
    for (Eigen::Index c = 0; c < chains.cols(); ++c) {
        for (int h = 0; h < 2; ++h) {
            const Eigen::VectorXd seg = chains.col(c).segment(h == 0 ? 0 : chains.rows() - half, half);
            const double mu = seg.mean();
            means(2 * c + h) = mu;
            vars(2 * c + h) = (seg.array() - mu).square().sum() / static_cast<double>(half - 1);
        }
    }
    const double w = vars.mean();
    const double b = static_cast<double>(half) * (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
    if (w == 0) return b == 0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (static_cast<double>(half) - 1) / static_cast<double>(half) * w + b / static_cast<double>(half);
    return std::sqrt(var_plus / w);
}

double effective_sample_size(const Eigen::MatrixXd& chains) {
    const Eigen::Index n = chains.rows();
    const Eigen::Index m = chains.cols();
    if (n < 4) return std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd centered = chains;
    Eigen::VectorXd means(m), vars(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        means(c) = chains.col(c).mean();
        centered.col(c).array() -= means(c);
        vars(c) = centered.col(c).squaredNorm() / static_cast<double>(n - 1);
    }
    const double w = vars.mean();
    const double b = m > 1 ? static_cast<double>(n) * (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1) : 0.0;
    const double var_plus = (static_cast<double>(n) - 1) / static_cast<double>(n) * w + b / static_cast<double>(n);
    if (var_plus == 0) return static_cast<double>(n * m);

    auto rho = [&](Eigen::Index lag) {
        double acov = 0;
        for (Eigen::Index c = 0; c < m; ++c)
            acov += centered.col(c).head(n - lag).dot(centered.col(c).tail(n - lag)) / static_cast<double>(n);
        acov /= static_cast<double>(m);
        return 1.0 - (w - acov) / var_plus;
    };
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t + 1 < n; t += 2) {
        double pair = rho(t) + rho(t + 1);
        if (pair <= 0) break;
        pair = std::min(pair, prev_pair);  // monotone sequence
        prev_pair = pair;
        tau += 2 * pair;
    }
    return static_cast<double>(n * m) / std::max(tau, 1.0 / std::log10(static_cast<double>(n * m)));
}

namespace {

struct Prepared {
    Eigen::Index n = 0;
    Eigen::Index px = 0;  // intercept + covariates
    Eigen::MatrixXd y;    // n x 3: D, standardised y1, y2
    Eigen::MatrixXd w;    // n x (px + 1): intercept, standardised covariates, Z
    Eigen::MatrixXi y_missing;  // n x 3 (column 0 always 0)
    Eigen::MatrixXi x_missing;  // n x (px - 1)
    std::vector<int> incomplete_covariates;  // column of x_missing with any missing
    Eigen::Vector3d y_mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d y_scale = Eigen::Vector3d::Ones();
    Eigen::VectorXd x_mean, x_scale;  // per covariate
    bool augment = false;
};

Prepared prepare(const TrialDataset& ds, const BayesIvConfig& cfg) {
    for (const auto& c : cfg.covariates)
        if (!ds.has_covariate(c)) throw SchemaError("covariate '" + c + "' not in dataset");
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        bool keep = true;
        if (cfg.missing == BayesMissing::Cca) {
            keep = ds.r1(i) && ds.r2(i);
            for (const auto& c : cfg.covariates) keep = keep && ds.covariate(c).observed(i);
        }
        if (keep) rows.push_back(i);
    }
    Prepared p;
    p.n = static_cast<Eigen::Index>(rows.size());
    p.px = 1 + static_cast<Eigen::Index>(cfg.covariates.size());
    if (p.n == 0) throw ValidationError("no subjects available for the Bayesian model");

    Eigen::Index n1 = 0;
    double d0 = 0, d1 = 0;
    for (auto i : rows) {
        if (ds.z(i)) {
            ++n1;
            d1 += ds.d(i);
        } else {
            d0 += ds.d(i);
        }
    }
    if (n1 == 0 || n1 == p.n)
        throw IdentificationError("assignment is constant, so it cannot act as an instrument for receipt");
    if (d1 / static_cast<double>(n1) == d0 / static_cast<double>(p.n - n1))
        throw IdentificationError("treatment receipt does not differ between randomised arms");

    p.y.resize(p.n, 3);
    p.w.resize(p.n, p.px + 1);
    p.y_missing = Eigen::MatrixXi::Zero(p.n, 3);
    p.x_missing = Eigen::MatrixXi::Zero(p.n, p.px - 1);

    auto standardise = [](const Eigen::VectorXd& v, const Eigen::VectorXi& obs, const std::vector<Eigen::Index>& rows,
                          const std::string& name) {
        double s = 0, ss = 0;
        Eigen::Index k = 0;
        for (auto i : rows)
            if (obs(i)) {
                s += v(i);
                ++k;
            }
        if (k < 2) throw ValidationError("fewer than two observed values of " + name);
        const double mean = s / static_cast<double>(k);
        for (auto i : rows)
            if (obs(i)) ss += (v(i) - mean) * (v(i) - mean);
        const double sd = std::sqrt(ss / static_cast<double>(k - 1));
        if (!(sd > 0)) throw SingularError(name + " is constant", {name});
        return std::pair{mean, sd};
    };

    std::tie(p.y_mean(1), p.y_scale(1)) = standardise(ds.y1, ds.r1, rows, "y1");
    std::tie(p.y_mean(2), p.y_scale(2)) = standardise(ds.y2, ds.r2, rows, "y2");
    p.x_mean.resize(p.px - 1);
    p.x_scale.resize(p.px - 1);
    for (std::size_t j = 0; j < cfg.covariates.size(); ++j) {
        const auto& cov = ds.covariate(cfg.covariates[j]);
        std::tie(p.x_mean(static_cast<Eigen::Index>(j)), p.x_scale(static_cast<Eigen::Index>(j))) =
            standardise(cov.values, cov.observed, rows, cfg.covariates[j]);
    }

    for (Eigen::Index r = 0; r < p.n; ++r) {
        const auto i = rows[static_cast<std::size_t>(r)];
        p.y(r, 0) = ds.d(i);
        const Eigen::VectorXd* ys[2] = {&ds.y1, &ds.y2};
        const Eigen::VectorXi* rs[2] = {&ds.r1, &ds.r2};
        for (int k = 0; k < 2; ++k) {
            if ((*rs[k])(i)) {
                p.y(r, k + 1) = ((*ys[k])(i) - p.y_mean(k + 1)) / p.y_scale(k + 1);
            } else {
                p.y(r, k + 1) = 0.0;
                p.y_missing(r, k + 1) = 1;
            }
        }
        p.w(r, 0) = 1.0;
        for (std::size_t j = 0; j < cfg.covariates.size(); ++j) {
            const auto& cov = ds.covariate(cfg.covariates[j]);
            const auto jj = static_cast<Eigen::Index>(j);
            if (cov.observed(i)) {
                p.w(r, jj + 1) = (cov.values(i) - p.x_mean(jj)) / p.x_scale(jj);
            } else {
                p.w(r, jj + 1) = 0.0;
                p.x_missing(r, jj) = 1;
            }
        }
        p.w(r, p.px) = ds.z(i);
    }
    for (Eigen::Index j = 0; j < p.x_missing.cols(); ++j)
        if (p.x_missing.col(j).any()) p.incomplete_covariates.push_back(static_cast<int>(j));
    p.augment = p.y_missing.any() || p.x_missing.any();
    return p;
}

struct Priors {
    double b10_mean = 0, b10_prec = 0;
    Eigen::VectorXd phi_mean;  // linear block
    Eigen::VectorXd phi_prec;
};

// Linear block layout: g0 (px), g1 (px), b11, g2 (px), b12.
Priors make_priors(const Prepared& p, const BayesIvConfig& cfg) {
    const Eigen::Index q = 3 * p.px + 2;
    Priors pr;
    pr.b10_prec = 1.0 / (cfg.prior_sd * cfg.prior_sd);
    pr.phi_mean = Eigen::VectorXd::Zero(q);
    pr.phi_prec = Eigen::VectorXd::Constant(q, pr.b10_prec);
    for (const auto& o : cfg.prior_overrides) {
        if (o.parameter == "b10") {
            pr.b10_mean = o.mean;
            pr.b10_prec = 1.0 / (o.sd * o.sd);
        } else {
            const int eq = o.parameter == "b11" ? 1 : 2;
            const Eigen::Index at = eq == 1 ? 2 * p.px : 3 * p.px + 1;
            pr.phi_mean(at) = o.mean / p.y_scale(eq);
            const double sd = o.sd / p.y_scale(eq);
            pr.phi_prec(at) = 1.0 / (sd * sd);
        }
    }
    return pr;
}

class Chain {
public:
    Chain(const Prepared& prep, const Priors& priors, const BayesIvConfig& cfg, Rng rng)
        : p_(prep), pr_(priors), cfg_(cfg), rng_(std::move(rng)), y_(prep.y), w_(prep.w) {
        const Eigen::Index k = p_.px + 1;
        b_ = Eigen::MatrixXd::Zero(k, 3);
        cov_mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_.incomplete_covariates.size()));
        cov_var_ = Eigen::VectorXd::Ones(cov_mean_.size());
        update_stats();

        // Least-squares start, with receipt coefficient overdispersed.
        const Eigen::MatrixXd bhat = wtw_.ldlt().solve(wty_);
        const Eigen::Matrix3d resid = (residual_ss(bhat) + cfg_.wishart_scale.inverse()) /
                                      (static_cast<double>(p_.n) + cfg_.wishart_df);
        const double se10 = std::sqrt(resid(0, 0) * wtw_.inverse()(p_.px, p_.px));
        std::normal_distribution<double> norm;
        b10_ = bhat(p_.px, 0) + 2.0 * se10 * norm(rng_);
        lambda_ = resid.inverse();
        step_ = cfg_.proposal_scale * se10;
        b11_ = b12_ = 0;
        g_ = bhat.topRows(p_.px);
        rebuild_b();
    }

    void run(Eigen::MatrixXd& out, Eigen::Index row0, double& acceptance) {
        int accepted_batch = 0, batch = 0;
        long accepted = 0, tried = 0;
        for (int it = 0; it < cfg_.iterations; ++it) {
            draw_linear_block();
            const bool acc = draw_b10();
            draw_precision();
            if (p_.augment) augment();

            if (it < cfg_.burnin) {
                accepted_batch += acc;
                if ((it + 1) % 50 == 0) {
                    ++batch;
                    const double rate = accepted_batch / 50.0;
                    step_ *= std::exp((rate - 0.44) * std::min(0.5, 1.0 / std::sqrt(static_cast<double>(batch))));
                    accepted_batch = 0;
                }
            } else {
                accepted += acc;
                ++tried;
                if ((it - cfg_.burnin) % cfg_.thin == 0) record(out, row0++);
            }
        }
        acceptance = tried ? static_cast<double>(accepted) / static_cast<double>(tried) : 0.0;
    }

private:
    void update_stats() {
        wtw_ = w_.transpose() * w_;
        wty_ = w_.transpose() * y_;
        yty_ = y_.transpose() * y_;
    }

    Eigen::Matrix3d residual_ss(const Eigen::MatrixXd& b) const {
        Eigen::Matrix3d s = yty_ - b.transpose() * wty_ - wty_.transpose() * b + b.transpose() * wtw_ * b;
        return 0.5 * (s + s.transpose());
    }

    void rebuild_b() {
        b_.topRows(p_.px) = g_;
        b_(p_.px, 0) = b10_;
        b_(p_.px, 1) = b11_ * b10_;
        b_(p_.px, 2) = b12_ * b10_;
    }

    // Selection matrix mapping block coefficients to the rows of B for equation l.
    Eigen::MatrixXd t_matrix(int l) const {
        const Eigen::Index k = p_.px + 1;
        if (l == 0) return Eigen::MatrixXd::Identity(p_.px, k);
        Eigen::MatrixXd t = Eigen::MatrixXd::Identity(k, k);
        t(p_.px, p_.px) = b10_;
        return t;
    }

    void draw_linear_block() {
        const Eigen::Index px = p_.px;
        const Eigen::Index q = 3 * px + 2;
        const std::array<Eigen::Index, 3> start{0, px, 2 * px + 1};
        const std::array<Eigen::Index, 3> size{px, px + 1, px + 1};
        std::array<Eigen::MatrixXd, 3> t{t_matrix(0), t_matrix(1), t_matrix(2)};

        Eigen::MatrixXd prec = pr_.phi_prec.asDiagonal();
        Eigen::VectorXd rhs = pr_.phi_prec.cwiseProduct(pr_.phi_mean);
        Eigen::MatrixXd target = wty_;
        target.col(0) -= b10_ * wtw_.col(px);
        for (int l = 0; l < 3; ++l) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(px + 1);
            for (int m = 0; m < 3; ++m) {
                prec.block(start[l], start[m], size[l], size[m]) += lambda_(l, m) * t[l] * wtw_ * t[m].transpose();
                acc += lambda_(l, m) * target.col(m);
            }
            rhs.segment(start[l], size[l]) += t[l] * acc;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(prec);
        if (llt.info() != Eigen::Success) throw SingularError("posterior precision of the regression coefficients is singular");
        Eigen::VectorXd u(q);
        std::normal_distribution<double> norm;
        for (Eigen::Index j = 0; j < q; ++j) u(j) = norm(rng_);
        const Eigen::VectorXd mean = llt.solve(rhs);
        const Eigen::VectorXd phi = mean + llt.matrixU().solve(u);

        g_.col(0) = phi.segment(0, px);
        g_.col(1) = phi.segment(px, px);
        b11_ = phi(2 * px);
        g_.col(2) = phi.segment(2 * px + 1, px);
        b12_ = phi(3 * px + 1);
        rebuild_b();
    }

    double b10_log_target(double b10, double a, double lin) const {
        const double dev = b10 - pr_.b10_mean;
        return -0.5 * a * b10 * b10 + lin * b10 - 0.5 * pr_.b10_prec * dev * dev;
    }

    bool draw_b10() {
        const Eigen::Index px = p_.px;
        const Eigen::Vector3d c(1.0, b11_, b12_);
        const double a = c.dot(lambda_ * c) * wtw_(px, px);
        Eigen::Vector3d zr;
        for (int l = 0; l < 3; ++l) zr(l) = wty_(px, l) - wtw_.row(px).head(px).dot(g_.col(l));
        const double lin = c.dot(lambda_ * zr);

        std::normal_distribution<double> norm;
        std::uniform_real_distribution<double> unif;
        const double proposal = b10_ + step_ * norm(rng_);
        const double log_ratio = b10_log_target(proposal, a, lin) - b10_log_target(b10_, a, lin);
        if (std::log(unif(rng_)) < log_ratio) {
            b10_ = proposal;
            rebuild_b();
            return true;
        }
        return false;
    }

    void draw_precision() {
        const Eigen::Matrix3d s = residual_ss(b_);
        Eigen::Matrix3d v = (cfg_.wishart_scale.inverse() + s).inverse();
        v = 0.5 * (v + v.transpose());
        const double df = cfg_.wishart_df + static_cast<double>(p_.n);
        const Eigen::Matrix3d l = v.llt().matrixL();
        Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
        std::normal_distribution<double> norm;
        for (int i = 0; i < 3; ++i) {
            std::chi_squared_distribution<double> chi2(df - i);
            a(i, i) = std::sqrt(chi2(rng_));
            for (int j = 0; j < i; ++j) a(i, j) = norm(rng_);
        }
        const Eigen::Matrix3d la = l * a;
        lambda_ = la * la.transpose();
    }

    void augment() {
        std::normal_distribution<double> norm;
        // Covariates: normal model prior times the row likelihood.
        for (std::size_t k = 0; k < p_.incomplete_covariates.size(); ++k) {
            const int j = p_.incomplete_covariates[k];
            const Eigen::Index col = j + 1;
            const auto kk = static_cast<Eigen::Index>(k);
            const Eigen::Vector3d g = b_.row(col).transpose();
            const double prec = g.dot(lambda_ * g) + 1.0 / cov_var_(kk);
            const Eigen::Vector3d lg = lambda_ * g;
            for (Eigen::Index i = 0; i < p_.n; ++i) {
                if (!p_.x_missing(i, j)) continue;
                const Eigen::Vector3d e = y_.row(i).transpose() - (w_.row(i) * b_).transpose() + g * w_(i, col);
                const double mean = (lg.dot(e) + cov_mean_(kk) / cov_var_(kk)) / prec;
                w_(i, col) = mean + norm(rng_) / std::sqrt(prec);
            }
            double s = 0;
            for (Eigen::Index i = 0; i < p_.n; ++i) s += w_(i, col);
            const double nn = static_cast<double>(p_.n);
            const double mprec = nn / cov_var_(kk) + 1.0 / 100.0;
            cov_mean_(kk) = (s / cov_var_(kk)) / mprec + norm(rng_) / std::sqrt(mprec);
            double ss = 0;
            for (Eigen::Index i = 0; i < p_.n; ++i) ss += (w_(i, col) - cov_mean_(kk)) * (w_(i, col) - cov_mean_(kk));
            std::gamma_distribution<double> gam(1.0 + nn / 2.0, 1.0 / (1.0 + ss / 2.0));
            cov_var_(kk) = 1.0 / gam(rng_);
        }
        // Outcomes: conditional normal given the observed components.
        for (Eigen::Index i = 0; i < p_.n; ++i) {
            const bool m1 = p_.y_missing(i, 1), m2 = p_.y_missing(i, 2);
            if (!m1 && !m2) continue;
            const Eigen::RowVector3d mu = w_.row(i) * b_;
            if (m1 && m2) {
                const Eigen::Matrix2d lmm = lambda_.bottomRightCorner<2, 2>();
                const Eigen::Vector2d cm =
                    mu.tail<2>().transpose() - lmm.ldlt().solve(lambda_.block<2, 1>(1, 0) * (y_(i, 0) - mu(0)));
                const Eigen::Matrix2d l = lmm.inverse().llt().matrixL();
                const Eigen::Vector2d draw = cm + l * Eigen::Vector2d(norm(rng_), norm(rng_));
                y_(i, 1) = draw(0);
                y_(i, 2) = draw(1);
            } else {
                const int m = m1 ? 1 : 2;
                const int o = m1 ? 2 : 1;
                const double cm = mu(m) - (lambda_(m, 0) * (y_(i, 0) - mu(0)) + lambda_(m, o) * (y_(i, o) - mu(o))) /
                                              lambda_(m, m);
                y_(i, m) = cm + norm(rng_) / std::sqrt(lambda_(m, m));
            }
        }
        update_stats();
    }

    void record(Eigen::MatrixXd& out, Eigen::Index row) const {
        const Eigen::Index px = p_.px;
        Eigen::Index col = 0;
        for (int l = 0; l < 3; ++l) {
            double intercept = g_(0, l);
            for (Eigen::Index j = 1; j < px; ++j) intercept -= g_(j, l) * p_.x_mean(j - 1) / p_.x_scale(j - 1);
            out(row, col++) = p_.y_mean(l) + p_.y_scale(l) * intercept;
            out(row, col++) = l == 0 ? b10_ : p_.y_scale(l) * (l == 1 ? b11_ : b12_);
        }
        for (Eigen::Index j = 1; j < px; ++j)
            for (int l = 0; l < 3; ++l) out(row, col++) = p_.y_scale(l) * g_(j, l) / p_.x_scale(j - 1);
        const Eigen::Matrix3d sigma = p_.y_scale.asDiagonal() * lambda_.inverse() * p_.y_scale.asDiagonal();
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) out(row, col++) = sigma(a, b);
    }

    const Prepared& p_;
    const Priors& pr_;
    const BayesIvConfig& cfg_;
    Rng rng_;
    Eigen::MatrixXd y_, w_;
    Eigen::MatrixXd wtw_, wty_;
    Eigen::Matrix3d yty_;
    Eigen::MatrixXd g_;  // px x 3
    Eigen::MatrixXd b_;  // (px + 1) x 3
    double b10_ = 0, b11_ = 0, b12_ = 0;
    Eigen::Matrix3d lambda_;
    double step_ = 0;
    Eigen::VectorXd cov_mean_, cov_var_;
};

}  // namespace

PosteriorDraws fit_bayes_iv(const TrialDataset& ds, const BayesIvConfig& cfg) {
    cfg.validate();
    ds.validate();
    const Prepared prep = prepare(ds, cfg);
    const Priors priors = make_priors(prep, cfg);

    PosteriorDraws out;
    out.config = cfg;
    out.chains = cfg.chains;
    out.kept_per_chain = (cfg.iterations - cfg.burnin) / cfg.thin;
    out.n_used = prep.n;
    out.missing_method = cfg.missing == BayesMissing::Cca ? "cca" : "bayes";
    for (Eigen::Index i = 0; i < prep.n; ++i)
        out.n_augmented += prep.y_missing.row(i).any() || (prep.x_missing.cols() > 0 && prep.x_missing.row(i).any());
    out.names = {"b00", "b10", "b01", "b11", "b02", "b12"};
    for (const auto& c : cfg.covariates)
        for (const char* eq : {"d", "y1", "y2"}) out.names.push_back(c + ":" + eq);
    for (const char* s : {"s_dd", "s_d1", "s_d2", "s_11", "s_12", "s_22"}) out.names.emplace_back(s);

    const Eigen::Index kept = out.kept_per_chain;
    const auto ncol = static_cast<Eigen::Index>(out.names.size());
    out.draws.resize(kept * cfg.chains, ncol);
    out.acceptance.resize(cfg.chains);
    parallel_for(static_cast<std::size_t>(cfg.chains), cfg.workers, [&](std::size_t c) {
        Chain chain(prep, priors, cfg, make_rng(cfg.seed, 4, c));
        double acc = 0;
        chain.run(out.draws, static_cast<Eigen::Index>(c) * kept, acc);
        out.acceptance(static_cast<Eigen::Index>(c)) = acc;
    });

    out.rhat.resize(ncol);
    out.ess.resize(ncol);
    for (Eigen::Index j = 0; j < ncol; ++j) {
        const Eigen::MatrixXd per_chain = out.draws.col(j).reshaped(kept, cfg.chains);
        out.rhat(j) = split_rhat(per_chain);
        out.ess(j) = effective_sample_size(per_chain);
    }

    std::ostringstream bad;
    for (Eigen::Index j = 0; j < ncol; ++j)
        if (!(out.rhat(j) <= cfg.rhat_threshold)) bad << " " << out.names[static_cast<std::size_t>(j)] << "=" << out.rhat(j);
    if (!bad.str().empty()) {
        const std::string msg = "split R-hat above " + std::to_string(cfg.rhat_threshold) + ":" + bad.str();
        out.warnings.push_back(msg);
        if (cfg.fail_on_nonconvergence)
            throw MixingError(msg + "; run longer chains", std::make_shared<PosteriorDraws>(out));
    }
    return out;
}

CeaResult summarize_posterior(const PosteriorDraws& draws, double lambda) {
    if (draws.draws.rows() == 0) throw Error("no posterior draws to summarise");
    const Eigen::VectorXd c = draws.column("b11");
    const Eigen::VectorXd q = draws.column("b12");
    const Eigen::VectorXd nb = lambda * q - c;
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto interval = [&](const Eigen::VectorXd& v) { return Interval{quantile(vec(v), 0.025), quantile(vec(v), 0.975)}; };

    CeaResult r;
    r.incremental_cost = quantile(vec(c), 0.5);
    r.incremental_qaly = quantile(vec(q), 0.5);
    const double n = static_cast<double>(c.size());
    const double mc = c.mean(), mq = q.mean();
    const double denom = std::max(n - 1.0, 1.0);
    r.covariance(0, 0) = (c.array() - mc).square().sum() / denom;
    r.covariance(1, 1) = (q.array() - mq).square().sum() / denom;
    r.covariance(0, 1) = r.covariance(1, 0) = ((c.array() - mc) * (q.array() - mq)).sum() / denom;
    r.lambda = lambda;
    r.inb = quantile(vec(nb), 0.5);
    r.inb_se = std::sqrt((nb.array() - nb.mean()).square().sum() / denom);
    r.inb_interval = interval(nb);
    r.cost_interval = interval(c);
    r.qaly_interval = interval(q);
    r.kind = IntervalKind::Credible;
    r.estimand = Estimand::Cace;
    r.missing_method = draws.missing_method;
    return r;
}

}  // namespace ivcea
