#include "ivcea/iv.hpp"

#include "ivcea/errors.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace ivcea {

std::string to_string(Estimand e) {
    switch (e) {
        case Estimand::Cace: return "CACE";
        case Estimand::Itt: return "ITT";
        case Estimand::Pp: return "PP";
        case Estimand::Ate: return "ATE";
    }
    return "?";
}

Estimand parse_estimand(const std::string& s) {
    if (s == "CACE" || s == "cace") return Estimand::Cace;
    if (s == "ITT" || s == "itt") return Estimand::Itt;
    if (s == "PP" || s == "pp") return Estimand::Pp;
    if (s == "ATE" || s == "ate") return Estimand::Ate;
    throw ConfigError("unknown estimand '" + s + "'");
}

double CaceEstimate::se(int j) const { return std::sqrt(covariance(j, j)); }

namespace {

struct Sample {
    std::vector<Eigen::Index> rows;
    Eigen::VectorXd z, d, y1, y2, w;
    Eigen::MatrixXd x;
    std::vector<std::string> xnames;
    bool weighted = false;

    Eigen::Index n() const { return static_cast<Eigen::Index>(rows.size()); }
    std::span<const double> weights() const {
        return weighted ? std::span<const double>(w.data(), static_cast<std::size_t>(w.size()))
                        : std::span<const double>{};
    }
};

// Complete cases on the requested outcomes and covariates, with positive weight.
Sample build_sample(const TrialDataset& ds, const IvOptions& opt, bool need_y1, bool need_y2,
                    const std::function<bool(Eigen::Index)>& keep = {}) {
    const Eigen::Index n = ds.size();
    if (!opt.weights.empty() && static_cast<Eigen::Index>(opt.weights.size()) != n)
        throw ValidationError("weights length does not match dataset size");
    std::vector<const Covariate*> covs;
    for (const auto& name : opt.covariates) covs.push_back(&ds.covariate(name));

    Sample s;
    s.weighted = !opt.weights.empty();
    s.xnames = opt.covariates;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (need_y1 && !ds.r1(i)) continue;
        if (need_y2 && !ds.r2(i)) continue;
        if (s.weighted && !(opt.weights[static_cast<std::size_t>(i)] > 0)) continue;
        bool ok = true;
        for (const auto* c : covs) ok = ok && c->observed(i);
        if (!ok) continue;
        if (keep && !keep(i)) continue;
        s.rows.push_back(i);
    }
    const Eigen::Index m = s.n();
    s.z.resize(m);
    s.d.resize(m);
    s.y1.resize(m);
    s.y2.resize(m);
    s.w.resize(m);
    s.x.resize(m, static_cast<Eigen::Index>(covs.size()));
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto i = s.rows[static_cast<std::size_t>(r)];
        s.z(r) = ds.z(i);
        s.d(r) = ds.d(i);
        s.y1(r) = ds.y1(i);
        s.y2(r) = ds.y2(i);
        s.w(r) = s.weighted ? opt.weights[static_cast<std::size_t>(i)] : 1.0;
        for (std::size_t j = 0; j < covs.size(); ++j) s.x(r, static_cast<Eigen::Index>(j)) = covs[j]->values(i);
    }
    return s;
}

Eigen::MatrixXd design(const Eigen::VectorXd& lead, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(lead.size(), 2 + x.cols());
    out.col(0).setOnes();
    out.col(1) = lead;
    out.rightCols(x.cols()) = x;
    return out;
}

std::vector<std::string> names(const std::string& lead, const std::vector<std::string>& xnames) {
    std::vector<std::string> out{"(Intercept)", lead};
    out.insert(out.end(), xnames.begin(), xnames.end());
    return out;
}

// Throws unless both arms are present and mean receipt differs between them.
void check_relevance(const Sample& s) {
    double sw[2] = {0, 0}, sd[2] = {0, 0};
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        const int a = s.z(i) > 0.5 ? 1 : 0;
        sw[a] += s.w(i);
        sd[a] += s.w(i) * s.d(i);
    }
    if (sw[0] == 0 || sw[1] == 0)
        throw IdentificationError("assignment is constant in the analysis sample; the instrument cannot predict receipt");
    const double diff = sd[1] / sw[1] - sd[0] / sw[0];
    if (std::abs(diff) < 1e-12)
        throw IdentificationError("mean treatment receipt is identical in both arms: random assignment does not "
                                  "predict treatment received (instrument irrelevance)");
}

FitResult first_stage_fit(const Sample& s, CovarianceType cov) {
    OlsOptions o;
    o.weights = s.weights();
    o.covariance = cov;
    o.names = names("z", s.xnames);
    return ols(design(s.z, s.x), s.d, o);
}

double f_statistic(const FitResult& fs) {
    const double a = fs.coefficients(1);
    return a * a / fs.covariance(1, 1);
}

void weak_instrument_warning(double f, std::vector<std::string>& warnings) {
    if (f < kWeakInstrumentF) {
        std::ostringstream ss;
        ss << "weak instrument: first-stage F = " << f << " < " << kWeakInstrumentF;
        warnings.push_back(ss.str());
    }
}

CaceEstimate pack(const SystemEstimate& sys, Eigen::Index effect_index, Estimand label, Eigen::Index n,
                  std::vector<std::string> coef_names) {
    CaceEstimate est;
    est.system = sys;
    est.estimand = label;
    est.n_used = n;
    est.coefficient_names = std::move(coef_names);
    for (int a = 0; a < 2; ++a) {
        est.theta(a) = sys.coef(static_cast<std::size_t>(a), effect_index);
        for (int b = 0; b < 2; ++b)
            est.covariance(a, b) = sys.cov(static_cast<std::size_t>(a), effect_index, static_cast<std::size_t>(b), effect_index);
    }
    return est;
}

const Eigen::VectorXd& outcome_of(const Sample& s, Outcome o) { return o == Outcome::Cost ? s.y1 : s.y2; }

}  // namespace

// ---------------------------------------------------------------------------

double wald_cace(const Eigen::VectorXi& z, const Eigen::VectorXi& d, const Eigen::VectorXd& y) {
    if (z.size() != d.size() || z.size() != y.size()) throw ValidationError("wald_cace: length mismatch");
    double n[2] = {0, 0}, sd[2] = {0, 0}, sy[2] = {0, 0};
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (z(i) != 0 && z(i) != 1) throw ValidationError("wald_cace: z must be 0 or 1", i);
        n[z(i)] += 1;
        sd[z(i)] += d(i);
        sy[z(i)] += y(i);
    }
    if (n[0] == 0 || n[1] == 0) throw IdentificationError("wald_cace: both arms must be nonempty");
    const double denom = sd[1] / n[1] - sd[0] / n[0];
    if (denom == 0.0)
        throw IdentificationError("wald_cace: E(D|Z=1) = E(D|Z=0); random assignment does not predict treatment received");
    return (sy[1] / n[1] - sy[0] / n[0]) / denom;
}

TslsResult tsls(const TrialDataset& ds, Outcome outcome, const IvOptions& opt) {
    const Sample s = build_sample(ds, opt, outcome == Outcome::Cost, outcome == Outcome::Qaly);
    check_relevance(s);
    TslsResult res;
    res.first_stage = first_stage_fit(s, opt.covariance);
    res.first_stage_f = f_statistic(res.first_stage);
    weak_instrument_warning(res.first_stage_f, res.warnings);

    const Eigen::VectorXd& y = outcome_of(s, outcome);
    const Eigen::MatrixXd xhat = design(res.first_stage.fitted, s.x);
    const Eigen::MatrixXd xstruct = design(s.d, s.x);
    OlsOptions o;
    o.weights = s.weights();
    o.names = names("d", s.xnames);
    FitResult second = ols(xhat, y, o);

    // Replace second-stage residuals with structural ones before forming the variance.
    second.residuals = y - xstruct * second.coefficients;
    second.fitted = xstruct * second.coefficients;
    const Eigen::MatrixXd xw = s.w.asDiagonal() * xhat;
    const Eigen::MatrixXd bread = (xhat.transpose() * xw).inverse();
    const Eigen::Index k = xhat.cols();
    const double npos = static_cast<double>((s.w.array() > 0).count());
    second.sigma2 = (s.w.array() * second.residuals.array().square()).sum() / (npos - static_cast<double>(k));
    if (opt.covariance == CovarianceType::Classical) {
        second.covariance = second.sigma2 * bread;
    } else {
        const Eigen::VectorXd scale = s.w.cwiseProduct(second.residuals);
        const Eigen::MatrixXd g = scale.asDiagonal() * xhat;
        second.covariance = bread * (g.transpose() * g) * bread;
    }
    second.covariance = 0.5 * (second.covariance + second.covariance.transpose());
    res.fit = std::move(second);
    return res;
}

CaceEstimate tsls_pair(const TrialDataset& ds, const IvOptions& opt) {
    const Sample s = build_sample(ds, opt, true, true);
    check_relevance(s);
    const FitResult fs = first_stage_fit(s, opt.covariance);
    const Eigen::MatrixXd xhat = design(fs.fitted, s.x);
    const Eigen::MatrixXd xstruct = design(s.d, s.x);
    const auto coef_names = names("d", s.xnames);
    const Eigen::MatrixXd xw = s.w.asDiagonal() * xhat;
    const Eigen::MatrixXd bread = (xhat.transpose() * xw).inverse();
    const Eigen::Index k = xhat.cols();

    SystemEstimate sys;
    sys.nobs = s.n();
    std::vector<Eigen::MatrixXd> scores;
    for (const Eigen::VectorXd* y : {&s.y1, &s.y2}) {
        const Eigen::VectorXd b = bread * (xw.transpose() * *y);
        sys.blocks.push_back(b);
        sys.residuals.push_back(*y - xstruct * b);
        scores.push_back(s.w.cwiseProduct(sys.residuals.back()).asDiagonal() * xhat);
    }
    sys.offsets = {0, k};
    sys.coefficients.resize(2 * k);
    sys.coefficients << sys.blocks[0], sys.blocks[1];
    sys.residual_cov = residual_covariance(sys.residuals, {k, k}, s.weights());
    sys.covariance.resize(2 * k, 2 * k);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            sys.covariance.block(a * k, b * k, k, k) =
                opt.covariance == CovarianceType::Classical
                    ? Eigen::MatrixXd(sys.residual_cov(a, b) * bread)
                    : Eigen::MatrixXd(bread * (scores[static_cast<std::size_t>(a)].transpose() *
                                               scores[static_cast<std::size_t>(b)]) * bread);
    sys.covariance = 0.5 * (sys.covariance + sys.covariance.transpose()).eval();
    CaceEstimate est = pack(sys, 1, Estimand::Cace, s.n(), coef_names);
    est.alpha1 = fs.coefficients(1);
    est.first_stage_f = f_statistic(fs);
    weak_instrument_warning(est.first_stage_f, est.warnings);
    return est;
}

CaceEstimate three_sls(const TrialDataset& ds, const IvOptions& opt) {
    const Sample s = build_sample(ds, opt, true, true);
    check_relevance(s);
    const FitResult fs = first_stage_fit(s, opt.covariance);
    const Eigen::MatrixXd xhat = design(fs.fitted, s.x);
    const Eigen::MatrixXd xstruct = design(s.d, s.x);
    const auto coef_names = names("d", s.xnames);
    std::vector<Equation> eqs{{xhat, s.y1, coef_names, xstruct}, {xhat, s.y2, coef_names, xstruct}};
    FglsOptions fo;
    fo.weights = s.weights();
    fo.covariance = opt.covariance;
    const SystemEstimate sys = fgls_system(eqs, fo);
    CaceEstimate est = pack(sys, 1, Estimand::Cace, s.n(), coef_names);
    est.alpha1 = fs.coefficients(1);
    est.first_stage_f = f_statistic(fs);
    weak_instrument_warning(est.first_stage_f, est.warnings);
    return est;
}

namespace {

CaceEstimate sur_on(const Sample& s, const Eigen::VectorXd& lead, const std::string& lead_name, Estimand label,
                    CovarianceType cov) {
    const Eigen::MatrixXd x = design(lead, s.x);
    const auto coef_names = names(lead_name, s.xnames);
    std::vector<Equation> eqs{{x, s.y1, coef_names, {}}, {x, s.y2, coef_names, {}}};
    FglsOptions fo;
    fo.weights = s.weights();
    fo.covariance = cov;
    return pack(fgls_system(eqs, fo), 1, label, s.n(), coef_names);
}

}  // namespace

CaceEstimate itt_sur(const TrialDataset& ds, const IvOptions& opt) {
    const Sample s = build_sample(ds, opt, true, true);
    if ((s.z.array() > 0.5).all() || (s.z.array() < 0.5).all())
        throw IdentificationError("itt: assignment is constant in the analysis sample");
    CaceEstimate est = sur_on(s, s.z, "z", Estimand::Itt, opt.covariance);
    if ((s.d.array() != s.d(0)).any()) {
        const FitResult fs = first_stage_fit(s, opt.covariance);
        est.alpha1 = fs.coefficients(1);
        est.first_stage_f = std::isfinite(fs.covariance(1, 1)) && fs.covariance(1, 1) > 0 ? f_statistic(fs) : 0.0;
    }
    return est;
}

CaceEstimate pp_sur(const TrialDataset& ds, const IvOptions& opt) {
    const Sample s = build_sample(ds, opt, true, true, [&](Eigen::Index i) { return ds.d(i) == ds.z(i); });
    if (s.n() == 0) throw ValidationError("pp: no subject received the assigned treatment");
    if ((s.d.array() > 0.5).all() || (s.d.array() < 0.5).all())
        throw IdentificationError("pp: the per-protocol sample contains only one treatment group");
    return sur_on(s, s.d, "d", Estimand::Pp, opt.covariance);
}

CaceEstimate ipw_adherence(const TrialDataset& ds, const IvOptions& opt) {
    const Sample all = build_sample(ds, opt, true, true);
    if (all.n() == 0) throw ValidationError("ipw_adherence: empty analysis sample");
    Eigen::VectorXd adherent(all.n());
    for (Eigen::Index i = 0; i < all.n(); ++i) adherent(i) = all.d(i) == all.z(i) ? 1.0 : 0.0;

    FitResult model;
    if ((adherent.array() == 1.0).all()) {
        model.fitted = Eigen::VectorXd::Ones(all.n());  // no departures: every weight is 1
    } else {
        LogisticOptions lo;
        lo.names = names("z", all.xnames);
        lo.weights = all.weights();
        try {
            model = logistic(design(all.z, all.x), adherent, lo);
        } catch (const SeparationError& e) {
            throw PositivityError(std::string("ipw_adherence: covariates perfectly predict non-adherence, so the "
                                              "probability of non-adherence is one for some covariate levels (") +
                                  e.what() + ")");
        }
    }

    std::vector<double> w(static_cast<std::size_t>(ds.size()), 0.0);
    for (Eigen::Index r = 0; r < all.n(); ++r) {
        if (adherent(r) == 0.0) continue;
        const double p = model.fitted(r);
        if (!(p > 0)) throw PositivityError("ipw_adherence: fitted adherence probability is zero");
        w[static_cast<std::size_t>(all.rows[static_cast<std::size_t>(r)])] = all.w(r) / p;
    }
    IvOptions inner = opt;
    inner.weights = w;
    const Sample s = build_sample(ds, inner, true, true);
    if ((s.d.array() > 0.5).all() || (s.d.array() < 0.5).all())
        throw IdentificationError("ipw_adherence: adherers contain only one treatment group");
    CaceEstimate est = sur_on(s, s.d, "d", Estimand::Ate, CovarianceType::Robust);
    est.n_used = s.n();
    return est;
}

// ---------------------------------------------------------------------------
// Binary outcomes
// ---------------------------------------------------------------------------

namespace {

BinaryIvResult two_stage_binary(const TrialDataset& ds, const Eigen::VectorXd& yb, const IvOptions& opt, bool residual) {
    if (yb.size() != ds.size()) throw ValidationError("binary outcome length does not match dataset");
    Sample s = build_sample(ds, opt, false, false, [&](Eigen::Index i) { return !std::isnan(yb(i)); });
    check_relevance(s);
    Eigen::VectorXd y(s.n());
    for (Eigen::Index r = 0; r < s.n(); ++r) y(r) = yb(s.rows[static_cast<std::size_t>(r)]);

    BinaryIvResult res;
    res.first_stage = first_stage_fit(s, opt.covariance);
    res.first_stage_f = f_statistic(res.first_stage);
    weak_instrument_warning(res.first_stage_f, res.warnings);

    LogisticOptions lo;
    lo.weights = s.weights();
    Eigen::MatrixXd x;
    if (residual) {
        x.resize(s.n(), 3 + s.x.cols());
        x.col(0).setOnes();
        x.col(1) = s.d;
        x.col(2) = s.d - res.first_stage.fitted;
        x.rightCols(s.x.cols()) = s.x;
        lo.names = {"(Intercept)", "d", "first_stage_residual"};
        lo.names.insert(lo.names.end(), s.xnames.begin(), s.xnames.end());
    } else {
        x = design(res.first_stage.fitted, s.x);
        lo.names = names("d_hat", s.xnames);
    }
    res.outcome_model = logistic(x, y, lo);
    res.log_odds_ratio = res.outcome_model.coefficients(1);
    res.se = res.outcome_model.se(1);
    return res;
}

}  // namespace

BinaryIvResult tsps(const TrialDataset& ds, const Eigen::VectorXd& binary_outcome, const IvOptions& opt) {
    return two_stage_binary(ds, binary_outcome, opt, false);
}

BinaryIvResult tsri(const TrialDataset& ds, const Eigen::VectorXd& binary_outcome, const IvOptions& opt) {
    return two_stage_binary(ds, binary_outcome, opt, true);
}

}  // namespace ivcea
