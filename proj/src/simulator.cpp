#include "ivcea/simulator.hpp"

#include "ivcea/errors.hpp"
#include "ivcea/linreg.hpp"
#include "ivcea/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ivcea {

std::string to_string(Mechanism m) {
    switch (m) {
        case Mechanism::MCAR: return "MCAR";
        case Mechanism::CDM: return "CDM";
        case Mechanism::MAR: return "MAR";
        case Mechanism::MNAR: return "MNAR";
    }
    return "?";
}

Mechanism parse_mechanism(const std::string& s) {
    if (s == "MCAR" || s == "mcar") return Mechanism::MCAR;
    if (s == "CDM" || s == "cdm") return Mechanism::CDM;
    if (s == "MAR" || s == "mar") return Mechanism::MAR;
    if (s == "MNAR" || s == "mnar") return Mechanism::MNAR;
    throw ConfigError("unknown missingness mechanism '" + s + "'");
}

MissingnessConfig MissingnessConfig::mcar(double missing_rate) {
    if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) throw ConfigError("missing rate must be in [0, 1]");
    MissingnessConfig cfg;
    cfg.mechanism = Mechanism::MCAR;
    if (missing_rate > 0.0) {
        for (auto& m : cfg.models) {
            m.enabled = true;
            m.intercept = missing_rate >= 1.0 ? -std::numeric_limits<double>::infinity()
                                              : std::log((1.0 - missing_rate) / missing_rate);
        }
    }
    return cfg;
}

namespace {

// Whether a cascade variable (slot v) may enter the model for slot s.
bool cascade_predictor_allowed(Mechanism mech, const MonotoneOrder& order, int s, int v) {
    if (mech == Mechanism::MNAR) return true;
    if (mech == Mechanism::MCAR) return false;
    const auto pos = [&](int slot) { return std::find(order.begin(), order.end(), slot) - order.begin(); };
    const bool earlier = pos(v) < pos(s);
    if (mech == Mechanism::CDM) return v == 0 && earlier;  // only the baseline covariate
    return earlier;                                        // MAR: anything already observed
}

void validate_missingness(const MissingnessConfig& cfg) {
    auto sorted = cfg.order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != MonotoneOrder{0, 1, 2}) throw ConfigError("missingness order must be a permutation of {0,1,2}");
    static const char* slot_names[3] = {"eq5d0", "y1", "y2"};
    for (int s = 0; s < 3; ++s) {
        const auto& m = cfg.models[static_cast<std::size_t>(s)];
        if (!m.enabled) continue;
        if (std::isnan(m.intercept)) throw ConfigError("observation model intercept is NaN");
        const double cascade[3] = {m.eq5d0, m.y1, m.y2};
        for (int v = 0; v < 3; ++v) {
            if (cascade[v] != 0.0 && !cascade_predictor_allowed(cfg.mechanism, cfg.order, s, v))
                throw ConfigError(std::string("mechanism ") + to_string(cfg.mechanism) + " does not allow " +
                                  slot_names[v] + " in the observation model for " + slot_names[s]);
        }
        if (cfg.mechanism == Mechanism::MCAR && (m.age != 0.0 || m.z != 0.0 || m.d != 0.0))
            throw ConfigError("MCAR observation models may only have an intercept");
    }
}

}  // namespace

void DgpConfig::validate() const {
    if (n < 1) throw ConfigError("n must be at least 1");
    for (double p : {p_complier, p_never_taker, p_always_taker})
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("stratum probabilities must be in [0, 1]");
    if (std::abs(p_complier + p_never_taker + p_always_taker - 1.0) > 1e-12)
        throw ConfigError("stratum probabilities must sum to 1 (defiers are fixed at 0)");
    if (!(stratum_loading >= 0.0 && stratum_loading < 1.0)) throw ConfigError("stratum_loading must be in [0, 1)");
    if (!(std::abs(rho) < 1.0)) throw ConfigError("|rho| must be < 1");
    if (!(cost_sd >= 0 && qaly_sd >= 0 && eq5d0_sd >= 0 && age_sd >= 0)) throw ConfigError("standard deviations must be nonnegative");
    validate_missingness(missingness);
}

DgpConfig confounded_switching() { return DgpConfig{}; }

DgpConfig mar_cost_on_qaly() {
    DgpConfig cfg;
    cfg.missingness.mechanism = Mechanism::MAR;
    cfg.missingness.order = {0, 2, 1};
    auto& cost = cfg.missingness.models[1];
    cost.enabled = true;
    cost.intercept = 0.85;
    cost.y2 = -1.2;
    cost.z = -0.5;
    return cfg;
}

SimulatedTrial generate_trial(const DgpConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = cfg.n;
    Rng rng = make_rng(cfg.seed, 0);
    std::normal_distribution<double> norm(0.0, 1.0);

    // 1:1 complete randomisation: exactly n/2 (rounded down) assigned to treatment.
    std::vector<int> z(static_cast<std::size_t>(n), 0);
    std::fill(z.begin(), z.begin() + n / 2, 1);
    std::shuffle(z.begin(), z.end(), rng);

    SimulatedTrial out;
    auto& ds = out.data;
    auto& t = out.truth;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y1.resize(n);
    ds.y2.resize(n);
    ds.r1 = Eigen::VectorXi::Ones(n);
    ds.r2 = Eigen::VectorXi::Ones(n);
    Covariate eq{kBaselineUtility, Eigen::VectorXd(n), Eigen::VectorXi::Ones(n)};
    Covariate age{"age", Eigen::VectorXd(n), Eigen::VectorXi::Ones(n)};
    t.stratum.resize(static_cast<std::size_t>(n));
    t.d0.resize(n);
    t.d1.resize(n);
    t.y1_potential.resize(n, 2);
    t.y2_potential.resize(n, 2);
    t.u.resize(n);

    const double k = cfg.stratum_loading;
    const double shared = std::sqrt(std::abs(cfg.rho));
    const double own = std::sqrt(1.0 - std::abs(cfg.rho));
    const double sign = cfg.rho < 0 ? -1.0 : 1.0;
    double complier_count = 0;
    Eigen::Vector2d complier_effect_sum = Eigen::Vector2d::Zero();

    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = norm(rng);
        const double v = normal_cdf(k * u + std::sqrt(1.0 - k * k) * norm(rng));
        const double x = cfg.eq5d0_mean + cfg.eq5d0_sd * norm(rng);
        const double a = cfg.age_mean + cfg.age_sd * norm(rng);
        const double common = norm(rng);
        const double e1 = cfg.cost_sd * (shared * common + own * norm(rng));
        const double e2 = cfg.qaly_sd * sign * (shared * common + own * norm(rng));

        Stratum s = v < cfg.p_never_taker                       ? Stratum::NeverTaker
                    : v < cfg.p_never_taker + cfg.p_complier ? Stratum::Complier
                                                              : Stratum::AlwaysTaker;
        const int d0 = s == Stratum::AlwaysTaker ? 1 : 0;
        const int d1 = s == Stratum::NeverTaker ? 0 : 1;

        const double xc = x - cfg.eq5d0_mean;
        const double ac = a - cfg.age_mean;
        const double m1 = cfg.cost_base + cfg.cost_u * u + cfg.cost_eq5d0 * xc + cfg.cost_age * ac + e1;
        const double m2 = cfg.qaly_base + cfg.qaly_u * u + cfg.qaly_eq5d0 * xc + cfg.qaly_age * ac + e2;
        // Exclusion restriction: assignment reaches outcomes only through receipt.
        for (int zz = 0; zz < 2; ++zz) {
            const int dd = zz ? d1 : d0;
            t.y1_potential(i, zz) = m1 + cfg.effect_cost * dd;
            t.y2_potential(i, zz) = m2 + cfg.effect_qaly * dd;
        }
        if (s == Stratum::Complier) {
            complier_count += 1;
            complier_effect_sum(0) += t.y1_potential(i, 1) - t.y1_potential(i, 0);
            complier_effect_sum(1) += t.y2_potential(i, 1) - t.y2_potential(i, 0);
        }

        const int zi = z[static_cast<std::size_t>(i)];
        t.stratum[static_cast<std::size_t>(i)] = s;
        t.d0(i) = d0;
        t.d1(i) = d1;
        t.u(i) = u;
        ds.z(i) = zi;
        ds.d(i) = zi ? d1 : d0;
        ds.y1(i) = t.y1_potential(i, zi);
        ds.y2(i) = t.y2_potential(i, zi);
        eq.values(i) = x;
        age.values(i) = a;
    }
    ds.covariates.push_back(std::move(eq));
    ds.covariates.push_back(std::move(age));

    t.cace = {cfg.effect_cost, cfg.effect_qaly};
    t.compliance_difference = cfg.p_complier;
    t.itt = cfg.p_complier * t.cace;
    if (complier_count > 0) t.sample_cace = complier_effect_sum / complier_count;
    return out;
}

namespace {

Eigen::VectorXd zscore(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(v.size() - 1)));
    if (!(sd > 0)) return Eigen::VectorXd::Zero(v.size());
    return (v.array() - mean) / sd;
}

}  // namespace

MissingnessResult apply_missingness(const TrialDataset& ds, const MissingnessConfig& cfg, std::uint64_t seed) {
    validate_missingness(cfg);
    const Eigen::Index n = ds.size();
    if (!ds.has_covariate(kBaselineUtility)) throw SchemaError("apply_missingness requires an eq5d0 covariate");
    const auto& eqc = ds.covariate(kBaselineUtility);
    if ((eqc.observed.array() == 0).any() || (ds.r1.array() == 0).any() || (ds.r2.array() == 0).any())
        throw ValidationError("apply_missingness requires complete data");

    const Eigen::VectorXd zx = zscore(eqc.values);
    const Eigen::VectorXd zage = ds.has_covariate("age") ? zscore(ds.covariate("age").values) : Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd zy1 = zscore(ds.y1);
    const Eigen::VectorXd zy2 = zscore(ds.y2);

    Rng rng = make_rng(seed, 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::array<Eigen::VectorXi, 3> r{Eigen::VectorXi::Ones(n), Eigen::VectorXi::Ones(n), Eigen::VectorXi::Ones(n)};
    MissingnessResult res;
    double min_prob = 1.0;

    for (Eigen::Index i = 0; i < n; ++i) {
        bool still_observed = true;
        for (int pos = 0; pos < 3; ++pos) {
            const int slot = cfg.order[static_cast<std::size_t>(pos)];
            const auto& m = cfg.models[static_cast<std::size_t>(slot)];
            double p = 1.0;
            if (m.enabled) {
                const double eta = m.intercept + m.eq5d0 * zx(i) + m.age * zage(i) + m.z * ds.z(i) + m.d * ds.d(i) +
                                   m.y1 * zy1(i) + m.y2 * zy2(i);
                p = 1.0 / (1.0 + std::exp(-eta));
                min_prob = std::min(min_prob, p);
            }
            // One uniform per slot and subject keeps the stream aligned across configurations.
            const double draw = unif(rng);
            const bool obs = still_observed && draw < p;
            r[static_cast<std::size_t>(slot)](i) = obs ? 1 : 0;
            still_observed = obs;
        }
    }
    if (min_prob < 1e-8)
        res.warnings.push_back("positivity: some subjects have observation probability below 1e-8");

    res.data = ds;
    auto& out = res.data;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    auto& eqo = out.covariate(kBaselineUtility);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!r[0](i)) {
            eqo.values(i) = nan;
            eqo.observed(i) = 0;
        }
        if (!r[1](i)) {
            out.y1(i) = nan;
            out.r1(i) = 0;
        }
        if (!r[2](i)) {
            out.y2(i) = nan;
            out.r2(i) = 0;
        }
    }
    return res;
}

Eigen::VectorXd generate_binary_outcome(const SimulatedTrial& trial, double intercept, double log_or, double u_loading,
                                        std::uint64_t seed) {
    Rng rng = make_rng(seed, 2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto& ds = trial.data;
    Eigen::VectorXd y(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const double eta = intercept + log_or * ds.d(i) + u_loading * trial.truth.u(i);
        y(i) = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    return y;
}

}  // namespace ivcea
