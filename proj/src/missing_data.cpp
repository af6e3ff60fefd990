#include "ivcea/missing_data.hpp"

#include "ivcea/errors.hpp"
#include "ivcea/parallel.hpp"
#include "ivcea/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace ivcea {

namespace {

constexpr const char* kSlotNames[3] = {kBaselineUtility, "y1", "y2"};

int slot_of(const std::string& name) {
    if (name == kBaselineUtility) return 0;
    if (name == "y1") return 1;
    if (name == "y2") return 2;
    return -1;
}

std::ptrdiff_t position_in(const MonotoneOrder& order, int slot) {
    return std::find(order.begin(), order.end(), slot) - order.begin();
}

// Values and observation mask of a named variable.
std::pair<Eigen::VectorXd, Eigen::VectorXi> variable(const TrialDataset& ds, const std::string& name) {
    const Eigen::Index n = ds.size();
    if (name == "z") return {ds.z.cast<double>(), Eigen::VectorXi::Ones(n)};
    if (name == "d") return {ds.d.cast<double>(), Eigen::VectorXi::Ones(n)};
    if (name == "y1") return {ds.y1, ds.r1};
    if (name == "y2") return {ds.y2, ds.r2};
    const auto& c = ds.covariate(name);
    return {c.values, c.observed};
}

bool fully_observed(const TrialDataset& ds, const std::string& name) {
    return (variable(ds, name).second.array() == 1).all();
}

Eigen::MatrixXd with_intercept(const std::vector<Eigen::VectorXd>& cols, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()) + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t r = 0; r < rows.size(); ++r)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j) + 1) = cols[j](rows[r]);
    return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// Probability-of-missingness models
// ---------------------------------------------------------------------------

PomSpec PomSpec::defaults(const TrialDataset& ds, const MonotoneOrder& order) {
    PomSpec spec;
    spec.order = order;
    std::vector<std::string> baseline;
    for (const auto& c : ds.covariates)
        if (c.name != kBaselineUtility && (c.observed.array() == 1).all()) baseline.push_back(c.name);
    for (std::size_t pos = 0; pos < 3; ++pos) {
        const int slot = order[pos];
        auto& cands = spec.candidates[static_cast<std::size_t>(slot)];
        cands = baseline;
        if (pos > 0) {
            cands.push_back("z");
            cands.push_back("d");
        }
        for (std::size_t earlier = 0; earlier < pos; ++earlier) {
            const int s = order[earlier];
            if (s == 0 && !ds.has_covariate(kBaselineUtility)) continue;
            cands.push_back(kSlotNames[s]);
        }
    }
    return spec;
}

void PomSpec::validate() const {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != MonotoneOrder{0, 1, 2}) throw ConfigError("POM order must be a permutation of {0,1,2}");
    if (!(p_threshold > 0 && p_threshold <= 1)) throw ConfigError("POM p-value threshold must be in (0, 1]");
    for (int slot = 0; slot < 3; ++slot) {
        std::set<std::string> seen;
        for (const auto& name : candidates[static_cast<std::size_t>(slot)]) {
            if (!seen.insert(name).second) throw ConfigError("duplicate POM candidate '" + name + "'");
            const int v = slot_of(name);
            if (v >= 0 && position_in(order, v) >= position_in(order, slot))
                throw ConfigError(std::string("POM for ") + kSlotNames[slot] + " cannot use '" + name +
                                  "', which is not observed before it in the monotone order");
        }
    }
}

FittedPoms fit_pom(const TrialDataset& ds, const PomSpec& spec) {
    spec.validate();
    if (!is_monotone(ds, spec.order))
        throw ConfigError("fit_pom requires a monotone missingness pattern; apply enforce_monotone first");
    const Eigen::Index n = ds.size();
    FittedPoms out;
    out.order = spec.order;
    std::vector<char> at_risk(static_cast<std::size_t>(n), 1);

    for (std::size_t pos = 0; pos < 3; ++pos) {
        const int slot = spec.order[pos];
        const Eigen::VectorXi r = indicator(ds, slot);
        PomModel& model = out.models[static_cast<std::size_t>(slot)];
        model.slot = slot;

        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < n; ++i)
            if (at_risk[static_cast<std::size_t>(i)]) rows.push_back(i);
        model.n_at_risk = static_cast<Eigen::Index>(rows.size());
        Eigen::VectorXd y(model.n_at_risk);
        for (std::size_t k = 0; k < rows.size(); ++k) y(static_cast<Eigen::Index>(k)) = r(rows[k]);

        if (rows.empty() || (y.array() == 1.0).all()) {
            model.always_observed = true;
        } else if ((y.array() == 0.0).all()) {
            throw PositivityError(std::string("no subject at risk has ") + kSlotNames[slot] +
                                  " observed; inverse probability weights are undefined");
        } else {
            // Candidate columns on the at-risk rows; constant ones carry no information.
            std::vector<std::string> active;
            std::vector<Eigen::VectorXd> columns;
            for (const auto& name : spec.candidates[static_cast<std::size_t>(slot)]) {
                auto [values, observed] = variable(ds, name);
                bool ok = true, constant = true;
                for (auto i : rows) {
                    ok = ok && observed(i);
                    constant = constant && values(i) == values(rows.front());
                }
                if (!ok)
                    throw ConfigError("POM candidate '" + name + "' has missing values among subjects at risk for " +
                                      kSlotNames[slot]);
                if (constant) {
                    model.removed.push_back(name);
                    continue;
                }
                active.push_back(name);
                columns.push_back(std::move(values));
            }

            for (;;) {
                LogisticOptions lo;
                lo.names = {"(Intercept)"};
                lo.names.insert(lo.names.end(), active.begin(), active.end());
                try {
                    model.fit = logistic(with_intercept(columns, rows), y, lo);
                } catch (const SeparationError& e) {
                    throw PositivityError(std::string("POM for ") + kSlotNames[slot] +
                                          " predicts observation perfectly for some covariate levels, so the "
                                          "probability of being observed is 0 or 1 there and inverse weighting "
                                          "cannot be used (" + e.what() + ")");
                }
                if (active.empty()) break;
                Eigen::Index worst = -1;
                double worst_p = -1;
                for (Eigen::Index j = 1; j < model.fit.coefficients.size(); ++j) {
                    const double p = model.fit.p_value(j);
                    if (p > worst_p) {
                        worst_p = p;
                        worst = j;
                    }
                }
                if (worst_p < spec.p_threshold) break;
                const auto drop = static_cast<std::size_t>(worst - 1);
                model.removed.push_back(active[drop]);
                active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
                columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(drop));
            }
            model.selected = active;
        }
        for (Eigen::Index i = 0; i < n; ++i)
            if (!r(i)) at_risk[static_cast<std::size_t>(i)] = 0;
    }
    return out;
}

Eigen::VectorXd pom_probabilities(const TrialDataset& ds, const PomModel& model) {
    const Eigen::Index n = ds.size();
    if (model.always_observed) return Eigen::VectorXd::Ones(n);
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, model.fit.coefficients(0));
    Eigen::VectorXi ok = Eigen::VectorXi::Ones(n);
    for (std::size_t j = 0; j < model.selected.size(); ++j) {
        auto [values, observed] = variable(ds, model.selected[j]);
        eta += model.fit.coefficients(static_cast<Eigen::Index>(j) + 1) * values;
        ok = ok.cwiseMin(observed);
    }
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i)
        p(i) = ok(i) ? 1.0 / (1.0 + std::exp(-eta(i))) : std::numeric_limits<double>::quiet_NaN();
    return p;
}

WeightVector ipw_weights(const TrialDataset& ds, const FittedPoms& poms, const WeightOptions& opt) {
    const Eigen::Index n = ds.size();
    WeightVector out;
    out.w = Eigen::VectorXd::Zero(n);
    out.stabilized = opt.stabilize;
    out.truncation_quantile = opt.truncation_quantile;
    const Eigen::VectorXi r0 = ds.r0();
    std::array<Eigen::VectorXd, 3> prob;
    for (int s = 0; s < 3; ++s) prob[static_cast<std::size_t>(s)] = pom_probabilities(ds, poms.models[static_cast<std::size_t>(s)]);

    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(r0(i) && ds.r1(i) && ds.r2(i))) continue;
        const double p = prob[0](i) * prob[1](i) * prob[2](i);
        if (!(p > 0))
            throw PositivityError("complete case " + std::to_string(i) + " has fitted observation probability 0");
        out.w(i) = 1.0 / p;
        ++out.n_complete;
    }
    if (out.n_complete == 0) throw PositivityError("no complete cases to weight");

    if (opt.stabilize) out.w *= static_cast<double>(out.n_complete) / static_cast<double>(n);

    if (opt.truncation_quantile) {
        const double q = *opt.truncation_quantile;
        if (!(q > 0 && q <= 1)) throw ConfigError("truncation quantile must be in (0, 1]");
        std::vector<double> cw;
        for (Eigen::Index i = 0; i < n; ++i)
            if (out.w(i) > 0) cw.push_back(out.w(i));
        std::sort(cw.begin(), cw.end());
        // Linear interpolation between order statistics.
        const double h = (static_cast<double>(cw.size()) - 1.0) * q;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, cw.size() - 1);
        out.truncated_at = cw[lo] + (h - static_cast<double>(lo)) * (cw[hi] - cw[lo]);
        for (Eigen::Index i = 0; i < n; ++i)
            if (out.w(i) > out.truncated_at) {
                out.w(i) = out.truncated_at;
                ++out.n_truncated;
            }
        std::ostringstream ss;
        ss << "weights truncated at quantile " << q << " (" << out.truncated_at << "); " << out.n_truncated
           << " weights capped";
        out.warnings.push_back(ss.str());
    }

    out.max = out.w.maxCoeff();
    out.mean = out.w.sum() / static_cast<double>(out.n_complete);
    if (out.max > opt.instability_ratio * out.mean) {
        std::ostringstream ss;
        ss << "unstable weights: max " << out.max << " exceeds " << opt.instability_ratio << " x mean " << out.mean
           << " (poor overlap between complete and incomplete cases)";
        out.warnings.push_back(ss.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multiple imputation by chained equations with predictive mean matching
// ---------------------------------------------------------------------------

namespace {

struct ImputationPlan {
    std::vector<int> order;  // slots with missing values, by increasing missingness
    std::vector<std::string> auxiliary;
    std::array<Eigen::VectorXi, 3> observed;
    std::array<std::vector<Eigen::Index>, 2> arm_rows;
    bool has_eq5d0 = false;
};

std::array<Eigen::VectorXd, 3> slot_values(const TrialDataset& ds, bool has_eq5d0) {
    return {has_eq5d0 ? ds.covariate(kBaselineUtility).values : Eigen::VectorXd::Zero(ds.size()), ds.y1, ds.y2};
}

// Indices into `sorted` (donor order) of the k predicted means nearest to t.
// Exact distance ties are broken with the random stream.
void nearest_donors(const std::vector<double>& sorted, double t, int k, Rng& rng, std::vector<std::size_t>& out) {
    out.clear();
    const auto n = sorted.size();
    std::size_t right = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
    std::ptrdiff_t left = static_cast<std::ptrdiff_t>(right) - 1;
    std::bernoulli_distribution coin(0.5);
    while (static_cast<int>(out.size()) < k) {
        const bool has_left = left >= 0;
        const bool has_right = right < n;
        bool take_left;
        if (!has_left) {
            take_left = false;
        } else if (!has_right) {
            take_left = true;
        } else {
            const double dl = t - sorted[static_cast<std::size_t>(left)];
            const double dr = sorted[right] - t;
            take_left = dl < dr ? true : dr < dl ? false : coin(rng);
        }
        if (take_left) {
            out.push_back(static_cast<std::size_t>(left));
            --left;
        } else {
            out.push_back(right);
            ++right;
        }
    }
}

class Imputer {
public:
    Imputer(const TrialDataset& ds, const ImputationPlan& plan, const MiConfig& cfg, Rng rng)
        : ds_(ds), plan_(plan), cfg_(cfg), rng_(std::move(rng)), cur_(slot_values(ds, plan.has_eq5d0)) {}

    TrialDataset run() {
        std::uniform_int_distribution<std::size_t> pick;
        for (int slot : plan_.order) {
            for (int arm = 0; arm < 2; ++arm) {
                std::vector<Eigen::Index> obs, mis;
                split(slot, arm, obs, mis);
                for (auto i : mis)
                    cur_[static_cast<std::size_t>(slot)](i) =
                        cur_[static_cast<std::size_t>(slot)](obs[pick(rng_, decltype(pick)::param_type(0, obs.size() - 1))]);
            }
        }
        // A single incomplete variable has no other imputed predictor to iterate on.
        const int cycles = plan_.order.size() > 1 ? cfg_.cycles : 1;
        for (int c = 0; c < cycles; ++c)
            for (int slot : plan_.order)
                for (int arm = 0; arm < 2; ++arm) step(slot, arm);

        TrialDataset out = ds_;
        if (plan_.has_eq5d0) {
            auto& eq = out.covariate(kBaselineUtility);
            eq.values = cur_[0];
            eq.observed.setOnes();
        }
        out.y1 = cur_[1];
        out.y2 = cur_[2];
        out.r1.setOnes();
        out.r2.setOnes();
        return out;
    }

private:
    void split(int slot, int arm, std::vector<Eigen::Index>& obs, std::vector<Eigen::Index>& mis) const {
        for (auto i : plan_.arm_rows[static_cast<std::size_t>(arm)])
            (plan_.observed[static_cast<std::size_t>(slot)](i) ? obs : mis).push_back(i);
    }

    void step(int slot, int arm) {
        std::vector<Eigen::Index> obs, mis;
        split(slot, arm, obs, mis);
        if (mis.empty()) return;

        // Predictors: receipt, the other cascade variables, auxiliary covariates.
        std::vector<Eigen::VectorXd> cols;
        std::vector<std::string> names{"(Intercept)"};
        auto add = [&](Eigen::VectorXd v, const std::string& name) {
            const auto& rows = plan_.arm_rows[static_cast<std::size_t>(arm)];
            const double first = v(rows.front());
            bool constant = true;
            for (auto i : rows) constant = constant && v(i) == first;
            if (constant) return;
            cols.push_back(std::move(v));
            names.push_back(name);
        };
        if (cfg_.include_receipt) add(ds_.d.cast<double>(), "d");
        for (int other = 0; other < 3; ++other) {
            if (other == slot || (other == 0 && !plan_.has_eq5d0)) continue;
            add(cur_[static_cast<std::size_t>(other)], kSlotNames[other]);
        }
        for (const auto& a : plan_.auxiliary) add(ds_.covariate(a).values, a);

        const Eigen::MatrixXd x_obs = with_intercept(cols, obs);
        const Eigen::MatrixXd x_mis = with_intercept(cols, mis);
        Eigen::VectorXd y_obs(static_cast<Eigen::Index>(obs.size()));
        auto& target = cur_[static_cast<std::size_t>(slot)];
        for (std::size_t r = 0; r < obs.size(); ++r) y_obs(static_cast<Eigen::Index>(r)) = target(obs[r]);

        OlsOptions oo;
        oo.names = names;
        const FitResult fit = ols(x_obs, y_obs, oo);
        const Eigen::Index k = x_obs.cols();
        const auto dof = static_cast<double>(x_obs.rows() - k);

        // Draw sigma*^2 = RSS / chi2(dof) and beta* ~ N(beta_hat, sigma*^2 (X'X)^-1).
        Eigen::VectorXd beta_star = fit.coefficients;
        if (dof > 0 && fit.sigma2 > 0) {
            std::chi_squared_distribution<double> chi2(dof);
            const double ratio = std::sqrt(dof / chi2(rng_));
            Eigen::LLT<Eigen::MatrixXd> llt(fit.covariance);
            std::normal_distribution<double> norm;
            Eigen::VectorXd u(k);
            for (Eigen::Index j = 0; j < k; ++j) u(j) = norm(rng_);
            if (llt.info() == Eigen::Success) beta_star += ratio * (llt.matrixL() * u).eval();
        }

        const Eigen::VectorXd pred_obs = x_obs * fit.coefficients;
        const Eigen::VectorXd pred_mis = x_mis * beta_star;
        std::vector<std::size_t> idx(obs.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return pred_obs(static_cast<Eigen::Index>(a)) < pred_obs(static_cast<Eigen::Index>(b)); });
        std::vector<double> sorted(obs.size());
        for (std::size_t r = 0; r < idx.size(); ++r) sorted[r] = pred_obs(static_cast<Eigen::Index>(idx[r]));

        std::vector<std::size_t> near;
        std::uniform_int_distribution<int> choose(0, cfg_.donors - 1);
        for (std::size_t r = 0; r < mis.size(); ++r) {
            nearest_donors(sorted, pred_mis(static_cast<Eigen::Index>(r)), cfg_.donors, rng_, near);
            const std::size_t donor = idx[near[static_cast<std::size_t>(choose(rng_))]];
            target(mis[r]) = y_obs(static_cast<Eigen::Index>(donor));
        }
    }

    const TrialDataset& ds_;
    const ImputationPlan& plan_;
    const MiConfig& cfg_;
    Rng rng_;
    std::array<Eigen::VectorXd, 3> cur_;
};

}  // namespace

ImputationSet mi_impute(const TrialDataset& ds, const MiConfig& cfg) {
    if (cfg.m < 1) throw ConfigError("number of imputations must be at least 1");
    if (cfg.donors < 1) throw ConfigError("donor count must be at least 1");
    if (cfg.cycles < 1) throw ConfigError("cycle count must be at least 1");
    ds.validate();

    ImputationPlan plan;
    plan.has_eq5d0 = ds.has_covariate(kBaselineUtility);
    plan.observed = {ds.r0(), ds.r1, ds.r2};
    for (Eigen::Index i = 0; i < ds.size(); ++i) plan.arm_rows[static_cast<std::size_t>(ds.z(i))].push_back(i);
    if (cfg.auxiliary) {
        plan.auxiliary = *cfg.auxiliary;
    } else {
        for (const auto& c : ds.covariates)
            if (c.name != kBaselineUtility && (c.observed.array() == 1).all()) plan.auxiliary.push_back(c.name);
    }
    for (const auto& a : plan.auxiliary) {
        if (slot_of(a) >= 0) throw ConfigError("'" + a + "' is imputed and cannot be an auxiliary predictor");
        if (!fully_observed(ds, a)) throw ConfigError("auxiliary predictor '" + a + "' must be fully observed");
    }

    std::array<Eigen::Index, 3> missing{};
    for (int s = 0; s < 3; ++s) missing[static_cast<std::size_t>(s)] = (plan.observed[static_cast<std::size_t>(s)].array() == 0).count();
    for (int s = 0; s < 3; ++s)
        if (missing[static_cast<std::size_t>(s)] > 0) plan.order.push_back(s);
    std::stable_sort(plan.order.begin(), plan.order.end(),
                     [&](int a, int b) { return missing[static_cast<std::size_t>(a)] < missing[static_cast<std::size_t>(b)]; });

    for (int slot : plan.order) {
        for (int arm = 0; arm < 2; ++arm) {
            Eigen::Index n_obs = 0, n_mis = 0;
            for (auto i : plan.arm_rows[static_cast<std::size_t>(arm)])
                (plan.observed[static_cast<std::size_t>(slot)](i) ? n_obs : n_mis) += 1;
            if (n_mis > 0 && n_obs < cfg.donors)
                throw ValidationError(std::string("only ") + std::to_string(n_obs) + " observed donors for " +
                                      kSlotNames[slot] + " in arm z=" + std::to_string(arm) + " but " +
                                      std::to_string(cfg.donors) + " requested; use a smaller donor count");
        }
    }

    ImputationSet set;
    set.source = ds;
    set.config = cfg;
    set.imputation_order = plan.order;
    for (int s = 0; s < 3; ++s)
        set.imputed[static_cast<std::size_t>(s)] = (1 - plan.observed[static_cast<std::size_t>(s)].array()).matrix();
    if (!plan.has_eq5d0) set.imputed[0].setZero();
    set.datasets.resize(static_cast<std::size_t>(cfg.m));

    parallel_for(static_cast<std::size_t>(cfg.m), cfg.workers, [&](std::size_t j) {
        if (plan.order.empty()) {
            set.datasets[j] = ds;
            return;
        }
        Imputer imp(ds, plan, cfg, make_rng(cfg.seed, 3, j));
        set.datasets[j] = imp.run();
    });
    return set;
}

std::size_t count_pmm_violations(const ImputationSet& imp) {
    const auto& src = imp.source;
    const bool has_eq = src.has_covariate(kBaselineUtility);
    const auto source_values = slot_values(src, has_eq);
    const std::array<Eigen::VectorXi, 3> observed{src.r0(), src.r1, src.r2};
    std::array<std::array<std::set<double>, 2>, 3> pool;
    for (int s = 0; s < 3; ++s)
        for (Eigen::Index i = 0; i < src.size(); ++i)
            if (observed[static_cast<std::size_t>(s)](i))
                pool[static_cast<std::size_t>(s)][static_cast<std::size_t>(src.z(i))].insert(source_values[static_cast<std::size_t>(s)](i));

    std::size_t bad = 0;
    for (const auto& ds : imp.datasets) {
        const auto values = slot_values(ds, has_eq);
        for (int s = 0; s < 3; ++s)
            for (Eigen::Index i = 0; i < ds.size(); ++i) {
                if (imp.imputed[static_cast<std::size_t>(s)](i)) {
                    if (!pool[static_cast<std::size_t>(s)][static_cast<std::size_t>(src.z(i))].count(values[static_cast<std::size_t>(s)](i))) ++bad;
                } else if (observed[static_cast<std::size_t>(s)](i) &&
                           values[static_cast<std::size_t>(s)](i) != source_values[static_cast<std::size_t>(s)](i)) {
                    ++bad;  // an observed cell was altered
                }
            }
    }
    return bad;
}

// ---------------------------------------------------------------------------
// Rubin's rules
// ---------------------------------------------------------------------------

double rubin_dof(double w, double b, int m) {
    if (m < 2) throw ValidationError("Rubin degrees of freedom need at least two imputations");
    if (!(b > 0)) return std::numeric_limits<double>::infinity();
    const double r = (1.0 + 1.0 / m) * b / w;
    return (m - 1.0) * (1.0 + 1.0 / r) * (1.0 + 1.0 / r);
}

PooledEstimate rubin_pool(std::span<const Eigen::VectorXd> estimates, std::span<const Eigen::MatrixXd> covariances) {
    const auto m = static_cast<int>(estimates.size());
    if (m < 2) throw ValidationError("rubin_pool needs M >= 2 imputations; with M = 1 there is no between-imputation variance");
    if (covariances.size() != estimates.size()) throw ValidationError("rubin_pool: estimates and covariances differ in count");
    const Eigen::Index p = estimates.front().size();
    for (int j = 0; j < m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (estimates[ju].size() != p || covariances[ju].rows() != p || covariances[ju].cols() != p)
            throw ValidationError("rubin_pool: estimates are not conformable");
    }
    PooledEstimate out;
    out.m = m;
    out.estimate = Eigen::VectorXd::Zero(p);
    out.within = Eigen::MatrixXd::Zero(p, p);
    for (int j = 0; j < m; ++j) {
        out.estimate += estimates[static_cast<std::size_t>(j)];
        out.within += covariances[static_cast<std::size_t>(j)];
    }
    out.estimate /= m;
    out.within /= m;
    out.between = Eigen::MatrixXd::Zero(p, p);
    for (int j = 0; j < m; ++j) {
        const Eigen::VectorXd dev = estimates[static_cast<std::size_t>(j)] - out.estimate;
        out.between += dev * dev.transpose();
    }
    out.between /= (m - 1);
    out.total = out.within + (1.0 + 1.0 / m) * out.between;
    out.dof.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) out.dof(j) = rubin_dof(out.within(j, j), out.between(j, j), m);
    return out;
}

MiAnalysis analyze_imputations(const ImputationSet& imp,
                               const std::function<CaceEstimate(const TrialDataset&)>& analysis) {
    MiAnalysis out;
    out.per_imputation.resize(imp.datasets.size());
    parallel_for(imp.datasets.size(), imp.config.workers,
                 [&](std::size_t j) { out.per_imputation[j] = analysis(imp.datasets[j]); });
    std::vector<Eigen::VectorXd> est;
    std::vector<Eigen::MatrixXd> cov;
    for (const auto& e : out.per_imputation) {
        est.emplace_back(e.theta);
        cov.emplace_back(e.covariance);
    }
    out.pooled = rubin_pool(est, cov);
    return out;
}

// ---------------------------------------------------------------------------
// Pattern-mixture offsets
// ---------------------------------------------------------------------------

OffsetResult pattern_mixture_offset(const ImputationSet& imp, std::span<const Offset> offsets, ArmBy arm_by) {
    OffsetResult out{imp, {}};
    const auto& src = imp.source;
    for (const auto& off : offsets) {
        if (off.slot < 0 || off.slot > 2) throw ConfigError("offset slot must be 0 (eq5d0), 1 (y1) or 2 (y2)");
        if (off.arm != 0 && off.arm != 1) throw ConfigError("offset arm must be 0 or 1");
        const auto& mask = imp.imputed[static_cast<std::size_t>(off.slot)];
        if ((mask.array() == 0).all()) {
            out.warnings.push_back(std::string("offset for ") + kSlotNames[off.slot] +
                                   " has no effect: the variable was never imputed");
            continue;
        }
        if (off.delta == 0.0) continue;
        for (auto& ds : out.set.datasets) {
            for (Eigen::Index i = 0; i < ds.size(); ++i) {
                if (!mask(i)) continue;
                const int arm = arm_by == ArmBy::Assigned ? src.z(i) : src.d(i);
                if (arm != off.arm) continue;
                switch (off.slot) {
                    case 0: ds.covariate(kBaselineUtility).values(i) += off.delta; break;
                    case 1: ds.y1(i) += off.delta; break;
                    default: ds.y2(i) += off.delta; break;
                }
            }
        }
    }
    return out;
}

}  // namespace ivcea
