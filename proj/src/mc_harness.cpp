#include "ivcea/mc_harness.hpp"

#include "ivcea/errors.hpp"
#include "ivcea/parallel.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace ivcea {

std::string to_string(Method m) {
    switch (m) {
        case Method::Itt: return "itt";
        case Method::Pp: return "pp";
        case Method::Cace2sls: return "cace-2sls";
        case Method::Cace3sls: return "cace-3sls";
        case Method::Bayes: return "bayes";
        case Method::IpwAte: return "ipw-ate";
    }
    return "unknown";
}

std::string to_string(MissingMethod m) {
    switch (m) {
        case MissingMethod::Cca: return "cca";
        case MissingMethod::Mi: return "mi";
        case MissingMethod::Ipw: return "ipw";
        case MissingMethod::Bayes: return "bayes";
    }
    return "unknown";
}

Method parse_method(const std::string& s) {
    for (auto m : {Method::Itt, Method::Pp, Method::Cace2sls, Method::Cace3sls, Method::Bayes, Method::IpwAte})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown method '" + s + "' (expected itt, pp, cace-2sls, cace-3sls, bayes or ipw-ate)");
}

MissingMethod parse_missing_method(const std::string& s) {
    for (auto m : {MissingMethod::Cca, MissingMethod::Mi, MissingMethod::Ipw, MissingMethod::Bayes})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown missing-data method '" + s + "' (expected cca, mi, ipw or bayes)");
}

std::string unsupported_reason(const Pipeline& p) {
    if (p.method == Method::Bayes && (p.missing == MissingMethod::Mi || p.missing == MissingMethod::Ipw))
        return "the Bayesian model handles missing data itself; use cca or bayes";
    if (p.method != Method::Bayes && p.missing == MissingMethod::Bayes)
        return "bayes missing-data handling is only available with the bayes method";
    return {};
}

bool McReport::all_checks_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

const McCell& McReport::cell(const std::string& pipeline, const std::string& parameter) const {
    for (const auto& c : cells)
        if (c.pipeline == pipeline && c.parameter == parameter) return c;
    throw Error("no Monte Carlo cell " + pipeline + " / " + parameter);
}

std::vector<McCell> summarize_records(const std::vector<ReplicateRecord>& records) {
    std::vector<McCell> cells;
    std::map<std::pair<std::string, std::string>, std::size_t> where;
    std::vector<std::vector<const ReplicateRecord*>> groups;
    for (const auto& r : records) {
        auto key = std::pair{r.pipeline, r.parameter};
        auto it = where.find(key);
        if (it == where.end()) {
            it = where.emplace(key, cells.size()).first;
            McCell c;
            c.pipeline = r.pipeline;
            c.parameter = r.parameter;
            cells.push_back(c);
            groups.emplace_back();
        }
        groups[it->second].push_back(&r);
    }
    for (std::size_t g = 0; g < cells.size(); ++g) {
        McCell& c = cells[g];
        double s_est = 0, s_truth = 0, s_se = 0, s_width = 0;
        int covered = 0;
        std::vector<double> est;
        for (const auto* r : groups[g]) {
            if (r->failed) {
                ++c.failures;
                continue;
            }
            est.push_back(r->estimate);
            s_est += r->estimate;
            s_truth += r->truth;
            s_se += r->se;
            s_width += r->upper - r->lower;
            covered += r->lower <= r->truth && r->truth <= r->upper;
            c.pmm_violations += r->pmm_violations;
            c.max_rhat = std::max(c.max_rhat, r->max_rhat);
        }
        c.replicates = static_cast<int>(est.size());
        const int attempts = c.replicates + c.failures;
        c.degraded = c.failures * 10 > attempts;
        if (c.replicates == 0) continue;
        const double n = c.replicates;
        c.mean_estimate = s_est / n;
        c.truth = s_truth / n;
        c.bias = c.mean_estimate - c.truth;
        double ss = 0;
        for (double e : est) ss += (e - c.mean_estimate) * (e - c.mean_estimate);
        c.empirical_sd = c.replicates > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        c.mc_se = c.empirical_sd / std::sqrt(n);
        c.mean_se = s_se / n;
        c.coverage = covered / n;
        c.mean_width = s_width / n;
    }
    return cells;
}

std::vector<CheckResult> evaluate_checks(const std::vector<McCell>& cells, const std::vector<Check>& checks) {
    std::vector<CheckResult> out;
    for (const auto& ck : checks) {
        CheckResult r;
        r.check = ck;
        const McCell* cell = nullptr;
        for (const auto& c : cells)
            if (c.pipeline == ck.pipeline && c.parameter == ck.parameter) cell = &c;
        std::ostringstream ss;
        if (!cell) {
            r.detail = "no cell " + ck.pipeline + " / " + ck.parameter;
            out.push_back(r);
            continue;
        }
        if (cell->replicates < 2) {
            r.detail = "fewer than two successful replicates";
            out.push_back(r);
            continue;
        }
        const double target = ck.truth_override ? *ck.truth_override : cell->truth;
        const double bias = cell->mean_estimate - target;
        if (ck.kind == "bias_within" || ck.kind == "bias_beyond") {
            r.value = cell->mc_se > 0 ? std::abs(bias) / cell->mc_se : (bias == 0 ? 0.0 : INFINITY);
            if (ck.kind == "bias_within") {
                r.passed = r.value <= ck.threshold;
            } else {
                r.passed = r.value > ck.threshold && (ck.direction == 0 || (bias > 0) == (ck.direction > 0));
            }
            ss << "bias " << bias << " = " << r.value << " MC SE (MC SE " << cell->mc_se << ")";
        } else if (ck.kind == "coverage_in") {
            r.value = cell->coverage;
            r.passed = ck.lower <= r.value && r.value <= ck.upper;
            ss << "coverage " << r.value << " in [" << ck.lower << ", " << ck.upper << "]";
        } else if (ck.kind == "pmm_exact") {
            r.value = static_cast<double>(cell->pmm_violations);
            r.passed = cell->pmm_violations == 0;
            ss << cell->pmm_violations << " imputed cells outside their donor pool";
        } else if (ck.kind == "rhat_below") {
            r.value = cell->max_rhat;
            r.passed = cell->max_rhat < ck.threshold;
            ss << "max split R-hat " << cell->max_rhat;
        } else if (ck.kind == "not_degraded") {
            r.value = cell->failures;
            r.passed = !cell->degraded;
            ss << cell->failures << " failures";
        } else {
            throw ConfigError("unknown check kind '" + ck.kind + "'");
        }
        r.detail = ss.str();
        out.push_back(r);
    }
    return out;
}

McReport run_replicates(int replicates, std::uint64_t seed, unsigned workers,
                        const std::function<std::vector<ReplicateRecord>(int, Rng&)>& body) {
    if (replicates < 2) throw ConfigError("at least two replicates are required");
    std::vector<std::vector<ReplicateRecord>> per(static_cast<std::size_t>(replicates));
    parallel_for(per.size(), workers, [&](std::size_t rep) {
        Rng rng = make_rng(seed, 0, rep);
        per[rep] = body(static_cast<int>(rep), rng);
    });
    McReport rep;
    rep.replicates = replicates;
    rep.seed = seed;
    for (auto& v : per)
        for (auto& r : v) rep.records.push_back(std::move(r));
    rep.cells = summarize_records(rep.records);
    return rep;
}

PipelineResult run_pipeline(const TrialDataset& ds, const Pipeline& p, const McConfig& cfg, std::uint64_t seed) {
    if (auto why = unsupported_reason(p); !why.empty()) throw ConfigError(p.label() + ": " + why);
    PipelineResult out;
    if (p.method == Method::Bayes) {
        BayesIvConfig b = cfg.bayes;
        b.seed = seed;
        b.covariates = cfg.covariates;
        b.missing = p.missing == MissingMethod::Bayes ? BayesMissing::Model : BayesMissing::Cca;
        b.workers = 1;
        const PosteriorDraws draws = fit_bayes_iv(ds, b);
        out.cea = summarize_posterior(draws, cfg.lambda);
        out.max_rhat = draws.max_rhat();
        out.warnings = draws.warnings;
        return out;
    }

    std::function<CaceEstimate(const TrialDataset&, const IvOptions&)> estimator;
    switch (p.method) {
        case Method::Itt: estimator = itt_sur; break;
        case Method::Pp: estimator = pp_sur; break;
        case Method::Cace2sls: estimator = tsls_pair; break;
        case Method::Cace3sls: estimator = three_sls; break;
        case Method::IpwAte: estimator = ipw_adherence; break;
        case Method::Bayes: break;
    }
    IvOptions opt;
    opt.covariates = cfg.covariates;

    switch (p.missing) {
        case MissingMethod::Cca: {
            const CaceEstimate est = estimator(ds, opt);
            out.cea = inb(est, cfg.lambda);
            out.warnings = est.warnings;
            break;
        }
        case MissingMethod::Mi: {
            MiConfig mi = cfg.mi;
            mi.seed = seed;
            mi.workers = 1;
            const ImputationSet imp = mi_impute(ds, mi);
            const MiAnalysis res = analyze_imputations(imp, [&](const TrialDataset& d) { return estimator(d, opt); });
            out.cea = inb(res.pooled, cfg.lambda);
            out.cea.estimand = res.per_imputation.front().estimand;
            out.pmm_violations = static_cast<std::int64_t>(count_pmm_violations(imp));
            break;
        }
        case MissingMethod::Ipw: {
            const MonotoneOrder order = cfg.dgp.missingness.order;
            const MonotoneResult mono = enforce_monotone(ds, order);
            const FittedPoms poms = fit_pom(mono.data, PomSpec::defaults(mono.data, order));
            const WeightVector w = ipw_weights(mono.data, poms, cfg.weights);
            opt.weights = w.span();
            const CaceEstimate est = estimator(mono.data, opt);
            out.cea = inb(est, cfg.lambda);
            out.cea.missing_method = "ipw";
            out.warnings = w.warnings;
            break;
        }
        case MissingMethod::Bayes: break;
    }
    return out;
}

McReport run_mc(const McConfig& cfg) {
    cfg.dgp.validate();
    std::vector<Pipeline> runnable;
    std::vector<std::pair<std::string, std::string>> skipped;
    for (const auto& p : cfg.pipelines) {
        const auto why = unsupported_reason(p);
        if (why.empty())
            runnable.push_back(p);
        else
            skipped.emplace_back(p.label(), why);
    }
    const double scale_c = cfg.dgp.effect_cost, scale_q = cfg.dgp.effect_qaly;

    McReport rep = run_replicates(cfg.replicates, cfg.seed, cfg.workers, [&](int r, Rng&) {
        DgpConfig dgp = cfg.dgp;
        dgp.seed = derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(r));
        const SimulatedTrial trial = generate_trial(dgp);
        const TrialDataset ds =
            apply_missingness(trial.data, dgp.missingness, derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(r))).data;

        std::vector<ReplicateRecord> recs;
        for (const auto& p : runnable) {
            const double share = p.method == Method::Itt ? cfg.dgp.p_complier : 1.0;
            const double truth[3] = {share * scale_c, share * scale_q, share * (cfg.lambda * scale_q - scale_c)};
            const char* params[3] = {"cost", "qaly", "inb"};
            ReplicateRecord base;
            base.replicate = r;
            base.pipeline = p.label();
            try {
                const PipelineResult res =
                    run_pipeline(ds, p, cfg, derive_seed(cfg.seed, stable_hash(p.label()), static_cast<std::uint64_t>(r)));
                const CeaResult& c = res.cea;
                const double est[3] = {c.incremental_cost, c.incremental_qaly, c.inb};
                const double se[3] = {std::sqrt(c.covariance(0, 0)), std::sqrt(c.covariance(1, 1)), c.inb_se};
                const Interval iv[3] = {c.cost_interval, c.qaly_interval, c.inb_interval};
                for (int k = 0; k < 3; ++k) {
                    ReplicateRecord rec = base;
                    rec.parameter = params[k];
                    rec.truth = truth[k];
                    rec.estimate = est[k];
                    rec.se = se[k];
                    rec.lower = iv[k].lower;
                    rec.upper = iv[k].upper;
                    rec.pmm_violations = res.pmm_violations;
                    rec.max_rhat = res.max_rhat;
                    recs.push_back(rec);
                }
            } catch (const std::exception& e) {
                for (int k = 0; k < 3; ++k) {
                    ReplicateRecord rec = base;
                    rec.parameter = params[k];
                    rec.truth = truth[k];
                    rec.failed = true;
                    rec.error = e.what();
                    recs.push_back(rec);
                }
            }
        }
        return recs;
    });
    rep.lambda = cfg.lambda;
    rep.skipped = std::move(skipped);
    rep.checks = evaluate_checks(rep.cells, cfg.checks);
    return rep;
}

McReport normal_mean_toy(int replicates, std::uint64_t seed, int n, double mu, unsigned workers) {
    if (n < 1) throw ConfigError("toy sample size must be positive");
    return run_replicates(replicates, seed, workers, [&](int r, Rng& rng) {
        std::normal_distribution<double> norm(mu, 1.0);
        double s = 0;
        for (int i = 0; i < n; ++i) s += norm(rng);
        ReplicateRecord rec;
        rec.replicate = r;
        rec.pipeline = "normal-mean";
        rec.parameter = "mean";
        rec.truth = mu;
        rec.estimate = s / n;
        rec.se = 1.0 / std::sqrt(static_cast<double>(n));
        rec.lower = rec.estimate - kZ95 * rec.se;
        rec.upper = rec.estimate + kZ95 * rec.se;
        return std::vector<ReplicateRecord>{rec};
    });
}

}  // namespace ivcea
