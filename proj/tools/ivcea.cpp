#include "ivcea/bayes_iv.hpp"
#include "ivcea/cea.hpp"
#include "ivcea/data_model.hpp"
#include "ivcea/errors.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/mc_harness.hpp"
#include "ivcea/missing_data.hpp"
#include "ivcea/report.hpp"
#include "ivcea/simulator.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace ivcea;

namespace {

std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

double to_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

/// "a:b:step" or "v1,v2,...".
std::vector<double> parse_values(const std::string& s) {
    if (s.find(':') != std::string::npos) {
        const auto parts = split(s, ':');
        if (parts.size() != 3) throw ConfigError("grid must be start:stop:step, got '" + s + "'");
        return lambda_grid(to_double(parts[0]), to_double(parts[1]), to_double(parts[2]));
    }
    std::vector<double> out;
    for (const auto& p : split(s)) out.push_back(to_double(p));
    if (out.empty()) throw ConfigError("empty value list");
    return out;
}

MonotoneOrder parse_order(const std::string& s) {
    const auto parts = split(s);
    if (parts.size() != 3) throw ConfigError("order must list eq5d0, y1 and y2");
    MonotoneOrder o{};
    for (std::size_t k = 0; k < 3; ++k) {
        if (parts[k] == "eq5d0") o[k] = 0;
        else if (parts[k] == "y1") o[k] = 1;
        else if (parts[k] == "y2") o[k] = 2;
        else throw ConfigError("unknown order entry '" + parts[k] + "'");
    }
    return o;
}

void emit(const Json& j, const std::string& out) {
    if (out.empty() || out == "-")
        std::cout << j.dump(2) << "\n";
    else
        write_json(out, j);
}

std::string draws_csv(const PosteriorDraws& d) {
    std::ostringstream ss;
    for (std::size_t k = 0; k < d.names.size(); ++k) ss << (k ? "," : "") << d.names[k];
    ss << "\n";
    for (Eigen::Index i = 0; i < d.draws.rows(); ++i) {
        for (Eigen::Index k = 0; k < d.draws.cols(); ++k) ss << (k ? "," : "") << format_double(d.draws(i, k));
        ss << "\n";
    }
    return ss.str();
}

PosteriorDraws read_draws(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    PosteriorDraws d;
    std::string line;
    std::getline(in, line);
    d.names = split(line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> r;
        for (const auto& c : split(line)) r.push_back(to_double(c));
        if (r.size() != d.names.size()) throw ValidationError("draws file row has the wrong number of fields");
        rows.push_back(std::move(r));
    }
    d.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            d.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    return d;
}

struct EstimateArgs {
    std::string data, schema, estimand = "cace-3sls", missing = "cca", covariates = "eq5d0", order = "eq5d0,y1,y2";
    std::string covariance = "robust", out, draws;
    double lambda = 20000;
    int chains = 4, iters = 10000, burnin = 5000, thin = 1, m = 50, k = 5, cycles = 10;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::optional<double> truncate;
    bool stabilize = false;
};

TrialDataset load(const std::string& path, const std::string& schema) {
    CsvSchema s = CsvSchema::identity();
    if (!schema.empty()) {
        s = CsvSchema::parse(schema);
        s.include_unmapped = true;
    }
    return load_csv(path, s);
}

McConfig analysis_config(const EstimateArgs& a) {
    McConfig cfg;
    cfg.lambda = a.lambda;
    cfg.covariates = split(a.covariates);
    cfg.mi.m = a.m;
    cfg.mi.donors = a.k;
    cfg.mi.cycles = a.cycles;
    cfg.mi.workers = a.workers;
    cfg.weights.stabilize = a.stabilize;
    cfg.weights.truncation_quantile = a.truncate;
    cfg.bayes.chains = a.chains;
    cfg.bayes.iterations = a.iters;
    cfg.bayes.burnin = a.burnin;
    cfg.bayes.thin = a.thin;
    cfg.bayes.workers = a.workers;
    cfg.dgp.missingness.order = parse_order(a.order);
    return cfg;
}

std::function<CaceEstimate(const TrialDataset&, const IvOptions&)> estimator_for(Method m) {
    switch (m) {
        case Method::Itt: return itt_sur;
        case Method::Pp: return pp_sur;
        case Method::Cace2sls: return tsls_pair;
        case Method::Cace3sls: return three_sls;
        case Method::IpwAte: return ipw_adherence;
        case Method::Bayes: break;
    }
    throw ConfigError("no frequentist estimator for this method");
}

int run_estimate(const EstimateArgs& a) {
    const TrialDataset ds = load(a.data, a.schema);
    const Pipeline p{parse_method(a.estimand), parse_missing_method(a.missing)};
    if (auto why = unsupported_reason(p); !why.empty()) throw ConfigError(p.label() + ": " + why);
    const McConfig cfg = analysis_config(a);
    IvOptions opt;
    opt.covariates = cfg.covariates;
    opt.covariance = a.covariance == "classical" ? CovarianceType::Classical : CovarianceType::Robust;
    if (a.covariance != "classical" && a.covariance != "robust") throw ConfigError("covariance must be robust or classical");

    Json j;
    j["input"] = {{"data", a.data},       {"n", ds.size()},          {"estimand", a.estimand},
                  {"missing", a.missing}, {"covariates", cfg.covariates}, {"lambda", a.lambda}};
    const auto patterns = summarize_patterns(ds);
    Json pj = Json::array();
    for (const auto& [key, count] : patterns.counts)
        pj.push_back({{"r0", key[0]}, {"r1", key[1]}, {"r2", key[2]}, {"count", count}});
    j["missing_patterns"] = {{"monotone", patterns.monotone}, {"patterns", pj}};

    if (p.method == Method::Bayes) {
        BayesIvConfig b = cfg.bayes;
        b.seed = a.seed;
        b.covariates = cfg.covariates;
        b.missing = p.missing == MissingMethod::Bayes ? BayesMissing::Model : BayesMissing::Cca;
        b.fail_on_nonconvergence = false;
        const PosteriorDraws draws = fit_bayes_iv(ds, b);
        j["posterior"] = to_json(draws);
        j["cea"] = to_json(summarize_posterior(draws, a.lambda));
        if (!a.draws.empty()) write_text(a.draws, draws_csv(draws));
        emit(j, a.out);
        return draws.max_rhat() > b.rhat_threshold ? 3 : 0;
    }

    const auto est_fn = estimator_for(p.method);
    switch (p.missing) {
        case MissingMethod::Cca: {
            const CaceEstimate est = est_fn(ds, opt);
            j["estimate"] = to_json(est);
            j["cea"] = to_json(inb(est, a.lambda));
            break;
        }
        case MissingMethod::Ipw: {
            const MonotoneOrder order = parse_order(a.order);
            const MonotoneResult mono = enforce_monotone(ds, order);
            const FittedPoms poms = fit_pom(mono.data, PomSpec::defaults(mono.data, order));
            const WeightVector w = ipw_weights(mono.data, poms, cfg.weights);
            opt.weights = w.span();
            const CaceEstimate est = est_fn(mono.data, opt);
            j["ipw"] = {{"dropped_non_monotone", mono.dropped}, {"models", to_json(poms)}, {"weights", to_json(w)},
                        {"warnings", mono.warnings}};
            j["estimate"] = to_json(est);
            CeaResult c = inb(est, a.lambda);
            c.missing_method = "ipw";
            j["cea"] = to_json(c);
            break;
        }
        case MissingMethod::Mi: {
            MiConfig mi = cfg.mi;
            mi.seed = a.seed;
            const ImputationSet imp = mi_impute(ds, mi);
            const MiAnalysis res = analyze_imputations(imp, [&](const TrialDataset& d) { return est_fn(d, opt); });
            j["mi"] = {{"m", imp.m()}, {"donors", mi.donors}, {"cycles", mi.cycles}, {"seed", mi.seed},
                       {"pmm_violations", count_pmm_violations(imp)}};
            j["pooled"] = to_json(res.pooled);
            CeaResult c = inb(res.pooled, a.lambda);
            c.estimand = res.per_imputation.front().estimand;
            j["cea"] = to_json(c);
            break;
        }
        case MissingMethod::Bayes: break;
    }
    emit(j, a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compliance-adjusted cost-effectiveness estimation for randomised trials"};
    app.require_subcommand(1);

    // simulate
    std::string sim_config, sim_out, sim_truth;
    std::optional<std::uint64_t> sim_seed;
    auto* sim = app.add_subcommand("simulate", "Generate a trial dataset from a DGP config");
    sim->add_option("--config", sim_config, "DGP config (JSON)")->required();
    sim->add_option("--out", sim_out, "Output CSV")->required();
    sim->add_option("--truth", sim_truth, "Output truth JSON");
    sim->add_option("--seed", sim_seed, "Override the config seed");

    // estimate
    EstimateArgs ea;
    auto add_analysis = [&](CLI::App* c) {
        c->add_option("--data", ea.data, "Trial CSV")->required();
        c->add_option("--schema", ea.schema, "Column mapping, e.g. z=arm,d=received,y1=cost,y2=qaly");
        c->add_option("--covariates", ea.covariates, "Comma-separated covariates")->capture_default_str();
        c->add_option("--lambda", ea.lambda, "Willingness to pay per QALY")->capture_default_str();
        c->add_option("--seed", ea.seed, "Random seed")->capture_default_str();
        c->add_option("--m", ea.m, "Number of imputations")->capture_default_str();
        c->add_option("--k", ea.k, "PMM donors")->capture_default_str();
        c->add_option("--cycles", ea.cycles, "Chained-equation cycles")->capture_default_str();
        c->add_option("--workers", ea.workers, "Worker threads (0 = all cores)")->capture_default_str();
        c->add_option("--out", ea.out, "Output JSON (stdout if omitted)");
    };
    auto* est = app.add_subcommand("estimate", "Estimate incremental cost, QALY and INB");
    add_analysis(est);
    est->add_option("--estimand", ea.estimand, "itt, pp, cace-3sls, cace-2sls, bayes or ipw-ate")->capture_default_str();
    est->add_option("--missing", ea.missing, "cca, ipw, mi or bayes")->capture_default_str();
    est->add_option("--order", ea.order, "Monotone cascade order for IPW")->capture_default_str();
    est->add_option("--covariance", ea.covariance, "robust or classical")->capture_default_str();
    est->add_option("--chains", ea.chains, "MCMC chains")->capture_default_str();
    est->add_option("--iters", ea.iters, "MCMC iterations per chain")->capture_default_str();
    est->add_option("--burnin", ea.burnin, "MCMC burn-in")->capture_default_str();
    est->add_option("--thin", ea.thin, "MCMC thinning")->capture_default_str();
    est->add_option("--draws", ea.draws, "Write posterior draws CSV");
    est->add_option("--truncate", ea.truncate, "Truncate IPW weights at this quantile");
    est->add_flag("--stabilize", ea.stabilize, "Stabilised IPW weights");

    // impute
    std::string imp_dir;
    auto* imp = app.add_subcommand("impute", "Multiple imputation by chained equations with PMM");
    add_analysis(imp);
    imp->add_option("--out-dir", imp_dir, "Directory for completed datasets and manifest")->required();

    // sensitivity
    std::string sens_qaly = "0", sens_cost = "0", sens_arm_by = "assigned", sens_csv;
    auto* sens = app.add_subcommand("sensitivity", "Pattern-mixture offsets on imputed values");
    add_analysis(sens);
    sens->add_option("--estimand", ea.estimand, "Analysis estimator")->capture_default_str();
    sens->add_option("--delta-qaly-a1", sens_qaly, "Offsets added to imputed QALYs in arm 1 (list or start:stop:step)");
    sens->add_option("--delta-cost-a1", sens_cost, "Offsets added to imputed costs in arm 1 (list or start:stop:step)");
    sens->add_option("--arm-by", sens_arm_by, "assigned or received")->capture_default_str();
    sens->add_option("--csv", sens_csv, "Also write the table as CSV");

    // cea
    std::string cea_est, cea_grid = "0:50000:1000", cea_out, cea_csv, cea_draws;
    double cea_lambda = 20000;
    auto* cea = app.add_subcommand("cea", "INB, ICER and acceptability curve from an estimate");
    cea->add_option("--estimate", cea_est, "JSON written by estimate")->required();
    cea->add_option("--lambda", cea_lambda, "Willingness to pay")->capture_default_str();
    cea->add_option("--grid", cea_grid, "Lambda grid start:stop:step")->capture_default_str();
    cea->add_option("--draws", cea_draws, "Posterior draws CSV for a Bayesian curve");
    cea->add_option("--out", cea_out, "Output JSON (stdout if omitted)");
    cea->add_option("--csv", cea_csv, "Acceptability curve CSV");

    // mc
    std::string mc_config, mc_dgp, mc_methods, mc_missing, mc_out, mc_log;
    std::optional<int> mc_reps;
    std::optional<std::uint64_t> mc_seed;
    std::optional<unsigned> mc_workers;
    auto* mc = app.add_subcommand("mc", "Monte Carlo evaluation of estimators");
    mc->add_option("--config", mc_config, "Monte Carlo config JSON (methods, checks, ...)");
    mc->add_option("--dgp", mc_dgp, "DGP config JSON");
    mc->add_option("--methods", mc_methods, "Comma-separated methods");
    mc->add_option("--missing", mc_missing, "Comma-separated missing-data methods");
    mc->add_option("--reps", mc_reps, "Replicates");
    mc->add_option("--seed", mc_seed, "Master seed");
    mc->add_option("--workers", mc_workers, "Worker threads (0 = all cores)");
    mc->add_option("--out", mc_out, "Summary JSON")->required();
    mc->add_option("--log", mc_log, "Per-replicate CSV log (default: <out>.records.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            DgpConfig cfg = dgp_from_json(read_json(sim_config));
            if (sim_seed) cfg.seed = *sim_seed;
            const SimulatedTrial trial = generate_trial(cfg);
            const MissingnessResult md = apply_missingness(trial.data, cfg.missingness, derive_seed(cfg.seed, 2));
            write_csv(md.data, sim_out);
            for (const auto& w : md.warnings) std::cerr << "warning: " << w << "\n";
            if (!sim_truth.empty()) {
                Json t = to_json(trial.truth);
                t["config"] = to_json(cfg);
                t["warnings"] = md.warnings;
                write_json(sim_truth, t);
            }
            return 0;
        }
        if (*est) return run_estimate(ea);
        if (*imp) {
            const TrialDataset ds = load(ea.data, ea.schema);
            MiConfig mi;
            mi.m = ea.m;
            mi.donors = ea.k;
            mi.cycles = ea.cycles;
            mi.seed = ea.seed;
            mi.workers = ea.workers;
            const ImputationSet set = mi_impute(ds, mi);
            std::filesystem::create_directories(imp_dir);
            Json files = Json::array();
            for (int j = 0; j < set.m(); ++j) {
                char name[32];
                std::snprintf(name, sizeof name, "imputation_%03d.csv", j + 1);
                write_csv(set.datasets[static_cast<std::size_t>(j)], std::filesystem::path(imp_dir) / name);
                files.push_back(name);
            }
            const char* slots[3] = {"eq5d0", "y1", "y2"};
            Json imputed;
            for (int s = 0; s < 3; ++s) imputed[slots[s]] = set.imputed[static_cast<std::size_t>(s)].sum();
            Json order = Json::array();
            for (int s : set.imputation_order) order.push_back(slots[s]);
            Json manifest{{"source", ea.data}, {"m", mi.m},           {"donors", mi.donors},
                          {"cycles", mi.cycles}, {"seed", mi.seed},   {"imputation_order", order},
                          {"imputed_cells", imputed}, {"pmm_violations", count_pmm_violations(set)}, {"files", files}};
            write_json(std::filesystem::path(imp_dir) / "manifest.json", manifest);
            return 0;
        }
        if (*sens) {
            const TrialDataset ds = load(ea.data, ea.schema);
            const Method method = parse_method(ea.estimand);
            if (method == Method::Bayes) throw ConfigError("sensitivity analysis runs on multiply imputed data; choose a frequentist estimand");
            const auto est_fn = estimator_for(method);
            IvOptions opt;
            opt.covariates = split(ea.covariates);
            MiConfig mi;
            mi.m = ea.m;
            mi.donors = ea.k;
            mi.cycles = ea.cycles;
            mi.seed = ea.seed;
            mi.workers = ea.workers;
            const ImputationSet set = mi_impute(ds, mi);
            const ArmBy arm_by = sens_arm_by == "received" ? ArmBy::Received : ArmBy::Assigned;
            if (sens_arm_by != "received" && sens_arm_by != "assigned") throw ConfigError("--arm-by must be assigned or received");
            Json rows = Json::array();
            std::ostringstream csv;
            csv << "delta_qaly,delta_cost,incremental_cost,incremental_qaly,inb,inb_lower,inb_upper\n";
            for (double dcost : parse_values(sens_cost))
            for (double dq : parse_values(sens_qaly)) {
                const std::vector<Offset> offsets{{2, 1, dq}, {1, 1, dcost}};
                const OffsetResult shifted = pattern_mixture_offset(set, offsets, arm_by);
                const MiAnalysis res =
                    analyze_imputations(shifted.set, [&](const TrialDataset& d) { return est_fn(d, opt); });
                CeaResult c = inb(res.pooled, ea.lambda);
                c.estimand = res.per_imputation.front().estimand;
                rows.push_back({{"delta_qaly", dq}, {"delta_cost", dcost}, {"cea", to_json(c)}, {"warnings", shifted.warnings}});
                csv << format_double(dq) << ',' << format_double(dcost) << ',' << format_double(c.incremental_cost) << ','
                    << format_double(c.incremental_qaly) << ',' << format_double(c.inb) << ','
                    << format_double(c.inb_interval.lower) << ',' << format_double(c.inb_interval.upper) << '\n';
            }
            Json j{{"data", ea.data}, {"estimand", ea.estimand}, {"arm_by", sens_arm_by}, {"lambda", ea.lambda},
                   {"m", mi.m},       {"donors", mi.donors},     {"seed", mi.seed},       {"table", rows}};
            emit(j, ea.out);
            if (!sens_csv.empty()) write_text(sens_csv, csv.str());
            return 0;
        }
        if (*cea) {
            const Json e = read_json(cea_est);
            const Json& c = e.at("cea");
            Eigen::Vector2d theta(c.at("incremental_cost").get<double>(), c.at("incremental_qaly").get<double>());
            Eigen::Matrix2d cov;
            for (int r = 0; r < 2; ++r)
                for (int k = 0; k < 2; ++k) cov(r, k) = c.at("covariance").at(r).at(k).get<double>();
            const std::vector<double> grid = parse_values(cea_grid);
            Json j;
            j["source"] = cea_est;
            j["lambda"] = cea_lambda;
            std::vector<CeacPoint> curve;
            if (!cea_draws.empty()) {
                const PosteriorDraws d = read_draws(cea_draws);
                PosteriorDraws copy = d;
                copy.missing_method = c.value("missing_method", std::string("cca"));
                j["inb"] = to_json(summarize_posterior(copy, cea_lambda));
                curve = ceac(copy, grid);
                j["curve_method"] = "posterior draws";
            } else {
                j["inb"] = to_json(inb(theta, cov, cea_lambda));
                curve = ceac(theta, cov, grid);
                j["curve_method"] = "normal approximation";
            }
            try {
                const IcerResult ic = icer(theta(0), theta(1));
                j["icer"] = {{"ratio", ic.ratio}, {"quadrant", to_string(ic.quadrant)}};
            } catch (const Error& err) {
                j["icer"] = {{"ratio", nullptr}, {"error", err.what()}};
            }
            j["ceac"] = to_json(curve);
            emit(j, cea_out);
            if (!cea_csv.empty()) {
                std::ostringstream ss;
                ss << "lambda,probability\n";
                for (const auto& p : curve) ss << format_double(p.lambda) << ',' << format_double(p.probability) << '\n';
                write_text(cea_csv, ss.str());
            }
            return 0;
        }
        if (*mc) {
            McConfig cfg;
            if (!mc_config.empty()) cfg = mc_config_from_json(read_json(mc_config));
            if (!mc_dgp.empty()) cfg.dgp = dgp_from_json(read_json(mc_dgp));
            if (!mc_methods.empty() || !mc_missing.empty()) {
                std::vector<std::string> methods = split(mc_methods), missing = split(mc_missing);
                if (missing.empty()) missing = {"cca"};
                if (methods.empty()) throw ConfigError("--missing given without --methods");
                cfg.pipelines.clear();
                for (const auto& m : methods)
                    for (const auto& mm : missing) cfg.pipelines.push_back({parse_method(m), parse_missing_method(mm)});
            }
            if (mc_reps) cfg.replicates = *mc_reps;
            if (mc_seed) cfg.seed = *mc_seed;
            if (mc_workers) cfg.workers = *mc_workers;
            const McReport rep = run_mc(cfg);
            write_json(mc_out, to_json(rep));
            write_text(mc_log.empty() ? mc_out + ".records.csv" : mc_log, records_csv(rep.records));
            for (const auto& [p, why] : rep.skipped) std::cerr << "skipped " << p << ": " << why << "\n";
            for (const auto& c : rep.checks)
                std::cerr << (c.passed ? "PASS " : "FAIL ") << c.check.kind << " " << c.check.pipeline << " "
                          << c.check.parameter << ": " << c.detail << "\n";
            return rep.all_checks_passed() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
