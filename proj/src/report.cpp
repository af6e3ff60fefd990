#include "ivcea/report.hpp"

#include "ivcea/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ivcea {

namespace {

Json matrix_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Json interval_json(const Interval& i) { return Json::array({i.lower, i.upper}); }

double number(const Json& j) {
    // NaN and infinities are written as null.
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

template <class T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

Json observation_model_json(const ObservationModel& m) {
    return Json{{"enabled", m.enabled}, {"intercept", m.intercept}, {"eq5d0", m.eq5d0}, {"age", m.age},
                {"z", m.z},             {"d", m.d},                 {"y1", m.y1},       {"y2", m.y2}};
}

ObservationModel observation_model_from_json(const Json& j, ObservationModel m) {
    read(j, "enabled", m.enabled);
    read(j, "intercept", m.intercept);
    read(j, "eq5d0", m.eq5d0);
    read(j, "age", m.age);
    read(j, "z", m.z);
    read(j, "d", m.d);
    read(j, "y1", m.y1);
    read(j, "y2", m.y2);
    return m;
}

const char* kSlotKeys[3] = {"eq5d0", "y1", "y2"};

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

Json to_json(const CaceEstimate& est) {
    Json j;
    j["estimand"] = to_string(est.estimand);
    j["n_used"] = est.n_used;
    j["theta"] = {{"cost", est.theta(0)}, {"qaly", est.theta(1)}};
    j["se"] = {{"cost", est.se(0)}, {"qaly", est.se(1)}};
    j["covariance"] = matrix_json(est.covariance);
    j["alpha1"] = est.alpha1;
    j["first_stage_f"] = est.first_stage_f;
    Json eqs = Json::array();
    const char* outcomes[2] = {"cost", "qaly"};
    for (std::size_t e = 0; e < est.system.blocks.size() && e < 2; ++e) {
        Json coefs = Json::array();
        for (Eigen::Index k = 0; k < est.system.blocks[e].size(); ++k) {
            const std::string name = k < static_cast<Eigen::Index>(est.coefficient_names.size())
                                         ? est.coefficient_names[static_cast<std::size_t>(k)]
                                         : "b" + std::to_string(k);
            coefs.push_back({{"name", name},
                             {"estimate", est.system.blocks[e](k)},
                             {"se", std::sqrt(est.system.cov(e, k, e, k))}});
        }
        eqs.push_back({{"outcome", outcomes[e]}, {"coefficients", coefs}});
    }
    j["equations"] = eqs;
    j["residual_covariance"] = matrix_json(est.system.residual_cov);
    j["warnings"] = est.warnings;
    return j;
}

Json to_json(const CeaResult& r) {
    Json j;
    j["estimand"] = to_string(r.estimand);
    j["missing_method"] = r.missing_method;
    j["interval_kind"] = to_string(r.kind);
    j["lambda"] = r.lambda;
    j["incremental_cost"] = r.incremental_cost;
    j["incremental_qaly"] = r.incremental_qaly;
    j["covariance"] = matrix_json(r.covariance);
    j["cost_interval"] = interval_json(r.cost_interval);
    j["qaly_interval"] = interval_json(r.qaly_interval);
    j["inb"] = r.inb;
    j["inb_se"] = r.inb_se;
    j["inb_interval"] = interval_json(r.inb_interval);
    j["dof"] = r.dof;
    return j;
}

Json to_json(const std::vector<CeacPoint>& curve) {
    Json out = Json::array();
    for (const auto& p : curve) out.push_back({{"lambda", p.lambda}, {"probability", p.probability}});
    return out;
}

Json to_json(const PooledEstimate& p) {
    Json j;
    j["m"] = p.m;
    j["estimate"] = vector_json(p.estimate);
    j["within"] = matrix_json(p.within);
    j["between"] = matrix_json(p.between);
    j["total"] = matrix_json(p.total);
    j["dof"] = vector_json(p.dof);
    j["dof_method"] = p.dof_method;
    return j;
}

Json to_json(const FittedPoms& poms) {
    Json out = Json::array();
    for (int pos = 0; pos < 3; ++pos) {
        const int slot = poms.order[static_cast<std::size_t>(pos)];
        const auto& m = poms.models[static_cast<std::size_t>(slot)];
        Json j;
        j["indicator"] = kSlotKeys[slot];
        j["n_at_risk"] = m.n_at_risk;
        j["always_observed"] = m.always_observed;
        j["selected"] = m.selected;
        j["removed"] = m.removed;
        if (!m.always_observed) j["coefficients"] = vector_json(m.fit.coefficients);
        out.push_back(j);
    }
    return out;
}

Json to_json(const WeightVector& w) {
    Json j;
    j["n_complete"] = w.n_complete;
    j["stabilized"] = w.stabilized;
    j["truncation_quantile"] = w.truncation_quantile ? Json(*w.truncation_quantile) : Json(nullptr);
    j["truncated_at"] = w.truncated_at;
    j["n_truncated"] = w.n_truncated;
    j["max"] = w.max;
    j["mean"] = w.mean;
    j["warnings"] = w.warnings;
    return j;
}

Json to_json(const PosteriorDraws& d) {
    Json j;
    j["missing_method"] = d.missing_method;
    j["n_used"] = d.n_used;
    j["n_augmented"] = d.n_augmented;
    Json params = Json::array();
    for (std::size_t k = 0; k < d.names.size(); ++k) {
        const Eigen::VectorXd col = d.draws.col(static_cast<Eigen::Index>(k));
        std::vector<double> v(col.data(), col.data() + col.size());
        params.push_back({{"name", d.names[k]},
                          {"median", quantile(v, 0.5)},
                          {"mean", col.mean()},
                          {"sd", std::sqrt((col.array() - col.mean()).square().sum() / std::max<double>(1.0, static_cast<double>(col.size()) - 1.0))},
                          {"q025", quantile(v, 0.025)},
                          {"q975", quantile(v, 0.975)},
                          {"rhat", d.rhat(static_cast<Eigen::Index>(k))},
                          {"ess", d.ess(static_cast<Eigen::Index>(k))}});
    }
    j["parameters"] = params;
    Json diag;
    diag["chains"] = d.chains;
    diag["iterations"] = d.config.iterations;
    diag["burnin"] = d.config.burnin;
    diag["thin"] = d.config.thin;
    diag["draws_per_chain"] = d.kept_per_chain;
    diag["seed"] = d.config.seed;
    diag["max_rhat"] = d.max_rhat();
    diag["b10_acceptance"] = vector_json(d.acceptance);
    diag["warnings"] = d.warnings;
    j["diagnostics"] = diag;
    Json prior;
    prior["coefficient_sd"] = d.config.prior_sd;
    prior["scale"] = "standardised outcomes and covariates";
    prior["wishart_df"] = d.config.wishart_df;
    prior["wishart_scale"] = matrix_json(d.config.wishart_scale);
    j["prior"] = prior;
    return j;
}

Json to_json(const DgpConfig& c) {
    Json j;
    j["n"] = c.n;
    j["p_complier"] = c.p_complier;
    j["p_never_taker"] = c.p_never_taker;
    j["p_always_taker"] = c.p_always_taker;
    j["stratum_loading"] = c.stratum_loading;
    j["eq5d0_mean"] = c.eq5d0_mean;
    j["eq5d0_sd"] = c.eq5d0_sd;
    j["age_mean"] = c.age_mean;
    j["age_sd"] = c.age_sd;
    j["cost_base"] = c.cost_base;
    j["qaly_base"] = c.qaly_base;
    j["cost_u"] = c.cost_u;
    j["qaly_u"] = c.qaly_u;
    j["cost_eq5d0"] = c.cost_eq5d0;
    j["qaly_eq5d0"] = c.qaly_eq5d0;
    j["cost_age"] = c.cost_age;
    j["qaly_age"] = c.qaly_age;
    j["cost_sd"] = c.cost_sd;
    j["qaly_sd"] = c.qaly_sd;
    j["rho"] = c.rho;
    j["effect_cost"] = c.effect_cost;
    j["effect_qaly"] = c.effect_qaly;
    j["seed"] = c.seed;
    Json m;
    m["mechanism"] = to_string(c.missingness.mechanism);
    m["order"] = Json::array();
    for (int s : c.missingness.order) m["order"].push_back(kSlotKeys[s]);
    for (int s = 0; s < 3; ++s) m[kSlotKeys[s]] = observation_model_json(c.missingness.models[static_cast<std::size_t>(s)]);
    j["missingness"] = m;
    return j;
}

DgpConfig dgp_from_json(const Json& j) {
    const std::string preset = j.value("preset", std::string("confounded_switching"));
    DgpConfig c;
    if (preset == "confounded_switching")
        c = confounded_switching();
    else if (preset == "mar_cost_on_qaly")
        c = mar_cost_on_qaly();
    else
        throw ConfigError("unknown DGP preset '" + preset + "'");
    static const std::vector<std::string> known{
        "preset",    "n",         "p_complier", "p_never_taker", "p_always_taker", "stratum_loading",
        "eq5d0_mean", "eq5d0_sd", "age_mean",   "age_sd",        "cost_base",      "qaly_base",
        "cost_u",    "qaly_u",    "cost_eq5d0", "qaly_eq5d0",    "cost_age",       "qaly_age",
        "cost_sd",   "qaly_sd",   "rho",        "effect_cost",   "effect_qaly",    "seed",
        "missingness"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown DGP key '" + k + "'");
    try {
        read(j, "n", c.n);
        read(j, "p_complier", c.p_complier);
        read(j, "p_never_taker", c.p_never_taker);
        read(j, "p_always_taker", c.p_always_taker);
        read(j, "stratum_loading", c.stratum_loading);
        read(j, "eq5d0_mean", c.eq5d0_mean);
        read(j, "eq5d0_sd", c.eq5d0_sd);
        read(j, "age_mean", c.age_mean);
        read(j, "age_sd", c.age_sd);
        read(j, "cost_base", c.cost_base);
        read(j, "qaly_base", c.qaly_base);
        read(j, "cost_u", c.cost_u);
        read(j, "qaly_u", c.qaly_u);
        read(j, "cost_eq5d0", c.cost_eq5d0);
        read(j, "qaly_eq5d0", c.qaly_eq5d0);
        read(j, "cost_age", c.cost_age);
        read(j, "qaly_age", c.qaly_age);
        read(j, "cost_sd", c.cost_sd);
        read(j, "qaly_sd", c.qaly_sd);
        read(j, "rho", c.rho);
        read(j, "effect_cost", c.effect_cost);
        read(j, "effect_qaly", c.effect_qaly);
        read(j, "seed", c.seed);
        if (j.contains("missingness")) {
            const Json& m = j.at("missingness");
            if (m.contains("mcar_rate")) c.missingness = MissingnessConfig::mcar(m.at("mcar_rate").get<double>());
            if (m.contains("mechanism")) c.missingness.mechanism = parse_mechanism(m.at("mechanism").get<std::string>());
            if (m.contains("order")) {
                const auto names = m.at("order").get<std::vector<std::string>>();
                if (names.size() != 3) throw ConfigError("missingness order must list eq5d0, y1 and y2");
                for (std::size_t k = 0; k < 3; ++k) {
                    auto it = std::find(std::begin(kSlotKeys), std::end(kSlotKeys), names[k]);
                    if (it == std::end(kSlotKeys)) throw ConfigError("unknown slot '" + names[k] + "' in missingness order");
                    c.missingness.order[k] = static_cast<int>(it - std::begin(kSlotKeys));
                }
            }
            for (int s = 0; s < 3; ++s)
                if (m.contains(kSlotKeys[s]))
                    c.missingness.models[static_cast<std::size_t>(s)] =
                        observation_model_from_json(m.at(kSlotKeys[s]), c.missingness.models[static_cast<std::size_t>(s)]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed DGP config: ") + e.what());
    }
    c.validate();
    return c;
}

Json to_json(const DgpTruth& t) {
    Json j;
    j["cace"] = {{"cost", t.cace(0)}, {"qaly", t.cace(1)}};
    j["itt"] = {{"cost", t.itt(0)}, {"qaly", t.itt(1)}};
    j["compliance_difference"] = t.compliance_difference;
    j["sample_cace"] = {{"cost", t.sample_cace(0)}, {"qaly", t.sample_cace(1)}};
    std::array<Eigen::Index, 3> counts{};
    for (auto s : t.stratum) ++counts[static_cast<std::size_t>(s)];
    j["strata"] = {{"complier", counts[0]}, {"never_taker", counts[1]}, {"always_taker", counts[2]}};
    return j;
}

Json to_json(const McCell& c) {
    Json j;
    j["pipeline"] = c.pipeline;
    j["parameter"] = c.parameter;
    j["truth"] = c.truth;
    j["mean_estimate"] = c.mean_estimate;
    j["bias"] = c.bias;
    j["mc_se"] = c.mc_se;
    j["empirical_sd"] = c.empirical_sd;
    j["mean_se"] = c.mean_se;
    j["coverage"] = c.coverage;
    j["mean_width"] = c.mean_width;
    j["replicates"] = c.replicates;
    j["failures"] = c.failures;
    j["degraded"] = c.degraded;
    j["pmm_violations"] = c.pmm_violations;
    j["max_rhat"] = c.max_rhat;
    return j;
}

Json to_json(const McReport& rep) {
    Json j;
    j["replicates"] = rep.replicates;
    j["seed"] = rep.seed;
    j["lambda"] = rep.lambda;
    j["cells"] = Json::array();
    for (const auto& c : rep.cells) j["cells"].push_back(to_json(c));
    j["skipped"] = Json::array();
    for (const auto& [p, why] : rep.skipped) j["skipped"].push_back({{"pipeline", p}, {"reason", why}});
    j["checks"] = Json::array();
    for (const auto& c : rep.checks) {
        Json cj;
        cj["pipeline"] = c.check.pipeline;
        cj["parameter"] = c.check.parameter;
        cj["kind"] = c.check.kind;
        cj["passed"] = c.passed;
        cj["value"] = c.value;
        cj["detail"] = c.detail;
        j["checks"].push_back(cj);
    }
    j["all_checks_passed"] = rep.all_checks_passed();
    return j;
}

Json to_json(const ReplicateRecord& r) {
    return Json{{"replicate", r.replicate}, {"pipeline", r.pipeline}, {"parameter", r.parameter},
                {"truth", r.truth},         {"estimate", r.estimate}, {"se", r.se},
                {"lower", r.lower},         {"upper", r.upper},       {"failed", r.failed},
                {"error", r.error},         {"pmm_violations", r.pmm_violations}, {"max_rhat", r.max_rhat}};
}

McConfig mc_config_from_json(const Json& j) {
    McConfig c;
    try {
        if (j.contains("dgp")) c.dgp = dgp_from_json(j.at("dgp"));
        std::vector<std::string> methods = j.value("methods", std::vector<std::string>{});
        std::vector<std::string> missing = j.value("missing", std::vector<std::string>{"cca"});
        for (const auto& m : methods)
            for (const auto& mm : missing) c.pipelines.push_back({parse_method(m), parse_missing_method(mm)});
        read(j, "replicates", c.replicates);
        read(j, "seed", c.seed);
        read(j, "workers", c.workers);
        read(j, "lambda", c.lambda);
        read(j, "covariates", c.covariates);
        if (j.contains("mi")) {
            const Json& m = j.at("mi");
            read(m, "m", c.mi.m);
            read(m, "donors", c.mi.donors);
            read(m, "cycles", c.mi.cycles);
        }
        if (j.contains("ipw")) {
            const Json& w = j.at("ipw");
            read(w, "stabilize", c.weights.stabilize);
            if (w.contains("truncation_quantile")) c.weights.truncation_quantile = w.at("truncation_quantile").get<double>();
        }
        if (j.contains("bayes")) {
            const Json& b = j.at("bayes");
            read(b, "chains", c.bayes.chains);
            read(b, "iterations", c.bayes.iterations);
            read(b, "burnin", c.bayes.burnin);
            read(b, "thin", c.bayes.thin);
            read(b, "prior_sd", c.bayes.prior_sd);
            read(b, "wishart_df", c.bayes.wishart_df);
        }
        if (j.contains("checks")) {
            for (const auto& cj : j.at("checks")) {
                Check ck;
                ck.pipeline = cj.at("pipeline").get<std::string>();
                ck.parameter = cj.at("parameter").get<std::string>();
                ck.kind = cj.at("kind").get<std::string>();
                read(cj, "threshold", ck.threshold);
                read(cj, "lower", ck.lower);
                read(cj, "upper", ck.upper);
                read(cj, "direction", ck.direction);
                if (cj.contains("truth_override")) ck.truth_override = cj.at("truth_override").get<double>();
                c.checks.push_back(ck);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed Monte Carlo config: ") + e.what());
    }
    return c;
}

McReport mc_report_from_json(const Json& j) {
    McReport rep;
    rep.replicates = j.at("replicates").get<int>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.lambda = j.at("lambda").get<double>();
    for (const auto& cj : j.at("cells")) {
        McCell c;
        c.pipeline = cj.at("pipeline").get<std::string>();
        c.parameter = cj.at("parameter").get<std::string>();
        c.truth = number(cj.at("truth"));
        c.mean_estimate = number(cj.at("mean_estimate"));
        c.bias = number(cj.at("bias"));
        c.mc_se = number(cj.at("mc_se"));
        c.empirical_sd = number(cj.at("empirical_sd"));
        c.mean_se = number(cj.at("mean_se"));
        c.coverage = number(cj.at("coverage"));
        c.mean_width = number(cj.at("mean_width"));
        c.replicates = cj.at("replicates").get<int>();
        c.failures = cj.at("failures").get<int>();
        c.degraded = cj.at("degraded").get<bool>();
        c.pmm_violations = cj.at("pmm_violations").get<std::int64_t>();
        c.max_rhat = number(cj.at("max_rhat"));
        rep.cells.push_back(c);
    }
    for (const auto& sj : j.at("skipped"))
        rep.skipped.emplace_back(sj.at("pipeline").get<std::string>(), sj.at("reason").get<std::string>());
    for (const auto& cj : j.at("checks")) {
        CheckResult r;
        r.check.pipeline = cj.at("pipeline").get<std::string>();
        r.check.parameter = cj.at("parameter").get<std::string>();
        r.check.kind = cj.at("kind").get<std::string>();
        r.passed = cj.at("passed").get<bool>();
        r.value = number(cj.at("value"));
        r.detail = cj.at("detail").get<std::string>();
        rep.checks.push_back(r);
    }
    return rep;
}

std::string records_csv(const std::vector<ReplicateRecord>& records) {
    std::ostringstream ss;
    ss << "replicate,pipeline,parameter,truth,estimate,se,lower,upper,failed,pmm_violations,max_rhat,error\n";
    for (const auto& r : records) {
        std::string err = r.error;
        for (auto& ch : err)
            if (ch == '"' || ch == '\n' || ch == ',') ch = ' ';
        ss << r.replicate << ',' << r.pipeline << ',' << r.parameter << ',' << format_double(r.truth) << ','
           << format_double(r.estimate) << ',' << format_double(r.se) << ',' << format_double(r.lower) << ','
           << format_double(r.upper) << ',' << (r.failed ? 1 : 0) << ',' << r.pmm_violations << ','
           << format_double(r.max_rhat) << ',' << err << '\n';
    }
    return ss.str();
}

std::vector<ReplicateRecord> parse_records_csv(const std::string& text) {
    std::vector<ReplicateRecord> out;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    auto to_d = [](const std::string& s) {
        double v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError("bad number '" + s + "' in record log");
        return v;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() == 11) f.emplace_back();
        if (f.size() != 12) throw ValidationError("record log row has " + std::to_string(f.size()) + " fields");
        ReplicateRecord r;
        r.replicate = std::stoi(f[0]);
        r.pipeline = f[1];
        r.parameter = f[2];
        r.truth = to_d(f[3]);
        r.estimate = to_d(f[4]);
        r.se = to_d(f[5]);
        r.lower = to_d(f[6]);
        r.upper = to_d(f[7]);
        r.failed = f[8] == "1";
        r.pmm_violations = std::stoll(f[9]);
        r.max_rhat = to_d(f[10]);
        r.error = f[11];
        out.push_back(r);
    }
    return out;
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace ivcea
