#include "ivcea/bayes_iv.hpp"
#include "ivcea/cea.hpp"
#include "ivcea/data_model.hpp"
#include "ivcea/errors.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/mc_harness.hpp"
#include "ivcea/missing_data.hpp"
#include "ivcea/report.hpp"
#include "ivcea/simulator.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

namespace py = pybind11;
using namespace ivcea;

namespace {

Eigen::VectorXi mask_of(const Eigen::VectorXd& v) {
    Eigen::VectorXi m(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) m(i) = std::isnan(v(i)) ? 0 : 1;
    return m;
}

TrialDataset from_arrays(const Eigen::VectorXi& z, const Eigen::VectorXi& d, const Eigen::VectorXd& y1,
                         const Eigen::VectorXd& y2, const std::map<std::string, Eigen::VectorXd>& covariates) {
    TrialDataset ds;
    ds.z = z;
    ds.d = d;
    ds.y1 = y1;
    ds.y2 = y2;
    ds.r1 = mask_of(y1);
    ds.r2 = mask_of(y2);
    // eq5d0 first so the baseline utility keeps its conventional position.
    auto add = [&](const std::string& name, const Eigen::VectorXd& v) {
        ds.covariates.push_back({name, v, mask_of(v)});
    };
    if (auto it = covariates.find(kBaselineUtility); it != covariates.end()) add(it->first, it->second);
    for (const auto& [name, v] : covariates)
        if (name != kBaselineUtility) add(name, v);
    ds.validate();
    return ds;
}

py::dict covariate_dict(const TrialDataset& ds) {
    py::dict out;
    for (const auto& c : ds.covariates) out[py::str(c.name)] = c.values;
    return out;
}

IvOptions options(const std::vector<std::string>& covariates, const std::string& covariance,
                  const std::optional<Eigen::VectorXd>& weights, std::vector<double>& storage) {
    IvOptions o;
    o.covariates = covariates;
    if (covariance == "classical")
        o.covariance = CovarianceType::Classical;
    else if (covariance != "robust")
        throw ConfigError("covariance must be 'robust' or 'classical'");
    if (weights) {
        storage.assign(weights->data(), weights->data() + weights->size());
        o.weights = storage;
    }
    return o;
}

template <class Fn>
auto bind_estimator(py::module_& m, const char* name, Fn fn, const char* doc) {
    m.def(
        name,
        [fn](const TrialDataset& ds, const std::vector<std::string>& covariates, const std::string& covariance,
             const std::optional<Eigen::VectorXd>& weights) {
            std::vector<double> storage;
            return fn(ds, options(covariates, covariance, weights, storage));
        },
        py::arg("data"), py::arg("covariates") = std::vector<std::string>{}, py::arg("covariance") = "robust",
        py::arg("weights") = py::none(), doc);
}

py::object json_to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
Json py_to_json(const py::object& o) {
    return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Compliance-adjusted cost-effectiveness estimators";

    auto base = py::register_exception<Error>(m, "IvceaError", PyExc_RuntimeError);
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<SingularError>(m, "SingularError", base.ptr());
    py::register_exception<SeparationError>(m, "SeparationError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<IdentificationError>(m, "IdentificationError", base.ptr());
    py::register_exception<PositivityError>(m, "PositivityError", base.ptr());

    py::class_<TrialDataset>(m, "TrialDataset")
        .def(py::init(&from_arrays), py::arg("z"), py::arg("d"), py::arg("y1"), py::arg("y2"),
             py::arg("covariates") = std::map<std::string, Eigen::VectorXd>{},
             "Missing values are NaN.")
        .def_property_readonly("z", [](const TrialDataset& ds) { return ds.z; })
        .def_property_readonly("d", [](const TrialDataset& ds) { return ds.d; })
        .def_property_readonly("y1", [](const TrialDataset& ds) { return ds.y1; })
        .def_property_readonly("y2", [](const TrialDataset& ds) { return ds.y2; })
        .def_property_readonly("r1", [](const TrialDataset& ds) { return ds.r1; })
        .def_property_readonly("r2", [](const TrialDataset& ds) { return ds.r2; })
        .def_property_readonly("covariates", &covariate_dict)
        .def("__len__", [](const TrialDataset& ds) { return ds.size(); })
        .def("to_csv", [](const TrialDataset& ds) { return to_csv(ds); });

    m.def("parse_csv", [](const std::string& text) { return parse_csv(text); }, py::arg("text"));
    m.def("load_csv", [](const std::string& path) { return load_csv(path); }, py::arg("path"));

    py::class_<CaceEstimate>(m, "CaceEstimate")
        .def_property_readonly("theta", [](const CaceEstimate& e) { return Eigen::VectorXd(e.theta); })
        .def_property_readonly("covariance", [](const CaceEstimate& e) { return Eigen::MatrixXd(e.covariance); })
        .def_property_readonly("se", [](const CaceEstimate& e) { return Eigen::VectorXd(e.covariance.diagonal().cwiseSqrt()); })
        .def_readonly("alpha1", &CaceEstimate::alpha1)
        .def_readonly("first_stage_f", &CaceEstimate::first_stage_f)
        .def_readonly("n_used", &CaceEstimate::n_used)
        .def_readonly("warnings", &CaceEstimate::warnings)
        .def_property_readonly("estimand", [](const CaceEstimate& e) { return to_string(e.estimand); })
        .def("to_dict", [](const CaceEstimate& e) { return json_to_py(to_json(e)); });

    py::class_<CeaResult>(m, "CeaResult")
        .def_readonly("incremental_cost", &CeaResult::incremental_cost)
        .def_readonly("incremental_qaly", &CeaResult::incremental_qaly)
        .def_readonly("lambda_", &CeaResult::lambda)
        .def_readonly("inb", &CeaResult::inb)
        .def_readonly("inb_se", &CeaResult::inb_se)
        .def_property_readonly("inb_interval", [](const CeaResult& r) { return std::pair{r.inb_interval.lower, r.inb_interval.upper}; })
        .def_property_readonly("cost_interval", [](const CeaResult& r) { return std::pair{r.cost_interval.lower, r.cost_interval.upper}; })
        .def_property_readonly("qaly_interval", [](const CeaResult& r) { return std::pair{r.qaly_interval.lower, r.qaly_interval.upper}; })
        .def_readonly("dof", &CeaResult::dof)
        .def("to_dict", [](const CeaResult& r) { return json_to_py(to_json(r)); });

    py::class_<PooledEstimate>(m, "PooledEstimate")
        .def_readonly("estimate", &PooledEstimate::estimate)
        .def_readonly("within", &PooledEstimate::within)
        .def_readonly("between", &PooledEstimate::between)
        .def_readonly("total", &PooledEstimate::total)
        .def_readonly("dof", &PooledEstimate::dof)
        .def_readonly("m", &PooledEstimate::m);

    py::class_<PosteriorDraws>(m, "PosteriorDraws")
        .def_readonly("names", &PosteriorDraws::names)
        .def_readonly("draws", &PosteriorDraws::draws)
        .def_readonly("rhat", &PosteriorDraws::rhat)
        .def_readonly("ess", &PosteriorDraws::ess)
        .def_readonly("acceptance", &PosteriorDraws::acceptance)
        .def_readonly("chains", &PosteriorDraws::chains)
        .def("column", &PosteriorDraws::column, py::arg("name"))
        .def("to_dict", [](const PosteriorDraws& d) { return json_to_py(to_json(d)); });

    m.def(
        "simulate",
        [](const py::object& config) {
            const DgpConfig cfg = dgp_from_json(config.is_none() ? Json::object() : py_to_json(config));
            const SimulatedTrial trial = generate_trial(cfg);
            MissingnessResult md = apply_missingness(trial.data, cfg.missingness, derive_seed(cfg.seed, 2));
            return py::make_tuple(md.data, json_to_py(to_json(trial.truth)));
        },
        py::arg("config") = py::none(),
        "Generate a trial from a DGP config dict; returns (dataset, truth dict).");

    m.def("wald_cace", &wald_cace, py::arg("z"), py::arg("d"), py::arg("y"));
    bind_estimator(m, "three_sls", three_sls, "Three-stage least squares CACE for (cost, QALY).");
    bind_estimator(m, "tsls_pair", tsls_pair, "Two-stage least squares for both outcomes with joint covariance.");
    bind_estimator(m, "itt_sur", itt_sur, "Intention-to-treat SUR.");
    bind_estimator(m, "pp_sur", pp_sur, "Per-protocol SUR.");
    bind_estimator(m, "ipw_adherence", ipw_adherence, "Inverse probability of adherence weighting.");

    m.def("inb", py::overload_cast<const CaceEstimate&, double>(&inb), py::arg("estimate"), py::arg("lam"));
    m.def("inb_pooled", py::overload_cast<const PooledEstimate&, double>(&inb), py::arg("pooled"), py::arg("lam"));
    m.def(
        "inb_from",
        [](const Eigen::Vector2d& theta, const Eigen::Matrix2d& cov, double lam) { return inb(theta, cov, lam); },
        py::arg("theta"), py::arg("covariance"), py::arg("lam"));
    m.def(
        "icer",
        [](double cost, double qaly) {
            const IcerResult r = icer(cost, qaly);
            return py::make_tuple(r.ratio, to_string(r.quadrant));
        },
        py::arg("incremental_cost"), py::arg("incremental_qaly"));
    m.def(
        "ceac",
        [](const Eigen::Vector2d& theta, const Eigen::Matrix2d& cov, const std::vector<double>& grid) {
            std::vector<double> p;
            for (const auto& pt : ceac(theta, cov, grid)) p.push_back(pt.probability);
            return p;
        },
        py::arg("theta"), py::arg("covariance"), py::arg("grid"));

    m.def(
        "rubin_pool",
        [](const std::vector<Eigen::VectorXd>& est, const std::vector<Eigen::MatrixXd>& cov) {
            return rubin_pool(est, cov);
        },
        py::arg("estimates"), py::arg("covariances"));

    m.def(
        "mi_impute",
        [](const TrialDataset& ds, int m_, int donors, int cycles, std::uint64_t seed) {
            MiConfig c;
            c.m = m_;
            c.donors = donors;
            c.cycles = cycles;
            c.seed = seed;
            const ImputationSet set = mi_impute(ds, c);
            return py::make_tuple(set.datasets, count_pmm_violations(set));
        },
        py::arg("data"), py::arg("m") = 50, py::arg("donors") = 5, py::arg("cycles") = 10, py::arg("seed") = 1,
        "Returns (completed datasets, number of PMM donor violations).");

    m.def(
        "mi_analysis",
        [](const TrialDataset& ds, const std::string& method, const std::vector<std::string>& covariates, int m_,
           int donors, std::uint64_t seed, double lam) {
            McConfig cfg;
            cfg.covariates = covariates;
            cfg.mi.m = m_;
            cfg.mi.donors = donors;
            cfg.lambda = lam;
            return run_pipeline(ds, {parse_method(method), MissingMethod::Mi}, cfg, seed).cea;
        },
        py::arg("data"), py::arg("method") = "cace-3sls", py::arg("covariates") = std::vector<std::string>{"eq5d0"},
        py::arg("m") = 50, py::arg("donors") = 5, py::arg("seed") = 1, py::arg("lam") = 20000.0);

    m.def(
        "fit_bayes_iv",
        [](const TrialDataset& ds, const std::vector<std::string>& covariates, int chains, int iterations, int burnin,
           std::uint64_t seed, bool model_missing) {
            BayesIvConfig c;
            c.covariates = covariates;
            c.chains = chains;
            c.iterations = iterations;
            c.burnin = burnin;
            c.seed = seed;
            c.missing = model_missing ? BayesMissing::Model : BayesMissing::Cca;
            c.fail_on_nonconvergence = false;
            py::gil_scoped_release release;
            return fit_bayes_iv(ds, c);
        },
        py::arg("data"), py::arg("covariates") = std::vector<std::string>{}, py::arg("chains") = 4,
        py::arg("iterations") = 10000, py::arg("burnin") = 5000, py::arg("seed") = 1, py::arg("model_missing") = false);
    m.def("summarize_posterior", &summarize_posterior, py::arg("draws"), py::arg("lam"));

    m.def(
        "run_mc",
        [](const py::object& config) {
            const McConfig cfg = mc_config_from_json(py_to_json(config));
            McReport rep;
            {
                py::gil_scoped_release release;
                rep = run_mc(cfg);
            }
            return json_to_py(to_json(rep));
        },
        py::arg("config"), "Monte Carlo run from a config dict; returns the summary report dict.");
}
