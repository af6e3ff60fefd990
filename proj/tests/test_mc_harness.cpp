#include "ivcea/errors.hpp"
#include "ivcea/mc_harness.hpp"
#include "ivcea/report.hpp"

#include <doctest.h>

#include <cmath>

using namespace ivcea;

namespace {

McConfig small_config() {
    McConfig cfg;
    cfg.dgp = confounded_switching();
    cfg.dgp.n = 600;
    cfg.replicates = 40;
    cfg.seed = 5;
    cfg.pipelines = {{Method::Cace3sls, MissingMethod::Cca}, {Method::Pp, MissingMethod::Cca},
                     {Method::Itt, MissingMethod::Cca}};
    return cfg;
}

}  // namespace

TEST_CASE("toy: coverage of the known-variance interval") {
    auto rep = normal_mean_toy(1000, 3);
    const auto& c = rep.cell("normal-mean", "mean");
    CHECK(c.replicates == 1000);
    CHECK(c.coverage >= 0.93);
    CHECK(c.coverage <= 0.97);
    CHECK(std::abs(c.bias) < 3 * c.mc_se);
    CHECK(c.mc_se == doctest::Approx(c.empirical_sd / std::sqrt(1000.0)));
}

TEST_CASE("summary statistics recomputed by hand") {
    std::vector<ReplicateRecord> recs;
    const double est[] = {1.0, 2.0, 4.0};
    for (int i = 0; i < 3; ++i) {
        ReplicateRecord r;
        r.replicate = i;
        r.pipeline = "p";
        r.parameter = "x";
        r.truth = 2.0;
        r.estimate = est[i];
        r.se = 1.0;
        r.lower = est[i] - 1.5;
        r.upper = est[i] + 1.5;
        recs.push_back(r);
    }
    ReplicateRecord f;
    f.replicate = 3;
    f.pipeline = "p";
    f.parameter = "x";
    f.failed = true;
    f.error = "boom";
    recs.push_back(f);
    auto cells = summarize_records(recs);
    REQUIRE(cells.size() == 1);
    const auto& c = cells[0];
    CHECK(c.replicates == 3);
    CHECK(c.failures == 1);
    CHECK(c.degraded);
    CHECK(c.mean_estimate == doctest::Approx(7.0 / 3.0));
    CHECK(c.bias == doctest::Approx(1.0 / 3.0));
    // sd of {1, 2, 4} = sqrt(7/3)
    CHECK(c.empirical_sd == doctest::Approx(std::sqrt(7.0 / 3.0)));
    CHECK(c.mc_se == doctest::Approx(std::sqrt(7.0 / 3.0 / 3.0)));
    CHECK(c.coverage == doctest::Approx(2.0 / 3.0));
    CHECK(c.mean_width == doctest::Approx(3.0));
}

TEST_CASE("checks") {
    McCell c;
    c.pipeline = "p";
    c.parameter = "x";
    c.truth = 10.0;
    c.mean_estimate = 9.0;
    c.bias = -1.0;
    c.mc_se = 0.1;
    c.coverage = 0.95;
    c.replicates = 100;
    std::vector<McCell> cells{c};
    std::vector<Check> checks{{"p", "x", "bias_within", 3.0},
                              {"p", "x", "bias_beyond", 5.0, 0, 1, -1},
                              {"p", "x", "bias_beyond", 5.0, 0, 1, 1},
                              {"p", "x", "coverage_in", 3.0, 0.93, 0.97},
                              {"p", "x", "bias_within", 3.0, 0, 1, 0, 9.0}};
    auto res = evaluate_checks(cells, checks);
    CHECK_FALSE(res[0].passed);
    CHECK(res[1].passed);
    CHECK_FALSE(res[2].passed);
    CHECK(res[3].passed);
    CHECK(res[4].passed);
}

TEST_CASE("reference DGP: 3sls centred, PP biased, ITT at 0.6 x CACE") {
    auto cfg = small_config();
    cfg.replicates = 100;
    cfg.checks = {{"cace-3sls/cca", "cost", "bias_within", 3.0},
                  {"pp/cca", "qaly", "bias_beyond", 5.0, 0, 1, -1},
                  {"itt/cca", "cost", "bias_within", 3.0, 0, 1, 0, 0.6 * 1000.0}};
    auto rep = run_mc(cfg);
    for (const auto& r : rep.checks) CHECK_MESSAGE(r.passed, r.check.pipeline << " " << r.detail);
    CHECK(rep.cell("itt/cca", "cost").truth == doctest::Approx(600.0));
}

TEST_CASE("empty method list gives a valid report with no cells") {
    auto cfg = small_config();
    cfg.pipelines.clear();
    auto rep = run_mc(cfg);
    auto j = to_json(rep);
    CHECK(j["cells"].is_array());
    CHECK(j["cells"].empty());
    CHECK(Json::parse(j.dump()) == j);
}

TEST_CASE("unsupported combinations are skipped with a reason") {
    auto cfg = small_config();
    cfg.pipelines = {{Method::Bayes, MissingMethod::Mi}, {Method::Itt, MissingMethod::Cca}};
    cfg.replicates = 3;
    auto rep = run_mc(cfg);
    REQUIRE(rep.skipped.size() == 1);
    CHECK(rep.skipped[0].first == "bayes/mi");
    CHECK_FALSE(rep.skipped[0].second.empty());
}

TEST_CASE("determinism: same seed gives byte-identical JSON and CSV, any worker count") {
    auto cfg = small_config();
    cfg.replicates = 12;
    auto a = run_mc(cfg);
    auto b = run_mc(cfg);
    cfg.workers = 3;
    auto c = run_mc(cfg);
    CHECK(to_json(a).dump(2) == to_json(b).dump(2));
    CHECK(to_json(a).dump(2) == to_json(c).dump(2));
    CHECK(records_csv(a.records) == records_csv(c.records));
    cfg.seed = 6;
    CHECK(to_json(run_mc(cfg)).dump(2) != to_json(a).dump(2));
}

TEST_CASE("report round trip and recomputation from the log") {
    auto cfg = small_config();
    cfg.replicates = 10;
    cfg.checks = {{"cace-3sls/cca", "cost", "bias_within", 3.0}};
    auto rep = run_mc(cfg);
    auto back = mc_report_from_json(to_json(rep));
    CHECK(to_json(back).dump() == to_json(rep).dump());

    auto parsed = parse_records_csv(records_csv(rep.records));
    REQUIRE(parsed.size() == rep.records.size());
    auto cells = summarize_records(parsed);
    REQUIRE(cells.size() == rep.cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        CHECK(cells[i].bias == rep.cells[i].bias);
        CHECK(cells[i].coverage == rep.cells[i].coverage);
        CHECK(cells[i].mc_se == rep.cells[i].mc_se);
    }
}

TEST_CASE("failing pipelines are counted and flagged") {
    auto cfg = small_config();
    cfg.replicates = 4;
    cfg.pipelines = {{Method::Cace3sls, MissingMethod::Cca}};
    cfg.covariates = {"no-such-covariate"};
    auto bad = run_mc(cfg);
    CHECK(bad.cell("cace-3sls/cca", "cost").failures == 4);
    CHECK(bad.cell("cace-3sls/cca", "cost").degraded);
    CHECK_FALSE(bad.records[0].error.empty());

    auto rep = run_replicates(20, 1, 1, [](int r, Rng&) {
        ReplicateRecord rec;
        rec.replicate = r;
        rec.pipeline = "p";
        rec.parameter = "x";
        if (r % 3 == 0) {
            rec.failed = true;
            rec.error = "synthetic";
            return std::vector<ReplicateRecord>{rec};
        }
        rec.estimate = r;
        rec.lower = r - 1.0;
        rec.upper = r + 1.0;
        return std::vector<ReplicateRecord>{rec};
    });
    REQUIRE(rep.cells.size() == 1);
    CHECK(rep.cells[0].failures == 7);
    CHECK(rep.cells[0].degraded);
}

TEST_CASE("config parsing") {
    auto j = Json::parse(R"({"dgp": {"preset": "mar_cost_on_qaly", "n": 500},
        "methods": ["cace-3sls", "itt"], "missing": ["cca", "ipw"], "replicates": 5, "seed": 9})");
    auto cfg = mc_config_from_json(j);
    CHECK(cfg.pipelines.size() == 4);
    CHECK(cfg.dgp.n == 500);
    CHECK(cfg.dgp.missingness.mechanism == Mechanism::MAR);
    CHECK(cfg.seed == 9);
    CHECK_THROWS_AS(dgp_from_json(Json::parse(R"({"nn": 5})")), ConfigError);
    CHECK_THROWS_AS(parse_method("cace-4sls"), ConfigError);
}
