#pragma once

#include "ivcea/bayes_iv.hpp"
#include "ivcea/missing_data.hpp"
#include "ivcea/rng.hpp"
#include "ivcea/simulator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ivcea {

enum class Method { Itt, Pp, Cace2sls, Cace3sls, Bayes, IpwAte };
enum class MissingMethod { Cca, Mi, Ipw, Bayes };

std::string to_string(Method m);
std::string to_string(MissingMethod m);
Method parse_method(const std::string& s);  // itt, pp, cace-2sls, cace-3sls, bayes, ipw-ate
MissingMethod parse_missing_method(const std::string& s);  // cca, mi, ipw, bayes

struct Pipeline {
    Method method = Method::Cace3sls;
    MissingMethod missing = MissingMethod::Cca;

    std::string label() const { return to_string(method) + "/" + to_string(missing); }
};

/// Empty when the combination is runnable, otherwise the reason it is not.
std::string unsupported_reason(const Pipeline& p);

/// One acceptance check over a summary cell.
struct Check {
    std::string pipeline;   // label, e.g. "cace-3sls/cca"
    std::string parameter;  // cost, qaly or inb
    /// bias_within: |bias| <= threshold * MC SE
    /// bias_beyond: |bias| > threshold * MC SE
    /// coverage_in: lower <= coverage <= upper
    /// pmm_exact:   no imputed cell outside its donor pool
    /// rhat_below:  every retained replicate had max split R-hat < threshold
    /// not_degraded: failures <= 10% of replicates
    std::string kind;
    double threshold = 3.0;
    double lower = 0.0;
    double upper = 1.0;
    /// bias_beyond only: required sign of the bias (-1, +1) or 0 for either.
    int direction = 0;
    /// Compare the mean estimate against this value instead of the cell truth.
    std::optional<double> truth_override{};
};

struct CheckResult {
    Check check;
    bool passed = false;
    double value = 0.0;
    std::string detail;
};

struct McConfig {
    DgpConfig dgp;
    std::vector<Pipeline> pipelines;
    int replicates = 1000;
    std::uint64_t seed = 7;
    unsigned workers = 1;
    double lambda = 20000.0;
    std::vector<std::string> covariates{"eq5d0"};
    MiConfig mi{};
    WeightOptions weights{};
    BayesIvConfig bayes{};
    std::vector<Check> checks;
};

/// One (replicate, pipeline, parameter) outcome.
struct ReplicateRecord {
    int replicate = 0;
    std::string pipeline;
    std::string parameter;
    double truth = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool failed = false;
    std::string error;
    std::int64_t pmm_violations = 0;
    double max_rhat = 0.0;
};

struct McCell {
    std::string pipeline;
    std::string parameter;
    double truth = 0.0;  // mean truth over successful replicates
    double mean_estimate = 0.0;
    double bias = 0.0;
    double mc_se = 0.0;  // empirical SD / sqrt(replicates)
    double empirical_sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    double mean_width = 0.0;
    int replicates = 0;  // successful
    int failures = 0;
    bool degraded = false;  // failures > 10% of attempts
    std::int64_t pmm_violations = 0;
    double max_rhat = 0.0;
};

struct McReport {
    int replicates = 0;
    std::uint64_t seed = 0;
    double lambda = 0.0;
    std::vector<McCell> cells;
    std::vector<std::pair<std::string, std::string>> skipped;  // pipeline, reason
    std::vector<CheckResult> checks;
    std::vector<ReplicateRecord> records;

    bool all_checks_passed() const;
    const McCell& cell(const std::string& pipeline, const std::string& parameter) const;
};

/// Aggregates per-replicate records into cells, in first-appearance order.
std::vector<McCell> summarize_records(const std::vector<ReplicateRecord>& records);

std::vector<CheckResult> evaluate_checks(const std::vector<McCell>& cells, const std::vector<Check>& checks);

/// Runs `body(replicate, rng)` for every replicate on up to `workers`
/// threads and aggregates the returned records. Each replicate gets its own
/// substream of `seed`, so results do not depend on scheduling.
McReport run_replicates(int replicates, std::uint64_t seed, unsigned workers,
                        const std::function<std::vector<ReplicateRecord>(int, Rng&)>& body);

/// Generates data per replicate, applies missingness, runs every requested
/// pipeline and records cost, QALY and INB estimates against the truth.
McReport run_mc(const McConfig& cfg);

/// Mean of n draws from N(mu, 1) with its known-variance 95% z-interval:
/// the harness's own calibration problem.
McReport normal_mean_toy(int replicates, std::uint64_t seed, int n = 50, double mu = 0.0, unsigned workers = 1);

/// Runs one pipeline on one dataset and returns (cost, QALY, INB) results at lambda.
struct PipelineResult {
    CeaResult cea;
    std::int64_t pmm_violations = 0;
    double max_rhat = 0.0;
    std::vector<std::string> warnings;
};
PipelineResult run_pipeline(const TrialDataset& ds, const Pipeline& p, const McConfig& cfg, std::uint64_t seed);

}  // namespace ivcea
