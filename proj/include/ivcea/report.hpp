#pragma once

#include "ivcea/bayes_iv.hpp"
#include "ivcea/cea.hpp"
#include "ivcea/iv.hpp"
#include "ivcea/mc_harness.hpp"
#include "ivcea/missing_data.hpp"
#include "ivcea/simulator.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace ivcea {

using Json = nlohmann::ordered_json;

Json to_json(const CaceEstimate& est);
Json to_json(const CeaResult& r);
Json to_json(const std::vector<CeacPoint>& curve);
Json to_json(const PooledEstimate& p);
Json to_json(const FittedPoms& poms);
Json to_json(const WeightVector& w);
/// Summary of every column plus the diagnostics block; draws themselves are not included.
Json to_json(const PosteriorDraws& d);
Json to_json(const DgpConfig& cfg);
Json to_json(const DgpTruth& truth);
Json to_json(const McCell& c);
Json to_json(const McReport& rep);
Json to_json(const ReplicateRecord& r);

/// Reads a DGP config. Keys not present keep the value of the preset named
/// by "preset" ("confounded_switching", the default, or "mar_cost_on_qaly").
DgpConfig dgp_from_json(const Json& j);

/// Monte Carlo config: {"dgp": {...}, "methods": [...], "missing": [...],
/// "replicates", "seed", "workers", "lambda", "covariates", "mi": {...},
/// "bayes": {...}, "checks": [...]}. Every method is crossed with every
/// missing-data method.
McConfig mc_config_from_json(const Json& j);

/// Inverse of to_json(McReport) for the summary cells and checks.
McReport mc_report_from_json(const Json& j);

/// Per-replicate log as CSV, one row per record.
std::string records_csv(const std::vector<ReplicateRecord>& records);
std::vector<ReplicateRecord> parse_records_csv(const std::string& text);

Json read_json(const std::filesystem::path& path);
/// Pretty-printed with two-space indent and a trailing newline. Throws Error when unwritable.
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace ivcea
