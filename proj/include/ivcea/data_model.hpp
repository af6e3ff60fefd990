#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ivcea {

/// Logical name of the baseline utility covariate whose indicator is r0.
inline constexpr const char* kBaselineUtility = "eq5d0";

/// A named, possibly partially observed baseline covariate.
struct Covariate {
    std::string name;
    Eigen::VectorXd values;    // NaN where missing
    Eigen::VectorXi observed;  // 1 = observed
};

/// Per-participant trial records.
///
/// Assignment `z` and receipt `d` are always observed and binary. Missing
/// outcome and covariate values are stored as NaN with indicator 0. The
/// baseline utility covariate (`eq5d0`) is one of the named covariates; its
/// indicator is exposed as r0().
struct TrialDataset {
    Eigen::VectorXi z;
    Eigen::VectorXi d;
    Eigen::VectorXd y1;  // cost
    Eigen::VectorXd y2;  // QALY
    Eigen::VectorXi r1;
    Eigen::VectorXi r2;
    std::vector<Covariate> covariates;

    Eigen::Index size() const { return z.size(); }

    bool has_covariate(const std::string& name) const;
    const Covariate& covariate(const std::string& name) const;
    Covariate& covariate(const std::string& name);
    std::vector<std::string> covariate_names() const;

    /// Indicator for eq5d0; all ones when the dataset has no eq5d0 column.
    Eigen::VectorXi r0() const;

    /// Dataset restricted to the given rows, in the given order.
    TrialDataset subset(const std::vector<Eigen::Index>& rows) const;

    /// Throws ValidationError when an invariant is broken.
    void validate() const;
};

/// Column mapping from logical names {z, d, y1, y2, eq5d0, ...} to CSV headers.
/// Logical names other than z, d, y1, y2 are covariates, kept in the order given.
struct CsvSchema {
    std::vector<std::pair<std::string, std::string>> columns;
    /// Cell values treated as missing.
    std::vector<std::string> missing_tokens{"", "NA"};
    /// When true, CSV columns not mentioned in `columns` are loaded as
    /// covariates under their own header name.
    bool include_unmapped = false;

    /// Identity mapping for z, d, y1, y2 with all other columns as covariates.
    static CsvSchema identity();
    /// Parses "z=Z,d=D,y1=cost,eq5d0=EQ5D_0".
    static CsvSchema parse(const std::string& spec);
};

TrialDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = CsvSchema::identity());
TrialDataset parse_csv(const std::string& text, const CsvSchema& schema = CsvSchema::identity());

/// Writes logical column names; missing cells as `NA`. Values are printed in
/// shortest round-trip form so load/write/load is bit-identical.
void write_csv(const TrialDataset& ds, const std::filesystem::path& path);
std::string to_csv(const TrialDataset& ds);

/// Indicator slot ordering for the monotone cascade (0 = eq5d0, 1 = y1, 2 = y2).
using MonotoneOrder = std::array<int, 3>;
inline constexpr MonotoneOrder kDefaultOrder{0, 1, 2};

struct MissingPatternSummary {
    /// Counts keyed by the (r0, r1, r2) triple.
    std::map<std::array<int, 3>, Eigen::Index> counts;
    Eigen::Index n = 0;
    /// True iff r0 >= r1 >= r2 for every subject.
    bool monotone = true;
};

MissingPatternSummary summarize_patterns(const TrialDataset& ds);

/// True iff every subject is monotone in the given cascade order.
bool is_monotone(const TrialDataset& ds, const MonotoneOrder& order = kDefaultOrder);

struct MonotoneResult {
    TrialDataset data;
    Eigen::Index dropped = 0;
    std::vector<std::string> warnings;
};

/// Drops subjects whose observation pattern is not monotone in `order`.
MonotoneResult enforce_monotone(const TrialDataset& ds, const MonotoneOrder& order = kDefaultOrder);

/// Indicator vector for slot 0 (eq5d0), 1 (y1) or 2 (y2).
Eigen::VectorXi indicator(const TrialDataset& ds, int slot);

}  // namespace ivcea
