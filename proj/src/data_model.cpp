#include "ivcea/data_model.hpp"

#include "ivcea/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ivcea {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_core_name(const std::string& name) {
    return name == "z" || name == "d" || name == "y1" || name == "y2";
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV record. Double quotes delimit fields that contain commas;
// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// TrialDataset
// ---------------------------------------------------------------------------

bool TrialDataset::has_covariate(const std::string& name) const {
    return std::any_of(covariates.begin(), covariates.end(),
                       [&](const Covariate& c) { return c.name == name; });
}

const Covariate& TrialDataset::covariate(const std::string& name) const {
    for (const auto& c : covariates)
        if (c.name == name) return c;
    throw SchemaError("unknown covariate '" + name + "'");
}

Covariate& TrialDataset::covariate(const std::string& name) {
    for (auto& c : covariates)
        if (c.name == name) return c;
    throw SchemaError("unknown covariate '" + name + "'");
}

std::vector<std::string> TrialDataset::covariate_names() const {
    std::vector<std::string> names;
    names.reserve(covariates.size());
    for (const auto& c : covariates) names.push_back(c.name);
    return names;
}

Eigen::VectorXi TrialDataset::r0() const {
    if (has_covariate(kBaselineUtility)) return covariate(kBaselineUtility).observed;
    return Eigen::VectorXi::Ones(size());
}

TrialDataset TrialDataset::subset(const std::vector<Eigen::Index>& rows) const {
    TrialDataset out;
    const auto m = static_cast<Eigen::Index>(rows.size());
    out.z.resize(m);
    out.d.resize(m);
    out.y1.resize(m);
    out.y2.resize(m);
    out.r1.resize(m);
    out.r2.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        auto r = rows[static_cast<std::size_t>(i)];
        out.z(i) = z(r);
        out.d(i) = d(r);
        out.y1(i) = y1(r);
        out.y2(i) = y2(r);
        out.r1(i) = r1(r);
        out.r2(i) = r2(r);
    }
    out.covariates.reserve(covariates.size());
    for (const auto& c : covariates) {
        Covariate cc{c.name, Eigen::VectorXd(m), Eigen::VectorXi(m)};
        for (Eigen::Index i = 0; i < m; ++i) {
            auto r = rows[static_cast<std::size_t>(i)];
            cc.values(i) = c.values(r);
            cc.observed(i) = c.observed(r);
        }
        out.covariates.push_back(std::move(cc));
    }
    return out;
}

void TrialDataset::validate() const {
    const auto n = size();
    if (d.size() != n || y1.size() != n || y2.size() != n || r1.size() != n || r2.size() != n)
        throw ValidationError("dataset columns have inconsistent lengths");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (z(i) != 0 && z(i) != 1)
            throw ValidationError("row " + std::to_string(i) + ": z must be 0 or 1", i);
        if (d(i) != 0 && d(i) != 1)
            throw ValidationError("row " + std::to_string(i) + ": d must be 0 or 1", i);
        if ((r1(i) == 1) == std::isnan(y1(i)))
            throw ValidationError("row " + std::to_string(i) + ": r1 disagrees with y1", i);
        if ((r2(i) == 1) == std::isnan(y2(i)))
            throw ValidationError("row " + std::to_string(i) + ": r2 disagrees with y2", i);
    }
    std::set<std::string> seen;
    for (const auto& c : covariates) {
        if (is_core_name(c.name)) throw ValidationError("covariate name '" + c.name + "' is reserved");
        if (!seen.insert(c.name).second)
            throw ValidationError("duplicate covariate name '" + c.name + "'");
        if (c.values.size() != n || c.observed.size() != n)
            throw ValidationError("covariate '" + c.name + "' has wrong length");
        for (Eigen::Index i = 0; i < n; ++i)
            if ((c.observed(i) == 1) == std::isnan(c.values(i)))
                throw ValidationError("row " + std::to_string(i) + ": indicator disagrees with '" +
                                          c.name + "'",
                                      i);
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

CsvSchema CsvSchema::identity() {
    CsvSchema s;
    s.columns = {{"z", "z"}, {"d", "d"}, {"y1", "y1"}, {"y2", "y2"}};
    s.include_unmapped = true;
    return s;
}

CsvSchema CsvSchema::parse(const std::string& spec) {
    CsvSchema s;
    std::set<std::string> logical;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        auto eq = item.find('=');
        std::string key = trim(eq == std::string::npos ? item : item.substr(0, eq));
        std::string col = trim(eq == std::string::npos ? item : item.substr(eq + 1));
        if (key.empty() || col.empty()) throw SchemaError("malformed schema entry '" + item + "'");
        if (!logical.insert(key).second) throw SchemaError("logical name '" + key + "' mapped twice");
        s.columns.emplace_back(key, col);
    }
    for (const char* core : {"z", "d", "y1", "y2"})
        if (!logical.count(core)) s.columns.emplace_back(core, core);
    return s;
}

TrialDataset parse_csv(const std::string& text, const CsvSchema& schema) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty CSV input");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_record(line);

    auto find_col = [&](const std::string& col) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), col);
        return it == header.end() ? -1 : it - header.begin();
    };

    std::vector<std::pair<std::string, std::size_t>> mapping;  // logical -> header index
    std::set<std::size_t> used;
    for (const auto& [logical, col] : schema.columns) {
        auto idx = find_col(col);
        if (idx < 0) throw SchemaError("column '" + col + "' (for '" + logical + "') not found in header");
        mapping.emplace_back(logical, static_cast<std::size_t>(idx));
        used.insert(static_cast<std::size_t>(idx));
    }
    if (schema.include_unmapped)
        for (std::size_t j = 0; j < header.size(); ++j)
            if (!used.count(j)) mapping.emplace_back(header[j], j);

    auto is_missing = [&](const std::string& cell) {
        return std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), cell) !=
               schema.missing_tokens.end();
    };

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto rec = split_record(line);
        if (rec.size() != header.size())
            throw ValidationError("row " + std::to_string(rows.size()) + ": expected " +
                                      std::to_string(header.size()) + " fields, found " +
                                      std::to_string(rec.size()),
                                  static_cast<std::ptrdiff_t>(rows.size()));
        rows.push_back(std::move(rec));
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    TrialDataset ds;
    ds.z.resize(n);
    ds.d.resize(n);
    ds.y1.resize(n);
    ds.y2.resize(n);
    ds.r1.resize(n);
    ds.r2.resize(n);

    for (const auto& [logical, j] : mapping) {
        const bool binary = logical == "z" || logical == "d";
        Eigen::VectorXd values(n);
        Eigen::VectorXi observed(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& cell = rows[static_cast<std::size_t>(i)][j];
            if (is_missing(cell)) {
                if (binary)
                    throw ValidationError("row " + std::to_string(i) + ": " + logical +
                                              " is missing but must be observed",
                                          i);
                values(i) = kNaN;
                observed(i) = 0;
                continue;
            }
            auto v = parse_double(cell);
            if (!v)
                throw ValidationError("row " + std::to_string(i) + ": cannot parse '" + cell +
                                          "' in column '" + header[j] + "'",
                                      i);
            if (binary && *v != 0.0 && *v != 1.0)
                throw ValidationError("row " + std::to_string(i) + ": " + logical +
                                          " must be 0 or 1, got '" + cell + "'",
                                      i);
            if (!binary && !std::isfinite(*v))
                throw ValidationError("row " + std::to_string(i) + ": non-finite value in '" +
                                          header[j] + "'",
                                      i);
            values(i) = *v;
            observed(i) = 1;
        }
        if (logical == "z") {
            ds.z = values.cast<int>();
        } else if (logical == "d") {
            ds.d = values.cast<int>();
        } else if (logical == "y1") {
            ds.y1 = values;
            ds.r1 = observed;
        } else if (logical == "y2") {
            ds.y2 = values;
            ds.r2 = observed;
        } else {
            if (ds.has_covariate(logical)) throw SchemaError("covariate '" + logical + "' mapped twice");
            ds.covariates.push_back({logical, std::move(values), std::move(observed)});
        }
    }
    ds.validate();
    return ds;
}

TrialDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), schema);
}

std::string to_csv(const TrialDataset& ds) {
    std::string out = "z,d,y1,y2";
    for (const auto& c : ds.covariates) out += "," + c.name;
    out += "\n";
    auto cell = [](double v, int obs) { return obs ? format_double(v) : std::string("NA"); };
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        out += std::to_string(ds.z(i)) + "," + std::to_string(ds.d(i)) + "," + cell(ds.y1(i), ds.r1(i)) +
               "," + cell(ds.y2(i), ds.r2(i));
        for (const auto& c : ds.covariates) out += "," + cell(c.values(i), c.observed(i));
        out += "\n";
    }
    return out;
}

void write_csv(const TrialDataset& ds, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << to_csv(ds);
    if (!f) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Missingness patterns
// ---------------------------------------------------------------------------

Eigen::VectorXi indicator(const TrialDataset& ds, int slot) {
    switch (slot) {
        case 0: return ds.r0();
        case 1: return ds.r1;
        case 2: return ds.r2;
        default: throw ConfigError("indicator slot must be 0, 1 or 2");
    }
}

MissingPatternSummary summarize_patterns(const TrialDataset& ds) {
    MissingPatternSummary s;
    s.n = ds.size();
    const Eigen::VectorXi r0 = ds.r0();
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        std::array<int, 3> key{r0(i), ds.r1(i), ds.r2(i)};
        ++s.counts[key];
        if ((key[0] == 0 && key[1] == 1) || (key[1] == 0 && key[2] == 1)) s.monotone = false;
    }
    return s;
}

namespace {

bool row_monotone(const std::array<Eigen::VectorXi, 3>& r, const MonotoneOrder& order, Eigen::Index i) {
    for (int k = 0; k + 1 < 3; ++k)
        if (r[order[k]](i) == 0 && r[order[k + 1]](i) == 1) return false;
    return true;
}

void check_order(const MonotoneOrder& order) {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != MonotoneOrder{0, 1, 2}) throw ConfigError("monotone order must be a permutation of {0,1,2}");
}

}  // namespace

bool is_monotone(const TrialDataset& ds, const MonotoneOrder& order) {
    check_order(order);
    const std::array<Eigen::VectorXi, 3> r{ds.r0(), ds.r1, ds.r2};
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (!row_monotone(r, order, i)) return false;
    return true;
}

MonotoneResult enforce_monotone(const TrialDataset& ds, const MonotoneOrder& order) {
    check_order(order);
    const std::array<Eigen::VectorXi, 3> r{ds.r0(), ds.r1, ds.r2};
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(ds.size()));
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (row_monotone(r, order, i)) keep.push_back(i);
    MonotoneResult res{ds.subset(keep), ds.size() - static_cast<Eigen::Index>(keep.size()), {}};
    if (keep.empty() && ds.size() > 0)
        res.warnings.push_back("every subject violates the monotone pattern; result is empty");
    return res;
}

}  // namespace ivcea
