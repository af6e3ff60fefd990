#include "helpers.hpp"

#include "ivcea/data_model.hpp"
#include "ivcea/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

using namespace ivcea;
using testing::kNaN;

namespace {

TrialDataset with_pattern(const std::vector<std::array<int, 3>>& rows) {
    std::vector<int> z, d;
    std::vector<double> y1, y2, e;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        z.push_back(static_cast<int>(i % 2));
        d.push_back(static_cast<int>(i % 2));
        e.push_back(rows[i][0] ? 0.5 : kNaN);
        y1.push_back(rows[i][1] ? 100.0 + static_cast<double>(i) : kNaN);
        y2.push_back(rows[i][2] ? 1.0 : kNaN);
    }
    return testing::make_dataset(z, d, y1, y2, {{"eq5d0", e}});
}

std::vector<std::array<int, 3>> repeat(std::array<int, 3> p, int n, std::vector<std::array<int, 3>> into = {}) {
    for (int i = 0; i < n; ++i) into.push_back(p);
    return into;
}

}  // namespace

TEST_CASE("csv: empty y1 cell gives r1 = 0") {
    auto ds = parse_csv("z,d,y1,y2\n1,1,10,0.5\n0,0,20,0.6\n1,0,,0.7\n0,0,40,0.8\n");
    CHECK(ds.size() == 4);
    CHECK(ds.r1 == Eigen::Vector4i(1, 1, 0, 1));
    CHECK(ds.r2 == Eigen::Vector4i(1, 1, 1, 1));
    CHECK(std::isnan(ds.y1(2)));
}

TEST_CASE("csv: z = 2 is rejected with its row") {
    try {
        parse_csv("z,d,y1,y2\n1,1,1,1\n2,0,1,1\n");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.row() == 1);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("csv: missing column is a schema error") {
    CHECK_THROWS_AS(parse_csv("z,d,y1\n1,1,1\n"), SchemaError);
    CHECK_THROWS_AS(parse_csv("Z,d,y1,y2\n1,1,1,1\n", CsvSchema::parse("z=arm")), SchemaError);
}

TEST_CASE("csv: complete file is monotone with all indicators 1") {
    std::string text = "z,d,y1,y2,eq5d0\n";
    for (int i = 0; i < 10; ++i)
        text += std::to_string(i % 2) + "," + std::to_string(i % 2) + "," + std::to_string(100 * i) + ",0.5,0.7\n";
    auto ds = parse_csv(text);
    CHECK(ds.r1.sum() == 10);
    CHECK(ds.r2.sum() == 10);
    CHECK(ds.r0().sum() == 10);
    auto s = summarize_patterns(ds);
    CHECK(s.monotone);
    CHECK(s.counts.size() == 1);
    CHECK(s.counts.at({1, 1, 1}) == 10);
}

TEST_CASE("csv: schema mapping renames columns and keeps covariate order") {
    auto ds = parse_csv("arm,recv,cost,qaly,EQ,age\n1,1,10,0.5,0.3,40\n0,0,NA,0.6,,50\n",
                        CsvSchema::parse("z=arm,d=recv,y1=cost,y2=qaly,eq5d0=EQ,age=age"));
    REQUIRE(ds.covariates.size() == 2);
    CHECK(ds.covariates[0].name == "eq5d0");
    CHECK(ds.covariates[1].name == "age");
    CHECK(ds.r1(1) == 0);
    CHECK(ds.r0()(1) == 0);
}

TEST_CASE("csv: write then load is bit identical") {
    auto ds = testing::random_iv_data(50, 3);
    ds.y1(4) = kNaN;
    ds.r1(4) = 0;
    auto again = parse_csv(to_csv(ds));
    CHECK(to_csv(again) == to_csv(ds));
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        if (ds.r1(i)) CHECK(again.y1(i) == ds.y1(i));
        CHECK(again.y2(i) == ds.y2(i));
        CHECK(again.covariate("x").values(i) == ds.covariate("x").values(i));
    }

    auto path = std::filesystem::temp_directory_path() / "ivcea_dm_roundtrip.csv";
    write_csv(ds, path);
    CHECK(to_csv(load_csv(path)) == to_csv(ds));
    std::filesystem::remove(path);
}

TEST_CASE("patterns: complete data is one pattern") {
    auto s = summarize_patterns(with_pattern(repeat({1, 1, 1}, 12)));
    CHECK(s.n == 12);
    CHECK(s.monotone);
    CHECK(s.counts.at({1, 1, 1}) == 12);
}

TEST_CASE("patterns: r0 = 0 with r1 = 1 is not monotone") {
    auto rows = repeat({1, 1, 1}, 5);
    rows.push_back({0, 1, 1});
    CHECK_FALSE(summarize_patterns(with_pattern(rows)).monotone);
}

TEST_CASE("patterns: 156 / 16 / 10 monotone split") {
    auto rows = repeat({1, 1, 1}, 156);
    rows = repeat({1, 1, 0}, 16, rows);
    rows = repeat({0, 0, 0}, 10, rows);
    auto s = summarize_patterns(with_pattern(rows));
    CHECK(s.monotone);
    CHECK(s.n == 182);
    CHECK(s.counts.at({1, 1, 1}) == 156);
    CHECK(s.counts.at({1, 1, 0}) == 16);
    CHECK(s.counts.at({0, 0, 0}) == 10);
}

TEST_CASE("enforce_monotone") {
    SUBCASE("monotone input is unchanged") {
        auto rows = repeat({1, 1, 1}, 8);
        rows = repeat({1, 0, 0}, 3, rows);
        auto ds = with_pattern(rows);
        auto res = enforce_monotone(ds);
        CHECK(res.dropped == 0);
        CHECK(to_csv(res.data) == to_csv(ds));
    }
    SUBCASE("three r0 = 0, r1 = 1 subjects are dropped") {
        auto rows = repeat({1, 1, 1}, 20);
        rows = repeat({0, 1, 1}, 3, rows);
        rows = repeat({1, 1, 0}, 4, rows);
        auto res = enforce_monotone(with_pattern(rows));
        CHECK(res.dropped == 3);
        CHECK(res.data.size() == 24);
        CHECK(summarize_patterns(res.data).monotone);
    }
    SUBCASE("every subject violating gives an empty dataset and a warning") {
        auto res = enforce_monotone(with_pattern(repeat({0, 1, 0}, 5)));
        CHECK(res.dropped == 5);
        CHECK(res.data.size() == 0);
        CHECK_FALSE(res.warnings.empty());
    }
    SUBCASE("custom order") {
        // y2 before y1: (1, 0, 1) is monotone under {0, 2, 1}
        auto ds = with_pattern(repeat({1, 0, 1}, 4));
        CHECK_FALSE(is_monotone(ds));
        CHECK(is_monotone(ds, MonotoneOrder{0, 2, 1}));
        CHECK(enforce_monotone(ds, MonotoneOrder{0, 2, 1}).dropped == 0);
        CHECK_THROWS_AS(enforce_monotone(ds, MonotoneOrder{0, 0, 1}), ConfigError);
    }
}

TEST_CASE("validate and subset") {
    auto ds = testing::random_iv_data(20, 5);
    CHECK_NOTHROW(ds.validate());
    auto sub = ds.subset({3, 1, 7});
    CHECK(sub.size() == 3);
    CHECK(sub.y1(0) == ds.y1(3));
    CHECK(sub.covariate("x").values(2) == ds.covariate("x").values(7));
    CHECK(ds.r0().sum() == 20);

    ds.d(2) = 3;
    CHECK_THROWS_AS(ds.validate(), ValidationError);
    CHECK_THROWS_AS(ds.covariate("nope"), SchemaError);
}
