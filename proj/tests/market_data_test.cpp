#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "regime/io.hpp"
#include "regime/market_data.hpp"

using namespace regime;
namespace fs = std::filesystem;

namespace {

Date day(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}; }

PriceSeries series(const std::string& sym, std::vector<double> closes, Date first = day(2020, 1, 1)) {
    std::vector<PriceObservation> rows;
    std::chrono::sys_days d{first};
    for (double c : closes) {
        rows.push_back({Date{d}, c});
        d += std::chrono::days{1};
    }
    return PriceSeries::from_rows(sym, rows);
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("regime_md_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& body) {
        const auto p = dir_ / name;
        std::ofstream(p) << body;
        return p;
    }

    std::string code_of(const fs::path& p) {
        try {
            load_price_csv(p);
        } catch (const Error& e) {
            return e.code();
        }
        return "";
    }

    fs::path dir_;
};

}  // namespace

TEST_F(TempDir, LoadsTwoRows) {
    const auto s = load_price_csv(write("spy.csv", "date,close\n2020-01-02,100.0\n2020-01-03,101.0\n"));
    EXPECT_EQ(s.symbol(), "SPY");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.observations()[1].close, 101.0);
    EXPECT_EQ(s.observations()[0].date, day(2020, 1, 2));
}

TEST_F(TempDir, SortsUnorderedRowsAndAcceptsCrlf) {
    const auto s = load_price_csv(write("x.csv", "date,close\r\n2020-01-03,101\r\n2020-01-02,100\r\n"));
    EXPECT_EQ(s.observations()[0].date, day(2020, 1, 2));
}

TEST_F(TempDir, RejectsBadRows) {
    EXPECT_EQ(code_of(write("a.csv", "date,close\n2020-01-02,-5\n")), "NonPositivePrice");
    EXPECT_EQ(code_of(write("b.csv", "date,close\n2020-01-02,100\n2020-01-02,101\n")), "DuplicateDate");
    EXPECT_EQ(code_of(write("c.csv", "date,close\n2020-13-02,100\n")), "MalformedRow");
    EXPECT_EQ(code_of(write("d.csv", "date,close\n2020-01-02,abc\n")), "MalformedRow");
    EXPECT_EQ(code_of(write("e.csv", "date,close\n")), "EmptyFile");
    EXPECT_EQ(code_of(write("f.csv", "")), "EmptyFile");
    EXPECT_EQ(code_of(write("g.csv", "when,price\n2020-01-02,1\n")), "MalformedRow");
    EXPECT_EQ(code_of(dir_ / "missing.csv"), "FileNotFound");
}

TEST_F(TempDir, DirectorySourceFiltersDateRange) {
    write("spy.csv", "date,close\n2020-01-02,100\n2020-01-03,101\n2020-01-06,102\n");
    const CsvDirectorySource src(dir_);
    const auto s = src.fetch("SPY", day(2020, 1, 3), day(2020, 1, 31));
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.observations()[0].close, 101.0);
}

TEST(LogReturns, Examples) {
    EXPECT_EQ(log_returns(series("S", {100, 100}))[0].value, 0.0);
    EXPECT_NEAR(log_returns(series("S", {100, 100 * std::exp(1.0)}))[0].value, 1.0, 1e-15);
    const auto r = log_returns(series("S", {100, 102, 101}));
    ASSERT_EQ(r.size(), 2u);
    EXPECT_NEAR(r[0].value, std::log(1.02), 1e-15);
    EXPECT_NEAR(r[1].value, std::log(101.0 / 102.0), 1e-15);
    EXPECT_EQ(r[1].date, day(2020, 1, 3));  // later date
    EXPECT_THROW(log_returns(series("S", {100})), Error);
}

TEST(LogReturns, AdditivityRecoversFinalClose) {
    std::mt19937_64 rng(5);
    std::lognormal_distribution<double> step(0.0, 0.02);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> closes{50.0};
        for (int i = 0; i < 500; ++i) closes.push_back(closes.back() * step(rng));
        double sum = 0.0;
        for (const auto& r : log_returns(series("S", closes))) sum += r.value;
        EXPECT_NEAR(closes.front() * std::exp(sum) / closes.back(), 1.0, 1e-9);
    }
}

TEST(DeltaVix, Examples) {
    EXPECT_EQ(delta_vix(series("VIX", {20, 25}))[0].value, 5.0);
    EXPECT_EQ(delta_vix(series("VIX", {20, 20}))[0].value, 0.0);
    const auto d = delta_vix(series("VIX", {30, 25, 28}));
    EXPECT_EQ(d[0].value, -5.0);
    EXPECT_EQ(d[1].value, 3.0);
    EXPECT_THROW(delta_vix(series("VIX", {20})), Error);
}

TEST(BuildPanel, FullOverlap) {
    const auto p = build_panel(series("TLT", {1, 2, 3}), series("GLD", {1, 2, 3}), series("SPY", {1, 2, 3}),
                               series("VIX", {10, 12, 11}));
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p.delta_vix[0], 2.0);
    EXPECT_EQ(p.delta_vix[1], -1.0);
    EXPECT_NEAR(p.returns(Asset::Spy)[1], std::log(1.5), 1e-15);
    ASSERT_TRUE(p.vix_log_return.has_value());
    EXPECT_NEAR((*p.vix_log_return)[0], std::log(1.2), 1e-15);
}

TEST(BuildPanel, MissingDateIsSkipped) {
    const auto spy = PriceSeries::from_rows("SPY", {{day(2020, 1, 1), 100}, {day(2020, 1, 3), 110}});
    const auto p = build_panel(series("TLT", {1, 2, 4}), series("GLD", {1, 2, 3}), spy, series("VIX", {10, 12, 11}));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.dates[0], day(2020, 1, 3));
    EXPECT_NEAR(p.returns(Asset::Spy)[0], std::log(1.1), 1e-15);
    EXPECT_NEAR(p.returns(Asset::Tlt)[0], std::log(4.0), 1e-15);  // D1 -> D3
    EXPECT_EQ(p.delta_vix[0], 1.0);
}

TEST(BuildPanel, DisjointDatesFail) {
    try {
        build_panel(series("TLT", {1, 2}), series("GLD", {1, 2}), series("SPY", {1, 2}, day(2021, 1, 1)),
                    series("VIX", {1, 2}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "InsufficientOverlap");
    }
}

TEST(BuildPanel, RowOrderDoesNotMatter) {
    std::mt19937_64 rng(11);
    auto rows = [&](double start) {
        std::vector<PriceObservation> out;
        std::chrono::sys_days d{day(2019, 3, 1)};
        double px = start;
        std::normal_distribution<double> z(0.0, 0.01);
        for (int i = 0; i < 200; ++i) {
            if (i % 7 != 3) out.push_back({Date{d}, px});
            px *= std::exp(z(rng));
            d += std::chrono::days{1};
        }
        return out;
    };
    const auto t = rows(90), g = rows(120), s = rows(300), v = rows(20);
    const auto base = build_panel(PriceSeries::from_rows("TLT", t), PriceSeries::from_rows("GLD", g),
                                  PriceSeries::from_rows("SPY", s), PriceSeries::from_rows("VIX", v));
    for (int trial = 0; trial < 5; ++trial) {
        auto t2 = t, g2 = g, s2 = s, v2 = v;
        for (auto* r : {&t2, &g2, &s2, &v2}) std::shuffle(r->begin(), r->end(), rng);
        const auto p = build_panel(PriceSeries::from_rows("TLT", t2), PriceSeries::from_rows("GLD", g2),
                                   PriceSeries::from_rows("SPY", s2), PriceSeries::from_rows("VIX", v2));
        EXPECT_EQ(p, base);
    }
}

TEST(RollingVolatility, Examples) {
    DatedSeries constant;
    for (int i = 0; i < 40; ++i) constant.push_back({day(2020, 1, 1), 0.003});
    const auto z = rolling_volatility(constant, 30);
    ASSERT_EQ(z.size(), 11u);
    for (const auto& v : z) EXPECT_NEAR(v.value, 0.0, 1e-18);

    const DatedSeries two{{day(2020, 1, 1), 0.01}, {day(2020, 1, 2), -0.01}};
    const auto w = rolling_volatility(two, 2);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NEAR(w[0].value, 0.01 * std::sqrt(2.0), 1e-15);
    EXPECT_EQ(w[0].date, day(2020, 1, 2));

    try {
        rolling_volatility(DatedSeries(10, {day(2020, 1, 1), 0.0}), 30);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "WindowTooLarge");
    }
}

namespace {
AlignedPanel random_panel(std::size_t T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 0.01);
    AlignedPanel p;
    std::chrono::sys_days d{day(2000, 1, 1)};
    for (std::size_t t = 0; t < T; ++t) {
        p.dates.emplace_back(d);
        d += std::chrono::days{1};
        for (auto& col : p.log_returns) col.push_back(z(rng));
        p.delta_vix.push_back(z(rng) * 100);
    }
    return p;
}
}  // namespace

TEST(Correlation, UnitDiagonalSymmetricAndAnticorrelated) {
    auto p = random_panel(50, 3);
    auto c = correlation_matrix(p);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(c[i][i], 1.0);
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_NEAR(c[i][j], c[j][i], 1e-12);
            EXPECT_LE(std::abs(c[i][j]), 1.0);
        }
    }
    for (std::size_t t = 0; t < p.size(); ++t) p.log_returns[2][t] = -p.log_returns[0][t];
    c = correlation_matrix(p);
    EXPECT_NEAR(c[0][2], -1.0, 1e-12);
}

TEST(Correlation, IndependentColumnsNearZero) {
    // Sampling sd of r is 1/sqrt(T) = 0.01, so 0.05 is a 5-sigma bound.
    const auto c = correlation_matrix(random_panel(10000, 17));
    EXPECT_NEAR(c[0][1], 0.0, 0.05);
    EXPECT_NEAR(c[0][2], 0.0, 0.05);
    EXPECT_NEAR(c[1][2], 0.0, 0.05);
}

TEST(Correlation, ZeroVarianceColumnFails) {
    auto p = random_panel(20, 1);
    std::fill(p.log_returns[1].begin(), p.log_returns[1].end(), 0.002);
    try {
        correlation_matrix(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "DegenerateColumn");
    }
}

TEST(ChronologicalSplit, LengthsAndConcatenation) {
    const auto p = random_panel(100, 2);
    const auto [train, test] = chronological_split(p, 0.7);
    EXPECT_EQ(train.size(), 70u);
    EXPECT_EQ(test.size(), 30u);
    AlignedPanel joined = train;
    joined.dates.insert(joined.dates.end(), test.dates.begin(), test.dates.end());
    for (std::size_t a = 0; a < 3; ++a) {
        joined.log_returns[a].insert(joined.log_returns[a].end(), test.log_returns[a].begin(), test.log_returns[a].end());
    }
    joined.delta_vix.insert(joined.delta_vix.end(), test.delta_vix.begin(), test.delta_vix.end());
    EXPECT_EQ(joined, p);

    const auto [a, b] = chronological_split(random_panel(10, 2), 0.95);
    EXPECT_EQ(a.size(), 9u);
    EXPECT_EQ(b.size(), 1u);
    try {
        chronological_split(random_panel(2, 2), 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "EmptySegment");
    }
}

TEST(PanelCsv, HeaderAndPrecision) {
    auto p = random_panel(3, 9);
    p.vix_log_return = std::vector<double>{0.1, 0.2, 0.3};
    std::ostringstream out;
    io::write_panel_csv(out, p);
    std::istringstream in(out.str());
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    EXPECT_EQ(header, "date,tlt_ret,gld_ret,spy_ret,dvix,vix_logret");
    // Re-parse the first TLT value and check it round-trips to 1e-14 relative.
    const auto c1 = first.find(',');
    const auto c2 = first.find(',', c1 + 1);
    const double v = std::stod(first.substr(c1 + 1, c2 - c1 - 1));
    EXPECT_NEAR(v / p.log_returns[0][0], 1.0, 1e-14);
}
