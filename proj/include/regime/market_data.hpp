#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regime/error.hpp"
#include "regime/stats.hpp"

namespace regime {

using Date = std::chrono::year_month_day;

/// The three tradable assets, in the fixed order used for every per-asset
/// array and for tie-breaking.
enum class Asset : std::size_t { Tlt = 0, Gld = 1, Spy = 2 };

inline constexpr std::size_t kNumAssets = 3;
inline constexpr std::array<Asset, kNumAssets> kAssets{Asset::Tlt, Asset::Gld, Asset::Spy};

constexpr std::size_t index_of(Asset a) { return static_cast<std::size_t>(a); }

constexpr std::string_view asset_name(Asset a) {
    switch (a) {
        case Asset::Tlt: return "TLT";
        case Asset::Gld: return "GLD";
        case Asset::Spy: return "SPY";
    }
    return "?";
}

template <typename T>
using PerAsset = std::array<T, kNumAssets>;

/// Parses a strict `YYYY-MM-DD` calendar date.
inline std::optional<Date> parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    auto parse = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc{} && p == text.data() + pos + len;
    };
    if (!parse(0, 4, y) || !parse(5, 2, m) || !parse(8, 2, d)) return std::nullopt;
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) return std::nullopt;
    return date;
}

inline std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

struct PriceObservation {
    Date date;
    double close;
};

struct DatedValue {
    Date date;
    double value;
};

using DatedSeries = std::vector<DatedValue>;

namespace detail {
[[noreturn]] inline void data_error(std::string_view code, const std::string& message) {
    fail(ErrorKind::Data, "market_data", code, message);
}
}  // namespace detail

/// Daily closes for one symbol. Dates strictly increasing, closes positive.
class PriceSeries {
public:
    PriceSeries() = default;

    /// Sorts rows by date and validates the invariants.
    static PriceSeries from_rows(std::string symbol, std::vector<PriceObservation> rows) {
        for (const auto& row : rows) {
            if (!(row.close > 0.0) || !std::isfinite(row.close)) {
                detail::data_error("NonPositivePrice", symbol + ": close " + std::to_string(row.close) +
                                                           " on " + format_date(row.date));
            }
        }
        std::sort(rows.begin(), rows.end(),
                  [](const PriceObservation& a, const PriceObservation& b) { return a.date < b.date; });
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].date == rows[i - 1].date) {
                detail::data_error("DuplicateDate", symbol + ": " + format_date(rows[i].date));
            }
        }
        PriceSeries s;
        s.symbol_ = std::move(symbol);
        s.rows_ = std::move(rows);
        return s;
    }

    const std::string& symbol() const noexcept { return symbol_; }
    std::span<const PriceObservation> observations() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    /// Rows with start <= date <= end.
    PriceSeries between(const Date& start, const Date& end) const {
        PriceSeries out;
        out.symbol_ = symbol_;
        for (const auto& r : rows_) {
            if (!(r.date < start) && !(end < r.date)) out.rows_.push_back(r);
        }
        return out;
    }

private:
    std::string symbol_;
    std::vector<PriceObservation> rows_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::string symbol_from_path(const std::filesystem::path& path) {
    std::string stem = path.stem().string();
    std::transform(stem.begin(), stem.end(), stem.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return stem;
}

}  // namespace detail

/// Reads a `date,close` CSV. Rows may appear in any order; the result is
/// sorted by date. The symbol defaults to the upper-cased file stem.
inline PriceSeries load_price_csv(const std::filesystem::path& path, std::string symbol = {}) {
    if (symbol.empty()) symbol = detail::symbol_from_path(path);
    std::ifstream in(path);
    if (!in) detail::data_error("FileNotFound", path.string());

    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<PriceObservation> rows;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = detail::trim(line);
        if (line_no == 1 && view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF) {
            view.remove_prefix(3);  // UTF-8 BOM
        }
        if (view.empty()) continue;
        if (!header_seen) {
            if (view != "date,close") {
                detail::data_error("MalformedRow", path.string() + ":" + std::to_string(line_no) +
                                                       ": expected header `date,close`");
            }
            header_seen = true;
            continue;
        }
        const auto comma = view.find(',');
        if (comma == std::string_view::npos) {
            detail::data_error("MalformedRow", path.string() + ":" + std::to_string(line_no));
        }
        const auto date = parse_date(detail::trim(view.substr(0, comma)));
        const auto close = detail::parse_double(view.substr(comma + 1));
        if (!date || !close || !std::isfinite(*close)) {
            detail::data_error("MalformedRow", path.string() + ":" + std::to_string(line_no) + ": `" +
                                                   std::string(view) + "`");
        }
        rows.push_back({*date, *close});
    }
    if (rows.empty()) detail::data_error("EmptyFile", path.string());
    return PriceSeries::from_rows(std::move(symbol), std::move(rows));
}

/// Source of daily closes. Network-backed implementations plug in here; the
/// library ships only the file-backed one.
class PriceSource {
public:
    virtual ~PriceSource() = default;
    virtual PriceSeries fetch(const std::string& symbol, const Date& start, const Date& end) const = 0;
};

/// Reads `<directory>/<symbol in lower case>.csv`.
class CsvDirectorySource final : public PriceSource {
public:
    explicit CsvDirectorySource(std::filesystem::path directory) : dir_(std::move(directory)) {}

    PriceSeries fetch(const std::string& symbol, const Date& start, const Date& end) const override {
        std::string file = symbol;
        std::transform(file.begin(), file.end(), file.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return load_price_csv(dir_ / (file + ".csv"), symbol).between(start, end);
    }

private:
    std::filesystem::path dir_;
};

inline DatedSeries log_returns(const PriceSeries& series) {
    if (series.size() < 2) detail::data_error("TooShort", series.symbol() + ": need at least 2 closes");
    const auto obs = series.observations();
    DatedSeries out;
    out.reserve(obs.size() - 1);
    for (std::size_t t = 1; t < obs.size(); ++t) {
        out.push_back({obs[t].date, std::log(obs[t].close / obs[t - 1].close)});
    }
    return out;
}

inline DatedSeries delta_vix(const PriceSeries& series) {
    if (series.size() < 2) detail::data_error("TooShort", series.symbol() + ": need at least 2 levels");
    const auto obs = series.observations();
    DatedSeries out;
    out.reserve(obs.size() - 1);
    for (std::size_t t = 1; t < obs.size(); ++t) {
        out.push_back({obs[t].date, obs[t].close - obs[t - 1].close});
    }
    return out;
}

/// Date-aligned return panel. Row t holds the returns from the previous
/// surviving date to dates[t].
struct AlignedPanel {
    std::vector<Date> dates;
    PerAsset<std::vector<double>> log_returns;
    std::vector<double> delta_vix;
    std::optional<std::vector<double>> vix_log_return;

    std::size_t size() const noexcept { return dates.size(); }

    std::span<const double> returns(Asset a) const noexcept { return log_returns[index_of(a)]; }

    DatedSeries column_series(Asset a) const {
        DatedSeries out;
        out.reserve(size());
        for (std::size_t t = 0; t < size(); ++t) out.push_back({dates[t], log_returns[index_of(a)][t]});
        return out;
    }

    /// Rows [begin, end).
    AlignedPanel slice(std::size_t begin, std::size_t end) const {
        AlignedPanel out;
        auto cut = [&](const auto& v) { return std::vector(v.begin() + begin, v.begin() + end); };
        out.dates = cut(dates);
        for (std::size_t a = 0; a < kNumAssets; ++a) out.log_returns[a] = cut(log_returns[a]);
        out.delta_vix = cut(delta_vix);
        if (vix_log_return) out.vix_log_return = cut(*vix_log_return);
        return out;
    }

    friend bool operator==(const AlignedPanel&, const AlignedPanel&) = default;
};

/// Series the regime models are fitted on.
enum class Observable { DeltaVix, SpyLogReturn };

inline std::span<const double> observable_column(const AlignedPanel& panel, Observable obs) {
    return obs == Observable::DeltaVix ? std::span<const double>(panel.delta_vix) : panel.returns(Asset::Spy);
}

/// Keeps the dates common to all four series, then differences consecutive
/// surviving dates.
inline AlignedPanel build_panel(const PriceSeries& tlt, const PriceSeries& gld, const PriceSeries& spy,
                                const PriceSeries& vix) {
    const std::array<const PriceSeries*, 4> inputs{&tlt, &gld, &spy, &vix};
    for (const auto* s : inputs) {
        if (s->size() < 2) detail::data_error("InsufficientOverlap", s->symbol() + ": fewer than 2 rows");
    }

    std::vector<Date> common;
    for (const auto& o : tlt.observations()) common.push_back(o.date);
    for (const auto* s : {&gld, &spy, &vix}) {
        std::vector<Date> dates;
        for (const auto& o : s->observations()) dates.push_back(o.date);
        std::vector<Date> next;
        std::set_intersection(common.begin(), common.end(), dates.begin(), dates.end(), std::back_inserter(next));
        common = std::move(next);
    }
    if (common.size() < 2) {
        detail::data_error("InsufficientOverlap",
                           std::to_string(common.size()) + " common dates across TLT/GLD/SPY/VIX");
    }

    // Levels on the common dates, in order.
    auto levels_on = [&](const PriceSeries& s) {
        std::vector<double> out;
        out.reserve(common.size());
        auto obs = s.observations();
        std::size_t j = 0;
        for (const auto& d : common) {
            while (obs[j].date < d) ++j;
            out.push_back(obs[j].close);
        }
        return out;
    };

    AlignedPanel panel;
    panel.dates.assign(common.begin() + 1, common.end());
    const std::array<const PriceSeries*, kNumAssets> assets{&tlt, &gld, &spy};
    for (std::size_t a = 0; a < kNumAssets; ++a) {
        const auto px = levels_on(*assets[a]);
        auto& col = panel.log_returns[a];
        col.reserve(px.size() - 1);
        for (std::size_t t = 1; t < px.size(); ++t) col.push_back(std::log(px[t] / px[t - 1]));
    }
    const auto v = levels_on(vix);
    std::vector<double> vix_lr;
    for (std::size_t t = 1; t < v.size(); ++t) {
        panel.delta_vix.push_back(v[t] - v[t - 1]);
        vix_lr.push_back(std::log(v[t] / v[t - 1]));
    }
    panel.vix_log_return = std::move(vix_lr);
    return panel;
}

/// Trailing-window sample standard deviation, reported only where a full
/// window exists. Entry k is dated at the window's last observation.
inline DatedSeries rolling_volatility(std::span<const DatedValue> returns, std::size_t window) {
    if (window < 2 || returns.size() < window) {
        detail::data_error("WindowTooLarge", "window " + std::to_string(window) + " over " +
                                                 std::to_string(returns.size()) + " observations");
    }
    DatedSeries out;
    out.reserve(returns.size() - window + 1);
    std::vector<double> buf(window);
    for (std::size_t end = window; end <= returns.size(); ++end) {
        for (std::size_t i = 0; i < window; ++i) buf[i] = returns[end - window + i].value;
        out.push_back({returns[end - 1].date, stats::sample_std(buf)});
    }
    return out;
}

using Matrix3 = std::array<std::array<double, kNumAssets>, kNumAssets>;

/// Pearson correlations of the three asset log-return columns.
inline Matrix3 correlation_matrix(const AlignedPanel& panel) {
    if (panel.size() < 2) detail::data_error("TooShort", "correlation needs at least 2 rows");
    PerAsset<double> means{};
    PerAsset<double> ss{};
    for (std::size_t a = 0; a < kNumAssets; ++a) {
        means[a] = stats::mean(panel.log_returns[a]);
        ss[a] = stats::sum_sq_dev(panel.log_returns[a]);
        if (!(ss[a] > 0.0)) {
            detail::data_error("DegenerateColumn", std::string(asset_name(kAssets[a])) + " has zero variance");
        }
    }
    Matrix3 corr{};
    for (std::size_t i = 0; i < kNumAssets; ++i) {
        corr[i][i] = 1.0;
        for (std::size_t j = i + 1; j < kNumAssets; ++j) {
            double cross = 0.0;
            for (std::size_t t = 0; t < panel.size(); ++t) {
                cross += (panel.log_returns[i][t] - means[i]) * (panel.log_returns[j][t] - means[j]);
            }
            const double r = std::clamp(cross / std::sqrt(ss[i] * ss[j]), -1.0, 1.0);
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    return corr;
}

/// Number of leading rows in the training segment: floor(fraction * T).
inline std::size_t train_length(std::size_t total, double train_fraction) {
    // The small epsilon keeps products like 0.29 * 100 from flooring to 28.
    return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(total) + 1e-9));
}

inline std::pair<AlignedPanel, AlignedPanel> chronological_split(const AlignedPanel& panel, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        detail::fail(ErrorKind::Usage, "market_data", "InvalidFraction",
             "train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
    }
    const std::size_t n_train = train_length(panel.size(), train_fraction);
    if (n_train == 0 || n_train >= panel.size()) {
        detail::data_error("EmptySegment", "split of " + std::to_string(panel.size()) + " rows at " +
                                               std::to_string(train_fraction) + " leaves an empty segment");
    }
    return {panel.slice(0, n_train), panel.slice(n_train, panel.size())};
}

}  // namespace regime
