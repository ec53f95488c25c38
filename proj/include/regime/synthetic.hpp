#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "regime/market_data.hpp"
#include "regime/markov_chain.hpp"

namespace regime {

/// Generator for regime-switching daily data: a hidden chain drives VIX
/// changes and the three assets' log-returns, all Gaussian given the regime.
struct SyntheticRegimeSpec {
    TransitionMatrix transition;
    std::vector<double> dvix_mean;
    std::vector<double> dvix_std;
    std::vector<PerAsset<double>> asset_mean;  ///< per state, daily log-return
    std::vector<PerAsset<double>> asset_std;
    std::size_t start_state = 0;
};

/// Three regimes (calm, transitional, stressed) with the persistence and
/// state-conditional moments of long-run daily TLT/GLD/SPY/VIX data.
inline SyntheticRegimeSpec stylized_three_regime_spec() {
    SyntheticRegimeSpec spec;
    spec.transition = TransitionMatrix::from_rows({
                                                      {0.9386, 0.0614, 0.0000},
                                                      {0.0726, 0.9093, 0.0181},
                                                      {0.0001, 0.1260, 0.8740},
                                                  })
                          .row_normalized();
    spec.dvix_mean = {-0.0606, -0.0146, 0.6120};
    spec.dvix_std = {0.6076, 1.7132, 5.9255};
    spec.asset_mean = {
        {-0.000119, 0.000458, 0.001295},
        {0.000228, 0.000335, 0.000014},
        {0.001673, 0.000476, -0.004749},
    };
    spec.asset_std = {
        {0.007456, 0.009375, 0.005511},
        {0.009656, 0.011445, 0.012092},
        {0.017325, 0.020023, 0.033809},
    };
    return spec;
}

struct SyntheticMarket {
    PriceSeries tlt;
    PriceSeries gld;
    PriceSeries spy;
    PriceSeries vix;
    DiscreteStateSequence regimes;  ///< regime of each return day (length = n_returns)
};

/// Consecutive weekdays starting at `first`.
inline std::vector<Date> weekday_calendar(Date first, std::size_t count) {
    using namespace std::chrono;
    std::vector<Date> out;
    sys_days d{first};
    while (out.size() < count) {
        const weekday wd{d};
        if (wd != Saturday && wd != Sunday) out.emplace_back(d);
        d += days{1};
    }
    return out;
}

/// Simulates `n_returns` trading days (n_returns + 1 closes per symbol).
/// VIX levels are the cumulated changes shifted so the minimum level is 10.
inline SyntheticMarket simulate_market(const SyntheticRegimeSpec& spec, std::size_t n_returns, std::uint64_t seed,
                                       Date first_date = Date{std::chrono::year{2010}, std::chrono::January,
                                                              std::chrono::day{4}}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SyntheticMarket out;
    out.regimes = simulate_chain(spec.transition, spec.start_state, n_returns, rng);

    const auto dates = weekday_calendar(first_date, n_returns + 1);
    PerAsset<std::vector<PriceObservation>> px;
    std::vector<double> vix_path{0.0};
    for (std::size_t a = 0; a < kNumAssets; ++a) px[a].push_back({dates[0], 100.0});
    for (std::size_t t = 0; t < n_returns; ++t) {
        const std::size_t s = out.regimes.states[t];
        for (std::size_t a = 0; a < kNumAssets; ++a) {
            const double r = spec.asset_mean[s][a] + spec.asset_std[s][a] * normal(rng);
            px[a].push_back({dates[t + 1], px[a].back().close * std::exp(r)});
        }
        vix_path.push_back(vix_path.back() + spec.dvix_mean[s] + spec.dvix_std[s] * normal(rng));
    }
    const double lowest = *std::min_element(vix_path.begin(), vix_path.end());
    const double offset = std::max(20.0, 10.0 - lowest);
    std::vector<PriceObservation> vix;
    for (std::size_t t = 0; t < vix_path.size(); ++t) vix.push_back({dates[t], vix_path[t] + offset});

    out.tlt = PriceSeries::from_rows("TLT", std::move(px[0]));
    out.gld = PriceSeries::from_rows("GLD", std::move(px[1]));
    out.spy = PriceSeries::from_rows("SPY", std::move(px[2]));
    out.vix = PriceSeries::from_rows("VIX", std::move(vix));
    return out;
}

}  // namespace regime
