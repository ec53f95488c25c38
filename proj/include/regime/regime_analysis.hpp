#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "regime/error.hpp"
#include "regime/market_data.hpp"
#include "regime/markov_chain.hpp"
#include "regime/stats.hpp"

namespace regime {

/// Per-asset conditional moments for one regime.
struct StateAssetStats {
    PerAsset<double> mean{};
    PerAsset<double> std{};  ///< sample std, divisor n - 1 (zero for a single day)
};

/// State-conditional statistics along a decoded path. States never visited
/// carry std::nullopt instead of numbers.
struct RegimeStats {
    std::vector<double> occupancy;
    std::vector<std::optional<StateAssetStats>> per_state;

    std::size_t n_states() const noexcept { return occupancy.size(); }
    bool present(std::size_t s) const { return per_state.at(s).has_value(); }
};

namespace detail {
[[noreturn]] inline void analysis_error(std::string_view code, const std::string& message) {
    fail(ErrorKind::Numerical, "regime_analysis", code, message);
}
}  // namespace detail

inline RegimeStats conditional_stats(const AlignedPanel& panel, const DiscreteStateSequence& path) {
    if (path.size() != panel.size() || panel.size() == 0) {
        detail::fail(ErrorKind::Data, "regime_analysis", "LengthMismatch",
                     "path length " + std::to_string(path.size()) + " vs panel rows " + std::to_string(panel.size()));
    }
    const std::size_t n = path.n_states;
    std::vector<std::vector<std::size_t>> days(n);
    for (std::size_t t = 0; t < path.size(); ++t) {
        if (path.states[t] >= n) {
            detail::fail(ErrorKind::Data, "regime_analysis", "StateOutOfRange",
                         "state " + std::to_string(path.states[t]) + " at row " + std::to_string(t));
        }
        days[path.states[t]].push_back(t);
    }

    RegimeStats out;
    out.occupancy.resize(n);
    out.per_state.resize(n);
    std::vector<double> buf;
    for (std::size_t s = 0; s < n; ++s) {
        out.occupancy[s] = static_cast<double>(days[s].size()) / static_cast<double>(panel.size());
        if (days[s].empty()) continue;
        StateAssetStats st;
        for (std::size_t a = 0; a < kNumAssets; ++a) {
            buf.clear();
            for (std::size_t t : days[s]) buf.push_back(panel.log_returns[a][t]);
            st.mean[a] = stats::mean(buf);
            st.std[a] = stats::sample_std(buf);
        }
        out.per_state[s] = st;
    }
    return out;
}

struct RotationRule {
    Asset top1;
    Asset top2;
    friend bool operator==(const RotationRule&, const RotationRule&) = default;
};

/// Per-state top-1 / top-2 assets by conditional mean.
struct RotationRules {
    std::vector<RotationRule> per_state;
    std::size_t n_states() const noexcept { return per_state.size(); }
};

/// Ranks assets by descending mean, falling back to TLT < GLD < SPY on ties.
inline std::array<Asset, kNumAssets> rank_assets(const PerAsset<double>& means) {
    std::array<Asset, kNumAssets> order = kAssets;
    std::stable_sort(order.begin(), order.end(),
                     [&](Asset a, Asset b) { return means[index_of(a)] > means[index_of(b)]; });
    return order;
}

inline RotationRules derive_rotation_rules(const RegimeStats& stats) {
    RotationRules out;
    for (std::size_t s = 0; s < stats.n_states(); ++s) {
        if (!stats.present(s)) {
            detail::analysis_error("AbsentState", "state " + std::to_string(s) + " never occurs in the sample");
        }
        const auto order = rank_assets(stats.per_state[s]->mean);
        out.per_state.push_back({order[0], order[1]});
    }
    return out;
}

}  // namespace regime
