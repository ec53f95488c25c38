#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regime/error.hpp"
#include "regime/hmm.hpp"
#include "regime/market_data.hpp"
#include "regime/regime_analysis.hpp"
#include "regime/rl_allocator.hpp"
#include "regime/stats.hpp"

namespace regime {

namespace detail {
[[noreturn]] inline void backtest_error(ErrorKind kind, std::string_view code, const std::string& message) {
    fail(kind, "backtest", code, message);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Performance metrics

inline double cumulative_return(std::span<const double> returns) {
    double growth = 1.0;
    for (double r : returns) growth *= 1.0 + r;
    return growth - 1.0;
}

/// Geometric annualization: (final equity)^(periods_per_year / T) - 1.
inline double annualized_return(std::span<const double> returns, double periods_per_year = 252.0) {
    if (returns.empty()) detail::backtest_error(ErrorKind::Data, "EmptySeries", "no returns to annualize");
    const double final_equity = 1.0 + cumulative_return(returns);
    return std::pow(final_equity, periods_per_year / static_cast<double>(returns.size())) - 1.0;
}

/// Sample std (divisor T - 1) scaled by sqrt(periods_per_year).
inline double annualized_volatility(std::span<const double> returns, double periods_per_year = 252.0) {
    if (returns.size() < 2) detail::backtest_error(ErrorKind::Data, "TooShort", "volatility needs at least 2 returns");
    return stats::sample_std(returns) * std::sqrt(periods_per_year);
}

/// Return over volatility with a zero risk-free rate.
inline double sharpe(double annualized_ret, double annualized_vol) {
    if (!(annualized_vol > 0.0)) detail::backtest_error(ErrorKind::Numerical, "ZeroVolatility", "volatility is zero");
    return annualized_ret / annualized_vol;
}

/// min_t (equity_t / max_{u<=t} equity_u - 1); nonpositive.
inline double max_drawdown(std::span<const double> equity) {
    if (equity.empty()) detail::backtest_error(ErrorKind::Data, "EmptySeries", "empty equity curve");
    double peak = equity[0];
    double worst = 0.0;
    for (double e : equity) {
        peak = std::max(peak, e);
        worst = std::min(worst, e / peak - 1.0);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Strategies

enum class StrategyVariant { RotationTop1, Rotation6040, EqualWeightMonthly, BuyHoldSpy, RlPolicy };

/// Short identifier used on the command line and in reports.
constexpr std::string_view strategy_key(StrategyVariant v) {
    switch (v) {
        case StrategyVariant::RotationTop1: return "top1";
        case StrategyVariant::Rotation6040: return "6040";
        case StrategyVariant::EqualWeightMonthly: return "ew";
        case StrategyVariant::BuyHoldSpy: return "spy";
        case StrategyVariant::RlPolicy: return "rl";
    }
    return "?";
}

inline std::optional<StrategyVariant> parse_strategy_key(std::string_view key) {
    for (auto v : {StrategyVariant::RotationTop1, StrategyVariant::Rotation6040, StrategyVariant::EqualWeightMonthly,
                   StrategyVariant::BuyHoldSpy, StrategyVariant::RlPolicy}) {
        if (strategy_key(v) == key) return v;
    }
    return std::nullopt;
}

struct StrategySpec {
    StrategyVariant variant = StrategyVariant::BuyHoldSpy;
    std::optional<RotationRules> rules;    ///< rotation variants
    std::optional<PolicySolution> policy;  ///< RlPolicy
    ActionSet actions;                     ///< RlPolicy

    static StrategySpec rotation_top1(RotationRules r) { return {StrategyVariant::RotationTop1, std::move(r), {}, {}}; }
    static StrategySpec rotation_6040(RotationRules r) { return {StrategyVariant::Rotation6040, std::move(r), {}, {}}; }
    static StrategySpec equal_weight_monthly() { return {StrategyVariant::EqualWeightMonthly, {}, {}, {}}; }
    static StrategySpec buy_hold_spy() { return {StrategyVariant::BuyHoldSpy, {}, {}, {}}; }
    static StrategySpec rl_policy(PolicySolution p, ActionSet a) {
        return {StrategyVariant::RlPolicy, {}, std::move(p), std::move(a)};
    }

    void validate() const {
        const bool rotation =
            variant == StrategyVariant::RotationTop1 || variant == StrategyVariant::Rotation6040;
        if (rotation && !rules) {
            detail::backtest_error(ErrorKind::Usage, "MissingParameters", "rotation strategy needs rotation rules");
        }
        if (variant == StrategyVariant::RlPolicy) {
            if (!policy) detail::backtest_error(ErrorKind::Usage, "MissingParameters", "RL strategy needs a policy");
            for (std::size_t a : policy->policy) {
                if (a >= actions.size()) {
                    detail::backtest_error(ErrorKind::Usage, "MissingParameters", "policy action not in action set");
                }
            }
        }
    }
};

namespace detail {
inline WeightVector unit_weight(Asset a) {
    WeightVector w;
    w.w[index_of(a)] = 1.0;
    return w;
}

inline bool is_cash(const WeightVector& w) { return w.w[0] == 0.0 && w.w[1] == 0.0 && w.w[2] == 0.0; }

inline void check_regime(std::size_t regime, std::size_t n_states) {
    if (regime >= n_states) {
        backtest_error(ErrorKind::Data, "UnknownRegime",
                       "regime " + std::to_string(regime) + " outside 0.." + std::to_string(n_states) + "-1");
    }
}
}  // namespace detail

/// Weights to hold on `date`. `previous` is the drifted holding carried in
/// from the prior day (all zero before the first trade); `previous_date` is
/// the prior trading day, used to detect month starts.
inline WeightVector target_weights(const StrategySpec& strategy, std::size_t regime, const Date& date,
                                   const std::optional<Date>& previous_date, const WeightVector& previous) {
    switch (strategy.variant) {
        case StrategyVariant::RotationTop1: {
            detail::check_regime(regime, strategy.rules->n_states());
            return detail::unit_weight(strategy.rules->per_state[regime].top1);
        }
        case StrategyVariant::Rotation6040: {
            detail::check_regime(regime, strategy.rules->n_states());
            const auto& rule = strategy.rules->per_state[regime];
            WeightVector w;
            w.w[index_of(rule.top1)] = 0.6;
            w.w[index_of(rule.top2)] = 0.4;
            return w;
        }
        case StrategyVariant::RlPolicy: {
            detail::check_regime(regime, strategy.policy->policy.size());
            return strategy.actions[strategy.policy->policy[regime]].weights;
        }
        case StrategyVariant::BuyHoldSpy:
            return detail::is_cash(previous) ? detail::unit_weight(Asset::Spy) : previous;
        case StrategyVariant::EqualWeightMonthly: {
            const bool month_start = !previous_date || previous_date->month() != date.month() ||
                                     previous_date->year() != date.year();
            if (month_start || detail::is_cash(previous)) {
                constexpr double third = 1.0 / 3.0;
                return {{third, third, third}};
            }
            return previous;
        }
    }
    return previous;
}

struct BacktestConfig {
    double train_fraction = 0.7;
    std::size_t execution_lag_days = 1;
    double cost_rate = 0.0;
    double trading_days_per_year = 252.0;
    Observable observable = Observable::DeltaVix;
    double gamma = 0.99;
    RewardMode reward = RewardMode::Current;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            detail::backtest_error(ErrorKind::Usage, "InvalidConfig", "train_fraction must lie in (0, 1)");
        }
        if (!(cost_rate >= 0.0)) detail::backtest_error(ErrorKind::Usage, "InvalidConfig", "cost_rate must be >= 0");
        if (!(trading_days_per_year > 0.0)) {
            detail::backtest_error(ErrorKind::Usage, "InvalidConfig", "trading_days_per_year must be > 0");
        }
    }
};

struct EquityCurve {
    std::vector<Date> dates;
    std::vector<double> equity;   ///< after each day's return; the implicit base is 1.0
    std::vector<double> returns;  ///< daily portfolio simple returns, net of costs
    std::vector<WeightVector> weights;  ///< weights applied to each day's returns
    std::vector<std::size_t> signal;    ///< regime driving each day's weights
    std::vector<double> turnover;
};

struct PerformanceRow {
    std::string strategy;
    double cumulative = 0.0;
    double annualized = 0.0;
    double volatility = 0.0;
    double sharpe = 0.0;  ///< NaN when volatility is zero
    double max_drawdown = 0.0;
};

struct BacktestResult {
    EquityCurve curve;
    PerformanceRow report;
};

inline PerformanceRow performance_row(std::string name, const EquityCurve& curve, double periods_per_year) {
    PerformanceRow row;
    row.strategy = std::move(name);
    row.cumulative = cumulative_return(curve.returns);
    row.annualized = annualized_return(curve.returns, periods_per_year);
    row.volatility = annualized_volatility(curve.returns, periods_per_year);
    row.sharpe = row.volatility > 0.0 ? sharpe(row.annualized, row.volatility)
                                      : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> eq{1.0};
    eq.insert(eq.end(), curve.equity.begin(), curve.equity.end());
    row.max_drawdown = max_drawdown(eq);
    return row;
}

/// Filtered-argmax regime for every row of `observations`. Row t only sees
/// observations 0..t.
inline DiscreteStateSequence realtime_regimes(const GaussianHmm& model, std::span<const double> observations) {
    return row_argmax(forward_filter(model, observations).filtered);
}

/// Real-time regimes restricted to rows [test_start, T).
inline DiscreteStateSequence predict_regimes_realtime(const GaussianHmm& model, std::span<const double> observations,
                                                      std::size_t test_start) {
    if (test_start >= observations.size()) {
        detail::backtest_error(ErrorKind::Usage, "IndexOutOfRange",
                               "test start " + std::to_string(test_start) + " >= " +
                                   std::to_string(observations.size()));
    }
    auto all = realtime_regimes(model, observations);
    all.states.erase(all.states.begin(), all.states.begin() + static_cast<std::ptrdiff_t>(test_start));
    return all;
}

/// Runs one strategy over the out-of-sample segment of `panel`. The weights
/// applied to day t come from the regime predicted on day t - lag; day-t
/// returns are converted to simple returns before aggregation.
inline BacktestResult run_backtest(const AlignedPanel& panel, const StrategySpec& strategy, const GaussianHmm& model,
                                   const BacktestConfig& config) {
    config.validate();
    strategy.validate();
    const std::size_t T = panel.size();
    const std::size_t start = train_length(T, config.train_fraction);
    if (start == 0 || T < start + 2) {
        detail::backtest_error(ErrorKind::Data, "TestWindowTooShort",
                               std::to_string(T) + " rows leave fewer than 2 test days");
    }
    const DiscreteStateSequence regimes = realtime_regimes(model, observable_column(panel, config.observable));

    BacktestResult result;
    EquityCurve& curve = result.curve;
    WeightVector held;  // cash before inception
    double equity = 1.0;
    for (std::size_t t = start; t < T; ++t) {
        const std::size_t signal_day = t >= config.execution_lag_days ? t - config.execution_lag_days : 0;
        const std::size_t regime = regimes.states[signal_day];
        const std::optional<Date> prev_date = t > start ? std::optional<Date>(panel.dates[t - 1]) : std::nullopt;
        const WeightVector target = target_weights(strategy, regime, panel.dates[t], prev_date, held);

        PerAsset<double> simple{};
        double gross = 0.0;
        double turnover = 0.0;
        for (std::size_t a = 0; a < kNumAssets; ++a) {
            simple[a] = std::expm1(panel.log_returns[a][t]);
            gross += target.w[a] * simple[a];
            turnover += std::abs(target.w[a] - held.w[a]);
        }
        const double r = gross - config.cost_rate * turnover;
        equity *= 1.0 + r;

        curve.dates.push_back(panel.dates[t]);
        curve.equity.push_back(equity);
        curve.returns.push_back(r);
        curve.weights.push_back(target);
        curve.signal.push_back(regime);
        curve.turnover.push_back(turnover);

        // Drift the holding with the day's realized returns.
        if (1.0 + gross > 0.0) {
            for (std::size_t a = 0; a < kNumAssets; ++a) held.w[a] = target.w[a] * (1.0 + simple[a]) / (1.0 + gross);
        } else {
            held = target;
        }
    }
    result.report = performance_row(std::string(strategy_key(strategy.variant)), curve, config.trading_days_per_year);
    return result;
}

}  // namespace regime
