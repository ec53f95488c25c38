#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "regime/backtest.hpp"
#include "regime/hmm.hpp"
#include "regime/market_data.hpp"
#include "regime/markov_chain.hpp"
#include "regime/regime_analysis.hpp"
#include "regime/rl_allocator.hpp"

namespace regime::io {

using nlohmann::json;

/// 15 significant digits; `nan` for NaN.
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

inline void write_price_csv(std::ostream& out, const PriceSeries& series) {
    out << "date,close\n";
    for (const auto& o : series.observations()) out << format_date(o.date) << ',' << num(o.close) << '\n';
}

inline void write_panel_csv(std::ostream& out, const AlignedPanel& panel) {
    out << "date,tlt_ret,gld_ret,spy_ret,dvix";
    if (panel.vix_log_return) out << ",vix_logret";
    out << '\n';
    for (std::size_t t = 0; t < panel.size(); ++t) {
        out << format_date(panel.dates[t]);
        for (std::size_t a = 0; a < kNumAssets; ++a) out << ',' << num(panel.log_returns[a][t]);
        out << ',' << num(panel.delta_vix[t]);
        if (panel.vix_log_return) out << ',' << num((*panel.vix_log_return)[t]);
        out << '\n';
    }
}

inline json markov_chain_json(const std::vector<double>& edges, const TransitionMatrix& p,
                              const std::vector<double>& stationary) {
    return json{{"edges", edges}, {"transition", p.to_rows()}, {"stationary", stationary}};
}

inline json hmm_json(const GaussianHmm& model, double loglik, std::size_t n_obs) {
    const std::size_t k = parameter_count(model.n_states());
    return json{{"n_states", model.n_states()},
                {"initial", model.initial},
                {"transition", model.transition.to_rows()},
                {"means", model.means},
                {"stds", model.stds},
                {"loglik", loglik},
                {"aic", aic(loglik, k)},
                {"bic", bic(loglik, k, static_cast<double>(n_obs))}};
}

inline GaussianHmm hmm_from_json(const json& j) {
    GaussianHmm m;
    try {
        m.initial = j.at("initial").get<std::vector<double>>();
        m.transition = TransitionMatrix::from_rows(j.at("transition").get<std::vector<std::vector<double>>>());
        m.means = j.at("means").get<std::vector<double>>();
        m.stds = j.at("stds").get<std::vector<double>>();
    } catch (const json::exception& e) {
        detail::fail(ErrorKind::Data, "hmm", "InvalidModel", std::string("model JSON: ") + e.what());
    }
    m.validate();
    return m;
}

inline void write_selection_csv(std::ostream& out, const ModelSelection& sel) {
    out << "n_states,loglik,k,aic,bic\n";
    for (const auto& r : sel.table) {
        out << r.n_states << ',' << num(r.log_likelihood) << ',' << r.k << ',' << num(r.aic) << ',' << num(r.bic)
            << '\n';
    }
}

/// Long format; absent states print `NA` for mean and std.
inline void write_regime_stats_csv(std::ostream& out, const RegimeStats& stats) {
    out << "state,occupancy,asset,mean,std\n";
    for (std::size_t s = 0; s < stats.n_states(); ++s) {
        for (Asset a : kAssets) {
            out << s << ',' << num(stats.occupancy[s]) << ',' << asset_name(a) << ',';
            if (stats.present(s)) {
                out << num(stats.per_state[s]->mean[index_of(a)]) << ',' << num(stats.per_state[s]->std[index_of(a)]);
            } else {
                out << "NA,NA";
            }
            out << '\n';
        }
    }
}

inline void write_rotation_rules_csv(std::ostream& out, const RotationRules& rules) {
    out << "state,top1,top2\n";
    for (std::size_t s = 0; s < rules.n_states(); ++s) {
        out << s << ',' << asset_name(rules.per_state[s].top1) << ',' << asset_name(rules.per_state[s].top2) << '\n';
    }
}

inline json policy_json(const PolicySolution& sol, const RewardTable& reward) {
    return json{{"policy", sol.policy}, {"values", sol.values}, {"reward_table", reward}};
}

inline void write_policy_csv(std::ostream& out, const PolicySolution& sol, const ActionSet& actions) {
    out << "state,action_id,w_tlt,w_gld,w_spy\n";
    for (std::size_t s = 0; s < sol.policy.size(); ++s) {
        const auto& w = actions[sol.policy[s]].weights.w;
        out << s << ',' << sol.policy[s] << ',' << num(w[0]) << ',' << num(w[1]) << ',' << num(w[2]) << '\n';
    }
}

inline void write_report_csv(std::ostream& out, const std::vector<PerformanceRow>& rows) {
    out << "strategy,cumulative,annualized,volatility,sharpe,max_drawdown\n";
    for (const auto& r : rows) {
        out << r.strategy << ',' << num(r.cumulative) << ',' << num(r.annualized) << ',' << num(r.volatility) << ','
            << num(r.sharpe) << ',' << num(r.max_drawdown) << '\n';
    }
}

inline void write_equity_csv(std::ostream& out, const EquityCurve& curve) {
    out << "date,equity\n";
    for (std::size_t t = 0; t < curve.dates.size(); ++t) {
        out << format_date(curve.dates[t]) << ',' << num(curve.equity[t]) << '\n';
    }
}

}  // namespace regime::io
