#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regime/backtest.hpp"
#include "regime/error.hpp"
#include "regime/hmm.hpp"
#include "regime/io.hpp"
#include "regime/market_data.hpp"
#include "regime/markov_chain.hpp"
#include "regime/regime_analysis.hpp"
#include "regime/rl_allocator.hpp"

/// End-to-end orchestration behind the `regime` command line tool.
namespace regime::app {

namespace fs = std::filesystem;

namespace detail {
[[noreturn]] inline void usage_error(std::string_view code, const std::string& message) {
    regime::detail::fail(ErrorKind::Usage, "cli_app", code, message);
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto t = regime::detail::trim(item);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& value) {
    const auto v = regime::detail::parse_double(value);
    if (!v || !std::isfinite(*v)) usage_error("InvalidValue", key + ": expected a number, got `" + value + "`");
    return *v;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto t = regime::detail::trim(value);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
        usage_error("InvalidValue", key + ": expected a nonnegative integer, got `" + value + "`");
    }
    return v;
}
}  // namespace detail

/// Every knob of a run. Populated from a `key = value` file, then from
/// command-line overrides, both through set().
struct RunConfig {
    std::string data_dir = "data";
    std::optional<std::string> tlt, gld, spy, vix;  ///< default to <data_dir>/<symbol>.csv
    Observable observable = Observable::DeltaVix;
    std::vector<std::size_t> states{2, 3};
    EmConfig em;
    std::size_t mc_bins = 3;
    std::size_t vol_window = 30;
    BacktestConfig backtest;
    std::vector<StrategyVariant> strategies{StrategyVariant::RlPolicy, StrategyVariant::RotationTop1,
                                            StrategyVariant::Rotation6040, StrategyVariant::EqualWeightMonthly,
                                            StrategyVariant::BuyHoldSpy};
    std::string out_dir = "out";
    std::optional<std::string> model_path;

    fs::path path_for(const std::optional<std::string>& explicit_path, const char* symbol) const {
        return explicit_path ? fs::path(*explicit_path) : fs::path(data_dir) / (std::string(symbol) + ".csv");
    }

    void set(const std::string& key, const std::string& value) {
        using detail::to_double;
        using detail::to_uint;
        if (key == "data_dir") {
            data_dir = value;
        } else if (key == "tlt") {
            tlt = value;
        } else if (key == "gld") {
            gld = value;
        } else if (key == "spy") {
            spy = value;
        } else if (key == "vix") {
            vix = value;
        } else if (key == "observable") {
            if (value == "dvix") observable = Observable::DeltaVix;
            else if (value == "spy_logret") observable = Observable::SpyLogReturn;
            else detail::usage_error("InvalidValue", "observable must be dvix or spy_logret");
        } else if (key == "states") {
            states.clear();
            for (const auto& s : detail::split_list(value)) {
                const auto n = to_uint(key, s);
                if (n < 1 || n > 10) detail::usage_error("InvalidValue", "states must lie in 1..10");
                states.push_back(n);
            }
            if (states.empty()) detail::usage_error("InvalidValue", "states list is empty");
        } else if (key == "tolerance") {
            em.tolerance = to_double(key, value);
            if (!(em.tolerance > 0.0)) detail::usage_error("InvalidValue", "tolerance must be > 0");
        } else if (key == "max_iterations") {
            em.max_iterations = to_uint(key, value);
            if (em.max_iterations == 0) detail::usage_error("InvalidValue", "max_iterations must be >= 1");
        } else if (key == "restarts") {
            em.restarts = to_uint(key, value);
            if (em.restarts == 0) detail::usage_error("InvalidValue", "restarts must be >= 1");
        } else if (key == "seed") {
            em.seed = to_uint(key, value);
        } else if (key == "mc_bins") {
            mc_bins = to_uint(key, value);
            if (mc_bins < 2) detail::usage_error("InvalidValue", "mc_bins must be >= 2");
        } else if (key == "vol_window") {
            vol_window = to_uint(key, value);
            if (vol_window < 2) detail::usage_error("InvalidValue", "vol_window must be >= 2");
        } else if (key == "train_fraction") {
            backtest.train_fraction = to_double(key, value);
            if (!(backtest.train_fraction > 0.0 && backtest.train_fraction < 1.0)) {
                detail::usage_error("InvalidValue", "train_fraction must lie in (0, 1)");
            }
        } else if (key == "lag") {
            backtest.execution_lag_days = to_uint(key, value);
        } else if (key == "gamma") {
            backtest.gamma = to_double(key, value);
            if (!(backtest.gamma >= 0.0 && backtest.gamma < 1.0)) detail::usage_error("InvalidValue", "gamma must lie in [0, 1)");
        } else if (key == "reward") {
            if (value == "current") backtest.reward = RewardMode::Current;
            else if (value == "next") backtest.reward = RewardMode::Next;
            else detail::usage_error("InvalidValue", "reward must be current or next");
        } else if (key == "cost") {
            backtest.cost_rate = to_double(key, value);
            if (!(backtest.cost_rate >= 0.0)) detail::usage_error("InvalidValue", "cost must be >= 0");
        } else if (key == "trading_days") {
            backtest.trading_days_per_year = static_cast<double>(to_uint(key, value));
            if (backtest.trading_days_per_year == 0.0) detail::usage_error("InvalidValue", "trading_days must be >= 1");
        } else if (key == "strategies") {
            strategies.clear();
            for (const auto& s : detail::split_list(value)) {
                const auto v = parse_strategy_key(s);
                if (!v) detail::usage_error("InvalidValue", "unknown strategy `" + s + "` (top1,6040,ew,spy,rl)");
                strategies.push_back(*v);
            }
            if (strategies.empty()) detail::usage_error("InvalidValue", "strategies list is empty");
        } else if (key == "out") {
            out_dir = value;
        } else if (key == "model") {
            model_path = value;
        } else {
            detail::usage_error("UnknownKey", "unknown configuration key `" + key + "`");
        }
    }

    /// Reads `key = value` lines; `#` starts a comment.
    void load_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) regime::detail::fail(ErrorKind::Data, "cli_app", "FileNotFound", path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto text = regime::detail::trim(line);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string_view::npos) {
                detail::usage_error("MalformedConfig", path.string() + ":" + std::to_string(line_no) + ": expected key = value");
            }
            set(std::string(regime::detail::trim(text.substr(0, eq))), std::string(regime::detail::trim(text.substr(eq + 1))));
        }
    }
};

inline AlignedPanel load_panel(const RunConfig& cfg) {
    const auto tlt = load_price_csv(cfg.path_for(cfg.tlt, "tlt"), "TLT");
    const auto gld = load_price_csv(cfg.path_for(cfg.gld, "gld"), "GLD");
    const auto spy = load_price_csv(cfg.path_for(cfg.spy, "spy"), "SPY");
    const auto vix = load_price_csv(cfg.path_for(cfg.vix, "vix"), "VIX");
    return build_panel(tlt, gld, spy, vix);
}

struct MarkovChainFit {
    QuantileBins bins;
    TransitionMatrix transition;
    std::vector<double> stationary;
};

inline MarkovChainFit fit_markov_chain(const AlignedPanel& panel, std::size_t n_bins) {
    MarkovChainFit fit;
    fit.bins = quantile_bin(panel.delta_vix, n_bins);
    fit.transition = estimate_transition_mle(fit.bins.sequence);
    fit.stationary = stationary_distribution(fit.transition);
    return fit;
}

/// EM fits for every candidate state count, plus the BIC selection.
struct ModelFits {
    std::vector<EmReport> candidates;
    ModelSelection selection;
    std::size_t n_obs = 0;

    const EmReport& chosen() const { return candidates[selection.chosen]; }
};

inline ModelFits fit_models(std::span<const double> obs, const std::vector<std::size_t>& states, const EmConfig& em) {
    ModelFits fits;
    fits.n_obs = obs.size();
    for (std::size_t n : states) fits.candidates.push_back(em_fit(obs, n, em));
    fits.selection = select_model(fits.candidates, obs.size());
    return fits;
}

struct RegimeAnalysis {
    DiscreteStateSequence path;  ///< Viterbi
    RegimeStats stats;
    RotationRules rules;
};

inline RegimeAnalysis analyze_regimes(const AlignedPanel& panel, const GaussianHmm& model, Observable observable) {
    RegimeAnalysis out;
    out.path = viterbi(model, observable_column(panel, observable));
    out.stats = conditional_stats(panel, out.path);
    out.rules = derive_rotation_rules(out.stats);
    return out;
}

struct MdpSolution {
    ActionSet actions;
    RewardTable reward;
    PolicySolution solution;
};

inline MdpSolution solve_regime_mdp(const RegimeStats& stats, const GaussianHmm& model, double gamma, RewardMode mode) {
    MdpSolution out;
    out.actions = default_action_set();
    out.reward = build_reward_table(stats, out.actions, mode, &model.transition);
    const MdpModel mdp{model.transition, out.reward, gamma};
    out.solution = policy_iteration(mdp);
    return out;
}

/// Everything the out-of-sample evaluation produces. Models, statistics and
/// the policy come from the training prefix only.
struct BacktestRun {
    std::size_t train_rows = 0;
    ModelFits fits;
    RegimeAnalysis analysis;
    MdpSolution mdp;
    std::vector<BacktestResult> results;
};

inline StrategySpec make_strategy(StrategyVariant v, const RegimeAnalysis& analysis, const MdpSolution& mdp) {
    switch (v) {
        case StrategyVariant::RotationTop1: return StrategySpec::rotation_top1(analysis.rules);
        case StrategyVariant::Rotation6040: return StrategySpec::rotation_6040(analysis.rules);
        case StrategyVariant::EqualWeightMonthly: return StrategySpec::equal_weight_monthly();
        case StrategyVariant::BuyHoldSpy: return StrategySpec::buy_hold_spy();
        case StrategyVariant::RlPolicy: return StrategySpec::rl_policy(mdp.solution, mdp.actions);
    }
    return StrategySpec::buy_hold_spy();
}

inline BacktestRun run_out_of_sample(const AlignedPanel& panel, const RunConfig& cfg) {
    BacktestRun run;
    const auto [train, test] = chronological_split(panel, cfg.backtest.train_fraction);
    run.train_rows = train.size();
    run.fits = fit_models(observable_column(train, cfg.observable), cfg.states, cfg.em);
    const GaussianHmm& model = run.fits.chosen().fitted;
    run.analysis = analyze_regimes(train, model, cfg.observable);
    run.mdp = solve_regime_mdp(run.analysis.stats, model, cfg.backtest.gamma, cfg.backtest.reward);
    BacktestConfig bt = cfg.backtest;
    bt.observable = cfg.observable;
    for (StrategyVariant v : cfg.strategies) {
        run.results.push_back(run_backtest(panel, make_strategy(v, run.analysis, run.mdp), model, bt));
    }
    return run;
}

// ---------------------------------------------------------------------------
// Artifact writing

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) regime::detail::fail(ErrorKind::Data, "cli_app", "WriteFailed", path.string());
    out << text;
}

template <typename Writer>
std::string render(Writer&& w) {
    std::ostringstream ss;
    w(ss);
    return ss.str();
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// File names written by `pipeline`, in order.
inline const std::vector<std::string>& pipeline_artifacts() {
    static const std::vector<std::string> names{
        "panel.csv",          "markov_chain.json",   "model_selection.csv",    "hmm.json",
        "regime_stats.csv",   "rotation_rules.csv",  "mdp_policy.json",        "mdp_policy.csv",
        "backtest_report.csv",
    };
    return names;
}

inline std::string equity_file_name(StrategyVariant v) { return "equity_" + std::string(strategy_key(v)) + ".csv"; }

/// Runs ingestion through backtest and writes every artifact under out_dir.
/// Returns the paths written, in order.
inline std::vector<fs::path> cmd_pipeline(const RunConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const AlignedPanel panel = load_panel(cfg);
    const MarkovChainFit mc = fit_markov_chain(panel, cfg.mc_bins);
    const BacktestRun run = run_out_of_sample(panel, cfg);
    const EmReport& chosen = run.fits.chosen();

    std::vector<std::pair<std::string, std::string>> files;
    files.emplace_back("panel.csv", render([&](std::ostream& o) { io::write_panel_csv(o, panel); }));
    files.emplace_back("markov_chain.json", dump(io::markov_chain_json(mc.bins.edges, mc.transition, mc.stationary)));
    files.emplace_back("model_selection.csv",
                       render([&](std::ostream& o) { io::write_selection_csv(o, run.fits.selection); }));
    files.emplace_back("hmm.json", dump(io::hmm_json(chosen.fitted, chosen.log_likelihood(), run.fits.n_obs)));
    files.emplace_back("regime_stats.csv",
                       render([&](std::ostream& o) { io::write_regime_stats_csv(o, run.analysis.stats); }));
    files.emplace_back("rotation_rules.csv",
                       render([&](std::ostream& o) { io::write_rotation_rules_csv(o, run.analysis.rules); }));
    files.emplace_back("mdp_policy.json", dump(io::policy_json(run.mdp.solution, run.mdp.reward)));
    files.emplace_back("mdp_policy.csv",
                       render([&](std::ostream& o) { io::write_policy_csv(o, run.mdp.solution, run.mdp.actions); }));
    std::vector<PerformanceRow> rows;
    for (const auto& r : run.results) rows.push_back(r.report);
    files.emplace_back("backtest_report.csv", render([&](std::ostream& o) { io::write_report_csv(o, rows); }));
    for (std::size_t i = 0; i < run.results.size(); ++i) {
        files.emplace_back(equity_file_name(cfg.strategies[i]),
                           render([&](std::ostream& o) { io::write_equity_csv(o, run.results[i].curve); }));
    }

    // Single writer, after all computation has finished.
    std::vector<fs::path> written;
    for (const auto& [name, text] : files) {
        write_text(out / name, text);
        written.push_back(out / name);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Plot data

namespace detail {

inline void plot_row(std::ostream& o, const std::string& date, const std::string& series, double value) {
    o << date << ',' << series << ',' << io::num(value) << '\n';
}

inline GaussianHmm load_model_prerequisite(const RunConfig& cfg) {
    const fs::path path = cfg.model_path ? fs::path(*cfg.model_path) : fs::path(cfg.out_dir) / "hmm.json";
    std::ifstream in(path);
    if (!in) regime::detail::fail(ErrorKind::Data, "cli_app", "MissingPrerequisite", path.string() + " not found");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        regime::detail::fail(ErrorKind::Data, "cli_app", "MissingPrerequisite", path.string() + ": " + e.what());
    }
    return io::hmm_from_json(j);
}

inline std::vector<std::pair<std::string, std::string>> load_equity_prerequisite(const fs::path& path) {
    std::ifstream in(path);
    if (!in) regime::detail::fail(ErrorKind::Data, "cli_app", "MissingPrerequisite", path.string() + " not found");
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    }
    return rows;
}

}  // namespace detail

/// Long-format `date,series,value` data behind figures 1 to 11. Rows without
/// a natural date (correlations, per-regime moments) leave the date empty.
inline std::string cmd_emit_plot_data(const RunConfig& cfg, int figure) {
    if (figure < 1 || figure > 11) {
        regime::detail::fail(ErrorKind::Usage, "cli_app", "UnknownFigure", "figure " + std::to_string(figure) + " (expected 1..11)");
    }
    std::ostringstream o;
    o << "date,series,value\n";

    if (figure >= 10) {
        std::vector<StrategyVariant> wanted = cfg.strategies;
        if (figure == 11) {
            wanted = {StrategyVariant::RlPolicy, StrategyVariant::RotationTop1, StrategyVariant::Rotation6040};
        }
        for (StrategyVariant v : wanted) {
            for (const auto& [date, value] :
                 detail::load_equity_prerequisite(fs::path(cfg.out_dir) / equity_file_name(v))) {
                o << date << ',' << strategy_key(v) << ',' << value << '\n';
            }
        }
        return o.str();
    }

    // Check prerequisites before loading data so the right error surfaces.
    std::optional<GaussianHmm> model;
    if (figure >= 7) model = detail::load_model_prerequisite(cfg);
    const AlignedPanel panel = load_panel(cfg);
    const auto date = [&](std::size_t t) { return format_date(panel.dates[t]); };

    switch (figure) {
        case 1:
            for (std::size_t t = 0; t < panel.size(); ++t) {
                for (Asset a : kAssets) detail::plot_row(o, date(t), std::string(asset_name(a)), panel.returns(a)[t]);
            }
            break;
        case 2:
        case 4: {
            const std::vector<Asset> assets =
                figure == 2 ? std::vector<Asset>(kAssets.begin(), kAssets.end()) : std::vector<Asset>{Asset::Spy};
            for (Asset a : assets) {
                for (const auto& dv : rolling_volatility(panel.column_series(a), cfg.vol_window)) {
                    detail::plot_row(o, format_date(dv.date), std::string(asset_name(a)), dv.value);
                }
            }
            break;
        }
        case 3: {
            const auto corr = correlation_matrix(panel);
            for (Asset a : kAssets) {
                for (Asset b : kAssets) {
                    detail::plot_row(o, "", std::string(asset_name(a)) + "_" + std::string(asset_name(b)),
                                     corr[index_of(a)][index_of(b)]);
                }
            }
            break;
        }
        case 5:
            for (std::size_t t = 0; t < panel.size(); ++t) detail::plot_row(o, date(t), "dVIX", panel.delta_vix[t]);
            break;
        case 6:
            for (std::size_t t = 0; t < panel.size(); ++t) {
                detail::plot_row(o, date(t), "VIX_logret", (*panel.vix_log_return)[t]);
            }
            break;
        case 7: {
            const auto path = viterbi(*model, observable_column(panel, cfg.observable));
            for (std::size_t t = 0; t < panel.size(); ++t) {
                detail::plot_row(o, date(t), "state", static_cast<double>(path.states[t]));
            }
            break;
        }
        case 8: {
            const auto obs = observable_column(panel, cfg.observable);
            const auto smooth = backward_smooth(*model, forward_filter(*model, obs));
            for (std::size_t t = 0; t < panel.size(); ++t) {
                for (std::size_t s = 0; s < model->n_states(); ++s) {
                    detail::plot_row(o, date(t), "state" + std::to_string(s), smooth.smoothed(t, s));
                }
            }
            break;
        }
        case 9: {
            const auto path = viterbi(*model, observable_column(panel, cfg.observable));
            const auto stats = conditional_stats(panel, path);
            for (std::size_t s = 0; s < stats.n_states(); ++s) {
                if (!stats.present(s)) continue;
                for (Asset a : kAssets) {
                    const std::string key = "state" + std::to_string(s) + "_" + std::string(asset_name(a));
                    detail::plot_row(o, "", key + "_mean", stats.per_state[s]->mean[index_of(a)]);
                    detail::plot_row(o, "", key + "_std", stats.per_state[s]->std[index_of(a)]);
                }
            }
            break;
        }
        default:
            break;
    }
    return o.str();
}

}  // namespace regime::app
