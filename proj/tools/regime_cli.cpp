// Command-line front end: ingest -> Markov chain -> HMM -> regime analysis
// -> MDP -> backtest, plus plot-data emission.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regime/app.hpp"

namespace fs = std::filesystem;
using namespace regime;

namespace {

struct Flag {
    const char* name;
    const char* key;
    const char* help;
};

// Flags shared by every subcommand; each maps onto a RunConfig key.
constexpr Flag kFlags[] = {
    {"--seed", "seed", "base seed for EM restarts"},
    {"--out", "out", "output directory"},
    {"--data-dir", "data_dir", "directory holding tlt.csv, gld.csv, spy.csv, vix.csv"},
    {"--tlt", "tlt", "TLT close CSV"},
    {"--gld", "gld", "GLD close CSV"},
    {"--spy", "spy", "SPY close CSV"},
    {"--vix", "vix", "VIX level CSV"},
    {"--observable", "observable", "HMM observable: dvix | spy_logret"},
    {"--states", "states", "HMM state count(s), e.g. 3 or 2,3"},
    {"--restarts", "restarts", "EM restarts"},
    {"--tolerance", "tolerance", "EM relative log-likelihood tolerance"},
    {"--max-iter", "max_iterations", "EM iteration cap"},
    {"--bins", "mc_bins", "Markov-chain quantile bins"},
    {"--vol-window", "vol_window", "rolling volatility window (days)"},
    {"--train-frac", "train_fraction", "chronological training fraction"},
    {"--lag", "lag", "execution lag in days"},
    {"--gamma", "gamma", "MDP discount factor"},
    {"--reward", "reward", "MDP reward: current | next"},
    {"--cost", "cost", "proportional cost per unit turnover"},
    {"--strategies", "strategies", "comma list of top1,6040,ew,spy,rl"},
    {"--model", "model", "fitted HMM JSON to use instead of fitting"},
};

void write_and_echo(const fs::path& path, const std::string& text) {
    app::write_text(path, text);
    std::cout << text;
}

GaussianHmm model_for(const app::RunConfig& cfg, const AlignedPanel& panel) {
    if (cfg.model_path) {
        std::ifstream in(*cfg.model_path);
        if (!in) regime::detail::fail(ErrorKind::Data, "cli_app", "FileNotFound", *cfg.model_path);
        nlohmann::json j;
        in >> j;
        return io::hmm_from_json(j);
    }
    return app::fit_models(observable_column(panel, cfg.observable), cfg.states, cfg.em).chosen().fitted;
}

int run(int argc, char** argv) {
    CLI::App cli{"Regime-aware allocation: HMM regimes, rotation rules, MDP policy, backtest"};
    cli.require_subcommand(1);
    cli.fallthrough();

    std::string config_path;
    cli.add_option("--config", config_path, "key = value configuration file");
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    for (const auto& f : kFlags) options[f.key] = cli.add_option(f.name, values[f.key], f.help);

    int figure = 0;
    auto* ingest = cli.add_subcommand("ingest", "align the four input series and write panel.csv");
    auto* fit_mc = cli.add_subcommand("fit-mc", "quantile-binned Markov chain on dVIX (JSON)");
    auto* fit_hmm = cli.add_subcommand("fit-hmm", "fit one Gaussian HMM by EM (JSON)");
    auto* select = cli.add_subcommand("select-model", "fit each state count and compare AIC/BIC (CSV)");
    auto* analyze = cli.add_subcommand("analyze", "state-conditional statistics and rotation rules");
    auto* solve = cli.add_subcommand("solve-mdp", "regime MDP solved by policy iteration");
    auto* backtest = cli.add_subcommand("backtest", "out-of-sample backtest with execution lag");
    auto* plot = cli.add_subcommand("emit-plot-data", "long-format CSV behind a figure");
    plot->add_option("--figure", figure, "figure id 1..11")->required();
    auto* pipeline = cli.add_subcommand("pipeline", "run every stage and write all artifacts");
    for (auto* sub : {ingest, fit_mc, fit_hmm, select, analyze, solve, backtest, plot, pipeline}) sub->fallthrough();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR cli_app:Usage: " << e.what() << '\n';
        return 1;
    }

    app::RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& f : kFlags) {
        if (options[f.key]->count() > 0) cfg.set(f.key, values[f.key]);
    }
    const fs::path out(cfg.out_dir);

    if (*pipeline) {
        for (const auto& path : app::cmd_pipeline(cfg)) std::cout << path.string() << '\n';
        return 0;
    }
    if (*plot) {
        std::cout << app::cmd_emit_plot_data(cfg, figure);
        return 0;
    }

    const AlignedPanel panel = app::load_panel(cfg);
    if (*ingest) {
        app::write_text(out / "panel.csv", app::render([&](std::ostream& o) { io::write_panel_csv(o, panel); }));
        std::cout << (out / "panel.csv").string() << '\n';
    } else if (*fit_mc) {
        const auto mc = app::fit_markov_chain(panel, cfg.mc_bins);
        write_and_echo(out / "markov_chain.json",
                       app::dump(io::markov_chain_json(mc.bins.edges, mc.transition, mc.stationary)));
    } else if (*fit_hmm) {
        if (cfg.states.size() != 1) {
            regime::detail::fail(ErrorKind::Usage, "cli_app", "InvalidValue", "fit-hmm takes a single --states N");
        }
        const auto obs = observable_column(panel, cfg.observable);
        const auto report = em_fit(obs, cfg.states.front(), cfg.em);
        write_and_echo(out / "hmm.json", app::dump(io::hmm_json(report.fitted, report.log_likelihood(), obs.size())));
    } else if (*select) {
        const auto fits = app::fit_models(observable_column(panel, cfg.observable), cfg.states, cfg.em);
        write_and_echo(out / "model_selection.csv",
                       app::render([&](std::ostream& o) { io::write_selection_csv(o, fits.selection); }));
    } else if (*analyze) {
        const auto analysis = app::analyze_regimes(panel, model_for(cfg, panel), cfg.observable);
        write_and_echo(out / "regime_stats.csv",
                       app::render([&](std::ostream& o) { io::write_regime_stats_csv(o, analysis.stats); }));
        write_and_echo(out / "rotation_rules.csv",
                       app::render([&](std::ostream& o) { io::write_rotation_rules_csv(o, analysis.rules); }));
    } else if (*solve) {
        const GaussianHmm model = model_for(cfg, panel);
        const auto analysis = app::analyze_regimes(panel, model, cfg.observable);
        const auto mdp = app::solve_regime_mdp(analysis.stats, model, cfg.backtest.gamma, cfg.backtest.reward);
        write_and_echo(out / "mdp_policy.json", app::dump(io::policy_json(mdp.solution, mdp.reward)));
        app::write_text(out / "mdp_policy.csv",
                        app::render([&](std::ostream& o) { io::write_policy_csv(o, mdp.solution, mdp.actions); }));
    } else if (*backtest) {
        const auto run = app::run_out_of_sample(panel, cfg);
        std::vector<PerformanceRow> rows;
        for (const auto& r : run.results) rows.push_back(r.report);
        write_and_echo(out / "backtest_report.csv", app::render([&](std::ostream& o) { io::write_report_csv(o, rows); }));
        for (std::size_t i = 0; i < run.results.size(); ++i) {
            app::write_text(out / app::equity_file_name(cfg.strategies[i]),
                            app::render([&](std::ostream& o) { io::write_equity_csv(o, run.results[i].curve); }));
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const regime::Error& e) {
        std::cerr << "ERROR " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "ERROR cli_app:FilesystemError: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ERROR cli_app:Internal: " << e.what() << '\n';
        return 3;
    }
}
