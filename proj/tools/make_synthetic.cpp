// Writes a regime-switching synthetic market (tlt/gld/spy/vix close CSVs).

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "regime/io.hpp"
#include "regime/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App cli{"Generate synthetic TLT/GLD/SPY/VIX closes from a three-regime model"};
    std::size_t days = 2000;
    std::uint64_t seed = 7;
    std::string out = "data";
    cli.add_option("--days", days, "number of daily returns")->check(CLI::PositiveNumber);
    cli.add_option("--seed", seed, "generator seed");
    cli.add_option("--out", out, "output directory");
    CLI11_PARSE(cli, argc, argv);

    const auto market = regime::simulate_market(regime::stylized_three_regime_spec(), days, seed);
    std::filesystem::create_directories(out);
    for (const auto* s : {&market.tlt, &market.gld, &market.spy, &market.vix}) {
        std::string name = s->symbol();
        for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        std::ofstream f(std::filesystem::path(out) / (name + ".csv"));
        regime::io::write_price_csv(f, *s);
    }
    std::ofstream regimes(std::filesystem::path(out) / "regimes.csv");
    regimes << "date,regime\n";
    const auto dates = market.spy.observations();
    for (std::size_t t = 0; t < market.regimes.size(); ++t) {
        regimes << regime::format_date(dates[t + 1].date) << ',' << market.regimes.states[t] << '\n';
    }
    return 0;
}
