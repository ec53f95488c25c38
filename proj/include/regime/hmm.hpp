#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "regime/error.hpp"
#include "regime/markov_chain.hpp"
#include "regime/stats.hpp"

namespace regime {

namespace detail {
[[noreturn]] inline void hmm_error(ErrorKind kind, std::string_view code, const std::string& message) {
    fail(kind, "hmm", code, message);
}
}  // namespace detail

/// Dense T x N table of per-time, per-state probabilities.
class StateTable {
public:
    StateTable() = default;
    StateTable(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), v_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t t, std::size_t i) noexcept { return v_[t * cols_ + i]; }
    double operator()(std::size_t t, std::size_t i) const noexcept { return v_[t * cols_ + i]; }

    std::span<double> row(std::size_t t) noexcept { return {v_.data() + t * cols_, cols_}; }
    std::span<const double> row(std::size_t t) const noexcept { return {v_.data() + t * cols_, cols_}; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

/// Univariate Gaussian-emission HMM.
struct GaussianHmm {
    std::vector<double> initial;
    TransitionMatrix transition;
    std::vector<double> means;
    std::vector<double> stds;

    std::size_t n_states() const noexcept { return means.size(); }

    /// Throws InvalidModel if the shapes or probability constraints do not hold.
    void validate() const {
        const std::size_t n = n_states();
        if (n == 0 || initial.size() != n || stds.size() != n || transition.n_states() != n) {
            detail::hmm_error(ErrorKind::Data, "InvalidModel", "inconsistent state counts");
        }
        double s = 0.0;
        for (double p : initial) {
            if (!(p >= 0.0)) detail::hmm_error(ErrorKind::Data, "InvalidModel", "negative initial probability");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9) detail::hmm_error(ErrorKind::Data, "InvalidModel", "initial does not sum to 1");
        if (!transition.is_stochastic()) {
            detail::hmm_error(ErrorKind::Data, "InvalidModel", "transition matrix is not stochastic");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!(stds[i] > 0.0) || !std::isfinite(stds[i]) || !std::isfinite(means[i])) {
                detail::hmm_error(ErrorKind::Data, "InvalidModel", "state parameters must be finite, std > 0");
            }
        }
    }
};

inline double gaussian_log_density(double x, double mean, double std) {
    const double z = (x - mean) / std;
    return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Output of the scaled forward (Hamilton) filter.
struct FilterResult {
    StateTable predicted;  ///< P(S_t = i | y_0..y_{t-1}); row 0 is the initial distribution
    StateTable filtered;   ///< P(S_t = i | y_0..y_t)
    std::vector<double> log_normalizers;  ///< ln c_t with c_t = sum_j predicted(t,j) f(y_t | j)
    double log_likelihood = 0.0;
};

struct SmoothedResult {
    StateTable smoothed;  ///< P(S_t = i | y_0..y_{T-1})
};

namespace detail {

inline void check_finite(std::span<const double> obs) {
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (!std::isfinite(obs[t])) {
            hmm_error(ErrorKind::Data, "NonFiniteObservation", "observation " + std::to_string(t) + " is not finite");
        }
    }
}

}  // namespace detail

/// Scaled forward recursion. Densities are shifted by their per-step maximum
/// in log space before exponentiating, so filtered rows are exact and the
/// normalizer is carried as a logarithm.
inline FilterResult forward_filter(const GaussianHmm& model, std::span<const double> obs) {
    model.validate();
    if (obs.empty()) detail::hmm_error(ErrorKind::Data, "TooFewObservations", "empty observation sequence");
    detail::check_finite(obs);

    const std::size_t n = model.n_states();
    const std::size_t T = obs.size();
    FilterResult out{StateTable(T, n), StateTable(T, n), std::vector<double>(T), 0.0};
    std::vector<double> logd(n);

    for (std::size_t t = 0; t < T; ++t) {
        auto pred = out.predicted.row(t);
        if (t == 0) {
            std::copy(model.initial.begin(), model.initial.end(), pred.begin());
        } else {
            const auto prev = out.filtered.row(t - 1);
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += prev[i] * model.transition(i, j);
                pred[j] = s;
            }
        }
        double shift = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            logd[i] = gaussian_log_density(obs[t], model.means[i], model.stds[i]);
            if (pred[i] > 0.0) shift = std::max(shift, logd[i]);
        }
        auto filt = out.filtered.row(t);
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            filt[i] = pred[i] > 0.0 ? pred[i] * std::exp(logd[i] - shift) : 0.0;
            c += filt[i];
        }
        if (!(c > 0.0) || !std::isfinite(c)) {
            detail::hmm_error(ErrorKind::Numerical, "NumericalUnderflow",
                              "all weighted densities vanish at t = " + std::to_string(t));
        }
        for (double& f : filt) f /= c;
        out.log_normalizers[t] = shift + std::log(c);
        out.log_likelihood += out.log_normalizers[t];
    }
    return out;
}

/// Discrete-state backward smoother:
/// xi_{t|T}(i) = xi_{t|t}(i) sum_j p_ij xi_{t+1|T}(j) / xi_{t+1|t}(j), with 0/0 = 0.
inline SmoothedResult backward_smooth(const GaussianHmm& model, const FilterResult& filter) {
    const std::size_t T = filter.filtered.rows();
    const std::size_t n = filter.filtered.cols();
    SmoothedResult out{StateTable(T, n)};
    if (T == 0) return out;
    std::copy(filter.filtered.row(T - 1).begin(), filter.filtered.row(T - 1).end(), out.smoothed.row(T - 1).begin());

    std::vector<double> ratio(n);
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t j = 0; j < n; ++j) {
            const double pred = filter.predicted(t + 1, j);
            ratio[j] = pred > 0.0 ? out.smoothed(t + 1, j) / pred : 0.0;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += model.transition(i, j) * ratio[j];
            out.smoothed(t, i) = filter.filtered(t, i) * s;
            total += out.smoothed(t, i);
        }
        // Exact arithmetic gives total == 1; renormalize away the rounding.
        for (std::size_t i = 0; i < n; ++i) out.smoothed(t, i) /= total;
    }
    return out;
}

/// Sum over t of P(S_t = i, S_{t+1} = j | all data).
inline TransitionMatrix expected_transition_counts(const GaussianHmm& model, const FilterResult& filter,
                                                   const SmoothedResult& smooth) {
    const std::size_t T = filter.filtered.rows();
    const std::size_t n = model.n_states();
    TransitionMatrix counts(n);
    std::vector<double> ratio(n);
    for (std::size_t t = 0; t + 1 < T; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            const double pred = filter.predicted(t + 1, j);
            ratio[j] = pred > 0.0 ? smooth.smoothed(t + 1, j) / pred : 0.0;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double f = filter.filtered(t, i);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) counts(i, j) += f * model.transition(i, j) * ratio[j];
        }
    }
    return counts;
}

namespace detail {
inline double safe_log(double p) {
    return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}
}  // namespace detail

/// ln pi_{s_0} + sum ln p_{s_{t-1} s_t} + sum ln f(y_t | s_t).
inline double joint_log_probability(const GaussianHmm& model, std::span<const double> obs,
                                    std::span<const std::size_t> path) {
    double lp = detail::safe_log(model.initial[path[0]]);
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (t > 0) lp += detail::safe_log(model.transition(path[t - 1], path[t]));
        lp += gaussian_log_density(obs[t], model.means[path[t]], model.stds[path[t]]);
    }
    return lp;
}

/// Most probable state path, in log space; ties go to the lower state index.
inline DiscreteStateSequence viterbi(const GaussianHmm& model, std::span<const double> obs) {
    model.validate();
    if (obs.empty()) detail::hmm_error(ErrorKind::Data, "TooFewObservations", "empty observation sequence");
    detail::check_finite(obs);

    const std::size_t n = model.n_states();
    const std::size_t T = obs.size();
    std::vector<double> log_p(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) log_p[i * n + j] = detail::safe_log(model.transition(i, j));
    }

    std::vector<double> delta(n);
    std::vector<double> next(n);
    std::vector<std::size_t> back(T * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = detail::safe_log(model.initial[i]) + gaussian_log_density(obs[0], model.means[i], model.stds[i]);
    }
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t best = 0;
            double best_v = delta[0] + log_p[j];
            for (std::size_t i = 1; i < n; ++i) {
                const double v = delta[i] + log_p[i * n + j];
                if (v > best_v) {
                    best_v = v;
                    best = i;
                }
            }
            back[t * n + j] = best;
            next[j] = best_v + gaussian_log_density(obs[t], model.means[j], model.stds[j]);
        }
        delta.swap(next);
    }

    DiscreteStateSequence path;
    path.n_states = n;
    path.states.assign(T, 0);
    std::size_t s = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (delta[i] > delta[s]) s = i;
    }
    path.states[T - 1] = s;
    for (std::size_t t = T - 1; t > 0; --t) {
        s = back[t * n + s];
        path.states[t - 1] = s;
    }
    return path;
}

/// Argmax of each row, ties to the lower index.
inline DiscreteStateSequence row_argmax(const StateTable& table) {
    DiscreteStateSequence out;
    out.n_states = table.cols();
    out.states.reserve(table.rows());
    for (std::size_t t = 0; t < table.rows(); ++t) {
        const auto r = table.row(t);
        out.states.push_back(static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
    return out;
}

/// Reorders states by ascending std (stable for equal stds).
inline GaussianHmm relabel_by_std(const GaussianHmm& model) {
    const std::size_t n = model.n_states();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return model.stds[a] < model.stds[b]; });
    GaussianHmm out;
    out.initial.resize(n);
    out.means.resize(n);
    out.stds.resize(n);
    out.transition = TransitionMatrix(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.initial[k] = model.initial[order[k]];
        out.means[k] = model.means[order[k]];
        out.stds[k] = model.stds[order[k]];
        for (std::size_t l = 0; l < n; ++l) out.transition(k, l) = model.transition(order[k], order[l]);
    }
    return out;
}

/// Simulated hidden path and emissions.
struct HmmSample {
    DiscreteStateSequence states;
    std::vector<double> observations;
};

template <typename Rng>
HmmSample sample_hmm(const GaussianHmm& model, std::size_t length, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    HmmSample out;
    out.states.n_states = model.n_states();
    std::size_t s = sample_index(model.initial, unif(rng));
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) s = sample_index(model.transition.row(s), unif(rng));
        out.states.states.push_back(s);
        out.observations.push_back(model.means[s] + model.stds[s] * normal(rng));
    }
    return out;
}

struct EmConfig {
    double tolerance = 1e-6;  ///< relative log-likelihood improvement that ends a run
    std::size_t max_iterations = 500;
    std::size_t restarts = 10;
    std::uint64_t seed = 42;
    double variance_floor = 1e-12;
    double init_jitter = 0.1;  ///< mean jitter, as a fraction of the sample std
};

struct EmReport {
    GaussianHmm fitted;
    std::vector<double> loglik_trace;  ///< log-likelihood of the model entering each E-step
    std::size_t n_iterations = 0;      ///< M-steps performed
    bool converged = false;
    std::size_t n_restarts_used = 0;  ///< non-degenerate restarts compared
    std::uint64_t best_restart_seed = 0;

    double log_likelihood() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

/// splitmix64 step; fans one base seed out into per-restart seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::vector<std::uint64_t> restart_seeds(std::uint64_t base, std::size_t count) {
    std::vector<std::uint64_t> seeds;
    std::uint64_t state = base;
    for (std::size_t r = 0; r < count; ++r) {
        state = splitmix64(state);
        seeds.push_back(state);
    }
    return seeds;
}

namespace detail {

struct RestartOutcome {
    EmReport report;
    bool degenerate = false;
};

inline GaussianHmm initial_guess(std::span<const double> obs, std::size_t n, std::uint64_t seed, double jitter) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> sorted(obs.begin(), obs.end());
    std::sort(sorted.begin(), sorted.end());
    const double sd = std::max(stats::sample_std(obs), 1e-6);

    GaussianHmm m;
    m.initial.assign(n, 1.0 / static_cast<double>(n));
    m.transition = TransitionMatrix(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        m.means.push_back(quantile_sorted(sorted, q) + jitter * sd * normal(rng));
        m.stds.push_back(sd);
        for (std::size_t j = 0; j < n; ++j) {
            m.transition(i, j) = n == 1 ? 1.0 : (i == j ? 0.9 : 0.1 / static_cast<double>(n - 1));
        }
    }
    return m;
}

inline RestartOutcome run_em(std::span<const double> obs, std::size_t n, const EmConfig& cfg, std::uint64_t seed) {
    RestartOutcome out;
    out.report.best_restart_seed = seed;
    GaussianHmm model = initial_guess(obs, n, seed, cfg.init_jitter);
    std::vector<bool> always_floored(n, true);

    FilterResult filter = forward_filter(model, obs);
    out.report.loglik_trace.push_back(filter.log_likelihood);
    const std::size_t T = obs.size();

    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        const SmoothedResult smooth = backward_smooth(model, filter);
        const TransitionMatrix counts = expected_transition_counts(model, filter, smooth);

        GaussianHmm next = model;
        for (std::size_t i = 0; i < n; ++i) next.initial[i] = smooth.smoothed(0, i);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += counts(i, j);
            if (row > 0.0) {
                for (std::size_t j = 0; j < n; ++j) next.transition(i, j) = counts(i, j) / row;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            double w = 0.0;
            double wy = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                w += smooth.smoothed(t, i);
                wy += smooth.smoothed(t, i) * obs[t];
            }
            double var = 0.0;
            if (w > 0.0) {
                next.means[i] = wy / w;
                for (std::size_t t = 0; t < T; ++t) {
                    const double d = obs[t] - next.means[i];
                    var += smooth.smoothed(t, i) * d * d;
                }
                var /= w;
            }
            const bool floored = !(var > cfg.variance_floor);
            if (floored) var = cfg.variance_floor;
            always_floored[i] = always_floored[i] && floored;
            next.stds[i] = std::sqrt(var);
        }

        model = std::move(next);
        filter = forward_filter(model, obs);
        const double prev = out.report.loglik_trace.back();
        out.report.loglik_trace.push_back(filter.log_likelihood);
        out.report.n_iterations = it;
        if (filter.log_likelihood - prev < cfg.tolerance * std::max(std::abs(prev), 1e-300)) {
            out.report.converged = true;
            break;
        }
    }
    out.degenerate = out.report.n_iterations > 0 &&
                     std::any_of(always_floored.begin(), always_floored.end(), [](bool b) { return b; });
    out.report.fitted = relabel_by_std(model);
    return out;
}

}  // namespace detail

/// Baum-Welch EM with seeded multi-start. The restart with the highest final
/// log-likelihood wins (ties to the lower seed); the winner is relabeled by
/// ascending std.
inline EmReport em_fit(std::span<const double> obs, std::size_t n_states, const EmConfig& cfg = {}) {
    if (n_states == 0) detail::hmm_error(ErrorKind::Usage, "InvalidStates", "n_states must be >= 1");
    if (obs.size() < 10 * n_states) {
        detail::hmm_error(ErrorKind::Data, "TooFewObservations",
                          std::to_string(obs.size()) + " observations for " + std::to_string(n_states) +
                              " states (need >= 10 per state)");
    }
    detail::check_finite(obs);

    std::optional<EmReport> best;
    std::size_t used = 0;
    for (std::uint64_t seed : restart_seeds(cfg.seed, std::max<std::size_t>(cfg.restarts, 1))) {
        detail::RestartOutcome outcome;
        try {
            outcome = detail::run_em(obs, n_states, cfg, seed);
        } catch (const Error& e) {
            if (e.code() != "NumericalUnderflow") throw;
            continue;
        }
        if (outcome.degenerate) continue;
        ++used;
        const double ll = outcome.report.log_likelihood();
        if (!best || ll > best->log_likelihood() ||
            (ll == best->log_likelihood() && seed < best->best_restart_seed)) {
            best = std::move(outcome.report);
        }
    }
    if (!best) {
        detail::hmm_error(ErrorKind::Numerical, "AllRestartsDegenerate",
                          "every EM restart collapsed onto the variance floor");
    }
    best->n_restarts_used = used;
    return *best;
}

/// Free parameters of an N-state univariate Gaussian HMM:
/// N means + N variances + N(N-1) transitions + (N-1) initial probabilities.
constexpr std::size_t parameter_count(std::size_t n_states) {
    return n_states * n_states + 2 * n_states - 1;
}

inline double aic(double log_likelihood, std::size_t k) { return 2.0 * static_cast<double>(k) - 2.0 * log_likelihood; }

inline double bic(double log_likelihood, std::size_t k, double n_obs) {
    return static_cast<double>(k) * std::log(n_obs) - 2.0 * log_likelihood;
}

struct SelectionRow {
    std::size_t n_states;
    double log_likelihood;
    std::size_t k;
    double aic;
    double bic;
};

struct ModelSelection {
    std::size_t chosen = 0;  ///< index into the candidate list
    std::vector<SelectionRow> table;
};

/// Minimum-BIC candidate; ties go to fewer states.
inline ModelSelection select_model(std::span<const EmReport> reports, std::size_t n_obs) {
    if (reports.empty()) detail::hmm_error(ErrorKind::Usage, "NoCandidates", "no models to select from");
    ModelSelection out;
    for (std::size_t c = 0; c < reports.size(); ++c) {
        const std::size_t n = reports[c].fitted.n_states();
        const std::size_t k = parameter_count(n);
        const double ll = reports[c].log_likelihood();
        out.table.push_back({n, ll, k, aic(ll, k), bic(ll, k, static_cast<double>(n_obs))});
        const auto& cur = out.table[out.chosen];
        const auto& row = out.table.back();
        if (row.bic < cur.bic || (row.bic == cur.bic && row.n_states < cur.n_states)) out.chosen = c;
    }
    return out;
}

}  // namespace regime
