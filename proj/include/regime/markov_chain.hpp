#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "regime/error.hpp"

namespace regime {

/// Row-major square matrix of transition probabilities.
class TransitionMatrix {
public:
    TransitionMatrix() = default;
    explicit TransitionMatrix(std::size_t n, double fill = 0.0) : n_(n), p_(n * n, fill) {}

    /// Builds from nested rows; every row must have length rows.size().
    static TransitionMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        TransitionMatrix m(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) {
                detail::fail(ErrorKind::Data, "markov_chain", "NotSquare", "transition rows must be square");
            }
            for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t n_states() const noexcept { return n_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return p_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return p_[i * n_ + j]; }

    std::span<const double> row(std::size_t i) const noexcept { return {p_.data() + i * n_, n_}; }

    std::vector<std::vector<double>> to_rows() const {
        std::vector<std::vector<double>> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i].assign(row(i).begin(), row(i).end());
        return out;
    }

    /// Entries nonnegative and rows summing to one within `tol`.
    bool is_stochastic(double tol = 1e-9) const {
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (double v : row(i)) {
                if (!(v >= 0.0)) return false;
                s += v;
            }
            if (std::abs(s - 1.0) > tol) return false;
        }
        return n_ > 0;
    }

    /// Divides each row by its sum. Used to repair fixtures rounded to a few decimals.
    TransitionMatrix row_normalized() const {
        TransitionMatrix out = *this;
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (double v : row(i)) s += v;
            for (std::size_t j = 0; j < n_; ++j) out(i, j) /= s;
        }
        return out;
    }

    friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> p_;
};

/// States in {0, ..., n_states - 1}.
struct DiscreteStateSequence {
    std::vector<std::size_t> states;
    std::size_t n_states = 0;

    std::size_t size() const noexcept { return states.size(); }
    friend bool operator==(const DiscreteStateSequence&, const DiscreteStateSequence&) = default;
};

/// Quantile bin result: the state sequence plus the N-1 edges used, so later
/// observations can be classified with frozen edges.
struct QuantileBins {
    DiscreteStateSequence sequence;
    std::vector<double> edges;
};

namespace detail {

/// Linear interpolation between order statistics (h = (n-1) p).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Maps v to the smallest bin b with v <= edges[b], else to the last bin.
inline DiscreteStateSequence classify_with_edges(std::span<const double> values, std::span<const double> edges) {
    DiscreteStateSequence out;
    out.n_states = edges.size() + 1;
    out.states.reserve(values.size());
    for (double v : values) {
        const auto it = std::lower_bound(edges.begin(), edges.end(), v);
        out.states.push_back(static_cast<std::size_t>(it - edges.begin()));
    }
    return out;
}

inline QuantileBins quantile_bin(std::span<const double> values, std::size_t n_bins) {
    if (n_bins < 2 || values.size() < n_bins) {
        detail::fail(ErrorKind::Data, "markov_chain", "TooFewValues",
                     std::to_string(values.size()) + " values for " + std::to_string(n_bins) + " bins");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    QuantileBins out;
    for (std::size_t k = 1; k < n_bins; ++k) {
        out.edges.push_back(
            detail::quantile_sorted(sorted, static_cast<double>(k) / static_cast<double>(n_bins)));
    }
    out.sequence = classify_with_edges(values, out.edges);
    return out;
}

/// p_ij = n_ij / sum_k n_ik. Rows of states never departed from are uniform.
inline TransitionMatrix estimate_transition_mle(const DiscreteStateSequence& seq) {
    if (seq.size() < 2) detail::fail(ErrorKind::Data, "markov_chain", "TooShort", "need at least 2 states");
    const std::size_t n = seq.n_states;
    std::vector<double> counts(n * n, 0.0);
    for (std::size_t t = 1; t < seq.size(); ++t) {
        const auto from = seq.states[t - 1];
        const auto to = seq.states[t];
        if (from >= n || to >= n) {
            detail::fail(ErrorKind::Data, "markov_chain", "StateOutOfRange", "state index >= n_states");
        }
        counts[from * n + to] += 1.0;
    }
    TransitionMatrix p(n);
    for (std::size_t i = 0; i < n; ++i) {
        double departures = 0.0;
        for (std::size_t j = 0; j < n; ++j) departures += counts[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
            p(i, j) = departures > 0.0 ? counts[i * n + j] / departures : 1.0 / static_cast<double>(n);
        }
    }
    return p;
}

/// Power iteration pi <- pi P from the uniform distribution.
inline std::vector<double> stationary_distribution(const TransitionMatrix& p, double tol = 1e-12,
                                                   std::size_t max_iterations = 100'000) {
    const std::size_t n = p.n_states();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * p(i, j);
        }
        double s = 0.0;
        for (double v : next) s += v;
        double delta = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            next[j] /= s;
            delta = std::max(delta, std::abs(next[j] - pi[j]));
        }
        pi.swap(next);
        if (delta < tol) return pi;
    }
    detail::fail(ErrorKind::Numerical, "markov_chain", "NoConvergence",
                 "power iteration did not converge in " + std::to_string(max_iterations) + " iterations");
}

/// Draws one index from a discrete distribution with a uniform variate.
inline std::size_t sample_index(std::span<const double> probs, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

/// Simulates `length` states of the chain starting from `start`.
template <typename Rng>
DiscreteStateSequence simulate_chain(const TransitionMatrix& p, std::size_t start, std::size_t length, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    DiscreteStateSequence out;
    out.n_states = p.n_states();
    out.states.reserve(length);
    std::size_t s = start;
    for (std::size_t t = 0; t < length; ++t) {
        out.states.push_back(s);
        s = sample_index(p.row(s), unif(rng));
    }
    return out;
}

}  // namespace regime
