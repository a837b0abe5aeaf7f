#pragma once

// Shared test helpers: independent oracles (finite differences, exhaustive
// state-path enumeration) and random-model factories. Everything here stays
// deliberately naive; the point is to disagree with the library if the
// library is wrong.

#include <cmath>
#include <functional>
#include <vector>

#include "core/datagen.hpp"
#include "core/inference.hpp"
#include "core/msm_model.hpp"
#include "core/numerics.hpp"

namespace testutil {

inline double central_diff(const std::function<double(double)>& f, double x,
                           double eps = 1e-5) {
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

inline double rel_err(double got, double want) {
    double scale = std::max({1.0, std::fabs(got), std::fabs(want)});
    return std::fabs(got - want) / scale;
}

// scalar normal log-density, written out independently of the library
inline long double normal_logpdf(long double x, long double mean, long double var) {
    const long double log2pi = 1.83787706640934548356065947281L;
    long double r = x - mean;
    return -0.5L * (log2pi + std::log(var)) - 0.5L * r * r / var;
}

// Exhaustive path-enumeration oracle for the MSM likelihood and posteriors:
// iterates every state path (k_0, ..., k_{T-M}), multiplies initial, chain and
// emission densities in extended precision, and accumulates the path sums.
struct EnumerationResult {
    double log_lik = 0.0;
    msm::Mat gamma;           // [(T-M+1) x K]
    std::vector<msm::Mat> xi; // (T-M) slices of [K x K]
};

inline EnumerationResult enumerate_posteriors(const msm::MsmModel& model,
                                              const msm::SequenceView& x) {
    const msm::ModelSpec& s = model.spec;
    const std::size_t K = s.n_states;
    const std::size_t K0 = s.initial_states();
    const std::size_t n_latents = x.length() - s.lag + 1;

    // per-step emission densities, straight from the definition
    std::vector<std::vector<long double>> init_logp(K0);
    {
        msm::Vec first(s.window_dim());
        for (std::size_t t = 0; t < s.lag; ++t)
            for (std::size_t i = 0; i < s.d; ++i) first[t * s.d + i] = x.at(t)[i];
        for (std::size_t k = 0; k < K0; ++k) {
            long double acc = 0.0L;
            for (std::size_t i = 0; i < s.window_dim(); ++i)
                acc += normal_logpdf(first[i], model.initial.mean[k][i],
                                     std::exp((long double)model.initial.log_var[k][i]));
            init_logp[k] = {acc};
        }
    }
    std::vector<std::vector<long double>> emis(x.length() - s.lag,
                                               std::vector<long double>(K));
    {
        msm::Vec window(s.window_dim());
        for (std::size_t t = s.lag; t < x.length(); ++t) {
            msm::fill_window(x, t, s.lag, window);
            for (std::size_t k = 0; k < K; ++k) {
                msm::Vec mean = model.networks[k].forward(window);
                long double acc = 0.0L;
                for (std::size_t i = 0; i < s.d; ++i)
                    acc += normal_logpdf(x.at(t)[i], mean[i],
                                         std::exp((long double)model.networks[k].log_var()[i]));
                emis[t - s.lag][k] = acc;
            }
        }
    }

    long double total = 0.0L;
    std::vector<std::vector<long double>> gamma_acc(n_latents,
                                                    std::vector<long double>(K, 0.0L));
    std::vector<std::vector<long double>> xi_acc(n_latents - 1,
                                                 std::vector<long double>(K * K, 0.0L));

    std::vector<std::size_t> path(n_latents, 0);
    bool done = false;
    while (!done) {
        if (path[0] < K0) {
            long double logp = model.chain.log_pi[path[0]] + init_logp[path[0]][0];
            for (std::size_t r = 1; r < n_latents; ++r)
                logp += (long double)model.chain.log_A(path[r - 1], path[r]) +
                        emis[r - 1][path[r]];
            long double p = std::exp(logp);
            total += p;
            for (std::size_t r = 0; r < n_latents; ++r) gamma_acc[r][path[r]] += p;
            for (std::size_t r = 0; r + 1 < n_latents; ++r)
                xi_acc[r][path[r] * K + path[r + 1]] += p;
        }
        // odometer over the K^n_latents paths
        std::size_t pos = 0;
        while (pos < n_latents && ++path[pos] == K) {
            path[pos] = 0;
            ++pos;
        }
        done = pos == n_latents;
    }

    EnumerationResult out;
    out.log_lik = static_cast<double>(std::log(total));
    out.gamma = msm::Mat(n_latents, K);
    for (std::size_t r = 0; r < n_latents; ++r)
        for (std::size_t k = 0; k < K; ++k)
            out.gamma(r, k) = static_cast<double>(gamma_acc[r][k] / total);
    for (std::size_t r = 0; r + 1 < n_latents; ++r) {
        msm::Mat slice(K, K);
        for (std::size_t i = 0; i < K * K; ++i)
            slice.data()[i] = static_cast<double>(xi_acc[r][i] / total);
        out.xi.push_back(std::move(slice));
    }
    return out;
}

// small fully-random (dense-mask) model for oracle comparisons
inline msm::MsmModel random_model(msm::Rng& rng, std::size_t d, std::size_t lag,
                                  std::size_t K, std::size_t hidden = 3,
                                  msm::Activation act = msm::Activation::Cosine) {
    msm::ModelSpec spec;
    spec.d = d;
    spec.lag = lag;
    spec.n_states = K;
    spec.hidden_per_output = hidden;
    spec.activation = act;
    msm::MsmModel m = msm::make_empty_model(spec);

    // random normalized chain
    msm::Vec pi(K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        pi[k] = 0.2 + rng.next_unit();
        total += pi[k];
    }
    for (std::size_t k = 0; k < K; ++k) m.chain.log_pi[k] = std::log(pi[k] / total);
    for (std::size_t kp = 0; kp < K; ++kp) {
        double row_total = 0.0;
        msm::Vec row(K);
        for (std::size_t k = 0; k < K; ++k) {
            row[k] = 0.2 + rng.next_unit();
            row_total += row[k];
        }
        for (std::size_t k = 0; k < K; ++k)
            m.chain.log_A(kp, k) = std::log(row[k] / row_total);
    }

    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < spec.window_dim(); ++i) {
            m.initial.mean[k][i] = rng.next_gaussian();
            m.initial.log_var[k][i] = -0.5 + 0.5 * rng.next_unit();
        }
    }

    msm::NetworkInitConfig cfg;
    cfg.weight_scale = 0.8;
    cfg.bias_scale = 0.3;
    cfg.log_var = -1.0;
    for (std::size_t k = 0; k < K; ++k)
        m.networks[k] = msm::init_random_network(rng, d, lag, hidden, act,
                                                 msm::Mat(d, d * lag, 1.0), cfg);
    return m;
}

inline msm::Vec random_vec(msm::Rng& rng, std::size_t n, double scale = 1.0) {
    msm::Vec v(n);
    for (double& x : v) x = scale * rng.next_gaussian();
    return v;
}

} // namespace testutil
