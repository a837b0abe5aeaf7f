#include "core/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msm {

void fill_window(const SequenceView& x, std::size_t t, std::size_t lag,
                 std::span<double> out) {
    const std::size_t d = x.dim();
    require(t >= lag && t < x.length(), "fill_window: window out of range");
    require(out.size() == d * lag, "fill_window: bad output size");
    for (std::size_t tau = 1; tau <= lag; ++tau) {
        std::span<const double> row = x.at(t - tau);
        std::copy(row.begin(), row.end(), out.begin() + (tau - 1) * d);
    }
}

Vec initial_log_probs(const MsmModel& model, const SequenceView& x) {
    const ModelSpec& s = model.spec;
    require(x.length() > s.lag, "initial_log_probs: need T > M");
    require(x.dim() == s.d, "initial_log_probs: dimension mismatch");
    const std::size_t K = s.n_states;
    const std::size_t K0 = s.initial_states();
    Vec first(s.window_dim());
    for (std::size_t t = 0; t < s.lag; ++t) {
        std::span<const double> row = x.at(t);
        std::copy(row.begin(), row.end(), first.begin() + t * s.d);
    }
    Vec out(K, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < K0; ++k)
        out[k] = model.chain.log_pi[k] +
                 log_gaussian_diag(first, model.initial.mean[k], model.initial.log_var[k]);
    return out;
}

Mat emission_log_probs(const MsmModel& model, const SequenceView& x) {
    const ModelSpec& s = model.spec;
    require(x.length() > s.lag, "emission_log_probs: need T > M");
    require(x.dim() == s.d, "emission_log_probs: dimension mismatch");
    const std::size_t K = s.n_states;
    const std::size_t n_rows = x.length() - s.lag;
    Mat emis(n_rows, K);
    Vec window(s.window_dim());
    Vec mean(s.d);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::size_t t = s.lag + r;
        fill_window(x, t, s.lag, window);
        for (std::size_t k = 0; k < K; ++k) {
            const TransitionNetwork& net = model.networks[k];
            net.forward(window, mean);
            emis(r, k) = log_gaussian_diag(x.at(t), mean, net.log_var());
        }
    }
    return emis;
}

namespace {

std::pair<Mat, double> forward_from_emissions(const MsmModel& model, const Vec& init,
                                              const Mat& emis) {
    const std::size_t K = model.spec.n_states;
    const std::size_t n = emis.rows() + 1;
    Mat log_alpha(n, K);
    std::copy(init.begin(), init.end(), log_alpha.row(0));
    Vec scratch(K);
    for (std::size_t r = 1; r < n; ++r) {
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp)
                scratch[kp] = log_alpha(r - 1, kp) + model.chain.log_A(kp, k);
            log_alpha(r, k) = emis(r - 1, k) + log_sum_exp(scratch);
        }
    }
    double log_lik = log_sum_exp(std::span<const double>(log_alpha.row(n - 1), K));
    return {std::move(log_alpha), log_lik};
}

Mat backward_from_emissions(const MsmModel& model, const Mat& emis) {
    const std::size_t K = model.spec.n_states;
    const std::size_t n = emis.rows() + 1;
    Mat log_beta(n, K, 0.0);
    Vec scratch(K);
    for (std::size_t r = n - 1; r-- > 0;) {
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp)
                scratch[kp] = model.chain.log_A(k, kp) + emis(r, kp) + log_beta(r + 1, kp);
            log_beta(r, k) = log_sum_exp(scratch);
        }
    }
    return log_beta;
}

} // namespace

std::pair<Mat, double> forward_log(const MsmModel& model, const SequenceView& x) {
    return forward_from_emissions(model, initial_log_probs(model, x),
                                  emission_log_probs(model, x));
}

Mat backward_log(const MsmModel& model, const SequenceView& x) {
    return backward_from_emissions(model, emission_log_probs(model, x));
}

PosteriorSummary posteriors(const MsmModel& model, const SequenceView& x) {
    const std::size_t K = model.spec.n_states;
    Mat emis = emission_log_probs(model, x);
    auto [log_alpha, log_lik] = forward_from_emissions(model, initial_log_probs(model, x), emis);
    Mat log_beta = backward_from_emissions(model, emis);

    PosteriorSummary out;
    out.log_lik = log_lik;
    const std::size_t n = log_alpha.rows();
    out.gamma = Mat(n, K);
    Vec scratch(K);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < K; ++k) scratch[k] = log_alpha(r, k) + log_beta(r, k);
        double z = log_sum_exp(scratch);
        for (std::size_t k = 0; k < K; ++k) out.gamma(r, k) = std::exp(scratch[k] - z);
    }

    out.xi.reserve(n - 1);
    Vec flat(K * K);
    for (std::size_t r = 0; r + 1 < n; ++r) {
        for (std::size_t kp = 0; kp < K; ++kp)
            for (std::size_t k = 0; k < K; ++k)
                flat[kp * K + k] = log_alpha(r, kp) + model.chain.log_A(kp, k) +
                                   emis(r, k) + log_beta(r + 1, k);
        double z = log_sum_exp(flat);
        Mat slice(K, K);
        for (std::size_t i = 0; i < K * K; ++i) slice.data()[i] = std::exp(flat[i] - z);
        out.xi.push_back(std::move(slice));
    }
    return out;
}

double sequence_log_lik(const MsmModel& model, const SequenceView& x) {
    return forward_log(model, x).second;
}

std::vector<std::size_t> decode_argmax(const PosteriorSummary& summary) {
    std::vector<std::size_t> path(summary.gamma.rows());
    for (std::size_t r = 0; r < summary.gamma.rows(); ++r) {
        const double* row = summary.gamma.row(r);
        std::size_t best = 0;
        for (std::size_t k = 1; k < summary.gamma.cols(); ++k)
            if (row[k] > row[best]) best = k; // strict: ties keep the smaller index
        path[r] = best;
    }
    return path;
}

} // namespace msm
