#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/inference.hpp"

namespace msm {

double l2_distance(const MeanFn& f, const MeanFn& g, const std::vector<Vec>& samples) {
    require(!samples.empty(), "l2_distance: empty sample set");
    double acc = 0.0;
    for (const Vec& x : samples) {
        Vec a = f(x);
        Vec b = g(x);
        require(a.size() == b.size(), "l2_distance: output dimension mismatch");
        double norm2 = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            double r = a[j] - b[j];
            norm2 += r * r;
        }
        acc += std::sqrt(norm2);
    }
    return acc / static_cast<double>(samples.size());
}

double l2_distance(const TransitionNetwork& f, const TransitionNetwork& g,
                   const std::vector<Vec>& samples) {
    require(!samples.empty(), "l2_distance: empty sample set");
    require(f.in_dim() == g.in_dim() && f.out_dim() == g.out_dim(),
            "l2_distance: network shape mismatch");
    double acc = 0.0;
    Vec a(f.out_dim()), b(g.out_dim());
    for (const Vec& x : samples) {
        f.forward(x, a);
        g.forward(x, b);
        double norm2 = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            double r = a[j] - b[j];
            norm2 += r * r;
        }
        acc += std::sqrt(norm2);
    }
    return acc / static_cast<double>(samples.size());
}

std::vector<Vec> collect_windows(const SequenceBatch& heldout, std::size_t lag,
                                 std::size_t max_samples) {
    require(heldout.length > lag, "collect_windows: need T > M");
    std::vector<Vec> out;
    const std::size_t per_seq = heldout.length - lag;
    std::size_t total = heldout.n_sequences * per_seq;
    if (max_samples > 0) total = std::min(total, max_samples);
    out.reserve(total);
    Vec window(heldout.dim * lag);
    for (std::size_t n = 0; n < heldout.n_sequences && out.size() < total; ++n) {
        SequenceView x = heldout.sequence(n);
        for (std::size_t t = lag; t < heldout.length && out.size() < total; ++t) {
            fill_window(x, t, lag, window);
            out.push_back(window);
        }
    }
    return out;
}

Mat pairwise_l2(const MsmModel& reference, const MsmModel& estimate,
                const std::vector<Vec>& samples) {
    require(reference.spec.n_states == estimate.spec.n_states,
            "pairwise_l2: state count mismatch");
    const std::size_t K = reference.spec.n_states;
    Mat cost(K, K);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            cost(i, j) = l2_distance(reference.networks[i], estimate.networks[j], samples);
    return cost;
}

PermMatch match_permutation_exhaustive(const Mat& cost) {
    require(cost.rows() == cost.cols() && cost.rows() >= 1, "match: cost must be square");
    const std::size_t K = cost.rows();
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    PermMatch best;
    best.err = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < K; ++i) total += cost(i, perm[i]);
        double mean = total / static_cast<double>(K);
        if (mean < best.err) {
            best.err = mean;
            best.sigma = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

PermMatch match_permutation_greedy(const Mat& cost) {
    require(cost.rows() == cost.cols() && cost.rows() >= 1, "match: cost must be square");
    const std::size_t K = cost.rows();
    std::vector<bool> row_used(K, false), col_used(K, false);
    PermMatch out;
    out.sigma.assign(K, 0);
    double total = 0.0;
    for (std::size_t step = 0; step < K; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < K; ++i) {
            if (row_used[i]) continue;
            for (std::size_t j = 0; j < K; ++j) {
                if (col_used[j]) continue;
                if (cost(i, j) < best) { // strict: ties keep the first (i, j)
                    best = cost(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        row_used[bi] = true;
        col_used[bj] = true;
        out.sigma[bi] = bj;
        total += best;
    }
    out.err = total / static_cast<double>(K);
    return out;
}

PermMatch match_permutation(const MsmModel& estimate, const MsmModel& truth,
                            const std::vector<Vec>& samples) {
    require(estimate.spec.n_states == truth.spec.n_states,
            "match_permutation: state count mismatch");
    Mat cost = pairwise_l2(truth, estimate, samples);
    return truth.spec.n_states <= 5 ? match_permutation_exhaustive(cost)
                                    : match_permutation_greedy(cost);
}

RegimeGraph estimate_graph(const MsmModel& model, const SequenceBatch& heldout, double tau,
                           std::vector<std::size_t>* empty_states) {
    const ModelSpec& s = model.spec;
    require(heldout.length > s.lag, "estimate_graph: need T > M");
    require(heldout.dim == s.d, "estimate_graph: dimension mismatch");
    const std::size_t K = s.n_states;

    std::vector<Mat> abs_sum(K, Mat(s.d, s.window_dim(), 0.0));
    std::vector<std::size_t> counts(K, 0);

    Vec window(s.window_dim());
    for (std::size_t n = 0; n < heldout.n_sequences; ++n) {
        SequenceView x = heldout.sequence(n);
        PosteriorSummary post = posteriors(model, x);
        for (std::size_t t = s.lag; t < heldout.length; ++t) {
            const std::size_t row = t - s.lag + 1; // gamma row for this step
            const double* g = post.gamma.row(row);
            std::size_t k = 0;
            for (std::size_t c = 1; c < K; ++c)
                if (g[c] > g[k]) k = c;
            fill_window(x, t, s.lag, window);
            Mat jac = model.networks[k].input_jacobian(window);
            for (std::size_t i = 0; i < jac.size(); ++i)
                abs_sum[k].data()[i] += std::fabs(jac.data()[i]);
            ++counts[k];
        }
    }

    RegimeGraph graph(K, s.d, s.lag);
    for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] == 0) {
            if (empty_states) empty_states->push_back(k);
            continue;
        }
        const double scale = 1.0 / static_cast<double>(counts[k]);
        Mat mask(s.d, s.window_dim(), 0.0);
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask.data()[i] = abs_sum[k].data()[i] * scale > tau ? 1.0 : 0.0;
        graph.set_state_from_mask(k, mask);
    }
    return graph;
}

GraphScore f1_graphs(const RegimeGraph& est, const RegimeGraph& truth,
                     const std::vector<std::size_t>& sigma) {
    require(est.n_states() == truth.n_states() && est.dim() == truth.dim() &&
                est.lag() == truth.lag(),
            "f1_graphs: shape mismatch");
    require(sigma.size() == truth.n_states(), "f1_graphs: permutation size mismatch");
    const std::size_t K = truth.n_states();

    GraphScore score;
    score.precision.resize(K);
    score.recall.resize(K);
    score.f1.resize(K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t ek = sigma[k];
        require(ek < K, "f1_graphs: permutation entry out of range");
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t j = 0; j < truth.dim(); ++j)
            for (std::size_t i = 0; i < truth.dim(); ++i)
                for (std::size_t tau = 1; tau <= truth.lag(); ++tau) {
                    bool e = est.entry(ek, j, i, tau) != 0;
                    bool t = truth.entry(k, j, i, tau) != 0;
                    if (e && t) ++tp;
                    else if (e && !t) ++fp;
                    else if (!e && t) ++fn;
                }
        double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        double f1 = tp == 0 ? 0.0 : 2.0 * p * r / (p + r);
        score.precision[k] = p;
        score.recall[k] = r;
        score.f1[k] = f1;
        total += f1;
    }
    score.averaged_f1 = total / static_cast<double>(K);
    return score;
}

Mat smooth_columns_uniform(const Mat& gamma, std::size_t kernel_len) {
    require(kernel_len >= 1 && kernel_len % 2 == 1, "smooth: kernel length must be odd");
    const std::size_t n = gamma.rows();
    const std::size_t K = gamma.cols();
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel_len / 2);
    Mat out(n, K);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < K; ++k) {
            double acc = 0.0;
            for (std::ptrdiff_t o = -half; o <= half; ++o) {
                std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t) + o;
                idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(n) - 1);
                acc += gamma(static_cast<std::size_t>(idx), k);
            }
            out(t, k) = acc / static_cast<double>(kernel_len);
        }
    return out;
}

double transition_frequency(const std::vector<Mat>& gamma_sequences, std::size_t kernel_len,
                            double sample_rate_hz) {
    require(sample_rate_hz > 0.0, "transition_frequency: sample rate must be positive");
    require(!gamma_sequences.empty(), "transition_frequency: no sequences");
    double acc = 0.0;
    for (const Mat& gamma : gamma_sequences) {
        Mat smooth = smooth_columns_uniform(gamma, kernel_len);
        std::size_t changes = 0;
        std::size_t prev = 0;
        for (std::size_t t = 0; t < smooth.rows(); ++t) {
            const double* row = smooth.row(t);
            std::size_t best = 0;
            for (std::size_t k = 1; k < smooth.cols(); ++k)
                if (row[k] > row[best]) best = k;
            if (t > 0 && best != prev) ++changes;
            prev = best;
        }
        double duration = static_cast<double>(smooth.rows()) / sample_rate_hz;
        acc += static_cast<double>(changes) / duration;
    }
    return acc / static_cast<double>(gamma_sequences.size());
}

} // namespace msm
