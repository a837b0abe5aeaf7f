#pragma once

#include <functional>
#include <vector>

#include "core/datagen.hpp"
#include "core/dataset.hpp"
#include "core/msm_model.hpp"

namespace msm {

// mapping from reference (truth) states to estimate states: state i of the
// reference is matched with state sigma[i] of the estimate
struct PermMatch {
    std::vector<std::size_t> sigma;
    double err = 0.0;
};

struct GraphScore {
    std::vector<double> precision; // per reference state
    std::vector<double> recall;
    std::vector<double> f1;
    double averaged_f1 = 0.0;
};

using MeanFn = std::function<Vec(std::span<const double>)>;

// mean over samples of || f(x_i) - g(x_i) ||_2
double l2_distance(const MeanFn& f, const MeanFn& g, const std::vector<Vec>& samples);
double l2_distance(const TransitionNetwork& f, const TransitionNetwork& g,
                   const std::vector<Vec>& samples);

// dM-dimensional evaluation windows: all conditioning windows of the held-out
// sequences, capped at max_samples (0 = no cap), in deterministic order
std::vector<Vec> collect_windows(const SequenceBatch& heldout, std::size_t lag,
                                 std::size_t max_samples = 0);

// K x K matrix of per-state-pair L2 distances, rows = reference states
Mat pairwise_l2(const MsmModel& reference, const MsmModel& estimate,
                const std::vector<Vec>& samples);

PermMatch match_permutation_exhaustive(const Mat& cost);
PermMatch match_permutation_greedy(const Mat& cost);

// exhaustive for K <= 5, greedy beyond; est and truth must share K
PermMatch match_permutation(const MsmModel& estimate, const MsmModel& truth,
                            const std::vector<Vec>& samples);

// posterior-classified Jacobian thresholding: windows are assigned to
// argmax-gamma states and |input Jacobian| is averaged per state, then
// compared against tau. States that received no windows produce an all-zero
// slice and are reported through empty_states when provided.
RegimeGraph estimate_graph(const MsmModel& model, const SequenceBatch& heldout, double tau,
                           std::vector<std::size_t>* empty_states = nullptr);

// per-state F1 of est against truth, with reference state k compared to
// estimate state sigma[k]; F1 of a state with zero true positives is 0
GraphScore f1_graphs(const RegimeGraph& est, const RegimeGraph& truth,
                     const std::vector<std::size_t>& sigma);

// mean rate (Hz) of argmax-state changes after smoothing each gamma column
// with a uniform kernel (edge-replicated); duration = rows / sample_rate
double transition_frequency(const std::vector<Mat>& gamma_sequences, std::size_t kernel_len,
                            double sample_rate_hz);

Mat smooth_columns_uniform(const Mat& gamma, std::size_t kernel_len);

} // namespace msm
