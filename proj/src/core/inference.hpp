#pragma once

#include <vector>

#include "core/msm_model.hpp"

namespace msm {

// Sequences are row-major [T x d]; row t is the observation at time t
// (0-based internally, so the first latent sits at row index M-1... to avoid
// that off-by-one trap every index below is documented in 1-based paper time).
//
// gamma rows cover paper times t = M..T (T-M+1 rows); xi slices cover the
// transitions into t = M+1..T (T-M slices), each a K x K matrix over
// (s_{t-1}, s_t).
struct PosteriorSummary {
    double log_lik = 0.0;
    Mat gamma;           // [(T-M+1) x K]
    std::vector<Mat> xi; // (T-M) x [K x K]
};

class SequenceView {
public:
    SequenceView(const double* data, std::size_t T, std::size_t d)
        : data_(data), T_(T), d_(d) {}

    std::size_t length() const { return T_; }
    std::size_t dim() const { return d_; }
    // 0-based row
    std::span<const double> at(std::size_t t) const { return {data_ + t * d_, d_}; }

private:
    const double* data_;
    std::size_t T_;
    std::size_t d_;
};

// Flattened most-recent-first conditioning window for the emission at 0-based
// time index t: (x_{t-1}, x_{t-2}, ..., x_{t-M}). out must hold d*M values.
void fill_window(const SequenceView& x, std::size_t t, std::size_t lag,
                 std::span<double> out);

// Per-step transition log-densities: row r = 0-based time index M + r
// (paper t = M+1+r), column k = state. Shared by the recursions and the
// gradient pass.
Mat emission_log_probs(const MsmModel& model, const SequenceView& x);

// Log initial joint: log pi_k + log N(x_{1:M} | initial component k) for
// k < K0, -inf for the remaining states.
Vec initial_log_probs(const MsmModel& model, const SequenceView& x);

std::pair<Mat, double> forward_log(const MsmModel& model, const SequenceView& x);
Mat backward_log(const MsmModel& model, const SequenceView& x);

PosteriorSummary posteriors(const MsmModel& model, const SequenceView& x);

double sequence_log_lik(const MsmModel& model, const SequenceView& x);

// Per-row argmax of gamma; ties break toward the smaller state index.
std::vector<std::size_t> decode_argmax(const PosteriorSummary& summary);

} // namespace msm
