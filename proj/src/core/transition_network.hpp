#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/numerics.hpp"

namespace msm {

// Cosine is the analytic family used for generation and estimation; Relu is
// the deliberate non-analytic variant. Identity bypasses the activation so a
// network degenerates to a linear map (test and graph-calibration use only).
enum class Activation : std::uint8_t { Cosine = 0, Relu = 1, Identity = 2 };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct ParamGrad {
    Mat w1;      // [h x dM]
    Vec b1;      // [h]
    Mat w2;      // [d x h_per_output], block weights
    Vec b2;      // [d]
    Vec log_var; // [d]

    void set_zero();
    double max_abs() const;
    bool finite() const;
};

// Per-state mean network m(.,k): R^{dM} -> R^d built from d independent
// sub-networks. Hidden block j (h_per_output units) feeds output j only, and
// reads input i only where mask(j, i) = 1, so structural zeros of the input
// Jacobian are exact rather than approximate. The conditioning window is
// flattened most-recent-first: x_cond = (x_{t-1}, x_{t-2}, ..., x_{t-M}).
class TransitionNetwork {
public:
    TransitionNetwork() = default;
    TransitionNetwork(std::size_t d, std::size_t lag, std::size_t h_per_output,
                      Activation activation);

    std::size_t out_dim() const { return d_; }
    std::size_t lag() const { return lag_; }
    std::size_t in_dim() const { return d_ * lag_; }
    std::size_t hidden_per_output() const { return h_per_output_; }
    std::size_t hidden_dim() const { return d_ * h_per_output_; }
    Activation activation() const { return activation_; }
    void set_activation(Activation a) { activation_ = a; }

    // row j of the mask gates which inputs output j's hidden block may read;
    // setting a mask zeroes the gated W1 entries immediately
    const Mat& mask() const { return mask_; }
    void set_mask(const Mat& mask);
    void set_dense_mask();

    Mat& w1() { return w1_; }
    const Mat& w1() const { return w1_; }
    Vec& b1() { return b1_; }
    const Vec& b1() const { return b1_; }
    Mat& w2() { return w2_; }
    const Mat& w2() const { return w2_; }
    Vec& b2() { return b2_; }
    const Vec& b2() const { return b2_; }
    Vec& log_var() { return log_var_; }
    const Vec& log_var() const { return log_var_; }

    void forward(std::span<const double> x_cond, std::span<double> out) const;
    Vec forward(std::span<const double> x_cond) const;

    // weight * log N(x_t | m(x_cond), diag exp(log_var)) and its gradient,
    // accumulated into grad (which must match this network's shapes)
    double accumulate_weighted_loglik_grad(std::span<const double> x_cond,
                                           std::span<const double> x_t, double weight,
                                           ParamGrad& grad) const;
    std::pair<double, ParamGrad> weighted_loglik_grad(std::span<const double> x_cond,
                                                      std::span<const double> x_t,
                                                      double weight) const;

    double loglik(std::span<const double> x_cond, std::span<const double> x_t) const;

    // J[j][i] = d m_j / d x_cond_i; Relu uses subgradient 0 at the kink
    Mat input_jacobian(std::span<const double> x_cond) const;

    ParamGrad zero_grad() const;

    // applies delta = scale * grad to all parameters; masked W1 entries stay
    // zero and log_var is clamped to log_var_floor
    void apply_update(const ParamGrad& grad, double scale, double log_var_floor);

    bool mask_respected() const; // every masked W1 entry is exactly zero

    bool operator==(const TransitionNetwork& other) const = default;

private:
    std::size_t d_ = 0;
    std::size_t lag_ = 0;
    std::size_t h_per_output_ = 0;
    Activation activation_ = Activation::Cosine;
    Mat w1_;      // [h x dM], rows of block j masked by mask_(j, .)
    Vec b1_;      // [h]
    Mat w2_;      // [d x h_per_output], row j = weights from hidden block j
    Vec b2_;      // [d]
    Vec log_var_; // [d], constant w.r.t. inputs
    Mat mask_;    // [d x dM], entries 0/1
};

struct NetworkInitConfig {
    double weight_scale = 1.0;
    double bias_scale = 0.0;
    double log_var = 0.0;
};

TransitionNetwork init_random_network(Rng& rng, std::size_t d, std::size_t lag,
                                      std::size_t h_per_output, Activation activation,
                                      const Mat& mask, const NetworkInitConfig& config);

} // namespace msm
