#include "core/transition_network.hpp"

#include <algorithm>
#include <cmath>

namespace msm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::Cosine: return std::cos(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Identity: return x;
    }
    return x;
}

inline double activate_deriv(Activation a, double x) {
    switch (a) {
        case Activation::Cosine: return -std::sin(x);
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}
} // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Cosine: return "cosine";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "cosine";
}

Activation activation_from_name(const std::string& name) {
    if (name == "cosine") return Activation::Cosine;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw Error(ErrorCode::Parse, "unknown activation: " + name);
}

void ParamGrad::set_zero() {
    std::fill(w1.data().begin(), w1.data().end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(w2.data().begin(), w2.data().end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
    std::fill(log_var.begin(), log_var.end(), 0.0);
}

double ParamGrad::max_abs() const {
    double m = 0.0;
    auto scan = [&m](std::span<const double> v) {
        for (double x : v) m = std::max(m, std::fabs(x));
    };
    scan(w1.data());
    scan(b1);
    scan(w2.data());
    scan(b2);
    scan(log_var);
    return m;
}

bool ParamGrad::finite() const {
    return all_finite(w1.data()) && all_finite(b1) && all_finite(w2.data()) &&
           all_finite(b2) && all_finite(log_var);
}

TransitionNetwork::TransitionNetwork(std::size_t d, std::size_t lag,
                                     std::size_t h_per_output, Activation activation)
    : d_(d), lag_(lag), h_per_output_(h_per_output), activation_(activation) {
    require(d >= 1 && lag >= 1 && h_per_output >= 1, "TransitionNetwork: bad shape");
    w1_ = Mat(hidden_dim(), in_dim());
    b1_ = Vec(hidden_dim(), 0.0);
    w2_ = Mat(d_, h_per_output_);
    b2_ = Vec(d_, 0.0);
    log_var_ = Vec(d_, 0.0);
    mask_ = Mat(d_, in_dim(), 1.0);
}

void TransitionNetwork::set_mask(const Mat& mask) {
    require(mask.rows() == d_ && mask.cols() == in_dim(),
            "TransitionNetwork::set_mask: mask shape mismatch");
    for (double m : mask.data())
        require(m == 0.0 || m == 1.0, "TransitionNetwork::set_mask: mask not binary");
    mask_ = mask;
    for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            double* row = w1_.row(j * h_per_output_ + u);
            for (std::size_t i = 0; i < in_dim(); ++i)
                if (mask_(j, i) == 0.0) row[i] = 0.0;
        }
}

void TransitionNetwork::set_dense_mask() {
    mask_ = Mat(d_, in_dim(), 1.0);
}

void TransitionNetwork::forward(std::span<const double> x_cond,
                                std::span<double> out) const {
    require(x_cond.size() == in_dim(), "TransitionNetwork::forward: input dim mismatch");
    require(out.size() == d_, "TransitionNetwork::forward: output dim mismatch");
    const std::size_t n = in_dim();
    for (std::size_t j = 0; j < d_; ++j) {
        double acc = b2_[j];
        const double* w2row = w2_.row(j);
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            const std::size_t r = j * h_per_output_ + u;
            const double* w1row = w1_.row(r);
            double pre = b1_[r];
            for (std::size_t i = 0; i < n; ++i) pre += w1row[i] * x_cond[i];
            acc += w2row[u] * activate(activation_, pre);
        }
        out[j] = acc;
    }
}

Vec TransitionNetwork::forward(std::span<const double> x_cond) const {
    Vec out(d_);
    forward(x_cond, out);
    return out;
}

double TransitionNetwork::loglik(std::span<const double> x_cond,
                                 std::span<const double> x_t) const {
    Vec mean = forward(x_cond);
    return log_gaussian_diag(x_t, mean, log_var_);
}

double TransitionNetwork::accumulate_weighted_loglik_grad(std::span<const double> x_cond,
                                                          std::span<const double> x_t,
                                                          double weight,
                                                          ParamGrad& grad) const {
    require(x_cond.size() == in_dim() && x_t.size() == d_,
            "weighted_loglik_grad: dimension mismatch");
    const std::size_t n = in_dim();
    double loglik = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
        const double* w2row = w2_.row(j);
        double* gw2row = grad.w2.row(j);

        // forward for output j, keeping pre-activations
        double pre[256];
        require(h_per_output_ <= 256, "weighted_loglik_grad: hidden block too wide");
        double mean_j = b2_[j];
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            const std::size_t r = j * h_per_output_ + u;
            const double* w1row = w1_.row(r);
            double p = b1_[r];
            for (std::size_t i = 0; i < n; ++i) p += w1row[i] * x_cond[i];
            pre[u] = p;
            mean_j += w2row[u] * activate(activation_, p);
        }

        const double inv_var = std::exp(-log_var_[j]);
        const double r_j = x_t[j] - mean_j;
        loglik += -0.5 * (kLogTwoPi + log_var_[j]) - 0.5 * r_j * r_j * inv_var;

        if (weight == 0.0) continue;
        const double dmean = weight * r_j * inv_var;
        grad.b2[j] += dmean;
        grad.log_var[j] += weight * (-0.5 + 0.5 * r_j * r_j * inv_var);
        const double* maskrow = mask_.row(j);
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            const std::size_t r = j * h_per_output_ + u;
            const double a = activate(activation_, pre[u]);
            gw2row[u] += dmean * a;
            const double dpre = dmean * w2row[u] * activate_deriv(activation_, pre[u]);
            grad.b1[r] += dpre;
            double* gw1row = grad.w1.row(r);
            for (std::size_t i = 0; i < n; ++i)
                gw1row[i] += dpre * x_cond[i] * maskrow[i];
        }
    }
    return weight * loglik;
}

std::pair<double, ParamGrad> TransitionNetwork::weighted_loglik_grad(
    std::span<const double> x_cond, std::span<const double> x_t, double weight) const {
    require(weight >= 0.0 && weight <= 1.0, "weighted_loglik_grad: weight outside [0,1]");
    ParamGrad grad = zero_grad();
    double wl = accumulate_weighted_loglik_grad(x_cond, x_t, weight, grad);
    return {wl, std::move(grad)};
}

Mat TransitionNetwork::input_jacobian(std::span<const double> x_cond) const {
    require(x_cond.size() == in_dim(), "input_jacobian: input dim mismatch");
    const std::size_t n = in_dim();
    Mat jac(d_, n);
    for (std::size_t j = 0; j < d_; ++j) {
        const double* w2row = w2_.row(j);
        double* jrow = jac.row(j);
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            const std::size_t r = j * h_per_output_ + u;
            const double* w1row = w1_.row(r);
            double p = b1_[r];
            for (std::size_t i = 0; i < n; ++i) p += w1row[i] * x_cond[i];
            const double coeff = w2row[u] * activate_deriv(activation_, p);
            for (std::size_t i = 0; i < n; ++i) jrow[i] += coeff * w1row[i];
        }
    }
    return jac;
}

ParamGrad TransitionNetwork::zero_grad() const {
    ParamGrad g;
    g.w1 = Mat(hidden_dim(), in_dim());
    g.b1 = Vec(hidden_dim(), 0.0);
    g.w2 = Mat(d_, h_per_output_);
    g.b2 = Vec(d_, 0.0);
    g.log_var = Vec(d_, 0.0);
    return g;
}

void TransitionNetwork::apply_update(const ParamGrad& grad, double scale,
                                     double log_var_floor) {
    for (std::size_t j = 0; j < d_; ++j) {
        const double* maskrow = mask_.row(j);
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            const std::size_t r = j * h_per_output_ + u;
            double* w1row = w1_.row(r);
            const double* g1row = grad.w1.row(r);
            for (std::size_t i = 0; i < in_dim(); ++i)
                w1row[i] += scale * g1row[i] * maskrow[i];
            b1_[r] += scale * grad.b1[r];
            w2_(j, u) += scale * grad.w2(j, u);
        }
        b2_[j] += scale * grad.b2[j];
        log_var_[j] = std::max(log_var_[j] + scale * grad.log_var[j], log_var_floor);
    }
}

bool TransitionNetwork::mask_respected() const {
    for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t u = 0; u < h_per_output_; ++u) {
            const double* row = w1_.row(j * h_per_output_ + u);
            for (std::size_t i = 0; i < in_dim(); ++i)
                if (mask_(j, i) == 0.0 && row[i] != 0.0) return false;
        }
    return true;
}

TransitionNetwork init_random_network(Rng& rng, std::size_t d, std::size_t lag,
                                      std::size_t h_per_output, Activation activation,
                                      const Mat& mask, const NetworkInitConfig& config) {
    TransitionNetwork net(d, lag, h_per_output, activation);
    // draw every entry in a fixed order so the stream layout does not depend
    // on the mask, then zero the gated ones
    for (std::size_t r = 0; r < net.hidden_dim(); ++r)
        for (std::size_t i = 0; i < net.in_dim(); ++i)
            net.w1()(r, i) = config.weight_scale * rng.next_gaussian();
    for (std::size_t r = 0; r < net.hidden_dim(); ++r)
        net.b1()[r] = config.bias_scale * rng.next_gaussian();
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t u = 0; u < h_per_output; ++u)
            net.w2()(j, u) = config.weight_scale * rng.next_gaussian();
    for (std::size_t j = 0; j < d; ++j) net.b2()[j] = config.bias_scale * rng.next_gaussian();
    std::fill(net.log_var().begin(), net.log_var().end(), config.log_var);
    net.set_mask(mask);
    return net;
}

} // namespace msm
