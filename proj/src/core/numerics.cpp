#include "core/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace

Mat Mat::from_rows(const std::vector<Vec>& rows) {
    Mat m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == m.cols(), "Mat::from_rows: ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r));
    }
    return m;
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
}

double Rng::next_unit() {
    // (0, 1]: the +1 keeps log() of the result finite
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::next_index(std::size_t n) {
    require(n > 0, "Rng::next_index: empty range");
    // rejection-free modulo bias is negligible for the small n used here,
    // but keep the draw unbiased anyway
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

std::size_t Rng::next_categorical(std::span<const double> probs) {
    require(!probs.empty(), "Rng::next_categorical: empty distribution");
    double total = 0.0;
    for (double p : probs) {
        require(p >= 0.0 && std::isfinite(p), "Rng::next_categorical: bad probability");
        total += p;
    }
    require(total > 0.0, "Rng::next_categorical: zero mass");
    double u = next_unit() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u <= acc) return i;
    }
    return probs.size() - 1;
}

Rng Rng::fork(std::uint64_t stream_id) const {
    return Rng(mix64(state_ ^ mix64(stream_id + 0x632be59bd9b4e019ULL)));
}

double log_gaussian_diag(std::span<const double> x, std::span<const double> mean,
                         std::span<const double> log_var) {
    require(x.size() == mean.size() && x.size() == log_var.size(),
            "log_gaussian_diag: dimension mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double r = x[j] - mean[j];
        acc += -0.5 * (kLogTwoPi + log_var[j]) - 0.5 * r * r * std::exp(-log_var[j]);
    }
    return acc;
}

double log_sum_exp(std::span<const double> v) {
    require(!v.empty(), "log_sum_exp: empty input");
    if (v.size() == 1) return v[0];
    double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m; // all -inf (or a stray +inf/nan propagates)
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

Vec sample_gaussian_diag(Rng& rng, std::span<const double> mean,
                         std::span<const double> log_var) {
    require(mean.size() == log_var.size(), "sample_gaussian_diag: dimension mismatch");
    Vec out(mean.size());
    for (std::size_t j = 0; j < mean.size(); ++j) {
        double sigma = std::exp(0.5 * log_var[j]);
        out[j] = mean[j] + sigma * rng.next_gaussian();
    }
    return out;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace msm
