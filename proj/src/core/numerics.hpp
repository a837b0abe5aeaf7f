#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/errors.hpp"

namespace msm {

using Vec = std::vector<double>;

// Row-major dense matrix of doubles. Small and value-semantic; every heavier
// structure in the codebase is built from these plus flat vectors.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat from_rows(const std::vector<Vec>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    Vec& data() { return data_; }
    const Vec& data() const { return data_; }

    bool operator==(const Mat& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

// Counter-based seeded generator (splitmix64 core). Identical seed gives an
// identical stream on every platform; fork() derives independent streams for
// per-sequence parallel generation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {}

    std::uint64_t next_u64();

    // uniform in (0, 1]
    double next_unit();

    // standard normal via Box-Muller, one cached spare
    double next_gaussian();

    // index in [0, n)
    std::size_t next_index(std::size_t n);

    // categorical draw from linear-domain probabilities (renormalized)
    std::size_t next_categorical(std::span<const double> probs);

    // independent child stream keyed by id; the parent stream is unaffected
    Rng fork(std::uint64_t stream_id) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t state_;
    std::uint64_t seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// log N(x | mean, diag(exp(log_var))) summed over dimensions
double log_gaussian_diag(std::span<const double> x, std::span<const double> mean,
                         std::span<const double> log_var);

// log sum_i exp(v_i) with max subtraction; exact for singletons
double log_sum_exp(std::span<const double> v);

// mean + exp(log_var / 2) * z with z standard normal; log_var of -inf yields
// the mean exactly (zero-variance limit)
Vec sample_gaussian_diag(Rng& rng, std::span<const double> mean,
                         std::span<const double> log_var);

bool all_finite(std::span<const double> v);

} // namespace msm
