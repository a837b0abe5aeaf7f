#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/msm_model.hpp"

namespace msm {

// K binary lag-graphs. entry(k, j, i, tau) = 1 means variable i at lag tau
// (tau in 1..M) is a parent of variable j under regime k; instantaneous
// edges do not exist in this model class.
class RegimeGraph {
public:
    RegimeGraph() = default;
    RegimeGraph(std::size_t n_states, std::size_t d, std::size_t lag)
        : n_states_(n_states), d_(d), lag_(lag), bits_(n_states * d * d * lag, 0) {}

    std::size_t n_states() const { return n_states_; }
    std::size_t dim() const { return d_; }
    std::size_t lag() const { return lag_; }
    std::size_t edges_per_state() const { return d_ * d_ * lag_; }

    std::uint8_t& entry(std::size_t k, std::size_t j, std::size_t i, std::size_t tau) {
        return bits_[((k * d_ + j) * d_ + i) * lag_ + (tau - 1)];
    }
    std::uint8_t entry(std::size_t k, std::size_t j, std::size_t i, std::size_t tau) const {
        return bits_[((k * d_ + j) * d_ + i) * lag_ + (tau - 1)];
    }

    // d x dM row mask for state k, aligned with the most-recent-first window
    // layout: column (tau-1)*d + i gates variable i at lag tau.
    Mat state_mask(std::size_t k) const;
    void set_state_from_mask(std::size_t k, const Mat& mask);

    std::size_t parent_count(std::size_t k, std::size_t j) const;

    bool operator==(const RegimeGraph&) const = default;

private:
    std::size_t n_states_ = 0;
    std::size_t d_ = 0;
    std::size_t lag_ = 0;
    std::vector<std::uint8_t> bits_;
};

std::string graph_to_json(const RegimeGraph& graph);
RegimeGraph graph_from_json(const std::string& text);
void save_graph(const RegimeGraph& graph, const std::string& path);
RegimeGraph load_graph(const std::string& path);

enum class GenVariant : std::uint8_t {
    Zero = 0,    // analytic cosine networks
    NonZero = 1, // cosine networks, shared mean inside the window-norm band
    Relu = 2,    // ReLU networks, one structure shared across regimes
};

const char* variant_name(GenVariant v);
GenVariant variant_from_name(const std::string& name);

struct GraphSparsity {
    // exactly one of the two modes is active
    std::optional<std::size_t> max_parents; // per-row parent count ~ U{min_parents..cap}
    std::optional<double> fraction;         // per-candidate Bernoulli(fraction)
    std::size_t min_parents = 1;            // 0 disables the at-least-one floor

    static GraphSparsity cap(std::size_t max, std::size_t min = 1) {
        GraphSparsity s;
        s.max_parents = max;
        s.min_parents = min;
        return s;
    }
    static GraphSparsity frac(double f, std::size_t min = 1) {
        GraphSparsity s;
        s.fraction = f;
        s.min_parents = min;
        return s;
    }

    // mean parent count per row the sampler is aiming for, given dM candidates
    double expected_parents(std::size_t n_candidates) const;
};

struct GenProfile {
    GenVariant variant = GenVariant::Zero;
    GraphSparsity sparsity = GraphSparsity::cap(20);
    double transition_noise_std = 0.05;
    double init_mean_std = 0.7;
    double init_emission_std = 0.7; // diagonal std of the initial components
    double self_stay_prob = 0.9;
    double weight_scale = 1.0; // generator network weight distribution N(0, scale^2)
    double bias_scale = 0.0;   // generator network bias distribution N(0, scale^2)
    double band_low = 3.0;     // NonZero gating band on the window norm
    double band_high = 5.0;
    bool deterministic = false; // zero transition noise (mean recursion)
};

RegimeGraph sample_graph(Rng& rng, std::size_t d, std::size_t lag, std::size_t n_states,
                         const GraphSparsity& sparsity);

// Ground-truth model per the synthetic recipe: uniform pi; self-stay /
// cyclic-next chain; initial means ~ N(0, init_mean_std^2), diagonal initial
// variance init_emission_std^2; per-state networks masked by the sampled
// graph (one shared graph for the Relu variant).
std::pair<MsmModel, RegimeGraph> sample_ground_truth(Rng& rng, const ModelSpec& spec,
                                                     const GenProfile& profile);

struct GeneratedData {
    SequenceBatch batch;
    std::vector<std::vector<std::size_t>> state_paths; // [N][T-M+1], states at t=M..T
};

GeneratedData sample_sequences(Rng& rng, const MsmModel& model, const GenProfile& profile,
                               std::size_t n_sequences, std::size_t length);

// True per-state mean at a window, including the NonZero band gating; this is
// the function the emitted data actually follows.
Vec generator_mean(const MsmModel& model, const GenProfile& profile, std::size_t state,
                   std::span<const double> window);

} // namespace msm
