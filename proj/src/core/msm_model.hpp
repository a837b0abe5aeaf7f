#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/numerics.hpp"
#include "core/transition_network.hpp"

namespace msm {

struct ModelSpec {
    std::size_t d = 1;        // observation dimension
    std::size_t lag = 1;      // autoregressive order M
    std::size_t n_states = 1; // K
    std::size_t n_initial = 0; // K0; 0 means "same as n_states"
    std::size_t hidden_per_output = 16;
    Activation activation = Activation::Cosine;
    bool locally_connected = false;

    std::size_t initial_states() const { return n_initial == 0 ? n_states : n_initial; }
    std::size_t window_dim() const { return d * lag; }

    bool operator==(const ModelSpec& o) const {
        return d == o.d && lag == o.lag && n_states == o.n_states &&
               initial_states() == o.initial_states() &&
               hidden_per_output == o.hidden_per_output && activation == o.activation &&
               locally_connected == o.locally_connected;
    }
};

// First-order chain over the latent states. log_pi is the distribution of the
// first latent s_M (over the K0 initial states); rows of log_A are
// log-normalized transition distributions.
struct ChainParams {
    Vec log_pi;
    Mat log_A;

    bool operator==(const ChainParams&) const = default;
};

// Diagonal Gaussian components over the flattened first window
// (x_1, ..., x_M), one per initial state.
struct InitialEmission {
    std::vector<Vec> mean;    // K0 x [dM]
    std::vector<Vec> log_var; // K0 x [dM]

    bool operator==(const InitialEmission&) const = default;
};

struct MsmModel {
    ModelSpec spec;
    ChainParams chain;
    InitialEmission initial;
    std::vector<TransitionNetwork> networks; // K
    std::uint64_t seed = 0;                  // generating seed, provenance only

    bool operator==(const MsmModel&) const = default;
};

// All-zero-parameter model with consistent shapes (uniform chain).
MsmModel make_empty_model(const ModelSpec& spec);

// Checks every structural invariant and returns the full list of violations
// (empty means the model is valid). Never throws on a bad model.
std::vector<std::string> validate(const MsmModel& model);

void save_model(const MsmModel& model, const std::string& path);
MsmModel load_model(const std::string& path);

std::string model_to_json(const MsmModel& model);
MsmModel model_from_json(const std::string& text);

} // namespace msm
