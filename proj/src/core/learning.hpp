#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "core/datagen.hpp"
#include "core/dataset.hpp"
#include "core/inference.hpp"
#include "core/msm_model.hpp"

namespace msm {

enum class Optimizer : std::uint8_t { Adam = 0, PlainAscent = 1 };

const char* optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& name);

struct TrainConfig {
    std::size_t max_epochs = 100;
    std::size_t batch_size = 500;
    double learning_rate = 7e-3;
    double plateau_factor = 0.5;
    std::size_t plateau_patience = 5;
    std::size_t max_plateau_drops = 2;
    double plateau_rel_tol = 1e-4;
    std::size_t n_restarts = 1;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    bool shuffle = true;            // full-batch deterministic runs switch this off
    double init_weight_scale = 1.0; // network init for estimation
    double init_log_var = -1.3862943611198906; // log(0.5^2)
    double var_floor = 1e-8;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_log_lik = 0.0;
    double learning_rate = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs; // chosen restart's trace
    std::size_t restart_chosen = 0;
    std::vector<double> restart_final_log_lik;
    double final_learning_rate = 0.0;
    double wall_seconds = 0.0;
};

// pi_k from gamma at t=M, A from the summed pairwise marginals; zero-count
// rows fall back to uniform
ChainParams m_step_discrete(const std::vector<PosteriorSummary>& summaries,
                            std::size_t n_states, std::size_t n_initial);

// exact weighted diagonal-Gaussian MLE of the initial components; variances
// floored; a zero-weight component keeps its previous parameters
InitialEmission m_step_initial(const std::vector<PosteriorSummary>& summaries,
                               const SequenceBatch& batch,
                               const std::vector<std::size_t>& batch_indices,
                               std::size_t n_initial, std::size_t lag, double var_floor,
                               const InitialEmission& previous);

struct AdamState {
    std::vector<ParamGrad> m; // per state
    std::vector<ParamGrad> v;
    std::size_t step = 0;
};

AdamState make_adam_state(const MsmModel& model);

// one gamma-weighted gradient ascent update of every state network; gradients
// are summed over (t, k) within a sequence and averaged over the batch
void gem_gradient_step(MsmModel& model, const SequenceBatch& batch,
                       const std::vector<std::size_t>& batch_indices,
                       const std::vector<PosteriorSummary>& summaries,
                       const TrainConfig& config, AdamState& adam, double learning_rate);

// expected complete-data log-likelihood under frozen posteriors (the GEM
// surrogate objective); terms with zero posterior weight contribute zero
double expected_complete_loglik(const MsmModel& model, const SequenceBatch& batch,
                                const std::vector<std::size_t>& batch_indices,
                                const std::vector<PosteriorSummary>& summaries);

std::pair<MsmModel, TrainReport> fit(const SequenceBatch& dataset, const ModelSpec& spec,
                                     const TrainConfig& config,
                                     const std::optional<RegimeGraph>& masks = std::nullopt);

} // namespace msm
