#include "core/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace msm {

const char* optimizer_name(Optimizer o) {
    return o == Optimizer::Adam ? "adam" : "plain";
}

Optimizer optimizer_from_name(const std::string& name) {
    if (name == "adam") return Optimizer::Adam;
    if (name == "plain") return Optimizer::PlainAscent;
    throw Error(ErrorCode::Parse, "unknown optimizer: " + name);
}

ChainParams m_step_discrete(const std::vector<PosteriorSummary>& summaries,
                            std::size_t n_states, std::size_t n_initial) {
    require(!summaries.empty(), "m_step_discrete: no summaries");
    const std::size_t K = n_states;
    const std::size_t K0 = n_initial;

    Vec pi_counts(K0, 0.0);
    Mat a_counts(K, K, 0.0);
    for (const PosteriorSummary& s : summaries) {
        for (std::size_t k = 0; k < K0; ++k) pi_counts[k] += s.gamma(0, k);
        for (const Mat& slice : s.xi)
            for (std::size_t i = 0; i < K * K; ++i) a_counts.data()[i] += slice.data()[i];
    }

    ChainParams chain;
    chain.log_pi.resize(K0);
    double pi_total = std::accumulate(pi_counts.begin(), pi_counts.end(), 0.0);
    for (std::size_t k = 0; k < K0; ++k)
        chain.log_pi[k] = pi_total > 0.0 ? std::log(pi_counts[k] / pi_total)
                                         : -std::log(static_cast<double>(K0));

    chain.log_A = Mat(K, K);
    for (std::size_t kp = 0; kp < K; ++kp) {
        double row_total = 0.0;
        for (std::size_t k = 0; k < K; ++k) row_total += a_counts(kp, k);
        for (std::size_t k = 0; k < K; ++k)
            chain.log_A(kp, k) = row_total > 0.0 ? std::log(a_counts(kp, k) / row_total)
                                                 : -std::log(static_cast<double>(K));
    }
    return chain;
}

InitialEmission m_step_initial(const std::vector<PosteriorSummary>& summaries,
                               const SequenceBatch& batch,
                               const std::vector<std::size_t>& batch_indices,
                               std::size_t n_initial, std::size_t lag, double var_floor,
                               const InitialEmission& previous) {
    require(summaries.size() == batch_indices.size(), "m_step_initial: size mismatch");
    require(!summaries.empty(), "m_step_initial: no sequences");
    const std::size_t dm = batch.dim * lag;

    InitialEmission out;
    out.mean.assign(n_initial, Vec(dm, 0.0));
    out.log_var.assign(n_initial, Vec(dm, 0.0));

    Vec weights(n_initial, 0.0);
    for (std::size_t idx = 0; idx < summaries.size(); ++idx) {
        const double* first = batch.sequence(batch_indices[idx]).at(0).data();
        for (std::size_t k = 0; k < n_initial; ++k) {
            double w = summaries[idx].gamma(0, k);
            weights[k] += w;
            for (std::size_t i = 0; i < dm; ++i) out.mean[k][i] += w * first[i];
        }
    }
    for (std::size_t k = 0; k < n_initial; ++k) {
        if (weights[k] <= 0.0) {
            out.mean[k] = previous.mean[k];
            out.log_var[k] = previous.log_var[k];
            continue;
        }
        for (std::size_t i = 0; i < dm; ++i) out.mean[k][i] /= weights[k];
    }

    std::vector<Vec> sq(n_initial, Vec(dm, 0.0));
    for (std::size_t idx = 0; idx < summaries.size(); ++idx) {
        const double* first = batch.sequence(batch_indices[idx]).at(0).data();
        for (std::size_t k = 0; k < n_initial; ++k) {
            double w = summaries[idx].gamma(0, k);
            if (w <= 0.0) continue;
            for (std::size_t i = 0; i < dm; ++i) {
                double r = first[i] - out.mean[k][i];
                sq[k][i] += w * r * r;
            }
        }
    }
    for (std::size_t k = 0; k < n_initial; ++k) {
        if (weights[k] <= 0.0) continue;
        for (std::size_t i = 0; i < dm; ++i)
            out.log_var[k][i] = std::log(std::max(sq[k][i] / weights[k], var_floor));
    }
    return out;
}

AdamState make_adam_state(const MsmModel& model) {
    AdamState s;
    s.m.reserve(model.networks.size());
    s.v.reserve(model.networks.size());
    for (const TransitionNetwork& net : model.networks) {
        s.m.push_back(net.zero_grad());
        s.v.push_back(net.zero_grad());
    }
    s.step = 0;
    return s;
}

namespace {

template <typename F>
void for_each_array(ParamGrad& g, F&& f) {
    f(g.w1.data());
    f(g.b1);
    f(g.w2.data());
    f(g.b2);
    f(g.log_var);
}

// grad is consumed: for Adam it is rewritten in place into the update
// direction before being applied with unit scale
void apply_optimizer_update(TransitionNetwork& net, ParamGrad& grad, ParamGrad& m,
                            ParamGrad& v, std::size_t step, const TrainConfig& config,
                            double lr, double log_var_floor) {
    if (config.optimizer == Optimizer::PlainAscent) {
        net.apply_update(grad, lr, log_var_floor);
        return;
    }
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    Vec* mv[5] = {&m.w1.data(), &m.b1, &m.w2.data(), &m.b2, &m.log_var};
    Vec* vv[5] = {&v.w1.data(), &v.b1, &v.w2.data(), &v.b2, &v.log_var};
    Vec* gv[5] = {&grad.w1.data(), &grad.b1, &grad.w2.data(), &grad.b2, &grad.log_var};
    for (int blk = 0; blk < 5; ++blk) {
        Vec& mm = *mv[blk];
        Vec& vvv = *vv[blk];
        Vec& gg = *gv[blk];
        for (std::size_t i = 0; i < gg.size(); ++i) {
            mm[i] = b1 * mm[i] + (1.0 - b1) * gg[i];
            vvv[i] = b2 * vvv[i] + (1.0 - b2) * gg[i] * gg[i];
            double mhat = mm[i] / bc1;
            double vhat = vvv[i] / bc2;
            gg[i] = mhat / (std::sqrt(vhat) + config.adam_eps);
        }
    }
    net.apply_update(grad, lr, log_var_floor);
}

const char* grad_block_name(const ParamGrad& g) {
    if (!all_finite(g.w1.data())) return "w1";
    if (!all_finite(g.b1)) return "b1";
    if (!all_finite(g.w2.data())) return "w2";
    if (!all_finite(g.b2)) return "b2";
    if (!all_finite(g.log_var)) return "log_var";
    return "none";
}

} // namespace

void gem_gradient_step(MsmModel& model, const SequenceBatch& batch,
                       const std::vector<std::size_t>& batch_indices,
                       const std::vector<PosteriorSummary>& summaries,
                       const TrainConfig& config, AdamState& adam, double learning_rate) {
    require(summaries.size() == batch_indices.size(), "gem_gradient_step: size mismatch");
    const ModelSpec& s = model.spec;
    const std::size_t K = s.n_states;

    std::vector<ParamGrad> grads;
    grads.reserve(K);
    for (const TransitionNetwork& net : model.networks) grads.push_back(net.zero_grad());

    Vec window(s.window_dim());
    for (std::size_t idx = 0; idx < batch_indices.size(); ++idx) {
        SequenceView x = batch.sequence(batch_indices[idx]);
        const PosteriorSummary& post = summaries[idx];
        const std::size_t n_rows = x.length() - s.lag;
        for (std::size_t r = 0; r < n_rows; ++r) {
            const std::size_t t = s.lag + r;
            fill_window(x, t, s.lag, window);
            for (std::size_t k = 0; k < K; ++k) {
                double w = post.gamma(r + 1, k);
                // weights this far under the posterior floor cannot move the
                // accumulated gradient at test tolerances
                if (w <= 1e-12) continue;
                model.networks[k].accumulate_weighted_loglik_grad(window, x.at(t), w,
                                                                  grads[k]);
            }
        }
    }

    const double inv_batch = 1.0 / static_cast<double>(batch_indices.size());
    const double log_var_floor = std::log(config.var_floor);
    adam.step += 1;
    for (std::size_t k = 0; k < K; ++k) {
        for_each_array(grads[k], [inv_batch](Vec& v) {
            for (double& x : v) x *= inv_batch;
        });
        if (!grads[k].finite())
            throw Error(ErrorCode::Numeric,
                        "non-finite gradient in state " + std::to_string(k) + " block " +
                            grad_block_name(grads[k]));
        apply_optimizer_update(model.networks[k], grads[k], adam.m[k], adam.v[k], adam.step,
                               config, learning_rate, log_var_floor);
    }
}

double expected_complete_loglik(const MsmModel& model, const SequenceBatch& batch,
                                const std::vector<std::size_t>& batch_indices,
                                const std::vector<PosteriorSummary>& summaries) {
    const ModelSpec& s = model.spec;
    const std::size_t K = s.n_states;
    const std::size_t K0 = s.initial_states();
    double q = 0.0;
    Vec window(s.window_dim());
    Vec mean(s.d);
    for (std::size_t idx = 0; idx < batch_indices.size(); ++idx) {
        SequenceView x = batch.sequence(batch_indices[idx]);
        const PosteriorSummary& post = summaries[idx];

        Vec first(s.window_dim());
        for (std::size_t t = 0; t < s.lag; ++t) {
            std::span<const double> row = x.at(t);
            std::copy(row.begin(), row.end(), first.begin() + t * s.d);
        }
        for (std::size_t k = 0; k < K0; ++k) {
            double w = post.gamma(0, k);
            if (w <= 0.0) continue;
            q += w * (model.chain.log_pi[k] +
                      log_gaussian_diag(first, model.initial.mean[k], model.initial.log_var[k]));
        }
        for (const Mat& slice : post.xi)
            for (std::size_t kp = 0; kp < K; ++kp)
                for (std::size_t k = 0; k < K; ++k) {
                    double w = slice(kp, k);
                    if (w <= 0.0) continue;
                    q += w * model.chain.log_A(kp, k);
                }
        const std::size_t n_rows = x.length() - s.lag;
        for (std::size_t r = 0; r < n_rows; ++r) {
            const std::size_t t = s.lag + r;
            fill_window(x, t, s.lag, window);
            for (std::size_t k = 0; k < K; ++k) {
                double w = post.gamma(r + 1, k);
                if (w <= 0.0) continue;
                const TransitionNetwork& net = model.networks[k];
                net.forward(window, mean);
                q += w * log_gaussian_diag(x.at(t), mean, net.log_var());
            }
        }
    }
    return q;
}

namespace {

MsmModel init_fit_model(Rng& rng, const ModelSpec& spec, const TrainConfig& config,
                        const std::optional<RegimeGraph>& masks,
                        const SequenceBatch& dataset) {
    MsmModel model = make_empty_model(spec);
    const std::size_t K = spec.n_states;
    const std::size_t K0 = spec.initial_states();
    const std::size_t dm = spec.window_dim();

    // chain: uniform (the networks break the symmetry)
    model.chain.log_pi.assign(K0, -std::log(static_cast<double>(K0)));
    model.chain.log_A = Mat(K, K, -std::log(static_cast<double>(K)));

    // initial components seeded from random first windows, pooled variance
    Vec pooled_mean(dm, 0.0), pooled_sq(dm, 0.0);
    for (std::size_t n = 0; n < dataset.n_sequences; ++n) {
        const double* first = dataset.sequence(n).at(0).data();
        for (std::size_t i = 0; i < dm; ++i) {
            pooled_mean[i] += first[i];
            pooled_sq[i] += first[i] * first[i];
        }
    }
    Vec pooled_log_var(dm);
    for (std::size_t i = 0; i < dm; ++i) {
        pooled_mean[i] /= static_cast<double>(dataset.n_sequences);
        double var = pooled_sq[i] / static_cast<double>(dataset.n_sequences) -
                     pooled_mean[i] * pooled_mean[i];
        pooled_log_var[i] = std::log(std::max(var, config.var_floor));
    }
    for (std::size_t k = 0; k < K0; ++k) {
        std::size_t pick = rng.next_index(dataset.n_sequences);
        const double* first = dataset.sequence(pick).at(0).data();
        model.initial.mean[k].assign(first, first + dm);
        model.initial.log_var[k] = pooled_log_var;
    }

    NetworkInitConfig net_config;
    net_config.weight_scale = config.init_weight_scale;
    net_config.bias_scale = 0.0;
    net_config.log_var = config.init_log_var;
    for (std::size_t k = 0; k < K; ++k) {
        Mat mask = masks ? masks->state_mask(k) : Mat(spec.d, dm, 1.0);
        model.networks[k] = init_random_network(rng, spec.d, spec.lag,
                                                spec.hidden_per_output, spec.activation,
                                                mask, net_config);
    }
    return model;
}

} // namespace

std::pair<MsmModel, TrainReport> fit(const SequenceBatch& dataset, const ModelSpec& spec,
                                     const TrainConfig& config,
                                     const std::optional<RegimeGraph>& masks) {
    require(dataset.n_sequences >= 1, "fit: empty dataset");
    require(dataset.dim == spec.d, "fit: dataset dimension mismatch");
    require(dataset.length > spec.lag, "fit: need T > M");
    require(config.batch_size >= 1, "fit: batch_size must be >= 1");
    require(config.learning_rate > 0.0, "fit: learning_rate must be > 0");
    require(config.n_restarts >= 1, "fit: need at least one restart");
    if (masks)
        require(masks->n_states() == spec.n_states && masks->dim() == spec.d &&
                    masks->lag() == spec.lag,
                "fit: mask graph shape mismatch");

    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t N = dataset.n_sequences;
    Rng master(config.seed);

    MsmModel best_model;
    TrainReport report;
    report.restart_final_log_lik.assign(config.n_restarts, 0.0);
    double best_final = -std::numeric_limits<double>::infinity();

    for (std::size_t restart = 0; restart < config.n_restarts; ++restart) {
        Rng rng = master.fork(restart);
        MsmModel model = init_fit_model(rng, spec, config, masks, dataset);
        AdamState adam = make_adam_state(model);

        double lr = config.learning_rate;
        double best_loglik = -std::numeric_limits<double>::infinity();
        std::size_t stall = 0, drops = 0;
        std::vector<EpochRecord> trace;
        trace.reserve(config.max_epochs);

        std::vector<std::size_t> order(N);
        std::iota(order.begin(), order.end(), 0);

        double epoch_loglik = 0.0;
        for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
            if (config.shuffle) {
                Rng shuffle_rng = rng.fork(1000000 + epoch);
                for (std::size_t i = N; i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);
            }

            double loglik_sum = 0.0;
            for (std::size_t start = 0; start < N; start += config.batch_size) {
                const std::size_t stop = std::min(start + config.batch_size, N);
                std::vector<std::size_t> batch_indices(order.begin() + start,
                                                       order.begin() + stop);
                std::vector<PosteriorSummary> summaries;
                summaries.reserve(batch_indices.size());
                for (std::size_t n : batch_indices) {
                    summaries.push_back(posteriors(model, dataset.sequence(n)));
                    loglik_sum += summaries.back().log_lik;
                }
                model.chain =
                    m_step_discrete(summaries, spec.n_states, spec.initial_states());
                model.initial =
                    m_step_initial(summaries, dataset, batch_indices, spec.initial_states(),
                                   spec.lag, config.var_floor, model.initial);
                gem_gradient_step(model, dataset, batch_indices, summaries, config, adam, lr);
            }
            epoch_loglik = loglik_sum / static_cast<double>(N);
            trace.push_back({epoch, epoch_loglik, lr});

            double scale = std::max(1.0, std::fabs(best_loglik));
            if (std::isfinite(best_loglik) &&
                (epoch_loglik - best_loglik) / scale < config.plateau_rel_tol) {
                if (++stall >= config.plateau_patience && drops < config.max_plateau_drops) {
                    lr *= config.plateau_factor;
                    ++drops;
                    stall = 0;
                }
            } else {
                stall = 0;
            }
            best_loglik = std::max(best_loglik, epoch_loglik);
        }

        report.restart_final_log_lik[restart] = epoch_loglik;
        if (epoch_loglik > best_final) {
            best_final = epoch_loglik;
            best_model = std::move(model);
            report.restart_chosen = restart;
            report.epochs = std::move(trace);
            report.final_learning_rate = lr;
        }
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(best_model), std::move(report)};
}

} // namespace msm
