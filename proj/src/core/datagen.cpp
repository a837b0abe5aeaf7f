#include "core/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace msm {

using nlohmann::json;

Mat RegimeGraph::state_mask(std::size_t k) const {
    Mat mask(d_, d_ * lag_, 0.0);
    for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t tau = 1; tau <= lag_; ++tau)
                if (entry(k, j, i, tau)) mask(j, (tau - 1) * d_ + i) = 1.0;
    return mask;
}

void RegimeGraph::set_state_from_mask(std::size_t k, const Mat& mask) {
    require(mask.rows() == d_ && mask.cols() == d_ * lag_,
            "RegimeGraph::set_state_from_mask: shape mismatch");
    for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t tau = 1; tau <= lag_; ++tau)
                entry(k, j, i, tau) = mask(j, (tau - 1) * d_ + i) != 0.0 ? 1 : 0;
}

std::size_t RegimeGraph::parent_count(std::size_t k, std::size_t j) const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t tau = 1; tau <= lag_; ++tau) count += entry(k, j, i, tau);
    return count;
}

std::string graph_to_json(const RegimeGraph& g) {
    json j;
    j["format"] = "msm-graph";
    j["K"] = g.n_states();
    j["d"] = g.dim();
    j["M"] = g.lag();
    json states = json::array();
    for (std::size_t k = 0; k < g.n_states(); ++k) {
        json rows = json::array();
        for (std::size_t jj = 0; jj < g.dim(); ++jj) {
            json cols = json::array();
            for (std::size_t i = 0; i < g.dim(); ++i) {
                json lags = json::array();
                for (std::size_t tau = 1; tau <= g.lag(); ++tau)
                    lags.push_back(static_cast<int>(g.entry(k, jj, i, tau)));
                cols.push_back(std::move(lags));
            }
            rows.push_back(std::move(cols));
        }
        states.push_back(std::move(rows));
    }
    j["graphs"] = std::move(states);
    return j.dump();
}

RegimeGraph graph_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("graph file is not valid JSON: ") + e.what());
    }
    try {
        if (j.value("format", "") != "msm-graph")
            throw Error(ErrorCode::Parse, "not an msm-graph document");
        RegimeGraph g(j.at("K").get<std::size_t>(), j.at("d").get<std::size_t>(),
                      j.at("M").get<std::size_t>());
        const json& states = j.at("graphs");
        if (states.size() != g.n_states())
            throw Error(ErrorCode::Shape, "graphs: state count mismatch");
        for (std::size_t k = 0; k < g.n_states(); ++k) {
            if (states[k].size() != g.dim())
                throw Error(ErrorCode::Shape, "graphs: row count mismatch");
            for (std::size_t jj = 0; jj < g.dim(); ++jj) {
                if (states[k][jj].size() != g.dim())
                    throw Error(ErrorCode::Shape, "graphs: column count mismatch");
                for (std::size_t i = 0; i < g.dim(); ++i) {
                    if (states[k][jj][i].size() != g.lag())
                        throw Error(ErrorCode::Shape, "graphs: lag count mismatch");
                    for (std::size_t tau = 1; tau <= g.lag(); ++tau) {
                        int v = states[k][jj][i][tau - 1].get<int>();
                        if (v != 0 && v != 1)
                            throw Error(ErrorCode::Parse, "graphs: entries must be 0/1");
                        g.entry(k, jj, i, tau) = static_cast<std::uint8_t>(v);
                    }
                }
            }
        }
        return g;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("malformed graph document: ") + e.what());
    }
}

void save_graph(const RegimeGraph& graph, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
    out << graph_to_json(graph) << "\n";
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

RegimeGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open for reading: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return graph_from_json(buf.str());
}

const char* variant_name(GenVariant v) {
    switch (v) {
        case GenVariant::Zero: return "zero";
        case GenVariant::NonZero: return "nonzero";
        case GenVariant::Relu: return "relu";
    }
    return "zero";
}

GenVariant variant_from_name(const std::string& name) {
    if (name == "zero") return GenVariant::Zero;
    if (name == "nonzero") return GenVariant::NonZero;
    if (name == "relu") return GenVariant::Relu;
    throw Error(ErrorCode::Parse, "unknown generator variant: " + name);
}

double GraphSparsity::expected_parents(std::size_t n_candidates) const {
    if (max_parents) {
        std::size_t hi = std::min(*max_parents, n_candidates);
        std::size_t lo = std::min(min_parents, hi);
        return 0.5 * static_cast<double>(lo + hi);
    }
    require(fraction.has_value(), "GraphSparsity: no mode set");
    double mean = *fraction * static_cast<double>(n_candidates);
    return std::max(mean, static_cast<double>(min_parents));
}

RegimeGraph sample_graph(Rng& rng, std::size_t d, std::size_t lag, std::size_t n_states,
                         const GraphSparsity& sparsity) {
    const std::size_t n_candidates = d * lag;
    RegimeGraph g(n_states, d, lag);
    std::vector<std::size_t> order(n_candidates);
    for (std::size_t k = 0; k < n_states; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
            std::vector<std::uint8_t> row(n_candidates, 0);
            if (sparsity.max_parents) {
                std::size_t hi = std::min(*sparsity.max_parents, n_candidates);
                std::size_t lo = sparsity.min_parents;
                require(lo <= hi, "sample_graph: infeasible parent cap (floor exceeds cap)");
                std::size_t size = lo + (hi > lo ? rng.next_index(hi - lo + 1) : 0);
                std::iota(order.begin(), order.end(), 0);
                // partial Fisher-Yates: the first `size` entries are the subset
                for (std::size_t s = 0; s < size; ++s) {
                    std::size_t pick = s + rng.next_index(n_candidates - s);
                    std::swap(order[s], order[pick]);
                    row[order[s]] = 1;
                }
            } else {
                double f = *sparsity.fraction;
                require(f >= 0.0 && f <= 1.0, "sample_graph: fraction outside [0,1]");
                for (std::size_t c = 0; c < n_candidates; ++c)
                    if (rng.next_unit() <= f) row[c] = 1;
                std::size_t count = std::accumulate(row.begin(), row.end(), std::size_t{0});
                if (count < sparsity.min_parents) {
                    // top up with distinct uniform picks
                    while (count < std::min(sparsity.min_parents, n_candidates)) {
                        std::size_t c = rng.next_index(n_candidates);
                        if (!row[c]) {
                            row[c] = 1;
                            ++count;
                        }
                    }
                }
            }
            for (std::size_t c = 0; c < n_candidates; ++c) {
                std::size_t tau = c / d + 1;
                std::size_t i = c % d;
                g.entry(k, j, i, tau) = row[c];
            }
        }
    }
    return g;
}

std::pair<MsmModel, RegimeGraph> sample_ground_truth(Rng& rng, const ModelSpec& spec,
                                                     const GenProfile& profile) {
    require(spec.initial_states() == spec.n_states,
            "sample_ground_truth: K0 != K is not generated");
    ModelSpec s = spec;
    s.locally_connected = true;
    s.activation = profile.variant == GenVariant::Relu ? Activation::Relu : Activation::Cosine;
    const std::size_t K = s.n_states;

    RegimeGraph graph = sample_graph(rng, s.d, s.lag, K, profile.sparsity);
    if (profile.variant == GenVariant::Relu) {
        // one causal structure shared across regimes
        for (std::size_t k = 1; k < K; ++k) graph.set_state_from_mask(k, graph.state_mask(0));
    }

    MsmModel m = make_empty_model(s);
    m.seed = rng.seed();

    // uniform pi; self-stay with the remainder to the cyclically next state
    const double p_stay = K == 1 ? 1.0 : profile.self_stay_prob;
    m.chain.log_pi.assign(K, -std::log(static_cast<double>(K)));
    m.chain.log_A = Mat(K, K, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < K; ++k) {
        if (K == 1) {
            m.chain.log_A(k, k) = 0.0;
        } else {
            m.chain.log_A(k, k) = std::log(p_stay);
            m.chain.log_A(k, (k + 1) % K) = std::log1p(-p_stay);
        }
    }

    const double init_log_var = 2.0 * std::log(profile.init_emission_std);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < s.window_dim(); ++i)
            m.initial.mean[k][i] = profile.init_mean_std * rng.next_gaussian();
        m.initial.log_var[k].assign(s.window_dim(), init_log_var);
    }

    NetworkInitConfig net_config;
    net_config.weight_scale = profile.weight_scale;
    net_config.bias_scale = profile.bias_scale;
    net_config.log_var = profile.deterministic
                             ? -std::numeric_limits<double>::infinity()
                             : 2.0 * std::log(profile.transition_noise_std);
    for (std::size_t k = 0; k < K; ++k)
        m.networks[k] = init_random_network(rng, s.d, s.lag, s.hidden_per_output,
                                            s.activation, graph.state_mask(k), net_config);
    return {std::move(m), std::move(graph)};
}

Vec generator_mean(const MsmModel& model, const GenProfile& profile, std::size_t state,
                   std::span<const double> window) {
    if (profile.variant == GenVariant::NonZero) {
        double norm2 = 0.0;
        for (double v : window) norm2 += v * v;
        double norm = std::sqrt(norm2);
        if (norm >= profile.band_low && norm <= profile.band_high)
            return model.networks[0].forward(window);
    }
    return model.networks[state].forward(window);
}

GeneratedData sample_sequences(Rng& rng, const MsmModel& model, const GenProfile& profile,
                               std::size_t n_sequences, std::size_t length) {
    const ModelSpec& s = model.spec;
    require(length > s.lag, "sample_sequences: need T > M");
    const std::size_t K = s.n_states;
    const std::size_t K0 = s.initial_states();

    GeneratedData out;
    out.batch = SequenceBatch::empty(n_sequences, length, s.d);
    out.batch.seed = rng.seed();
    out.state_paths.assign(n_sequences, {});

    Vec pi(K0), a_row(K);
    for (std::size_t k = 0; k < K0; ++k) pi[k] = std::exp(model.chain.log_pi[k]);

    Vec window(s.window_dim());
    for (std::size_t n = 0; n < n_sequences; ++n) {
        Rng seq_rng = rng.fork(n);
        double* seq = out.batch.sequence_data(n);
        std::vector<std::size_t>& path = out.state_paths[n];
        path.reserve(length - s.lag + 1);

        std::size_t state = seq_rng.next_categorical(pi);
        path.push_back(state);
        Vec first = sample_gaussian_diag(seq_rng, model.initial.mean[state],
                                         model.initial.log_var[state]);
        std::copy(first.begin(), first.end(), seq);

        SequenceView view(seq, length, s.d);
        for (std::size_t t = s.lag; t < length; ++t) {
            for (std::size_t k = 0; k < K; ++k)
                a_row[k] = std::exp(model.chain.log_A(state, k));
            state = seq_rng.next_categorical(a_row);
            path.push_back(state);

            fill_window(view, t, s.lag, window);
            Vec mean = generator_mean(model, profile, state, window);
            const Vec& log_var = model.networks[state].log_var();
            Vec x_t = profile.deterministic ? mean
                                            : sample_gaussian_diag(seq_rng, mean, log_var);
            std::copy(x_t.begin(), x_t.end(), seq + t * s.d);
        }
    }
    return out;
}

} // namespace msm
