#include "msm/msm.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>

#include <json.hpp>

#include "core/datagen.hpp"
#include "core/dataset.hpp"
#include "core/evaluation.hpp"
#include "core/inference.hpp"
#include "core/learning.hpp"
#include "core/msm_model.hpp"
#include "core/signal_pipeline.hpp"

using nlohmann::json;

struct msm_model {
    msm::MsmModel impl;
};
struct msm_dataset {
    msm::SequenceBatch impl;
};
struct msm_graph {
    msm::RegimeGraph impl;
};
struct msm_posterior {
    msm::PosteriorSummary impl;
};

namespace {

thread_local std::string g_last_error;

msm_status code_of(const msm::Error& e) {
    switch (e.code()) {
        case msm::ErrorCode::InvalidArgument: return MSM_E_INVALID;
        case msm::ErrorCode::Io: return MSM_E_IO;
        case msm::ErrorCode::Parse: return MSM_E_PARSE;
        case msm::ErrorCode::Version: return MSM_E_VERSION;
        case msm::ErrorCode::Corrupt: return MSM_E_CORRUPT;
        case msm::ErrorCode::Shape: return MSM_E_SHAPE;
        case msm::ErrorCode::Numeric: return MSM_E_NUMERIC;
    }
    return MSM_E_INVALID;
}

template <typename F>
msm_status guarded(F&& f) {
    try {
        f();
        return MSM_OK;
    } catch (const msm::Error& e) {
        g_last_error = e.what();
        return code_of(e);
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return MSM_E_PARSE;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MSM_E_INVALID;
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json parse_json(const char* text, const char* what) {
    if (text == nullptr || *text == '\0') return json::object();
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw msm::Error(msm::ErrorCode::Parse,
                         std::string(what) + " is not valid JSON: " + e.what());
    }
}

void require_arg(bool cond, const char* message) {
    if (!cond) throw msm::Error(msm::ErrorCode::InvalidArgument, message);
}

msm::ModelSpec spec_from_json(const json& j) {
    msm::ModelSpec spec;
    spec.d = j.value("d", std::size_t{1});
    spec.lag = j.value("M", std::size_t{1});
    spec.n_states = j.value("K", std::size_t{1});
    spec.n_initial = j.value("K0", std::size_t{0});
    spec.hidden_per_output = j.value("hidden_per_output", std::size_t{16});
    spec.activation = msm::activation_from_name(j.value("activation", "cosine"));
    spec.locally_connected = j.value("locally_connected", false);
    return spec;
}

msm::GenProfile profile_from_json(const json& j) {
    msm::GenProfile p;
    p.variant = msm::variant_from_name(j.value("variant", "zero"));
    std::size_t min_parents = j.value("min_parents", std::size_t{1});
    if (j.contains("sparsity")) {
        const json& sj = j.at("sparsity");
        if (sj.contains("max_parents"))
            p.sparsity = msm::GraphSparsity::cap(sj.at("max_parents").get<std::size_t>(),
                                                 min_parents);
        else if (sj.contains("fraction"))
            p.sparsity = msm::GraphSparsity::frac(sj.at("fraction").get<double>(),
                                                  min_parents);
        else
            throw msm::Error(msm::ErrorCode::Parse,
                             "sparsity needs either max_parents or fraction");
    } else {
        p.sparsity.min_parents = min_parents;
    }
    p.transition_noise_std = j.value("transition_noise_std", 0.05);
    p.init_mean_std = j.value("init_mean_std", 0.7);
    p.init_emission_std = j.value("init_emission_std", 0.7);
    p.self_stay_prob = j.value("self_stay_prob", 0.9);
    p.weight_scale = j.value("weight_scale", 1.0);
    p.bias_scale = j.value("bias_scale", 0.0);
    p.band_low = j.value("band_low", 3.0);
    p.band_high = j.value("band_high", 5.0);
    p.deterministic = j.value("deterministic", false);
    return p;
}

msm::TrainConfig train_config_from_json(const json& j) {
    msm::TrainConfig c;
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.max_plateau_drops = j.value("max_plateau_drops", c.max_plateau_drops);
    c.plateau_rel_tol = j.value("plateau_rel_tol", c.plateau_rel_tol);
    c.n_restarts = j.value("n_restarts", c.n_restarts);
    c.optimizer = msm::optimizer_from_name(j.value("optimizer", "adam"));
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.seed = j.value("seed", std::uint64_t{0});
    c.shuffle = j.value("shuffle", true);
    c.init_weight_scale = j.value("init_weight_scale", c.init_weight_scale);
    c.init_log_var = j.value("init_log_var", c.init_log_var);
    c.var_floor = j.value("var_floor", c.var_floor);
    return c;
}

} // namespace

extern "C" {

const char* msm_version(void) { return "0.1.0"; }

const char* msm_last_error(void) { return g_last_error.c_str(); }

void msm_string_free(char* text) { delete[] text; }

msm_status msm_model_load(const char* path, msm_model** out) {
    return guarded([&] {
        require_arg(path && out, "msm_model_load: null argument");
        *out = new msm_model{msm::load_model(path)};
    });
}

msm_status msm_model_save(const msm_model* model, const char* path) {
    return guarded([&] {
        require_arg(model && path, "msm_model_save: null argument");
        msm::save_model(model->impl, path);
    });
}

void msm_model_free(msm_model* model) { delete model; }

msm_status msm_model_validate(const msm_model* model, char** report_json) {
    return guarded([&] {
        require_arg(model && report_json, "msm_model_validate: null argument");
        std::vector<std::string> violations = msm::validate(model->impl);
        json j;
        j["valid"] = violations.empty();
        j["violations"] = violations;
        *report_json = dup_string(j.dump());
    });
}

msm_status msm_model_info(const msm_model* model, char** info_json) {
    return guarded([&] {
        require_arg(model && info_json, "msm_model_info: null argument");
        const msm::ModelSpec& s = model->impl.spec;
        json j = {{"d", s.d},
                  {"M", s.lag},
                  {"K", s.n_states},
                  {"K0", s.initial_states()},
                  {"hidden_per_output", s.hidden_per_output},
                  {"activation", msm::activation_name(s.activation)},
                  {"locally_connected", s.locally_connected},
                  {"seed", model->impl.seed}};
        *info_json = dup_string(j.dump());
    });
}

msm_status msm_dataset_load(const char* path, msm_dataset** out) {
    return guarded([&] {
        require_arg(path && out, "msm_dataset_load: null argument");
        *out = new msm_dataset{msm::load_batch(path)};
    });
}

msm_status msm_dataset_save(const msm_dataset* dataset, const char* path) {
    return guarded([&] {
        require_arg(dataset && path, "msm_dataset_save: null argument");
        msm::save_batch(dataset->impl, path);
    });
}

msm_status msm_dataset_export_csv(const msm_dataset* dataset, const char* path) {
    return guarded([&] {
        require_arg(dataset && path, "msm_dataset_export_csv: null argument");
        msm::export_batch_csv(dataset->impl, path);
    });
}

void msm_dataset_free(msm_dataset* dataset) { delete dataset; }

size_t msm_dataset_num_sequences(const msm_dataset* d) {
    return d ? d->impl.n_sequences : 0;
}
size_t msm_dataset_length(const msm_dataset* d) { return d ? d->impl.length : 0; }
size_t msm_dataset_dim(const msm_dataset* d) { return d ? d->impl.dim : 0; }

msm_status msm_graph_load(const char* path, msm_graph** out) {
    return guarded([&] {
        require_arg(path && out, "msm_graph_load: null argument");
        *out = new msm_graph{msm::load_graph(path)};
    });
}

msm_status msm_graph_save(const msm_graph* graph, const char* path) {
    return guarded([&] {
        require_arg(graph && path, "msm_graph_save: null argument");
        msm::save_graph(graph->impl, path);
    });
}

void msm_graph_free(msm_graph* graph) { delete graph; }

msm_status msm_sample_ground_truth(const char* spec_json, const char* profile_json,
                                   uint64_t seed, msm_model** out_model,
                                   msm_graph** out_graph) {
    return guarded([&] {
        require_arg(out_model && out_graph, "msm_sample_ground_truth: null output");
        msm::ModelSpec spec = spec_from_json(parse_json(spec_json, "spec"));
        msm::GenProfile profile = profile_from_json(parse_json(profile_json, "profile"));
        msm::Rng rng(seed);
        auto [model, graph] = msm::sample_ground_truth(rng, spec, profile);
        *out_model = new msm_model{std::move(model)};
        *out_graph = new msm_graph{std::move(graph)};
    });
}

msm_status msm_sample_sequences(const msm_model* model, const char* profile_json,
                                uint64_t seed, size_t n_sequences, size_t length,
                                const char* states_csv_path, msm_dataset** out) {
    return guarded([&] {
        require_arg(model && out, "msm_sample_sequences: null argument");
        msm::GenProfile profile = profile_from_json(parse_json(profile_json, "profile"));
        msm::Rng rng(seed);
        msm::GeneratedData data =
            msm::sample_sequences(rng, model->impl, profile, n_sequences, length);
        if (states_csv_path) {
            std::FILE* f = std::fopen(states_csv_path, "w");
            if (!f)
                throw msm::Error(msm::ErrorCode::Io,
                                 std::string("cannot open for writing: ") + states_csv_path);
            std::fprintf(f, "seq,t,state\n");
            const std::size_t lag = model->impl.spec.lag;
            for (std::size_t n = 0; n < data.state_paths.size(); ++n)
                for (std::size_t r = 0; r < data.state_paths[n].size(); ++r)
                    std::fprintf(f, "%zu,%zu,%zu\n", n, lag + r, data.state_paths[n][r]);
            std::fclose(f);
        }
        *out = new msm_dataset{std::move(data.batch)};
    });
}

msm_status msm_fit(const msm_dataset* dataset, const char* spec_json, const char* train_json,
                   const msm_graph* mask_graph, msm_model** out_model, char** report_json) {
    return guarded([&] {
        require_arg(dataset && out_model, "msm_fit: null argument");
        msm::ModelSpec spec = spec_from_json(parse_json(spec_json, "spec"));
        msm::TrainConfig config = train_config_from_json(parse_json(train_json, "train config"));
        std::optional<msm::RegimeGraph> masks;
        if (mask_graph) masks = mask_graph->impl;
        auto [model, report] = msm::fit(dataset->impl, spec, config, masks);
        if (report_json) {
            json epochs = json::array();
            for (const msm::EpochRecord& e : report.epochs)
                epochs.push_back(
                    {{"epoch", e.epoch}, {"log_lik", e.mean_log_lik}, {"lr", e.learning_rate}});
            json j = {{"restart_chosen", report.restart_chosen},
                      {"final_learning_rate", report.final_learning_rate},
                      {"wall_seconds", report.wall_seconds},
                      {"restart_final_log_lik", report.restart_final_log_lik},
                      {"epochs", std::move(epochs)}};
            *report_json = dup_string(j.dump());
        }
        *out_model = new msm_model{std::move(model)};
    });
}

msm_status msm_posteriors(const msm_model* model, const msm_dataset* dataset,
                          size_t sequence_index, msm_posterior** out) {
    return guarded([&] {
        require_arg(model && dataset && out, "msm_posteriors: null argument");
        require_arg(sequence_index < dataset->impl.n_sequences,
                    "msm_posteriors: sequence index out of range");
        *out = new msm_posterior{
            msm::posteriors(model->impl, dataset->impl.sequence(sequence_index))};
    });
}

void msm_posterior_free(msm_posterior* posterior) { delete posterior; }

double msm_posterior_log_lik(const msm_posterior* p) { return p ? p->impl.log_lik : 0.0; }

const double* msm_posterior_gamma(const msm_posterior* p, size_t* rows, size_t* states) {
    if (!p) return nullptr;
    if (rows) *rows = p->impl.gamma.rows();
    if (states) *states = p->impl.gamma.cols();
    return p->impl.gamma.data().data();
}

msm_status msm_posterior_decode(const msm_posterior* posterior, size_t* path,
                                size_t path_len) {
    return guarded([&] {
        require_arg(posterior && path, "msm_posterior_decode: null argument");
        std::vector<std::size_t> decoded = msm::decode_argmax(posterior->impl);
        require_arg(path_len >= decoded.size(), "msm_posterior_decode: buffer too small");
        std::copy(decoded.begin(), decoded.end(), path);
    });
}

msm_status msm_eval_l2(const msm_model* estimate, const msm_model* truth,
                       const msm_dataset* heldout, size_t max_samples, char** result_json) {
    return guarded([&] {
        require_arg(estimate && truth && heldout && result_json,
                    "msm_eval_l2: null argument");
        std::vector<msm::Vec> samples =
            msm::collect_windows(heldout->impl, truth->impl.spec.lag, max_samples);
        msm::PermMatch match = msm::match_permutation(estimate->impl, truth->impl, samples);
        msm::Mat cost = msm::pairwise_l2(truth->impl, estimate->impl, samples);
        std::vector<double> per_state;
        for (std::size_t k = 0; k < match.sigma.size(); ++k)
            per_state.push_back(cost(k, match.sigma[k]));
        json j = {{"err", match.err},
                  {"sigma", match.sigma},
                  {"per_state_l2", per_state},
                  {"n_samples", samples.size()}};
        *result_json = dup_string(j.dump());
    });
}

msm_status msm_eval_f1(const msm_model* estimate, const msm_model* truth,
                       const msm_graph* truth_graph, const msm_dataset* heldout, double tau,
                       char** result_json) {
    return guarded([&] {
        require_arg(estimate && truth && truth_graph && heldout && result_json,
                    "msm_eval_f1: null argument");
        std::vector<std::size_t> empty_states;
        msm::RegimeGraph est_graph =
            msm::estimate_graph(estimate->impl, heldout->impl, tau, &empty_states);
        std::vector<msm::Vec> samples =
            msm::collect_windows(heldout->impl, truth->impl.spec.lag, 1000);
        msm::PermMatch match = msm::match_permutation(estimate->impl, truth->impl, samples);
        msm::GraphScore score = msm::f1_graphs(est_graph, truth_graph->impl, match.sigma);
        json j = {{"averaged_f1", score.averaged_f1},
                  {"per_state_f1", score.f1},
                  {"precision", score.precision},
                  {"recall", score.recall},
                  {"sigma", match.sigma},
                  {"tau", tau},
                  {"empty_states", empty_states}};
        *result_json = dup_string(j.dump());
    });
}

msm_status msm_estimate_graph(const msm_model* model, const msm_dataset* heldout, double tau,
                              msm_graph** out) {
    return guarded([&] {
        require_arg(model && heldout && out, "msm_estimate_graph: null argument");
        *out = new msm_graph{msm::estimate_graph(model->impl, heldout->impl, tau)};
    });
}

msm_status msm_transition_frequency(const msm_model* model, const msm_dataset* dataset,
                                    size_t kernel_len, double sample_rate_hz,
                                    double* out_hz) {
    return guarded([&] {
        require_arg(model && dataset && out_hz, "msm_transition_frequency: null argument");
        std::vector<msm::Mat> gammas;
        gammas.reserve(dataset->impl.n_sequences);
        for (std::size_t n = 0; n < dataset->impl.n_sequences; ++n)
            gammas.push_back(msm::posteriors(model->impl, dataset->impl.sequence(n)).gamma);
        *out_hz = msm::transition_frequency(gammas, kernel_len, sample_rate_hz);
    });
}

msm_status msm_preprocess(const char* input_path, const char* config_json,
                          const char* output_path, char** manifest_json) {
    return guarded([&] {
        require_arg(input_path && output_path, "msm_preprocess: null argument");
        json cfg = parse_json(config_json, "preprocess config");
        std::string input(input_path);

        msm::Recording rec;
        if (input.size() >= 4 && input.substr(input.size() - 4) == ".csv") {
            double rate = cfg.value("sample_rate_hz", 0.0);
            rec = msm::load_recording_csv(input, rate);
        } else {
            std::string sidecar = cfg.value("sidecar", input + ".json");
            rec = msm::load_recording_raw(input, sidecar);
        }

        if (cfg.contains("channels")) {
            std::vector<std::size_t> keep;
            for (const json& c : cfg.at("channels")) {
                if (c.is_number_unsigned()) {
                    keep.push_back(c.get<std::size_t>());
                } else {
                    std::string name = c.get<std::string>();
                    auto it = std::find(rec.labels.begin(), rec.labels.end(), name);
                    if (it == rec.labels.end())
                        throw msm::Error(msm::ErrorCode::InvalidArgument,
                                         "unknown channel: " + name);
                    keep.push_back(static_cast<std::size_t>(it - rec.labels.begin()));
                }
            }
            msm::Recording selected;
            selected.sample_rate_hz = rec.sample_rate_hz;
            selected.samples = msm::Mat(keep.size(), rec.n_samples());
            for (std::size_t r = 0; r < keep.size(); ++r) {
                require_arg(keep[r] < rec.n_channels(), "channel index out of range");
                selected.labels.push_back(rec.labels[keep[r]]);
                std::copy(rec.samples.row(keep[r]), rec.samples.row(keep[r]) + rec.n_samples(),
                          selected.samples.row(r));
            }
            rec = std::move(selected);
        }

        msm::SignalConfig sc;
        sc.notch_hz = cfg.value("notch_hz", sc.notch_hz);
        sc.notch_q = cfg.value("notch_q", sc.notch_q);
        sc.target_hz = cfg.value("target_hz", sc.target_hz);
        sc.epoch_seconds = cfg.value("epoch_seconds", sc.epoch_seconds);
        sc.antialias_rel_cutoff = cfg.value("antialias_rel_cutoff", sc.antialias_rel_cutoff);

        msm::PipelineResult result = msm::run_pipeline(rec, sc);
        msm::save_batch(result.batch, output_path);
        if (manifest_json) *manifest_json = dup_string(result.manifest_json);
    });
}

} // extern "C"
