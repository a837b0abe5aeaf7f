// msm: command-line front end for the msm shared library.
//
// Subcommands: generate, train, decode, eval, preprocess, recipe, report.
// Every run is fully determined by (config x flags x seed); --print-config on
// any subcommand dumps the resolved configuration without running.
//
// Exit codes: 0 success, 2 config error, 3 numeric failure,
// 4 partial recipe failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <msm/msm.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitPartial = 4;

struct CliError {
    int exit_code;
    std::string message;
};

void fail(msm_status status, const std::string& context) {
    int code = status == MSM_E_NUMERIC ? kExitNumeric : kExitConfig;
    throw CliError{code, context + ": " + msm_last_error()};
}

void check(msm_status status, const std::string& context) {
    if (status != MSM_OK) fail(status, context);
}

std::string take_string(char* text) {
    std::string out = text ? text : "";
    msm_string_free(text);
    return out;
}

// RAII wrappers over the opaque handles
template <typename T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    explicit Handle(T* p) : ptr(p) {}
    ~Handle() { Free(ptr); }
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    Handle(Handle&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
    Handle& operator=(Handle&& o) noexcept {
        std::swap(ptr, o.ptr);
        return *this;
    }
    T** out() { return &ptr; }
    T* get() const { return ptr; }
};

using ModelHandle = Handle<msm_model, msm_model_free>;
using DatasetHandle = Handle<msm_dataset, msm_dataset_free>;
using GraphHandle = Handle<msm_graph, msm_graph_free>;
using PosteriorHandle = Handle<msm_posterior, msm_posterior_free>;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError{kExitConfig, "cannot open for writing: " + path.string()};
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw CliError{kExitConfig, "cannot open for reading: " + path.string()};
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw CliError{kExitConfig, path.string() + ": " + e.what()};
    }
}

std::string stem_of(const std::string& path) {
    fs::path p(path);
    fs::path parent = p.parent_path();
    std::string stem = p.stem().string();
    return (parent / stem).string();
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::size_t d = 5, lag = 2, n_states = 3, hidden = 16;
    std::string variant = "zero";
    std::optional<std::size_t> sparsity_cap;
    std::optional<double> sparsity_frac;
    std::size_t min_parents = 1;
    std::size_t n = 100, t = 200;
    std::uint64_t seed = 1;
    double noise_std = 0.05, init_mean_std = 0.7, init_emission_std = 0.7;
    double self_stay = 0.9, weight_scale = 1.0, bias_scale = 0.0;
    bool deterministic = false;
    std::string from_model; // sample from an existing model instead
    std::string out;
    std::string csv_out, states_csv;
    bool print_config = false;
};

json generate_config(const GenerateArgs& a) {
    json spec = {{"d", a.d}, {"M", a.lag}, {"K", a.n_states}, {"hidden_per_output", a.hidden}};
    json sparsity;
    if (a.sparsity_frac)
        sparsity = {{"fraction", *a.sparsity_frac}};
    else
        sparsity = {{"max_parents", a.sparsity_cap.value_or(20)}};
    json profile = {{"variant", a.variant},
                    {"sparsity", sparsity},
                    {"min_parents", a.min_parents},
                    {"transition_noise_std", a.noise_std},
                    {"init_mean_std", a.init_mean_std},
                    {"init_emission_std", a.init_emission_std},
                    {"self_stay_prob", a.self_stay},
                    {"weight_scale", a.weight_scale},
                    {"bias_scale", a.bias_scale},
                    {"deterministic", a.deterministic}};
    return {{"command", "generate"}, {"spec", spec},      {"profile", profile},
            {"n", a.n},              {"t", a.t},          {"seed", a.seed},
            {"model", a.from_model}, {"out", a.out},      {"csv", a.csv_out},
            {"states_csv", a.states_csv}};
}

int run_generate(const GenerateArgs& a) {
    json config = generate_config(a);
    if (a.print_config) {
        std::cout << config.dump(2) << "\n";
        return kExitOk;
    }
    const std::string spec_json = config["spec"].dump();
    const std::string profile_json = config["profile"].dump();

    ModelHandle truth;
    GraphHandle graph;
    if (a.from_model.empty()) {
        check(msm_sample_ground_truth(spec_json.c_str(), profile_json.c_str(), a.seed,
                                      truth.out(), graph.out()),
              "generate: ground truth");
    } else {
        check(msm_model_load(a.from_model.c_str(), truth.out()), "generate: model");
    }

    fs::path out_path(a.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    DatasetHandle data;
    check(msm_sample_sequences(truth.get(), profile_json.c_str(), a.seed + 1, a.n, a.t,
                               a.states_csv.empty() ? nullptr : a.states_csv.c_str(),
                               data.out()),
          "generate: sequences");

    check(msm_dataset_save(data.get(), a.out.c_str()), "generate: dataset save");
    if (a.from_model.empty()) {
        const std::string stem = stem_of(a.out);
        check(msm_model_save(truth.get(), (stem + ".truth.msm.json").c_str()),
              "generate: truth save");
        check(msm_graph_save(graph.get(), (stem + ".graph.json").c_str()),
              "generate: graph save");
    }
    if (!a.csv_out.empty())
        check(msm_dataset_export_csv(data.get(), a.csv_out.c_str()), "generate: csv export");

    std::fprintf(stderr, "generated %zu sequences (T=%zu, d=%zu) -> %s\n", a.n, a.t, a.d,
                 a.out.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::size_t lag = 2, n_states = 3, hidden = 16;
    std::string activation = "cosine";
    std::string mask = "dense"; // dense | truth
    std::string graph_path;
    std::string out, log_csv;
    std::size_t epochs = 100, batch = 500, restarts = 1;
    double lr = 7e-3, plateau_factor = 0.5, plateau_rel_tol = 1e-4;
    std::size_t plateau_patience = 5, max_plateau_drops = 2;
    std::string optimizer = "adam";
    std::uint64_t seed = 0;
    bool no_shuffle = false;
    double init_weight_scale = 1.0;
    double init_log_var = -1.3862943611198906;
    bool print_config = false;
};

json train_config(const TrainArgs& a) {
    json spec = {{"M", a.lag},
                 {"K", a.n_states},
                 {"hidden_per_output", a.hidden},
                 {"activation", a.activation},
                 {"locally_connected", a.mask == "truth"}};
    json train = {{"max_epochs", a.epochs},
                  {"batch_size", a.batch},
                  {"learning_rate", a.lr},
                  {"plateau_factor", a.plateau_factor},
                  {"plateau_patience", a.plateau_patience},
                  {"max_plateau_drops", a.max_plateau_drops},
                  {"plateau_rel_tol", a.plateau_rel_tol},
                  {"n_restarts", a.restarts},
                  {"optimizer", a.optimizer},
                  {"seed", a.seed},
                  {"shuffle", !a.no_shuffle},
                  {"init_weight_scale", a.init_weight_scale},
                  {"init_log_var", a.init_log_var}};
    return {{"command", "train"}, {"data", a.data},   {"spec", spec},
            {"train", train},     {"mask", a.mask},   {"graph", a.graph_path},
            {"out", a.out},       {"log", a.log_csv}};
}

int run_train(const TrainArgs& a) {
    json config = train_config(a);
    if (a.print_config) {
        std::cout << config.dump(2) << "\n";
        return kExitOk;
    }
    if (a.mask == "truth" && a.graph_path.empty())
        throw CliError{kExitConfig, "--mask truth requires --graph"};
    if (a.mask != "truth" && a.mask != "dense")
        throw CliError{kExitConfig, "--mask must be 'truth' or 'dense'"};

    DatasetHandle data;
    check(msm_dataset_load(a.data.c_str(), data.out()), "train: dataset");
    json spec = config["spec"];
    spec["d"] = msm_dataset_dim(data.get());
    const std::string spec_json = spec.dump();
    const std::string train_json = config["train"].dump();

    GraphHandle mask_graph;
    if (a.mask == "truth")
        check(msm_graph_load(a.graph_path.c_str(), mask_graph.out()), "train: mask graph");

    ModelHandle model;
    char* report_text = nullptr;
    check(msm_fit(data.get(), spec_json.c_str(), train_json.c_str(), mask_graph.get(),
                  model.out(), &report_text),
          "train: fit");
    json report = json::parse(take_string(report_text));

    fs::path out_path(a.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    check(msm_model_save(model.get(), a.out.c_str()), "train: model save");

    if (!a.log_csv.empty()) {
        std::string csv = "epoch,loglik,lr\n";
        char line[128];
        for (const json& e : report["epochs"]) {
            std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n",
                          e["epoch"].get<std::size_t>(), e["log_lik"].get<double>(),
                          e["lr"].get<double>());
            csv += line;
        }
        write_text(a.log_csv, csv);
    }
    std::fprintf(stderr, "trained model -> %s (restart %zu, final loglik %.6f)\n",
                 a.out.c_str(), report["restart_chosen"].get<std::size_t>(),
                 report["epochs"].back()["log_lik"].get<double>());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
    std::string model, data, out;
    std::optional<std::size_t> sequence;
    bool print_config = false;
};

int run_decode(const DecodeArgs& a) {
    json config = {{"command", "decode"},
                   {"model", a.model},
                   {"data", a.data},
                   {"out", a.out},
                   {"sequence", a.sequence ? json(*a.sequence) : json(nullptr)}};
    if (a.print_config) {
        std::cout << config.dump(2) << "\n";
        return kExitOk;
    }
    ModelHandle model;
    check(msm_model_load(a.model.c_str(), model.out()), "decode: model");
    DatasetHandle data;
    check(msm_dataset_load(a.data.c_str(), data.out()), "decode: dataset");

    char* info_text = nullptr;
    check(msm_model_info(model.get(), &info_text), "decode: model info");
    json info = json::parse(take_string(info_text));
    const std::size_t lag = info["M"].get<std::size_t>();

    const std::size_t n = msm_dataset_num_sequences(data.get());
    std::size_t first = 0, last = n;
    if (a.sequence) {
        if (*a.sequence >= n) throw CliError{kExitConfig, "decode: sequence out of range"};
        first = *a.sequence;
        last = first + 1;
    }

    std::string csv;
    for (std::size_t seq = first; seq < last; ++seq) {
        PosteriorHandle post;
        check(msm_posteriors(model.get(), data.get(), seq, post.out()), "decode: posterior");
        size_t rows = 0, states = 0;
        const double* gamma = msm_posterior_gamma(post.get(), &rows, &states);
        std::vector<size_t> path(rows);
        check(msm_posterior_decode(post.get(), path.data(), path.size()), "decode: argmax");
        if (csv.empty()) {
            csv = "seq,t,state";
            for (size_t k = 0; k < states; ++k) csv += ",gamma" + std::to_string(k);
            csv += "\n";
        }
        char buf[64];
        for (size_t r = 0; r < rows; ++r) {
            // t is the 0-based sample index carrying this latent (first is M-1)
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu", seq, lag - 1 + r, path[r]);
            csv += buf;
            for (size_t k = 0; k < states; ++k) {
                std::snprintf(buf, sizeof(buf), ",%.17g", gamma[r * states + k]);
                csv += buf;
            }
            csv += "\n";
        }
    }
    write_text(a.out, csv);
    std::fprintf(stderr, "decoded %zu sequence(s) -> %s\n", last - first, a.out.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string est, truth, truth_graph, data;
    std::string metric = "l2"; // l2 | f1 | freq
    double tau = 0.05;
    std::size_t kernel = 3;
    double rate = 200.0;
    std::size_t max_samples = 1000;
    std::string out_csv, out_json;
    bool print_config = false;
};

json eval_metric_json(const EvalArgs& a) {
    ModelHandle est;
    check(msm_model_load(a.est.c_str(), est.out()), "eval: estimate model");
    DatasetHandle data;
    check(msm_dataset_load(a.data.c_str(), data.out()), "eval: dataset");

    json result;
    result["metric"] = a.metric;
    if (a.metric == "l2") {
        if (a.truth.empty()) throw CliError{kExitConfig, "eval l2 requires --truth"};
        ModelHandle truth;
        check(msm_model_load(a.truth.c_str(), truth.out()), "eval: truth model");
        char* text = nullptr;
        check(msm_eval_l2(est.get(), truth.get(), data.get(), a.max_samples, &text),
              "eval: l2");
        result["l2"] = json::parse(take_string(text));
    } else if (a.metric == "f1") {
        if (a.truth.empty() || a.truth_graph.empty())
            throw CliError{kExitConfig, "eval f1 requires --truth and --truth-graph"};
        ModelHandle truth;
        check(msm_model_load(a.truth.c_str(), truth.out()), "eval: truth model");
        GraphHandle graph;
        check(msm_graph_load(a.truth_graph.c_str(), graph.out()), "eval: truth graph");
        char* text = nullptr;
        check(msm_eval_f1(est.get(), truth.get(), graph.get(), data.get(), a.tau, &text),
              "eval: f1");
        result["f1"] = json::parse(take_string(text));
    } else if (a.metric == "freq") {
        double hz = 0.0;
        check(msm_transition_frequency(est.get(), data.get(), a.kernel, a.rate, &hz),
              "eval: transition frequency");
        result["freq"] = {{"hz", hz},
                          {"kernel_len", a.kernel},
                          {"sample_rate_hz", a.rate},
                          {"per_epoch_mean", true}};
    } else {
        throw CliError{kExitConfig, "unknown metric: " + a.metric};
    }
    return result;
}

std::string metrics_to_csv(const json& result) {
    char line[160];
    std::string csv = "metric,value\n";
    auto add = [&](const std::string& name, double value) {
        std::snprintf(line, sizeof(line), "%s,%.17g\n", name.c_str(), value);
        csv += line;
    };
    if (result.contains("l2")) {
        add("l2_err", result["l2"]["err"].get<double>());
        const json& per = result["l2"]["per_state_l2"];
        for (std::size_t k = 0; k < per.size(); ++k)
            add("l2_state" + std::to_string(k), per[k].get<double>());
    }
    if (result.contains("f1")) {
        add("f1_avg", result["f1"]["averaged_f1"].get<double>());
        const json& per = result["f1"]["per_state_f1"];
        for (std::size_t k = 0; k < per.size(); ++k)
            add("f1_state" + std::to_string(k), per[k].get<double>());
    }
    if (result.contains("freq")) add("freq_hz", result["freq"]["hz"].get<double>());
    return csv;
}

int run_eval(const EvalArgs& a) {
    json config = {{"command", "eval"}, {"est", a.est},
                   {"truth", a.truth},  {"truth_graph", a.truth_graph},
                   {"data", a.data},    {"metric", a.metric},
                   {"tau", a.tau},      {"kernel", a.kernel},
                   {"rate", a.rate},    {"max_samples", a.max_samples},
                   {"out_csv", a.out_csv}, {"out_json", a.out_json}};
    if (a.print_config) {
        std::cout << config.dump(2) << "\n";
        return kExitOk;
    }
    json result = eval_metric_json(a);
    std::string csv = metrics_to_csv(result);
    if (!a.out_csv.empty()) write_text(a.out_csv, csv);
    if (!a.out_json.empty()) write_text(a.out_json, result.dump(2));
    if (a.out_csv.empty() && a.out_json.empty()) std::cout << result.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
    std::string input, sidecar;
    double rate = 0.0;
    double notch_hz = 50.0, notch_q = 35.0, target_hz = 200.0, epoch_seconds = 2.0;
    std::vector<std::string> channels;
    std::string out, manifest_out;
    bool print_config = false;
};

int run_preprocess(const PreprocessArgs& a) {
    json cfg = {{"notch_hz", a.notch_hz},
                {"notch_q", a.notch_q},
                {"target_hz", a.target_hz},
                {"epoch_seconds", a.epoch_seconds}};
    if (a.rate > 0.0) cfg["sample_rate_hz"] = a.rate;
    if (!a.sidecar.empty()) cfg["sidecar"] = a.sidecar;
    if (!a.channels.empty()) cfg["channels"] = a.channels;
    json config = {{"command", "preprocess"},
                   {"input", a.input},
                   {"config", cfg},
                   {"out", a.out},
                   {"manifest", a.manifest_out}};
    if (a.print_config) {
        std::cout << config.dump(2) << "\n";
        return kExitOk;
    }
    fs::path out_path(a.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    char* manifest_text = nullptr;
    check(msm_preprocess(a.input.c_str(), cfg.dump().c_str(), a.out.c_str(), &manifest_text),
          "preprocess");
    std::string manifest = take_string(manifest_text);
    if (!a.manifest_out.empty())
        write_text(a.manifest_out, manifest);
    else
        write_text(stem_of(a.out) + ".manifest.json", manifest);
    std::fprintf(stderr, "preprocessed %s -> %s\n", a.input.c_str(), a.out.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// recipes

json builtin_recipe(const std::string& name) {
    // scaled-down single-machine grids
    if (name == "smoke-desk") {
        return {{"name", "smoke-desk"},
                {"seeds", {1, 2}},
                {"variants", {"zero"}},
                {"grid", {{"K", {2}}, {"M", {1}}}},
                {"gen",
                 {{"d", 3},
                  {"n_train", 60},
                  {"n_heldout", 20},
                  {"t", 60},
                  {"sparsity", {{"max_parents", 3}}}}},
                {"train",
                 {{"max_epochs", 5}, {"batch_size", 60}, {"n_restarts", 1},
                  {"learning_rate", 7e-3}}},
                {"eval", {{"metrics", {"l2", "f1"}}, {"tau", 0.05}, {"mask", "dense"}}}};
    }
    if (name == "fig1a-desk") {
        return {{"name", "fig1a-desk"},
                {"seeds", {1, 2, 3}},
                {"variants", {"zero"}},
                {"grid", {{"K", {2, 3}}, {"M", {1, 2}}}},
                {"gen",
                 {{"d", 5},
                  {"n_train", 500},
                  {"n_heldout", 50},
                  {"t", 200},
                  {"sparsity", {{"max_parents", 20}}}}},
                {"train",
                 {{"max_epochs", 40}, {"batch_size", 500}, {"n_restarts", 2},
                  {"learning_rate", 7e-3}}},
                {"eval", {{"metrics", {"f1"}}, {"tau", 0.05}, {"mask", "dense"}}}};
    }
    if (name == "fig1b-desk") {
        json r = builtin_recipe("fig1a-desk");
        r["name"] = "fig1b-desk";
        r["gen"]["sparsity"] = {{"max_parents", 5}};
        return r;
    }
    if (name == "fig1c-desk") {
        return {{"name", "fig1c-desk"},
                {"seeds", {1, 2, 3, 4, 5}},
                {"variants", {"zero", "nonzero", "relu"}},
                {"grid", {{"K", {3}}, {"M", {2}}}},
                {"gen",
                 {{"d", 5},
                  {"n_train", 400},
                  {"n_heldout", 50},
                  {"t", 200},
                  {"sparsity", {{"max_parents", 5}}}}},
                {"train",
                 {{"max_epochs", 40}, {"batch_size", 400}, {"n_restarts", 1},
                  {"learning_rate", 7e-3}}},
                {"eval", {{"metrics", {"l2"}}, {"tau", 0.05}, {"mask", "truth"}}}};
    }
    if (name == "freq-desk") {
        return {{"name", "freq-desk"},
                {"seeds", {1, 2, 3}},
                {"variants", {"zero"}},
                {"grid", {{"K", {3}}, {"M", {2}}}},
                {"gen",
                 {{"d", 3},
                  {"n_train", 100},
                  {"n_heldout", 30},
                  {"t", 200},
                  {"sparsity", {{"max_parents", 4}}},
                  {"self_stay_prob", 0.9}}},
                {"train",
                 {{"max_epochs", 25}, {"batch_size", 100}, {"n_restarts", 1},
                  {"learning_rate", 7e-3}}},
                {"eval",
                 {{"metrics", {"freq"}}, {"mask", "dense"}, {"kernel", 3},
                  {"sample_rate_hz", 200.0}}}};
    }
    throw CliError{kExitConfig, "unknown recipe: " + name +
                                    " (built-ins: smoke-desk, fig1a-desk, fig1b-desk, "
                                    "fig1c-desk, freq-desk)"};
}

struct CellSpec {
    std::string variant;
    std::size_t K = 0, M = 0;
    std::uint64_t seed = 0;

    std::string id() const {
        return variant + "_K" + std::to_string(K) + "_M" + std::to_string(M) + "_s" +
               std::to_string(seed);
    }
};

std::vector<CellSpec> grid_cells(const json& recipe) {
    std::vector<CellSpec> cells;
    for (const json& variant : recipe["variants"])
        for (const json& k : recipe["grid"]["K"])
            for (const json& m : recipe["grid"]["M"])
                for (const json& seed : recipe["seeds"])
                    cells.push_back({variant.get<std::string>(), k.get<std::size_t>(),
                                     m.get<std::size_t>(), seed.get<std::uint64_t>()});
    return cells;
}

// one generate -> train -> eval pass; returns the metric map for the cell
json run_cell(const json& recipe, const CellSpec& cell, const fs::path& cell_dir) {
    fs::create_directories(cell_dir);
    const json& gen = recipe["gen"];
    const json& eval_cfg = recipe["eval"];

    json spec = {{"d", gen["d"]},
                 {"M", cell.M},
                 {"K", cell.K},
                 {"hidden_per_output", gen.value("hidden_per_output", 16)}};
    json profile = {{"variant", cell.variant},
                    {"sparsity", gen["sparsity"]},
                    {"transition_noise_std", gen.value("transition_noise_std", 0.05)},
                    {"self_stay_prob", gen.value("self_stay_prob", 0.9)},
                    {"weight_scale", gen.value("weight_scale", 1.0)},
                    {"bias_scale", gen.value("bias_scale", 0.0)}};
    const std::string spec_json = spec.dump();
    const std::string profile_json = profile.dump();

    ModelHandle truth;
    GraphHandle graph;
    check(msm_sample_ground_truth(spec_json.c_str(), profile_json.c_str(), cell.seed,
                                  truth.out(), graph.out()),
          "recipe: ground truth");
    check(msm_model_save(truth.get(), (cell_dir / "truth.msm.json").string().c_str()),
          "recipe: truth save");
    check(msm_graph_save(graph.get(), (cell_dir / "truth.graph.json").string().c_str()),
          "recipe: graph save");

    DatasetHandle train_data, heldout;
    check(msm_sample_sequences(truth.get(), profile_json.c_str(), cell.seed * 1000 + 1,
                               gen["n_train"].get<std::size_t>(),
                               gen["t"].get<std::size_t>(), nullptr, train_data.out()),
          "recipe: train data");
    check(msm_sample_sequences(truth.get(), profile_json.c_str(), cell.seed * 1000 + 2,
                               gen["n_heldout"].get<std::size_t>(),
                               gen["t"].get<std::size_t>(), nullptr, heldout.out()),
          "recipe: heldout data");

    json train = recipe["train"];
    train["seed"] = cell.seed;
    json fit_spec = spec;
    const bool truth_mask = eval_cfg.value("mask", "dense") == "truth";
    fit_spec["locally_connected"] = truth_mask;
    if (cell.variant == "relu") fit_spec["activation"] = "relu";

    ModelHandle fitted;
    char* report_text = nullptr;
    check(msm_fit(train_data.get(), fit_spec.dump().c_str(), train.dump().c_str(),
                  truth_mask ? graph.get() : nullptr, fitted.out(), &report_text),
          "recipe: fit");
    json report = json::parse(take_string(report_text));
    check(msm_model_save(fitted.get(), (cell_dir / "model.msm.json").string().c_str()),
          "recipe: model save");

    json metrics;
    for (const json& metric : eval_cfg["metrics"]) {
        const std::string name = metric.get<std::string>();
        if (name == "l2") {
            char* text = nullptr;
            check(msm_eval_l2(fitted.get(), truth.get(), heldout.get(), 1000, &text),
                  "recipe: l2");
            json r = json::parse(take_string(text));
            metrics["l2_err"] = r["err"];
        } else if (name == "f1") {
            char* text = nullptr;
            check(msm_eval_f1(fitted.get(), truth.get(), graph.get(), heldout.get(),
                              eval_cfg.value("tau", 0.05), &text),
                  "recipe: f1");
            json r = json::parse(take_string(text));
            metrics["f1_avg"] = r["averaged_f1"];
        } else if (name == "freq") {
            double hz = 0.0;
            check(msm_transition_frequency(fitted.get(), heldout.get(),
                                           eval_cfg.value("kernel", std::size_t{3}),
                                           eval_cfg.value("sample_rate_hz", 200.0), &hz),
                  "recipe: freq");
            metrics["freq_hz"] = hz;
        } else {
            throw CliError{kExitConfig, "recipe: unknown metric " + name};
        }
    }

    std::string csv = "metric,value\n";
    char line[160];
    for (auto it = metrics.begin(); it != metrics.end(); ++it) {
        std::snprintf(line, sizeof(line), "%s,%.17g\n", it.key().c_str(),
                      it.value().get<double>());
        csv += line;
    }
    write_text(cell_dir / "metrics.csv", csv);
    return metrics;
}

// mean/std over seeds per (variant, K, M, metric); mirrors the metric-vs-M,
// one-series-per-K layout of the grid plots
json aggregate_results(const json& recipe, const fs::path& out_dir, bool* all_present) {
    std::vector<CellSpec> cells = grid_cells(recipe);
    struct Key {
        std::string variant;
        std::size_t K, M;
        std::string metric;
        bool operator<(const Key& o) const {
            return std::tie(variant, K, M, metric) < std::tie(o.variant, o.K, o.M, o.metric);
        }
    };
    std::map<Key, std::vector<double>> groups;
    bool complete = true;

    for (const CellSpec& cell : cells) {
        fs::path metrics_path = out_dir / "cells" / cell.id() / "metrics.csv";
        if (!fs::exists(metrics_path)) {
            complete = false;
            continue;
        }
        std::ifstream in(metrics_path);
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            std::string metric = line.substr(0, comma);
            double value = std::stod(line.substr(comma + 1));
            groups[{cell.variant, cell.K, cell.M, metric}].push_back(value);
        }
    }

    const std::size_t seeds = recipe["seeds"].size();
    std::string csv = "variant,K,M,metric,mean,std,n_seeds,status\n";
    json rows = json::array();
    char line[256];
    for (const auto& [key, values] : groups) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var = values.size() > 1 ? var / static_cast<double>(values.size() - 1) : 0.0;
        const char* status = values.size() == seeds ? "ok" : "incomplete";
        if (values.size() != seeds) complete = false;
        std::snprintf(line, sizeof(line), "%s,%zu,%zu,%s,%.17g,%.17g,%zu,%s\n",
                      key.variant.c_str(), key.K, key.M, key.metric.c_str(), mean,
                      std::sqrt(var), values.size(), status);
        csv += line;
        rows.push_back({{"variant", key.variant},
                        {"K", key.K},
                        {"M", key.M},
                        {"metric", key.metric},
                        {"mean", mean},
                        {"std", std::sqrt(var)},
                        {"n_seeds", values.size()},
                        {"status", status}});
    }
    write_text(out_dir / "aggregate.csv", csv);
    if (all_present) *all_present = complete;
    return {{"name", recipe["name"]}, {"complete", complete}, {"rows", rows}};
}

struct RecipeArgs {
    std::string name_or_path;
    std::string out_root;
    bool print_config = false;
};

int run_recipe_cmd(const RecipeArgs& a) {
    json recipe;
    if (fs::exists(a.name_or_path) && !fs::is_directory(a.name_or_path))
        recipe = read_json_file(a.name_or_path);
    else
        recipe = builtin_recipe(a.name_or_path);

    std::string root = a.out_root;
    if (root.empty()) {
        const char* env = std::getenv("MSM_OUT_ROOT");
        root = env ? env : "results";
    }
    fs::path out_dir = fs::path(root) / recipe["name"].get<std::string>();
    json config = recipe;
    config["out_dir"] = out_dir.string();
    if (a.print_config) {
        std::cout << config.dump(2) << "\n";
        return kExitOk;
    }

    fs::create_directories(out_dir);
    write_text(out_dir / "recipe.json", recipe.dump(2));

    std::vector<CellSpec> cells = grid_cells(recipe);
    std::size_t failures = 0;
    std::ofstream progress(out_dir / "progress.log", std::ios::app);
    for (const CellSpec& cell : cells) {
        fs::path cell_dir = out_dir / "cells" / cell.id();
        try {
            json metrics = run_cell(recipe, cell, cell_dir);
            progress << cell.id() << " ok " << metrics.dump() << "\n";
            std::fprintf(stderr, "[recipe] %s done\n", cell.id().c_str());
        } catch (const CliError& e) {
            ++failures;
            progress << cell.id() << " FAILED " << e.message << "\n";
            std::fprintf(stderr, "[recipe] %s FAILED: %s\n", cell.id().c_str(),
                         e.message.c_str());
        }
        progress.flush();
    }

    bool all_present = false;
    json aggregate = aggregate_results(recipe, out_dir, &all_present);
    write_text(out_dir / "aggregate.json", aggregate.dump(2));

    if (failures > 0) {
        std::fprintf(stderr, "[recipe] %zu of %zu cells failed\n", failures, cells.size());
        return kExitPartial;
    }
    std::fprintf(stderr, "[recipe] all %zu cells complete -> %s\n", cells.size(),
                 out_dir.string().c_str());
    return kExitOk;
}

int run_report(const std::string& dir) {
    fs::path out_dir(dir);
    json recipe = read_json_file(out_dir / "recipe.json");
    bool all_present = false;
    json aggregate = aggregate_results(recipe, out_dir, &all_present);
    write_text(out_dir / "aggregate.json", aggregate.dump(2));
    std::cout << aggregate.dump(2) << "\n";
    return all_present ? kExitOk : kExitPartial;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"identifiable high-order Markov switching models"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "sample a ground-truth model and dataset");
    generate->add_option("--d", gen.d, "observation dimension");
    generate->add_option("--M", gen.lag, "autoregressive order");
    generate->add_option("--K", gen.n_states, "number of regimes");
    generate->add_option("--hidden", gen.hidden, "hidden units per output");
    generate->add_option("--variant", gen.variant, "zero | nonzero | relu");
    generate->add_option("--sparsity-cap", gen.sparsity_cap, "max parents per variable");
    generate->add_option("--sparsity-frac", gen.sparsity_frac, "expected parent fraction");
    generate->add_option("--min-parents", gen.min_parents, "parent floor per variable");
    generate->add_option("--n", gen.n, "number of sequences");
    generate->add_option("--t", gen.t, "sequence length");
    generate->add_option("--seed", gen.seed, "master seed");
    generate->add_option("--noise-std", gen.noise_std, "transition noise std");
    generate->add_option("--init-mean-std", gen.init_mean_std, "initial component mean std");
    generate->add_option("--init-emission-std", gen.init_emission_std,
                         "initial component std");
    generate->add_option("--self-stay", gen.self_stay, "chain self-stay probability");
    generate->add_option("--weight-scale", gen.weight_scale, "generator weight scale");
    generate->add_option("--bias-scale", gen.bias_scale, "generator bias scale");
    generate->add_flag("--deterministic", gen.deterministic, "zero transition noise");
    generate->add_option("--model", gen.from_model,
                         "sample from an existing model instead of a fresh ground truth");
    generate->add_option("--out", gen.out, "output MSMSEQ1 path")->required();
    generate->add_option("--csv", gen.csv_out, "also export the dataset as CSV");
    generate->add_option("--states-csv", gen.states_csv, "write true state paths as CSV");
    generate->add_flag("--print-config", gen.print_config, "dump resolved config and exit");

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "fit an MSM with generalized EM");
    train->add_option("--data", tr.data, "training MSMSEQ1 path")->required();
    train->add_option("--K", tr.n_states, "number of regimes")->required();
    train->add_option("--M", tr.lag, "autoregressive order")->required();
    train->add_option("--hidden", tr.hidden, "hidden units per output");
    train->add_option("--activation", tr.activation, "cosine | relu");
    train->add_option("--mask", tr.mask, "dense | truth");
    train->add_option("--graph", tr.graph_path, "truth graph for --mask truth");
    train->add_option("--out", tr.out, "output model path")->required();
    train->add_option("--log", tr.log_csv, "per-epoch CSV log (epoch,loglik,lr)");
    train->add_option("--epochs", tr.epochs, "maximum epochs");
    train->add_option("--batch", tr.batch, "mini-batch size");
    train->add_option("--lr", tr.lr, "learning rate");
    train->add_option("--plateau-factor", tr.plateau_factor, "lr decay on plateau");
    train->add_option("--plateau-patience", tr.plateau_patience, "epochs before decay");
    train->add_option("--max-plateau-drops", tr.max_plateau_drops, "maximum lr decays");
    train->add_option("--plateau-rel-tol", tr.plateau_rel_tol, "plateau threshold");
    train->add_option("--restarts", tr.restarts, "random restarts");
    train->add_option("--optimizer", tr.optimizer, "adam | plain");
    train->add_option("--seed", tr.seed, "training seed");
    train->add_flag("--no-shuffle", tr.no_shuffle, "disable epoch shuffling");
    train->add_option("--init-weight-scale", tr.init_weight_scale, "network init scale");
    train->add_option("--init-log-var", tr.init_log_var, "initial noise log-variance");
    train->add_flag("--print-config", tr.print_config, "dump resolved config and exit");

    DecodeArgs dec;
    CLI::App* decode = app.add_subcommand("decode", "posterior state marginals and paths");
    decode->add_option("--model", dec.model, "model path")->required();
    decode->add_option("--data", dec.data, "MSMSEQ1 path")->required();
    decode->add_option("--out", dec.out, "output CSV path")->required();
    decode->add_option("--seq", dec.sequence, "decode a single sequence index");
    decode->add_flag("--print-config", dec.print_config, "dump resolved config and exit");

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score an estimated model");
    eval_cmd->add_option("--est", ev.est, "estimated model path")->required();
    eval_cmd->add_option("--truth", ev.truth, "ground-truth model path");
    eval_cmd->add_option("--truth-graph", ev.truth_graph, "ground-truth graph path");
    eval_cmd->add_option("--data", ev.data, "held-out MSMSEQ1 path")->required();
    eval_cmd->add_option("--metric", ev.metric, "l2 | f1 | freq");
    eval_cmd->add_option("--tau", ev.tau, "Jacobian threshold");
    eval_cmd->add_option("--kernel", ev.kernel, "posterior smoothing kernel length");
    eval_cmd->add_option("--rate", ev.rate, "sample rate for freq (Hz)");
    eval_cmd->add_option("--max-samples", ev.max_samples, "held-out windows for L2");
    eval_cmd->add_option("--out-csv", ev.out_csv, "metrics CSV path");
    eval_cmd->add_option("--out-json", ev.out_json, "JSON summary path");
    eval_cmd->add_flag("--print-config", ev.print_config, "dump resolved config and exit");

    PreprocessArgs pp;
    CLI::App* preprocess = app.add_subcommand("preprocess", "recording -> MSMSEQ1 epochs");
    preprocess->add_option("--input", pp.input, "CSV or raw f64 recording")->required();
    preprocess->add_option("--rate", pp.rate, "sample rate (CSV input)");
    preprocess->add_option("--sidecar", pp.sidecar, "JSON sidecar (raw input)");
    preprocess->add_option("--notch-hz", pp.notch_hz, "notch center frequency");
    preprocess->add_option("--notch-q", pp.notch_q, "notch quality factor");
    preprocess->add_option("--target-hz", pp.target_hz, "decimation target rate");
    preprocess->add_option("--epoch-seconds", pp.epoch_seconds, "epoch duration");
    preprocess->add_option("--channels", pp.channels, "channel selection (labels)");
    preprocess->add_option("--out", pp.out, "output MSMSEQ1 path")->required();
    preprocess->add_option("--manifest", pp.manifest_out, "pipeline manifest path");
    preprocess->add_flag("--print-config", pp.print_config, "dump resolved config and exit");

    RecipeArgs rc;
    CLI::App* recipe = app.add_subcommand("recipe", "run a full generate/train/eval grid");
    recipe->add_option("name", rc.name_or_path, "built-in recipe name or JSON path")
        ->required();
    recipe->add_option("--out-root", rc.out_root, "output root (default $MSM_OUT_ROOT)");
    recipe->add_flag("--print-config", rc.print_config, "dump resolved config and exit");

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "re-aggregate a recipe result tree");
    report->add_option("dir", report_dir, "recipe output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*generate) return run_generate(gen);
        if (*train) return run_train(tr);
        if (*decode) return run_decode(dec);
        if (*eval_cmd) return run_eval(ev);
        if (*preprocess) return run_preprocess(pp);
        if (*recipe) return run_recipe_cmd(rc);
        if (*report) return run_report(report_dir);
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.message.c_str());
        return e.exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
