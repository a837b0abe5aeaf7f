#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <msm/msm.h>

namespace {

namespace fs = std::filesystem;

std::string tmp(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

struct StringOut {
    char* text = nullptr;
    ~StringOut() { msm_string_free(text); }
    std::string str() const { return text ? text : ""; }
};

} // namespace

TEST_CASE("version and error plumbing") {
    CHECK(std::strlen(msm_version()) > 0);
    msm_model* model = nullptr;
    CHECK(msm_model_load("/no/such/file.msm.json", &model) == MSM_E_IO);
    CHECK(std::strlen(msm_last_error()) > 0);
}

TEST_CASE("generate, persist, reload, validate, fit, evaluate through the C API") {
    const char* spec_json = R"({"d": 2, "M": 1, "K": 2, "hidden_per_output": 4})";
    const char* profile_json = R"({"variant": "zero", "sparsity": {"max_parents": 2}})";

    msm_model* truth = nullptr;
    msm_graph* graph = nullptr;
    REQUIRE(msm_sample_ground_truth(spec_json, profile_json, 11, &truth, &graph) == MSM_OK);

    {
        StringOut report;
        REQUIRE(msm_model_validate(truth, &report.text) == MSM_OK);
        CHECK(report.str().find("\"valid\":true") != std::string::npos);
    }
    {
        StringOut info;
        REQUIRE(msm_model_info(truth, &info.text) == MSM_OK);
        CHECK(info.str().find("\"K\":2") != std::string::npos);
    }

    const std::string model_path = tmp("capi.msm.json");
    const std::string graph_path = tmp("capi.graph.json");
    REQUIRE(msm_model_save(truth, model_path.c_str()) == MSM_OK);
    REQUIRE(msm_graph_save(graph, graph_path.c_str()) == MSM_OK);

    msm_model* reloaded = nullptr;
    REQUIRE(msm_model_load(model_path.c_str(), &reloaded) == MSM_OK);
    msm_graph* graph_reloaded = nullptr;
    REQUIRE(msm_graph_load(graph_path.c_str(), &graph_reloaded) == MSM_OK);

    const std::string states_path = tmp("capi.states.csv");
    msm_dataset* data = nullptr;
    REQUIRE(msm_sample_sequences(truth, profile_json, 21, 40, 30, states_path.c_str(),
                                 &data) == MSM_OK);
    CHECK(msm_dataset_num_sequences(data) == 40);
    CHECK(msm_dataset_length(data) == 30);
    CHECK(msm_dataset_dim(data) == 2);
    CHECK(fs::file_size(states_path) > 0);

    const std::string data_path = tmp("capi.msmseq");
    REQUIRE(msm_dataset_save(data, data_path.c_str()) == MSM_OK);
    msm_dataset* data_reloaded = nullptr;
    REQUIRE(msm_dataset_load(data_path.c_str(), &data_reloaded) == MSM_OK);
    CHECK(msm_dataset_num_sequences(data_reloaded) == 40);

    // posterior access
    msm_posterior* post = nullptr;
    REQUIRE(msm_posteriors(truth, data, 0, &post) == MSM_OK);
    size_t rows = 0, states = 0;
    const double* gamma = msm_posterior_gamma(post, &rows, &states);
    REQUIRE(gamma != nullptr);
    CHECK(rows == 30);
    CHECK(states == 2);
    for (size_t r = 0; r < rows; ++r)
        CHECK(gamma[r * states] + gamma[r * states + 1] == doctest::Approx(1.0));
    std::vector<size_t> path(rows);
    REQUIRE(msm_posterior_decode(post, path.data(), path.size()) == MSM_OK);
    for (size_t s : path) CHECK(s < 2);
    CHECK(std::isfinite(msm_posterior_log_lik(post)));

    // short fit through the C surface
    const char* train_json =
        R"({"max_epochs": 4, "batch_size": 40, "learning_rate": 0.005, "seed": 3})";
    msm_model* fitted = nullptr;
    StringOut train_report;
    REQUIRE(msm_fit(data, spec_json, train_json, nullptr, &fitted, &train_report.text) ==
            MSM_OK);
    CHECK(train_report.str().find("\"epochs\":[") != std::string::npos);

    // evaluation surfaces
    StringOut l2;
    REQUIRE(msm_eval_l2(fitted, truth, data_reloaded, 500, &l2.text) == MSM_OK);
    CHECK(l2.str().find("\"err\":") != std::string::npos);

    StringOut f1;
    REQUIRE(msm_eval_f1(fitted, truth, graph_reloaded, data_reloaded, 0.05, &f1.text) ==
            MSM_OK);
    CHECK(f1.str().find("\"averaged_f1\":") != std::string::npos);

    msm_graph* est_graph = nullptr;
    REQUIRE(msm_estimate_graph(truth, data, 0.05, &est_graph) == MSM_OK);

    double hz = -1.0;
    REQUIRE(msm_transition_frequency(truth, data, 3, 200.0, &hz) == MSM_OK);
    CHECK(hz >= 0.0);

    msm_graph_free(est_graph);
    msm_model_free(fitted);
    msm_posterior_free(post);
    msm_dataset_free(data_reloaded);
    msm_dataset_free(data);
    msm_graph_free(graph_reloaded);
    msm_graph_free(graph);
    msm_model_free(reloaded);
    msm_model_free(truth);
}

TEST_CASE("preprocess runs end to end from CSV") {
    const std::string csv_path = tmp("capi_rec.csv");
    {
        FILE* f = fopen(csv_path.c_str(), "w");
        REQUIRE(f != nullptr);
        fprintf(f, "a,b\n");
        for (int i = 0; i < 5000; ++i)
            fprintf(f, "%.6f,%.6f\n", sin(2 * M_PI * 8 * i / 1000.0),
                    cos(2 * M_PI * 6 * i / 1000.0));
        fclose(f);
    }
    const std::string out_path = tmp("capi_rec.msmseq");
    StringOut manifest;
    const char* cfg = R"({"sample_rate_hz": 1000.0, "target_hz": 200, "epoch_seconds": 2})";
    REQUIRE(msm_preprocess(csv_path.c_str(), cfg, out_path.c_str(), &manifest.text) ==
            MSM_OK);
    CHECK(manifest.str().find("\"epochs\"") != std::string::npos);

    msm_dataset* data = nullptr;
    REQUIRE(msm_dataset_load(out_path.c_str(), &data) == MSM_OK);
    CHECK(msm_dataset_length(data) == 400);
    CHECK(msm_dataset_dim(data) == 2);
    CHECK(msm_dataset_num_sequences(data) == 2); // 5 s -> 2 whole epochs
    msm_dataset_free(data);
}

TEST_CASE("bad inputs map to distinct status codes") {
    msm_model* model = nullptr;
    CHECK(msm_sample_ground_truth("{not json", "{}", 1, &model, nullptr) == MSM_E_INVALID);
    msm_graph* graph = nullptr;
    CHECK(msm_sample_ground_truth("{\"d\": 2}", "{\"variant\": \"bogus\"}", 1, &model,
                                  &graph) == MSM_E_PARSE);
}
