#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/datagen.hpp"
#include "core/inference.hpp"
#include "testutil.hpp"

using namespace msm;

namespace {

SequenceBatch random_batch(Rng& rng, std::size_t n, std::size_t t, std::size_t d,
                           double scale = 1.0) {
    SequenceBatch b = SequenceBatch::empty(n, t, d);
    for (double& v : b.data) v = scale * rng.next_gaussian();
    return b;
}

} // namespace

TEST_CASE("K=1 log-likelihood is the plain sum of log densities") {
    Rng rng(101);
    MsmModel m = testutil::random_model(rng, 2, 1, 1);
    SequenceBatch batch = random_batch(rng, 1, 6, 2);
    SequenceView x = batch.sequence(0);

    double want = initial_log_probs(m, x)[0];
    Mat emis = emission_log_probs(m, x);
    for (std::size_t r = 0; r < emis.rows(); ++r) want += emis(r, 0);
    auto [alpha, log_lik] = forward_log(m, x);
    (void)alpha;
    CHECK(log_lik == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("duplicated-state symmetric model marginalizes back to the K=1 value") {
    Rng rng(103);
    MsmModel one = testutil::random_model(rng, 2, 1, 1);
    // K=2 with identical components and uniform chain
    ModelSpec spec2 = one.spec;
    spec2.n_states = 2;
    spec2.n_initial = 0;
    MsmModel two = make_empty_model(spec2);
    two.chain.log_pi.assign(2, std::log(0.5));
    two.chain.log_A = Mat(2, 2, std::log(0.5));
    for (std::size_t k = 0; k < 2; ++k) {
        two.initial.mean[k] = one.initial.mean[0];
        two.initial.log_var[k] = one.initial.log_var[0];
        two.networks[k] = one.networks[0];
    }

    SequenceBatch batch = random_batch(rng, 1, 7, 2);
    SequenceView x = batch.sequence(0);
    auto [alpha1, ll1] = forward_log(one, x);
    auto [alpha2, ll2] = forward_log(two, x);
    CHECK(ll2 == doctest::Approx(ll1).epsilon(1e-12));
    // each duplicated forward entry sits exactly log 2 below the K=1 row
    for (std::size_t r = 0; r < alpha1.rows(); ++r)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(alpha2(r, k) == doctest::Approx(alpha1(r, 0) - std::log(2.0)).epsilon(1e-12));

    PosteriorSummary post = posteriors(two, x);
    for (std::size_t r = 0; r < post.gamma.rows(); ++r)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(post.gamma(r, k) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward log-likelihood matches explicit path enumeration (K=2, M=1, T=4)") {
    Rng rng(107);
    MsmModel m = testutil::random_model(rng, 1, 1, 2);
    SequenceBatch batch = random_batch(rng, 1, 4, 1);
    SequenceView x = batch.sequence(0);
    auto oracle = testutil::enumerate_posteriors(m, x);
    CHECK(std::fabs(sequence_log_lik(m, x) - oracle.log_lik) < 1e-10);
}

TEST_CASE("posteriors match path enumeration across the oracle grid") {
    std::size_t seed = 200;
    for (std::size_t K : {2u, 3u})
        for (std::size_t lag : {1u, 2u})
            for (std::size_t T : {4u, 5u, 6u}) {
                Rng rng(seed++);
                std::size_t d = 1 + rng.next_index(2);
                MsmModel m = testutil::random_model(rng, d, lag, K);
                SequenceBatch batch = random_batch(rng, 1, T, d);
                SequenceView x = batch.sequence(0);

                auto oracle = testutil::enumerate_posteriors(m, x);
                PosteriorSummary post = posteriors(m, x);

                CHECK(std::fabs(post.log_lik - oracle.log_lik) < 1e-10);
                REQUIRE(post.gamma.rows() == oracle.gamma.rows());
                for (std::size_t r = 0; r < post.gamma.rows(); ++r)
                    for (std::size_t k = 0; k < K; ++k)
                        CHECK(std::fabs(post.gamma(r, k) - oracle.gamma(r, k)) < 1e-10);
                REQUIRE(post.xi.size() == oracle.xi.size());
                for (std::size_t r = 0; r < post.xi.size(); ++r)
                    for (std::size_t i = 0; i < K * K; ++i)
                        CHECK(std::fabs(post.xi[r].data()[i] - oracle.xi[r].data()[i]) <
                              1e-10);
            }
}

TEST_CASE("backward boundary, K=1 shape, and alpha+beta consistency") {
    Rng rng(300);
    MsmModel m = testutil::random_model(rng, 2, 2, 3);
    SequenceBatch batch = random_batch(rng, 1, 9, 2);
    SequenceView x = batch.sequence(0);

    Mat beta = backward_log(m, x);
    for (std::size_t k = 0; k < 3; ++k) CHECK(beta(beta.rows() - 1, k) == 0.0);

    auto [alpha, log_lik] = forward_log(m, x);
    // evidence is t-independent: lse_k(alpha_t + beta_t) == log_lik for all t
    Vec scratch(3);
    for (std::size_t r = 0; r < alpha.rows(); ++r) {
        for (std::size_t k = 0; k < 3; ++k) scratch[k] = alpha(r, k) + beta(r, k);
        CHECK(std::fabs(log_sum_exp(scratch) - log_lik) < 1e-10);
    }

    // K=1 backward: sum of remaining transition densities
    MsmModel single = testutil::random_model(rng, 2, 1, 1);
    SequenceBatch sb = random_batch(rng, 1, 6, 2);
    SequenceView sx = sb.sequence(0);
    Mat semis = emission_log_probs(single, sx);
    Mat sbeta = backward_log(single, sx);
    for (std::size_t r = 0; r < sbeta.rows(); ++r) {
        double want = 0.0;
        for (std::size_t q = r; q < semis.rows(); ++q) want += semis(q, 0);
        CHECK(sbeta(r, 0) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("gamma and xi normalization and marginal consistency") {
    Rng rng(310);
    for (int trial = 0; trial < 5; ++trial) {
        std::size_t K = 2 + rng.next_index(3);
        std::size_t lag = 1 + rng.next_index(2);
        MsmModel m = testutil::random_model(rng, 2, lag, K);
        SequenceBatch batch = random_batch(rng, 1, 8, 2);
        PosteriorSummary post = posteriors(m, batch.sequence(0));

        for (std::size_t r = 0; r < post.gamma.rows(); ++r) {
            double row_sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) row_sum += post.gamma(r, k);
            CHECK(std::fabs(row_sum - 1.0) < 1e-9);
        }
        for (std::size_t r = 0; r < post.xi.size(); ++r) {
            double slice_sum = 0.0;
            for (double v : post.xi[r].data()) slice_sum += v;
            CHECK(std::fabs(slice_sum - 1.0) < 1e-9);
            for (std::size_t k = 0; k < K; ++k) {
                double col = 0.0, row = 0.0;
                for (std::size_t kp = 0; kp < K; ++kp) {
                    col += post.xi[r](kp, k);
                    row += post.xi[r](k, kp);
                }
                CHECK(std::fabs(col - post.gamma(r + 1, k)) < 1e-8);
                CHECK(std::fabs(row - post.gamma(r, k)) < 1e-8);
            }
        }
    }
}

TEST_CASE("decode_argmax picks the max and breaks ties low") {
    PosteriorSummary s;
    s.gamma = Mat::from_rows({{0.9, 0.1}, {0.5, 0.5}, {0.2, 0.8}});
    auto path = decode_argmax(s);
    CHECK(path == std::vector<std::size_t>{0, 0, 1});
}

TEST_CASE("decoding near-deterministic regimes recovers the generating path") {
    Rng rng(46);
    ModelSpec spec;
    spec.d = 2;
    spec.lag = 1;
    spec.n_states = 2;
    spec.hidden_per_output = 4;
    GenProfile profile;
    profile.transition_noise_std = 1e-2;
    profile.weight_scale = 1.5;
    profile.sparsity = GraphSparsity::cap(2);
    auto [model, graph] = sample_ground_truth(rng, spec, profile);
    (void)graph;

    GeneratedData data = sample_sequences(rng, model, profile, 20, 60);
    std::size_t agree = 0, total = 0;
    for (std::size_t n = 0; n < 20; ++n) {
        PosteriorSummary post = posteriors(model, data.batch.sequence(n));
        auto decoded = decode_argmax(post);
        REQUIRE(decoded.size() == data.state_paths[n].size());
        for (std::size_t r = 0; r < decoded.size(); ++r) {
            agree += decoded[r] == data.state_paths[n][r];
            ++total;
        }
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(total) > 0.99);
}

TEST_CASE("T <= M is a contract violation") {
    Rng rng(48);
    MsmModel m = testutil::random_model(rng, 2, 3, 2);
    SequenceBatch batch = random_batch(rng, 1, 3, 2);
    CHECK_THROWS_AS(forward_log(m, batch.sequence(0)), Error);
}
