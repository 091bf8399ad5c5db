#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "support.hpp"

using namespace reptransfer;
using namespace reptransfer::testing;

namespace {

Policy comblock_optimal(const BlockMdp& env) { return dp_optimal_value(env).second; }

}  // namespace

TEST_CASE("comblock optimal policy stays on good latents and earns the final reward") {
    Rng rng = Rng::stream(3, "env-stream");
    BlockMdp env = build_comblock(6, 10, EmissionMode::Decodable, rng);
    Policy pi = comblock_optimal(env);
    Rng sim = Rng::stream(3, "policy-stream");
    for (int e = 0; e < 50; ++e) {
        Trajectory t = sample_episode(env, pi, sim);
        for (int z : t.latents(DiagnosticsAccess{})) CHECK(z < 2);
        CHECK(t.final_reward == doctest::Approx(1.0));
    }
}

TEST_CASE("horizon-1 trajectories have exactly one step") {
    Rng rng = Rng::stream(4, "env-stream");
    BlockMdp env = build_comblock(1, 4, EmissionMode::Decodable, rng);
    Rng sim(0);
    Trajectory t = sample_episode(env, Policy::uniform(), sim);
    CHECK(t.steps.size() == 1);
    CHECK(t.steps[0].h == 0);
    CHECK(t.terminal);
}

TEST_CASE("comblock H=3 under uniform play reaches the final good states at rate (1/10)^3") {
    Rng rng = Rng::stream(5, "env-stream");
    BlockMdp env = build_comblock(3, 10, EmissionMode::Decodable, rng);
    Rng sim = Rng::stream(5, "policy-stream");
    int n = 100000;
    int hits = 0;
    for (int e = 0; e < n; ++e) {
        Trajectory t = sample_episode(env, Policy::uniform(), sim);
        if (t.latents(DiagnosticsAccess{}).back() < 2) ++hits;
    }
    double p = 1e-3;
    double sigma = std::sqrt(p * (1 - p) * n);
    CHECK(std::abs(hits - p * n) < 3 * sigma);
}

TEST_CASE("generative_step matches the comblock transition structure") {
    Rng rng = Rng::stream(6, "env-stream");
    BlockMdp env = build_comblock(4, 10, EmissionMode::Decodable, rng);
    // recover the optimal action at (h=1, z=0) from the transition tensor
    int a_star = -1;
    for (int a = 0; a < env.num_actions; ++a)
        if (env.transitions[1](0 * env.num_actions + a, 2) < 0.5) a_star = a;
    REQUIRE(a_star >= 0);

    Rng sim = Rng::stream(6, "learner-stream");
    Observation good;
    good.code = 0;  // layer 1 codes 0..2 belong to latent 0
    int n = 20000;
    int to_good0 = 0;
    for (int i = 0; i < n; ++i) {
        Observation next = generative_step(env, 1, good, a_star, sim);
        int z = env.decode(2, next);
        CHECK(z < 2);
        if (z == 0) ++to_good0;
    }
    double sigma = std::sqrt(0.25 * n);
    CHECK(std::abs(to_good0 - 0.5 * n) < 3 * sigma);

    int wrong = a_star == 0 ? 1 : 0;
    for (int i = 0; i < 200; ++i) {
        Observation next = generative_step(env, 1, good, wrong, sim);
        CHECK(env.decode(2, next) == 2);
    }
    Observation bad;
    bad.code = 2 * 3;  // first code of the bad latent at layer 1
    for (int i = 0; i < 200; ++i) {
        Observation next = generative_step(env, 1, bad, sim.uniform_int(10), sim);
        CHECK(env.decode(2, next) == 2);
    }
}

TEST_CASE("generative_step rejects unknown observations in decodable mode") {
    Rng rng = Rng::stream(7, "env-stream");
    BlockMdp env = build_comblock(3, 4, EmissionMode::Decodable, rng);
    Observation bogus;
    bogus.code = 999;
    Rng sim(0);
    CHECK_THROWS_AS(generative_step(env, 0, bogus, 0, sim), UnknownObservation);
}

TEST_CASE("dp_optimal_value on comblock is exactly 1, and 0 for zero reward") {
    Rng rng = Rng::stream(8, "env-stream");
    BlockMdp env = build_comblock(5, 10, EmissionMode::Decodable, rng);
    auto [v_star, pi] = dp_optimal_value(env);
    CHECK(v_star == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dp_optimal_value(env, zero_reward(env)).first == doctest::Approx(0.0));
}

TEST_CASE("dp_optimal_value matches brute-force policy enumeration on a random instance") {
    Rng rng = Rng::stream(9, "env-stream");
    BlockMdp env = random_env({2, 2, 2}, 2, 2, rng);
    auto [v_star, pi] = dp_optimal_value(env);
    CHECK(v_star == doctest::Approx(brute_force_optimal_value(env)).epsilon(1e-12));
    CHECK(dp_policy_value(env, pi) == doctest::Approx(v_star).epsilon(1e-12));
}

TEST_CASE("dp_policy_value of the uniform policy matches a 1e6-episode Monte-Carlo estimate") {
    Rng rng = Rng::stream(10, "env-stream");
    BlockMdp env = build_comblock(2, 10, EmissionMode::Decodable, rng);
    double exact = dp_policy_value(env, Policy::uniform());
    Rng sim = Rng::stream(10, "policy-stream");
    int n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int e = 0; e < n; ++e) {
        double r = episode_return(sample_episode(env, Policy::uniform(), sim));
        sum += r;
        sq += r * r;
    }
    double mean = sum / n;
    double sd = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - exact) < 3 * sd + 1e-12);
    CHECK(dp_policy_value(env, Policy::uniform(), zero_reward(env)) == doctest::Approx(0.0));
}

TEST_CASE("optimal value dominates 200 random policies on a random instance") {
    Rng rng = Rng::stream(11, "env-stream");
    BlockMdp env = random_env({3, 3, 3, 2}, 3, 2, rng);
    double v_star = dp_optimal_value(env).first;
    for (int i = 0; i < 200; ++i)
        CHECK(dp_policy_value(env, random_latent_policy(env, rng)) <= v_star + 1e-9);
}

TEST_CASE("latent_occupancy: h=0 product form, comblock optimal mass, MC agreement") {
    Rng rng = Rng::stream(12, "env-stream");
    BlockMdp env = build_comblock(4, 4, EmissionMode::Decodable, rng);

    Policy uniform = Policy::uniform();
    Eigen::MatrixXd occ0 = latent_occupancy(env, uniform, 0);
    for (int z = 0; z < 2; ++z)
        for (int a = 0; a < 4; ++a) CHECK(occ0(z, a) == doctest::Approx(0.5 * 0.25).epsilon(1e-12));

    Policy pi_star = comblock_optimal(env);
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::MatrixXd occ = latent_occupancy(env, pi_star, h);
        CHECK(occ.sum() == doctest::Approx(1.0).epsilon(1e-9));
        std::vector<double> good_mass;
        for (int z = 0; z < 2; ++z)
            for (int a = 0; a < 4; ++a)
                if (occ(z, a) > 1e-12) good_mass.push_back(occ(z, a));
        REQUIRE(good_mass.size() == 2);
        CHECK(good_mass[0] == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(good_mass[1] == doctest::Approx(0.5).epsilon(1e-9));
    }

    // Empirical frequencies at h=2 under a random policy.
    Policy pi = random_latent_policy(env, rng);
    Eigen::MatrixXd occ = latent_occupancy(env, pi, 2);
    Rng sim = Rng::stream(12, "policy-stream");
    int n = 100000;
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(occ.rows(), occ.cols());
    for (int e = 0; e < n; ++e) {
        Trajectory t = sample_episode(env, pi, sim);
        counts(t.latents(DiagnosticsAccess{})[2], t.steps[2].action) += 1.0;
    }
    for (int z = 0; z < occ.rows(); ++z) {
        for (int a = 0; a < occ.cols(); ++a) {
            double p = occ(z, a);
            double sigma = std::sqrt(std::max(p * (1 - p) * n, 1.0));
            CHECK(std::abs(counts(z, a) - p * n) < 3.5 * sigma);
        }
    }
}

TEST_CASE("coverage_lambda_min equals the minimum occupancy and the eigen route agrees") {
    Rng rng = Rng::stream(13, "env-stream");
    BlockMdp env = random_env({2, 3, 2}, 3, 2, rng);
    Policy pi = random_latent_policy(env, rng);
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::MatrixXd occ = latent_occupancy(env, pi, h);
        double lm = coverage_lambda_min(env, pi, h);
        CHECK(lm == doctest::Approx(occ.minCoeff()).epsilon(1e-12));
        // Independent route: assemble E[phi phi^T] and take the smallest eigenvalue.
        int d = env.latents_at(h) * env.num_actions;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (int z = 0; z < env.latents_at(h); ++z)
            for (int a = 0; a < env.num_actions; ++a)
                cov(z * env.num_actions + a, z * env.num_actions + a) = occ(z, a);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        CHECK(lm == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-9));
    }
}

TEST_CASE("coverage is zero for a policy that never takes some action") {
    Rng rng = Rng::stream(14, "env-stream");
    BlockMdp env = random_env({2, 2}, 3, 1, rng);
    Eigen::MatrixXd m(2, 3);
    m << 0.0, 0.5, 0.5, 0.0, 0.5, 0.5;
    Policy pi = Policy::latent_tabular({m});
    CHECK(coverage_lambda_min(env, pi, 0) == doctest::Approx(0.0));
}

TEST_CASE("uniform occupancy over m pairs gives lambda_min = 1/m") {
    Rng rng = Rng::stream(15, "env-stream");
    // Single latent per layer: occupancy is uniform over the A action pairs.
    BlockMdp env = random_env({1, 1}, 4, 2, rng);
    CHECK(coverage_lambda_min(env, Policy::uniform(), 0) == doctest::Approx(0.25));
}

TEST_CASE("ground-truth features are a valid kernel factorization") {
    Rng rng = Rng::stream(16, "env-stream");
    BlockMdp env = random_env({2, 3, 3}, 3, 2, rng);
    GroundTruthFeatures features{&env};
    for (int h = 0; h < env.horizon; ++h) {
        Eigen::MatrixXd mu = features.mu(h);
        for (int z = 0; z < env.latents_at(h); ++z) {
            for (int a = 0; a < env.num_actions; ++a) {
                Observation s;
                s.code = 2 * z;  // first code of the latent
                CHECK(features.phi(h, s, a).norm() == doctest::Approx(1.0));
                double total = mu.row(features.phi_index(h, s, a)).sum();
                CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
        // mu normalization: ||sum_s g(s) mu(s)||_2 <= sqrt(d) at g == 1 and random binary g.
        int d = features.dim(h);
        Rng gr(17);
        CHECK(mu.rowwise().sum().norm() <= std::sqrt(static_cast<double>(d)) + 1e-6);
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd g(mu.cols());
            for (int c = 0; c < g.size(); ++c) g[c] = gr.uniform() < 0.5 ? 0.0 : 1.0;
            CHECK((mu * g).norm() <= std::sqrt(static_cast<double>(d)) + 1e-6);
        }
    }
}

TEST_CASE("generative_step marginals match the latent transition row") {
    Rng rng = Rng::stream(18, "env-stream");
    BlockMdp env = random_env({2, 3}, 2, 2, rng);
    Rng sim = Rng::stream(18, "learner-stream");
    Observation s;
    s.code = 1;  // belongs to latent 0
    int z = env.decode(0, s);
    int a = 1;
    int n = 100000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < n; ++i) counts[env.decode(1, generative_step(env, 0, s, a, sim))]++;
    for (int znext = 0; znext < 3; ++znext) {
        double p = env.transitions[0](z * env.num_actions + a, znext);
        double sigma = std::sqrt(std::max(p * (1 - p) * n, 1.0));
        CHECK(std::abs(counts[znext] - p * n) < 3.5 * sigma);
    }
}

TEST_CASE("environment JSON round-trip is deterministic and seed-stable") {
    Rng rng1 = Rng::stream(21, "env-stream");
    Rng rng2 = Rng::stream(21, "env-stream");
    BlockMdp a = build_comblock(4, 6, EmissionMode::Decodable, rng1);
    BlockMdp b = build_comblock(4, 6, EmissionMode::Decodable, rng2);
    CHECK(a.to_json().dump() == b.to_json().dump());

    BlockMdp c = BlockMdp::from_json(a.to_json());
    CHECK(c.to_json().dump() == a.to_json().dump());

    Rng rng3 = Rng::stream(22, "env-stream");
    BlockMdp d = build_comblock(4, 6, EmissionMode::Noisy, rng3);
    BlockMdp e = BlockMdp::from_json(d.to_json());
    CHECK(e.to_json().dump() == d.to_json().dump());
}

TEST_CASE("noisy mode decodes emitted observations back to their latent") {
    Rng rng = Rng::stream(23, "env-stream");
    BlockMdp env = build_comblock(4, 5, EmissionMode::Noisy, rng);
    Rng sim(5);
    int mismatches = 0;
    for (int layer = 0; layer <= env.horizon; ++layer) {
        for (int z = 0; z < env.latents_at(layer); ++z) {
            for (int i = 0; i < 50; ++i) {
                Observation s = env.emit(layer, z, sim);
                Observation stripped;
                stripped.vec = s.vec;  // decode must not rely on the code
                if (env.decode(layer, stripped) != z) ++mismatches;
            }
        }
    }
    // sigma = 0.1 on unit-separated codewords: misdecoding is rare
    CHECK(mismatches < 10);
}

TEST_CASE("episode counters and revocation") {
    Rng rng = Rng::stream(24, "env-stream");
    BlockMdp env = build_comblock(3, 4, EmissionMode::Decodable, rng);
    Rng sim(1);
    long before = env.episodes();
    sample_episode(env, Policy::uniform(), sim);
    CHECK(env.episodes() == before + 1);
    env.revoke_access();
    CHECK_THROWS_AS(sample_episode(env, Policy::uniform(), sim), AccessRevoked);
    Observation s;
    s.code = 0;
    CHECK_THROWS_AS(generative_step(env, 0, s, 0, sim), AccessRevoked);
    env.restore_access();
    sample_episode(env, Policy::uniform(), sim);
    CHECK(env.episodes() == before + 2);
}
