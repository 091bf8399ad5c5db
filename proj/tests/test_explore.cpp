#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "reptransfer/explore.hpp"
#include "support.hpp"

using namespace reptransfer;
using namespace reptransfer::testing;

namespace {

HypothesisClass singleton_class(const BlockMdp& env) {
    ClassOptions none;
    return make_decoder_class(CodebookLayout::from_env(env), env.num_actions, none);
}

}  // namespace

TEST_CASE("plan_in_model: zero reward gives zero value and first-index actions") {
    Rng rng = Rng::stream(81, "env-stream");
    BlockMdp env = build_comblock(3, 4, EmissionMode::Decodable, rng);
    LinearMdpModel model = exact_model(env);
    ZeroRewardFn zero;
    PlanResult plan = plan_in_model(model, zero, 4);
    CHECK(plan.value == doctest::Approx(0.0));
    for (int h = 0; h < 3; ++h)
        for (int code : model.support->codes[h])
            CHECK(plan.policy.table().action_at(h, code) == 0);
}

TEST_CASE("plan_in_model picks the rewarded branch of a deterministic chain") {
    // One start latent; action 1 leads to the rewarded latent, action 0 to the
    // other; the second transition is identity-like.
    BlockMdp env;
    env.horizon = 2;
    env.num_actions = 2;
    env.latents_per_layer = {1, 2, 2};
    Eigen::MatrixXd t0(2, 2);
    t0 << 0.0, 1.0, 1.0, 0.0;  // action 0 -> latent 1, action 1 -> latent 0
    Eigen::MatrixXd t1(4, 2);
    t1 << 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0;
    env.transitions = {t0, t1};
    env.emissions = {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Identity(2, 2),
                     Eigen::MatrixXd::Identity(2, 2)};
    env.code_latent = {{0}, {0, 1}, {0, 1}};
    env.reward.step.resize(2);
    env.reward.step[0].assign(1, std::vector<RewardEntry>(2, RewardEntry{0.0, 1.0}));
    env.reward.step[1].assign(2, std::vector<RewardEntry>(2, RewardEntry{0.0, 1.0}));
    env.reward.terminal = {RewardEntry{1.0, 1.0}, RewardEntry{0.0, 1.0}};
    env.initial = Eigen::VectorXd::Ones(1);
    env.validate();

    LinearMdpModel model = exact_model(env);
    EnvReward reward(env);
    PlanResult plan = plan_in_model(model, reward, 2);
    CHECK(plan.value == doctest::Approx(1.0));
    CHECK(plan.policy.table().action_at(0, 0) == 1);
}

TEST_CASE("plan_in_model matches brute-force enumeration on a random model") {
    Rng rng = Rng::stream(82, "env-stream");
    BlockMdp env = random_env({2, 2, 2}, 2, 2, rng);
    LinearMdpModel model = exact_model(env);
    EnvReward reward(env);
    PlanResult plan = plan_in_model(model, reward, 2);
    CHECK(plan.value == doctest::Approx(brute_force_optimal_value(env)).epsilon(1e-12));
}

TEST_CASE("rep-ucb with a two-iteration budget selects the second iteration") {
    Rng rng = Rng::stream(83, "env-stream");
    BlockMdp env = build_comblock(2, 4, EmissionMode::Decodable, rng);
    HypothesisClass cls = singleton_class(env);
    Rng sim = Rng::stream(83, "learner-stream");
    int budget = 2 * (2 * env.horizon - 1);
    RepUcbResult result = reward_free_rep_ucb(env, cls, budget, 0.05, sim);
    CHECK(result.run.iterations == 2);
    CHECK(result.run.selected == 1);  // the only candidate at or past the midpoint
    CHECK(result.run.v_hat.size() == 2);
    CHECK(result.run.episodes_used == budget);
}

TEST_CASE("rep-ucb model error shrinks with budget at the expected rate") {
    std::vector<double> budgets{400, 1600, 6400};
    std::vector<double> errors;
    for (double budget : budgets) {
        double total = 0.0;
        int seeds = 3;
        for (int seed = 0; seed < seeds; ++seed) {
            Rng rng = Rng::stream(900 + seed, "env-stream");
            BlockMdp env = build_comblock(3, 4, EmissionMode::Decodable, rng);
            HypothesisClass cls = singleton_class(env);
            Rng sim = Rng::stream(9000 + seed * 31 + static_cast<int>(budget), "learner-stream");
            RepUcbResult result =
                reward_free_rep_ucb(env, cls, static_cast<int>(budget), 0.05, sim);
            // mean over 10 random policies of the summed per-step TV error
            Rng pol = Rng::stream(950 + seed, "policy-stream");
            double mean = 0.0;
            for (int p = 0; p < 10; ++p) {
                auto tv = model_tv_error(result.model, env, random_latent_policy(env, pol));
                double sum = 0.0;
                for (double v : tv) sum += v;
                mean += sum / 10.0;
            }
            total += mean / seeds;
        }
        errors.push_back(total);
    }
    double slope = loglog_slope(budgets, errors);
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.4));
}

TEST_CASE("rep-ucb's final comblock model keeps both good latents reachable") {
    Rng rng = Rng::stream(84, "env-stream");
    BlockMdp env = build_comblock(4, 4, EmissionMode::Decodable, rng);
    HypothesisClass cls = singleton_class(env);
    Rng sim = Rng::stream(84, "learner-stream");
    RepUcbResult result = reward_free_rep_ucb(env, cls, 2000, 0.05, sim);
    for (int h = 0; h < env.horizon; ++h) {
        // The learned kernel keeps positive mass on each good successor label.
        for (int good = 0; good < 2; ++good)
            CHECK(result.model.trans[h].col(good).maxCoeff() > 0.05);
        // Both good latents appear in the learned emission support.
        for (int good = 0; good < 2; ++good)
            CHECK(result.model.emit_counts[h + 1].row(good).sum() > 0.0);
    }
    // Selected index sits in the second half and minimizes the recorded values.
    int first = (result.run.iterations + 1) / 2;
    CHECK(result.run.selected >= first);
    for (int n = first; n < result.run.iterations; ++n)
        CHECK(result.run.v_hat[result.run.selected] <= result.run.v_hat[n] + 1e-12);
    // Bonus scale bookkeeping is recorded per iteration.
    CHECK(static_cast<int>(result.run.alpha_n.size()) == result.run.iterations);
    for (int n = 0; n < result.run.iterations; ++n) {
        CHECK(result.run.alpha_n[n] > 0.0);
        CHECK(result.run.lambda_n[n] > 0.0);
    }
}

TEST_CASE("eps: sample accounting is exact and the model phase is free") {
    Rng rng = Rng::stream(85, "env-stream");
    BlockMdp env = build_comblock(3, 4, EmissionMode::Decodable, rng);
    HypothesisClass cls = singleton_class(env);
    Rng sim = Rng::stream(85, "learner-stream");
    env.reset_counters();
    int n_rf = 500;
    ExploratoryPolicy policy = exploratory_policy_search(env, cls, 400, n_rf, 0.05, sim);
    int per_iter = 2 * env.horizon - 1;
    long expected = (n_rf / per_iter) * per_iter;
    CHECK(env.episodes() == expected);
    CHECK(policy.env_episodes_used == expected);
    CHECK(static_cast<int>(policy.lambda_min.size()) == env.horizon);
    for (double lm : policy.lambda_min) CHECK(lm >= 0.0);
}

TEST_CASE("eps coverage on a single-latent chain is exactly 1/A") {
    Rng rng = Rng::stream(86, "env-stream");
    BlockMdp env = random_env({1, 1, 1}, 3, 2, rng);
    HypothesisClass cls = singleton_class(env);
    Rng sim = Rng::stream(86, "learner-stream");
    ExploratoryPolicy policy = exploratory_policy_search(env, cls, 100, 200, 0.05, sim);
    for (double lm : policy.lambda_min) CHECK(lm == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("eps coverage on comblock clears the desk threshold") {
    Rng rng = Rng::stream(87, "env-stream");
    BlockMdp env = build_comblock(5, 4, EmissionMode::Decodable, rng);
    HypothesisClass cls = singleton_class(env);
    Rng sim = Rng::stream(87, "learner-stream");
    EpsOptions options;
    options.beta_mult = 0.02;  // desk calibration; the formula value stalls at the clip
    ExploratoryPolicy policy = exploratory_policy_search(env, cls, 2000, 3000, 0.05, sim, options);
    for (int h = 0; h < env.horizon; ++h) {
        INFO("h=", h, " lambda_min=", policy.lambda_min[h]);
        CHECK(policy.lambda_min[h] > 0.01);
    }
}

TEST_CASE("coverage improves with the model-learning budget") {
    std::vector<int> budgets{200, 800, 3200};
    std::vector<double> medians;
    for (int budget : budgets) {
        std::vector<double> mins;
        for (int seed = 0; seed < 5; ++seed) {
            Rng rng = Rng::stream(1100 + seed, "env-stream");
            BlockMdp env = build_comblock(5, 4, EmissionMode::Decodable, rng);
            HypothesisClass cls = singleton_class(env);
            Rng sim = Rng::stream(11000 + seed * 7 + budget, "learner-stream");
            EpsOptions options;
            options.beta_mult = 0.02;
            ExploratoryPolicy p =
                exploratory_policy_search(env, cls, 1500, budget, 0.05, sim, options);
            double worst = 1e9;
            for (double lm : p.lambda_min) worst = std::min(worst, lm);
            mins.push_back(worst);
        }
        std::sort(mins.begin(), mins.end());
        medians.push_back(mins[2]);
    }
    INFO("medians: ", medians[0], " ", medians[1], " ", medians[2]);
    // Non-decreasing, allowing one inversion within 10%.
    int inversions = 0;
    for (size_t i = 1; i < medians.size(); ++i) {
        if (medians[i] < medians[i - 1]) {
            ++inversions;
            CHECK(medians[i] >= 0.9 * medians[i - 1]);
        }
    }
    CHECK(inversions <= 1);
}

TEST_CASE("exploratory policy serializes with per-episode Q tables") {
    Rng rng = Rng::stream(88, "env-stream");
    BlockMdp env = build_comblock(2, 3, EmissionMode::Decodable, rng);
    HypothesisClass cls = singleton_class(env);
    Rng sim = Rng::stream(88, "learner-stream");
    ExploratoryPolicy policy = exploratory_policy_search(env, cls, 50, 100, 0.05, sim);
    nlohmann::json j = policy.to_json();
    CHECK(j.at("mixture").at("kind") == "mixture");
    CHECK(j.at("mixture").at("members").size() == 50);
    CHECK(j.at("mixture").at("members")[0].at("table")[0].contains("q"));
}
