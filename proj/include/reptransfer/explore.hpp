#pragma once

#include "reptransfer/lsvi.hpp"

namespace reptransfer {

struct RepUcbOptions {
    double alpha_mult = 1.0;
    double lambda_mult = 1.0;
    int refit_every = 0;  // 0: ceil(iterations / 20)
};

struct RepUcbRun {
    int iterations = 0;
    int selected = 0;  // argmin of v_hat over the second half
    std::vector<double> v_hat;
    std::vector<double> alpha_n;
    std::vector<double> lambda_n;
    long episodes_used = 0;
    int selected_candidate = 0;
    std::vector<int> mle_ties;
    // Diagnostic-only: per-h exact TV of the selected model against the true
    // kernel under the uniform policy (decodable environments).
    std::vector<double> tv_uniform;
    nlohmann::json to_json() const;
};

struct RepUcbResult {
    LinearMdpModel model;
    RepUcbRun run;
};

// Reward-free model learning: per iteration, roll the previous planner policy
// to collect per-step datasets (plus the one-step-back shifted datasets), fit
// the MLE model, plan against the elliptical bonus in the model, and finally
// return the model whose bonus value is smallest over the second half.
// episode_budget counts true-environment roll-ins; each iteration uses 2H-1.
RepUcbResult reward_free_rep_ucb(const BlockMdp& env, const HypothesisClass& cls,
                                 int episode_budget, double delta, Rng& rng,
                                 const RepUcbOptions& options = {});

struct PlanResult {
    Policy policy;
    double value = 0.0;
};

// Exact backward induction over the model's observed support.
PlanResult plan_in_model(const LinearMdpModel& model, const RewardFn& reward, int num_actions);

struct ExploratoryPolicy {
    Policy mixture;                  // uniform mixture of LSVI episode policies
    std::vector<double> lambda_min;  // per h, under phi* with a uniform last action
    LinearMdpModel model;
    RepUcbRun model_run;
    long env_episodes_used = 0;
    nlohmann::json to_json() const;
};

struct EpsOptions {
    double beta_mult = 1.0;
    RepUcbOptions rep_ucb;
};

// Exploratory Policy Search: reward-free model learning in the true task, then
// reward-free LSVI-UCB with uniform action relabeling inside the learned model
// (which consumes no true-environment samples).
ExploratoryPolicy exploratory_policy_search(const BlockMdp& env, const HypothesisClass& cls,
                                            int n_lsvi, int n_rf, double delta, Rng& rng,
                                            const EpsOptions& options = {});

}  // namespace reptransfer
