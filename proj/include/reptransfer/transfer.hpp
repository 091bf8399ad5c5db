#pragma once

#include "reptransfer/envs.hpp"
#include "reptransfer/explore.hpp"

namespace reptransfer {

struct CrossSampleOptions {
    // Fraction of roll-ins whose final action is replaced by a uniform draw.
    double uniform_rollin_frac = 0.1;
};

// Eq.-(1)-style cross sampling: roll the exploratory policy of task i to the
// previous layer, plant the pair into task j for one transition, then take a
// uniform action and transition in task i. i == j runs the plant step as an
// ordinary episode continuation (online form); h == 0 draws the planted state
// from task j's initial distribution.
TransitionDataset cross_sample(const TransferSuite& suite, const std::vector<Policy>& policies,
                               int i, int j, int h, int n, Rng& rng,
                               const CrossSampleOptions& options = {});

struct SolveCriterion {
    int checkpoint_every = 50;
    int eval_runs = 50;
    int consecutive = 5;
};

struct DeployOptions {
    long t_deploy = 8000;
    double beta_override = std::numeric_limits<double>::quiet_NaN();  // NaN: formula
    double beta_mult = 1.0;  // sweep multiplier over the base beta
    double delta = 0.05;
    SolveCriterion solve;
    bool early_stop_on_solve = true;
};

struct SampleAccounting {
    std::vector<long> source_generative;
    std::vector<long> source_episodes;
    long target_episodes = 0;
    long target_pretrain_episodes = 0;  // scratch baseline
    long eval_episodes = 0;
    nlohmann::json to_json() const;
};

struct TransferReport {
    std::string algorithm;
    nlohmann::json learned_phi;
    std::vector<int> mle_ties;
    std::vector<Eigen::MatrixXd> confusion;  // per h: true latents x decoded labels
    RegretTrace trace;
    long episodes_to_solve = -1;  // -1: infinity
    double v_star = 0.0;
    double beta_used = 0.0;
    std::vector<double> span_tv;  // per h: max over random policies of E[TV]
    std::vector<double> lambda_min_per_source_min;  // per h: min over sources
    SampleAccounting accounting;
    nlohmann::json to_json() const;
};

// Decoder-vs-truth confusion under the target emission, per step.
std::vector<Eigen::MatrixXd> decoder_confusion(const BlockMdp& env, const FeatureMap& phi);

// Lemma-3.4-style measurement: per-h max over `num_policies` random
// deterministic observation policies of the expected TV between the
// span-combined learned kernel and the true target kernel.
std::vector<double> measure_span_tv(const TransferSuite& suite,
                                    const std::vector<LinearMdpModel>& models, int num_policies,
                                    Rng& rng);

TransferReport rep_transfer_generative(const TransferSuite& suite,
                                       const std::vector<ExploratoryPolicy>& policies,
                                       const HypothesisClass& cls, int n_per_pair, double delta,
                                       const DeployOptions& deploy, Rng& rng,
                                       const CrossSampleOptions& cross_options = {});

struct OnlineBudgets {
    int n_rf = 2000;
    int n_lsvi = 2000;
    int n_per_pair = 500;  // per-task trajectories = n_per_pair * K * (K-1)
};

TransferReport rep_transfer_online(const TransferSuite& suite, const HypothesisClass& cls,
                                   const OnlineBudgets& budgets, double delta,
                                   const DeployOptions& deploy, Rng& rng,
                                   const EpsOptions& eps_options = {});

// Enumerates every policy of the functional form pi(s) = f({phi(s,a)}_a,
// {r(s,a)}_a) by grouping states with identical feature/reward fingerprints,
// evaluates each exactly, and returns V* minus the best achievable value.
double verify_lower_bound(const LowerBoundFamily& family, const FeatureMap& phi_hat);

struct ScratchBudgets {
    int n_rf = 3000;
    RepUcbOptions rep_ucb;
};

// Single-task pipeline on the target alone; episodes-to-solve counts both the
// model-learning episodes and the deployment episodes.
TransferReport scratch_baseline(const BlockMdp& target, const HypothesisClass& cls,
                                const ScratchBudgets& budgets, const DeployOptions& deploy,
                                Rng& rng);

// LSVI-UCB on the target with the ground-truth features.
TransferReport oracle_baseline(const BlockMdp& target, const DeployOptions& deploy, Rng& rng);

// Deploy each single-source learned representation on the target and keep the
// best outcome.
TransferReport source_only_baseline(const TransferSuite& suite, const HypothesisClass& cls,
                                    int n_rf, int n_lsvi, double delta,
                                    const DeployOptions& deploy, Rng& rng,
                                    const EpsOptions& eps_options = {});

}  // namespace reptransfer
